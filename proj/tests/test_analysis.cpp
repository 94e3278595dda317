#include <doctest.h>

#include <cmath>
#include <fstream>

#include "onearm/analysis.hpp"
#include "onearm/simulation.hpp"
#include "test_support.hpp"

using namespace onearm;

namespace {
const std::string kData = OSLRT_TEST_DATA;

std::string write_temp(const std::string& name, const std::string& body) {
  const std::string path = "/tmp/" + name;
  std::ofstream out(path);
  out << body;
  return path;
}

FittedModel expo(double rate) {
  return FittedModel::from_params(DistributionFamily::Exponential, rate);
}
}  // namespace

TEST_CASE("load_ipd parses and reports line numbers") {
  auto s = load_ipd(write_temp("ok.csv", "time,status\n1.0,1\n2.5,0\n"));
  REQUIRE(s.size() == 2);
  CHECK(s.times[0] == doctest::Approx(1.0));
  CHECK(s.events[1] == 0);

  const auto bad_row = write_temp("bad.csv", "time,status\nx,1\n");
  CHECK_THROWS_WITH_AS(static_cast<void>(load_ipd(bad_row)),
                       doctest::Contains("line 2"), InvalidInput);
  CHECK_THROWS_AS(static_cast<void>(load_ipd(write_temp("empty.csv", ""))),
                  InvalidInput);
  CHECK_THROWS_AS(
      static_cast<void>(load_ipd(write_temp("hdr.csv", "t,s\n1,1\n"))),
      InvalidInput);
  CHECK_THROWS_AS(static_cast<void>(load_ipd(
                      write_temp("status.csv", "time,status\n1.0,2\n"))),
                  InvalidInput);
  CHECK_THROWS_AS(static_cast<void>(load_ipd(
                      write_temp("neg.csv", "time,status\n-1.0,1\n"))),
                  InvalidInput);
  CHECK_THROWS_AS(static_cast<void>(load_ipd("/nonexistent/nope.csv")),
                  InvalidInput);
}

TEST_CASE("the bundled 91-row control fixture matches its description") {
  auto s = load_ipd(kData + "/control_91.csv");
  CHECK(s.size() == 91);
  CHECK(s.event_count() == 68);
  const double censoring = 1.0 - 68.0 / 91.0;
  CHECK(censoring == doctest::Approx(0.25).epsilon(0.02));
}

TEST_CASE("truncate_at censors beyond the cutoff and lowers expected events") {
  SurvivalSample s{{10.0, 20.0}, {1, 1}};
  auto t = truncate_at(s, 15.0);
  CHECK(t.times == std::vector<double>{10.0, 15.0});
  CHECK(t.events == std::vector<std::uint8_t>{1, 0});
  auto same = truncate_at(s, 25.0);
  CHECK(same.times == s.times);
  CHECK(same.events == s.events);

  Rng rng(4);
  auto sample = onearm::testing::random_sample(rng, 50, 0.2, 0.2);
  auto control = expo(0.4);
  const double tmax = 3.0;
  auto trunc = truncate_at(sample, tmax);
  double e_full = 0.0, e_trunc = 0.0, o_full = 0.0, o_trunc = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    e_full += cum_hazard(control, sample.times[i]);
    e_trunc += cum_hazard(control, trunc.times[i]);
    o_full += sample.events[i];
    o_trunc += trunc.events[i];
  }
  CHECK(e_trunc <= e_full);
  CHECK(o_trunc <= o_full);
}

TEST_CASE("fit_all_families ranks by AIC with sensible asymptotics") {
  Rng rng(1001);
  SurvivalSample exp_data;
  for (int i = 0; i < 2000; ++i) {
    exp_data.times.push_back(rng.exponential(1.0));
    exp_data.events.push_back(1);
  }
  auto fits = fit_all_families(exp_data);
  REQUIRE(fits.size() == 5);
  for (std::size_t i = 1; i < fits.size(); ++i)
    CHECK(fits[i - 1].aic <= fits[i].aic);
  double exp_aic = 0.0;
  for (const auto& m : fits)
    if (m.family == DistributionFamily::Exponential) exp_aic = m.aic;
  CHECK(exp_aic - fits.front().aic <= 2.0 + 1e-6);

  auto ll_model = FittedModel::from_params(DistributionFamily::LogLogistic, 1.7, 2.0);
  SurvivalSample ll_data;
  for (int i = 0; i < 2000; ++i) {
    ll_data.times.push_back(inverse_cum_hazard(ll_model, rng.exponential(1.0)));
    ll_data.events.push_back(1);
  }
  auto ll_fits = fit_all_families(ll_data);
  CHECK(ll_fits.front().family == DistributionFamily::LogLogistic);
  double ll_exp_aic = 0.0;
  for (const auto& m : ll_fits)
    if (m.family == DistributionFamily::Exponential) ll_exp_aic = m.aic;
  CHECK(ll_exp_aic - ll_fits.front().aic > 10.0);

  SurvivalSample tiny{{1.0, 2.0}, {1, 0}};
  CHECK_THROWS_AS(fit_all_families(tiny), InvalidInput);
}

TEST_CASE("AIC ranking is invariant to time-unit rescaling") {
  Rng rng(77);
  auto truth = FittedModel::from_params(DistributionFamily::Weibull, 1.4, 2.0);
  SurvivalSample years;
  for (int i = 0; i < 500; ++i) {
    const double t = inverse_cum_hazard(truth, rng.exponential(1.0));
    const double c = rng.exponential(0.15);
    years.times.push_back(std::min(t, c));
    years.events.push_back(t <= c ? 1 : 0);
  }
  SurvivalSample months = years;
  for (auto& t : months.times) t *= 12.0;
  auto fy = fit_all_families(years);
  auto fm = fit_all_families(months);
  REQUIRE(fy.size() == fm.size());
  // the Jacobian shifts every family's log-likelihood by O*log(12), so AIC
  // differences and the ordering are preserved
  const double shift = 2.0 * years.event_count() * std::log(12.0);
  for (std::size_t i = 0; i < fy.size(); ++i) {
    CHECK(fy[i].family == fm[i].family);
    CHECK(std::fabs((fm[i].aic - fy[i].aic) - shift) < 1e-4);
  }
}

TEST_CASE("full_report builds the table grid with per-cell errors in place") {
  Rng rng(808);
  SurvivalSample s;
  for (int i = 0; i < 47; ++i) {
    s.times.push_back(rng.exponential(0.6));
    s.events.push_back(rng.uniform() < 0.8 ? 1 : 0);
  }
  AnalysisOptions options;
  options.change_points = {ChangePointSpec::early(1.0),
                           ChangePointSpec::middle(0.5, 2.0),
                           ChangePointSpec::delayed(1.0),
                           ChangePointSpec::crossing()};
  options.combo = ComboSpec::defaults();
  options.mvn = {1e-3, 100000, 12};
  std::vector<ControlModel> controls = {{"exponential", expo(0.5), {}},
                                        {"weibull",
                                         FittedModel::from_params(
                                             DistributionFamily::Weibull, 1.2, 1.8),
                                         {}}};
  auto report = full_report(s, controls, options);
  CHECK(report.row_labels.size() == 2 + 4 + 1 + 2);
  REQUIRE(report.columns.size() == 2);
  for (const auto& col : report.columns) {
    CHECK(col.cells.size() == 7);
    for (const auto& cell : col.cells) CHECK(cell.ok);
    CHECK(col.combo.has_value());
    CHECK(col.tau_used == doctest::Approx(s.max_time()));
  }
  // determinism given the seed
  auto again = full_report(s, controls, options);
  CHECK(again.columns[0].combo->p_exact ==
        doctest::Approx(report.columns[0].combo->p_exact));

  // text and json renderings carry every row
  const std::string table = render_text_table(report);
  for (const auto& row : report.row_labels)
    CHECK(table.find(row) != std::string::npos);
  auto j = report_to_json(report);
  CHECK(j["columns"].size() == 2);
}

TEST_CASE("full_report with no change points keeps only the standing rows") {
  SurvivalSample s{{1.0, 2.0, 3.0}, {1, 1, 0}};
  AnalysisOptions options;
  auto report = full_report(s, {{"exponential", expo(0.5), {}}}, options);
  CHECK(report.row_labels ==
        std::vector<std::string>{"oslrt", "moslrt", "rmst"});
}

TEST_CASE("full_report null battery produces p-values spread over (0,1)") {
  // samples drawn from the control law: p-values should look uniform
  Rng rng(2718);
  const auto control = expo(0.5);
  double sum_p = 0.0;
  int count = 0, extreme = 0;
  AnalysisOptions options;
  options.change_points = {ChangePointSpec::early(1.0)};
  for (int rep = 0; rep < 200; ++rep) {
    SurvivalSample s;
    for (int i = 0; i < 40; ++i) {
      s.times.push_back(rng.exponential(0.5));
      s.events.push_back(1);
    }
    auto report = full_report(s, {{"exponential", control, {}}}, options);
    for (const auto& cell : report.columns[0].cells) {
      if (!cell.ok) continue;
      sum_p += cell.outcome.p_one_sided;
      ++count;
      if (cell.outcome.p_one_sided < 0.01) ++extreme;
    }
  }
  const double mean_p = sum_p / count;
  CHECK(mean_p > 0.40);
  CHECK(mean_p < 0.60);
  CHECK(static_cast<double>(extreme) / count < 0.05);
}

TEST_CASE("degenerate cells are reported in place without aborting") {
  // all observations below the delayed change-point
  SurvivalSample s{{0.2, 0.3, 0.4}, {1, 1, 0}};
  AnalysisOptions options;
  options.change_points = {ChangePointSpec::delayed(5.0)};
  auto report = full_report(s, {{"exponential", expo(0.5), {}}}, options);
  bool found_error = false;
  for (const auto& cell : report.columns[0].cells) {
    if (cell.row.rfind("delayed", 0) == 0) {
      CHECK_FALSE(cell.ok);
      CHECK(!cell.error.empty());
      found_error = true;
    }
  }
  CHECK(found_error);
}
