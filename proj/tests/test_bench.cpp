#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "otms/bench.hpp"

using namespace otms;
namespace fs = std::filesystem;

namespace {

// Two instances, cheap methods only.
SweepConfig small_sweep() {
  SweepConfig c;
  c.methods = {Method::IgnoreP, Method::Gradient};
  c.rates = {0.6};
  c.snr_db = {20.0};
  c.views = {2};
  c.seeds = {3, 4};
  c.baseline.outer_tmax = 2;
  return c;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no otms::Error thrown";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Method, NamesRoundTrip) {
  for (Method m : {Method::Proposed, Method::Gradient, Method::IgnoreP}) EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_EQ(code_of([] { parse_method("nope"); }), ErrorCode::Parse);
}

TEST(CellSeed, PairedAcrossMethodsDistinctAcrossTrials) {
  EXPECT_EQ(cell_seed(0, 0.7, 20, 2, 1), cell_seed(0, 0.7, 20, 2, 1));
  EXPECT_NE(cell_seed(0, 0.7, 20, 2, 1), cell_seed(0, 0.7, 20, 2, 2));
  EXPECT_NE(cell_seed(0, 0.7, 20, 2, 1), cell_seed(0, 0.8, 20, 2, 1));
  EXPECT_NE(cell_seed(0, 0.7, 20, 2, 1), cell_seed(1, 0.7, 20, 2, 1));
}

TEST(Sweep, CardinalityAndOrder) {
  const SweepResult r = run_sweep(small_sweep());
  EXPECT_TRUE(r.failures.empty());
  ASSERT_EQ(r.records.size(), 4u);
  EXPECT_EQ(r.records[0].seed, 3u);
  EXPECT_EQ(r.records[0].method, Method::IgnoreP);
  EXPECT_EQ(r.records[1].method, Method::Gradient);
  EXPECT_EQ(r.records[2].seed, 4u);
  for (const auto& rec : r.records) {
    EXPECT_GE(rec.nmse, 0.0);
    EXPECT_EQ(rec.wall_time_s, 0.0);
  }
  EXPECT_EQ(r.records[1].iters, 20);
}

TEST(Sweep, WorkerCountDoesNotChangeRecords) {
  SweepConfig c = small_sweep();
  const std::string one = records_csv(run_sweep(c).records);
  c.workers = 3;
  EXPECT_EQ(records_csv(run_sweep(c).records), one);
}

TEST(Sweep, FailuresAreRecorded) {
  SweepConfig c = small_sweep();
  c.methods = {Method::IgnoreP};
  c.scene.grid = Grid(8, 8);  // letter does not fit
  const SweepResult r = run_sweep(c);
  EXPECT_TRUE(r.records.empty());
  EXPECT_EQ(r.failures.size(), 2u);
  EXPECT_EQ(code_of([&] { emit_report(r, fs::temp_directory_path() / "otms_never"); }), ErrorCode::EmptyResult);
}

TEST(Report, CsvRoundTrip) {
  std::vector<SweepRecord> rs{{Method::Proposed, 0.7, kNoiseless, 2, 9, 0.123456789012345678, 1.5, 200},
                              {Method::IgnoreP, 0.5, 20.0, 4, 18446744073709551615ull, 1e-300, 0, 0}};
  const std::string csv = records_csv(rs);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kCsvHeader);
  const auto back = parse_records_csv(csv);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].method, rs[i].method);
    EXPECT_EQ(back[i].rate, rs[i].rate);
    EXPECT_EQ(back[i].snr_db, rs[i].snr_db);
    EXPECT_EQ(back[i].views, rs[i].views);
    EXPECT_EQ(back[i].seed, rs[i].seed);
    EXPECT_EQ(back[i].nmse, rs[i].nmse);
    EXPECT_EQ(back[i].iters, rs[i].iters);
  }
  EXPECT_EQ(records_csv(back), csv);
  EXPECT_EQ(code_of([] { parse_records_csv("bad header\n"); }), ErrorCode::Parse);
}

TEST(Report, SummaryStatistics) {
  std::vector<SweepRecord> rs;
  for (std::uint64_t s = 0; s < 4; ++s) rs.push_back({Method::Gradient, 0.8, 20.0, 2, s, 0.25, 0, 1});
  rs.push_back({Method::Proposed, 0.8, 20.0, 2, 0, 1.0, 0, 1});
  rs.push_back({Method::Proposed, 0.8, 20.0, 2, 1, 3.0, 0, 1});
  const auto cells = summarize(rs);
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_EQ(cells[0].count, 4u);
  EXPECT_DOUBLE_EQ(cells[0].nmse_mean, 0.25);
  EXPECT_DOUBLE_EQ(cells[0].nmse_std, 0.0);
  EXPECT_DOUBLE_EQ(cells[1].nmse_mean, 2.0);
  EXPECT_DOUBLE_EQ(cells[1].nmse_std, std::sqrt(2.0));
  const auto j = summary_json(SweepResult{rs, {}});
  EXPECT_DOUBLE_EQ(j["cells"][0]["total_rate"].get<double>(), 1.6);
}

TEST(Report, EmitWritesBothFiles) {
  const fs::path dir = fs::temp_directory_path() / "otms_test_report";
  fs::remove_all(dir);
  emit_report(SweepResult{{{Method::Proposed, 1.0, kNoiseless, 2, 0, 0.5, 0, 4}}, {}}, dir);
  EXPECT_TRUE(fs::exists(dir / "records.csv"));
  std::ifstream is(dir / "summary.json");
  const auto j = nlohmann::json::parse(is);
  EXPECT_EQ(j["cells"][0]["snr_db"], "inf");
  fs::remove_all(dir);
}

TEST(Stats, Median) {
  EXPECT_DOUBLE_EQ(median({3, 1, 2}), 2.0);
  EXPECT_DOUBLE_EQ(median({4, 1, 3, 2}), 2.5);
  EXPECT_EQ(code_of([] { median({}); }), ErrorCode::EmptyResult);
}

TEST(Stats, SpearmanAgainstDefinition) {
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {9, 1, 0.5, -2}), -1.0);
  // Without ties: 1 - 6 sum d^2 / (n (n^2 - 1)).
  const std::vector<double> a{0.5, 0.6, 0.7, 0.8, 0.9, 1.0}, b{0.3, 0.25, 0.26, 0.1, 0.05, 0.01};
  const std::vector<double> ra{1, 2, 3, 4, 5, 6}, rb{6, 4, 5, 3, 2, 1};
  double d2 = 0;
  for (int i = 0; i < 6; ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
  EXPECT_NEAR(spearman(a, b), 1.0 - 6.0 * d2 / (6.0 * 35.0), 1e-12);
  EXPECT_EQ(detail::ranks({2, 1, 2, 5}), (std::vector<double>{2.5, 1, 2.5, 4}));
}

TEST(Config, ParsesNestedFields) {
  const auto j = nlohmann::json::parse(R"({
    "methods": ["proposed", "ignore_p"], "rates": [0.5, 1.0], "snr_db": [20, "inf"],
    "views": [2, 4], "seeds": [1, 2, 3], "base_seed": 77, "workers": 2, "out": "o",
    "scene": {"letter": "T", "rows": 20, "cols": 30},
    "perturb": {"displacement_radius": 3},
    "recovery": {"lambda": 2.0, "solver": "exact", "ipot": {"outer_iters": 50}},
    "baseline": {"mu": 5.0}
  })");
  const SweepConfig c = sweep_config_from_json(j);
  EXPECT_EQ(c.methods, (std::vector<Method>{Method::Proposed, Method::IgnoreP}));
  EXPECT_TRUE(is_noiseless(c.snr_db[1]));
  EXPECT_EQ(c.base_seed, 77u);
  EXPECT_EQ(c.scene.letter, Letter::T);
  EXPECT_EQ(c.scene.grid.rows(), 20);
  EXPECT_EQ(c.perturb.displacement_radius, 3);
  EXPECT_EQ(c.recovery.lambda, 2.0);
  EXPECT_EQ(c.recovery.solver, Solver::Exact);
  EXPECT_EQ(c.recovery.ipot.outer_iters, 50);
  EXPECT_EQ(c.recovery.ipot.prox_weight, IpotParams{}.prox_weight);
  EXPECT_EQ(c.baseline.mu_value(), 5.0);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_EQ(code_of([] { sweep_config_from_json(nlohmann::json::parse(R"({"rate": [0.5]})")); }), ErrorCode::Parse);
  EXPECT_EQ(code_of([] { sweep_config_from_json(nlohmann::json::parse(R"({"recovery": {"gamma": 1}})")); }),
            ErrorCode::Parse);
  EXPECT_EQ(code_of([] { sweep_config_from_json(nlohmann::json::parse(R"({"rates": "x"})")); }), ErrorCode::Parse);
  EXPECT_EQ(code_of([] { sweep_config_from_json(nlohmann::json::parse(R"({"rates": [1.5]})")); }),
            ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { sweep_config_from_json(nlohmann::json::parse(R"({"seeds": [1, 1]})")); }),
            ErrorCode::InvalidArgument);
}
