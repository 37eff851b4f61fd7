#ifndef OTMS_BENCH_HPP_
#define OTMS_BENCH_HPP_

// Rate x SNR x views sweeps over synthetic instances, one record per
// (method, cell, seed), plus per-cell aggregates.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "otms/baselines.hpp"
#include "otms/core.hpp"
#include "otms/recovery.hpp"
#include "otms/synthdata.hpp"

namespace otms {

enum class Method { Proposed, Gradient, IgnoreP };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::Proposed: return "proposed";
    case Method::Gradient: return "gradient";
    case Method::IgnoreP: return "ignore_p";
  }
  return "?";
}

inline Method parse_method(std::string_view name) {
  if (name == "proposed") return Method::Proposed;
  if (name == "gradient") return Method::Gradient;
  if (name == "ignore_p") return Method::IgnoreP;
  throw Error(ErrorCode::Parse, "unknown method '" + std::string(name) + "'");
}

struct SweepConfig {
  std::vector<Method> methods{Method::Proposed, Method::Gradient, Method::IgnoreP};
  std::vector<double> rates{0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<double> snr_db{15, 20, 25, kNoiseless};
  std::vector<int> views{2};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::uint64_t base_seed = 0;
  SceneSpec scene;
  PerturbSpec perturb;
  // Support fields are filled per instance.
  RecoveryConfig recovery;
  BaselineConfig baseline;
  int workers = 1;
  // Wall times are the only nondeterministic output; off keeps the CSV
  // byte-reproducible and writes 0 in their place.
  bool record_timing = false;
  std::string out = "sweep_out";

  void validate() const {
    require(!methods.empty() && !rates.empty() && !snr_db.empty() && !views.empty() && !seeds.empty(),
            ErrorCode::InvalidArgument, "sweep lists must be nonempty");
    std::vector<std::uint64_t> s = seeds;
    std::sort(s.begin(), s.end());
    require(std::adjacent_find(s.begin(), s.end()) == s.end(), ErrorCode::InvalidArgument,
            "sweep seeds must be distinct");
    for (double r : rates) require(r > 0 && r <= 1, ErrorCode::InvalidArgument, "rates must lie in (0, 1]");
    for (int k : views) require(k >= 1, ErrorCode::InvalidArgument, "views must be >= 1");
    require(workers >= 1, ErrorCode::InvalidArgument, "workers must be >= 1");
  }
};

struct SweepRecord {
  Method method = Method::Proposed;
  double rate = 0;
  double snr_db = kNoiseless;
  int views = 0;
  std::uint64_t seed = 0;
  double nmse = 0;
  double wall_time_s = 0;
  long iters = 0;
};

struct SweepFailure {
  Method method = Method::Proposed;
  double rate = 0;
  double snr_db = kNoiseless;
  int views = 0;
  std::uint64_t seed = 0;
  std::string message;
};

struct CellSummary {
  Method method = Method::Proposed;
  double rate = 0;
  double snr_db = kNoiseless;
  int views = 0;
  std::size_t count = 0;
  double nmse_mean = 0;
  double nmse_std = 0;
  double wall_time_mean = 0;
};

struct SweepResult {
  std::vector<SweepRecord> records;
  std::vector<SweepFailure> failures;
};

// Seed of the instance behind one (cell, trial). Every method sees the same
// instance, so comparisons within a cell are paired.
inline std::uint64_t cell_seed(std::uint64_t base, double rate, double snr_db, int views,
                               std::uint64_t trial) {
  return mix_seed({base, double_bits(rate), double_bits(snr_db), std::uint64_t(views), trial});
}

struct MethodRun {
  Signal estimate;
  long iters = 0;
};

inline MethodRun run_method(Method m, const Instance& inst, RecoveryConfig rcfg, BaselineConfig bcfg) {
  rcfg.support = inst.support;
  bcfg.support = inst.support;
  const Signal x0 = initial_prototype(inst.views, inst.grid(), rcfg);
  switch (m) {
    case Method::Proposed: {
      RecoveryResult r = recover(inst.views, rcfg, x0);
      return {std::move(r.estimate), long(rcfg.outer_tmax) * rcfg.inner_tmax};
    }
    case Method::Gradient: {
      GradientBaselineResult r = baseline_gradient_detailed(inst.views, bcfg, x0);
      return {std::move(r.estimate), r.iterations};
    }
    case Method::IgnoreP: {
      BaselineResult r = baseline_ignore_p_detailed(inst.views, bcfg, x0);
      return {std::move(r.estimate), r.iterations};
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unhandled method");
}

namespace detail {

struct SweepTask {
  double rate;
  double snr_db;
  int views;
  std::uint64_t seed;
};

struct TaskOutput {
  std::vector<SweepRecord> records;
  std::vector<SweepFailure> failures;
};

inline TaskOutput run_task(const SweepConfig& cfg, const SweepTask& task) {
  TaskOutput out;
  auto fail_all = [&](const std::string& msg) {
    for (Method m : cfg.methods) out.failures.push_back({m, task.rate, task.snr_db, task.views, task.seed, msg});
  };
  Instance inst;
  try {
    inst = build_instance(cfg.scene, cfg.perturb, task.views, task.rate, task.snr_db,
                          cell_seed(cfg.base_seed, task.rate, task.snr_db, task.views, task.seed));
  } catch (const std::exception& e) {
    fail_all(e.what());
    return out;
  }
  for (Method m : cfg.methods) {
    try {
      const auto t0 = std::chrono::steady_clock::now();
      MethodRun run = run_method(m, inst, cfg.recovery, cfg.baseline);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      out.records.push_back({m, task.rate, task.snr_db, task.views, task.seed,
                             nmse(run.estimate, inst.x_true), cfg.record_timing ? secs : 0.0, run.iters});
    } catch (const std::exception& e) {
      out.failures.push_back({m, task.rate, task.snr_db, task.views, task.seed, e.what()});
    }
  }
  return out;
}

}  // namespace detail

// Cells run on `cfg.workers` threads; output order is the config's nesting
// order (views, rate, snr, seed, method) regardless of scheduling.
inline SweepResult run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  std::vector<detail::SweepTask> tasks;
  for (int k : cfg.views)
    for (double r : cfg.rates)
      for (double s : cfg.snr_db)
        for (std::uint64_t seed : cfg.seeds) tasks.push_back({r, s, k, seed});

  std::vector<detail::TaskOutput> outputs(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) outputs[i] = detail::run_task(cfg, tasks[i]);
  };
  const int n = std::min<int>(cfg.workers, int(tasks.size()));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  SweepResult result;
  for (auto& o : outputs) {
    result.records.insert(result.records.end(), o.records.begin(), o.records.end());
    result.failures.insert(result.failures.end(), o.failures.begin(), o.failures.end());
  }
  return result;
}

// Mean and sample standard deviation per (method, rate, snr, views), in
// first-appearance order.
inline std::vector<CellSummary> summarize(const std::vector<SweepRecord>& records) {
  using Key = std::tuple<int, std::uint64_t, std::uint64_t, int>;
  std::map<Key, std::size_t> slot;
  std::vector<CellSummary> cells;
  std::vector<std::vector<const SweepRecord*>> members;
  for (const auto& r : records) {
    const Key key{int(r.method), double_bits(r.rate), double_bits(r.snr_db), r.views};
    auto [it, fresh] = slot.emplace(key, cells.size());
    if (fresh) {
      cells.push_back({r.method, r.rate, r.snr_db, r.views, 0, 0, 0, 0});
      members.emplace_back();
    }
    members[it->second].push_back(&r);
  }
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const auto& m = members[c];
    double sum = 0, time = 0;
    for (const auto* r : m) {
      sum += r->nmse;
      time += r->wall_time_s;
    }
    const double mean = sum / double(m.size());
    double sq = 0;
    for (const auto* r : m) sq += (r->nmse - mean) * (r->nmse - mean);
    cells[c].count = m.size();
    cells[c].nmse_mean = mean;
    cells[c].nmse_std = m.size() > 1 ? std::sqrt(sq / double(m.size() - 1)) : 0.0;
    cells[c].wall_time_mean = time / double(m.size());
  }
  return cells;
}

inline double median(std::vector<double> v) {
  require(!v.empty(), ErrorCode::EmptyResult, "median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

namespace detail {

// 1-based ranks, ties sharing their average rank.
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = 0.5 * double(i + j) + 1.0;
    i = j + 1;
  }
  return r;
}

}  // namespace detail

// Spearman rank correlation (Pearson correlation of the ranks).
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size() && a.size() >= 2, ErrorCode::InvalidArgument,
          "spearman needs two equal-length samples of size >= 2");
  const std::vector<double> ra = detail::ranks(a), rb = detail::ranks(b);
  const double n = double(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

// ---------------------------------------------------------------------------
// Reports

inline constexpr const char* kCsvHeader = "method,rate,snr_db,views,seed,nmse,wall_time_s,iters";

namespace detail {

inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == s.size() && !s.empty(), ErrorCode::Parse, "bad number '" + s + "'");
  return v;
}

}  // namespace detail

inline std::string records_csv(const std::vector<SweepRecord>& records) {
  std::ostringstream os;
  os << kCsvHeader << '\n';
  for (const auto& r : records)
    os << to_string(r.method) << ',' << detail::format_double(r.rate) << ','
       << detail::format_double(r.snr_db) << ',' << r.views << ',' << r.seed << ','
       << detail::format_double(r.nmse) << ',' << detail::format_double(r.wall_time_s) << ','
       << r.iters << '\n';
  return os.str();
}

inline std::vector<SweepRecord> parse_records_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  require(bool(std::getline(is, line)) && line == kCsvHeader, ErrorCode::Parse, "unexpected CSV header");
  std::vector<SweepRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    require(f.size() == 8, ErrorCode::Parse, "CSV row needs 8 fields: " + line);
    SweepRecord r;
    r.method = parse_method(f[0]);
    r.rate = detail::parse_double(f[1]);
    r.snr_db = detail::parse_double(f[2]);
    r.views = int(detail::parse_double(f[3]));
    r.seed = std::stoull(f[4]);
    r.nmse = detail::parse_double(f[5]);
    r.wall_time_s = detail::parse_double(f[6]);
    r.iters = std::stol(f[7]);
    out.push_back(r);
  }
  return out;
}

inline nlohmann::ordered_json summary_json(const SweepResult& result) {
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const auto& c : summarize(result.records)) {
    cells.push_back({{"method", to_string(c.method)},
                     {"rate", c.rate},
                     {"total_rate", c.rate * c.views},
                     {"snr_db", detail::snr_json(c.snr_db)},
                     {"views", c.views},
                     {"count", c.count},
                     {"nmse_mean", c.nmse_mean},
                     {"nmse_std", c.nmse_std},
                     {"wall_time_mean_s", c.wall_time_mean}});
  }
  nlohmann::ordered_json failures = nlohmann::ordered_json::array();
  for (const auto& f : result.failures)
    failures.push_back({{"method", to_string(f.method)},
                        {"rate", f.rate},
                        {"snr_db", detail::snr_json(f.snr_db)},
                        {"views", f.views},
                        {"seed", f.seed},
                        {"error", f.message}});
  return {{"cells", cells}, {"failures", failures}};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  require(bool(os), ErrorCode::Io, "cannot open " + path.string() + " for writing");
  os << text;
  require(bool(os), ErrorCode::Io, "write failed for " + path.string());
}

// Writes <dir>/records.csv and <dir>/summary.json.
inline void emit_report(const SweepResult& result, const std::filesystem::path& dir) {
  require(!result.records.empty(), ErrorCode::EmptyResult, "sweep produced no records");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "records.csv", records_csv(result.records));
  write_text(dir / "summary.json", summary_json(result).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Config files: JSON objects whose keys mirror the SweepConfig fields.
// Missing keys keep their defaults; unknown keys are rejected.

namespace detail {

using nlohmann::json;

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  require(j.is_object(), ErrorCode::Parse, where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    require(ok, ErrorCode::Parse, "unknown key '" + key + "' in " + where);
  }
}

inline IpotParams ipot_from_json(const json& j, IpotParams p) {
  check_keys(j, {"prox_weight", "outer_iters", "inner_sinkhorn_iters", "convergence_tol"}, "ipot");
  if (j.contains("prox_weight")) p.prox_weight = j["prox_weight"].get<double>();
  if (j.contains("outer_iters")) p.outer_iters = j["outer_iters"].get<int>();
  if (j.contains("inner_sinkhorn_iters")) p.inner_sinkhorn_iters = j["inner_sinkhorn_iters"].get<int>();
  if (j.contains("convergence_tol")) p.convergence_tol = j["convergence_tol"].get<double>();
  return p;
}

inline RecoveryConfig recovery_from_json(const json& j, RecoveryConfig c) {
  check_keys(j, {"beta", "lambda", "step_size", "step_decay", "inner_tmax", "outer_tmax",
                 "support_size_per_view", "solver", "ipot", "project_support"},
             "recovery");
  if (j.contains("beta")) c.beta = j["beta"].get<double>();
  if (j.contains("lambda")) c.lambda = j["lambda"].get<double>();
  if (j.contains("step_size") && !j["step_size"].is_null()) c.step_size = j["step_size"].get<double>();
  if (j.contains("step_decay")) c.step_decay = j["step_decay"].get<double>();
  if (j.contains("inner_tmax")) c.inner_tmax = j["inner_tmax"].get<int>();
  if (j.contains("outer_tmax")) c.outer_tmax = j["outer_tmax"].get<int>();
  if (j.contains("support_size_per_view")) c.support_size_per_view = j["support_size_per_view"].get<Index>();
  if (j.contains("solver")) c.solver = parse_solver(j["solver"].get<std::string>());
  if (j.contains("ipot")) c.ipot = ipot_from_json(j["ipot"], c.ipot);
  if (j.contains("project_support")) c.project_support = j["project_support"].get<bool>();
  return c;
}

inline BaselineConfig baseline_from_json(const json& j, BaselineConfig c) {
  check_keys(j, {"beta", "mu", "step_size", "step_decay", "inner_tmax", "outer_tmax", "box_projection",
                 "project_support", "identity_start"},
             "baseline");
  if (j.contains("beta")) c.beta = j["beta"].get<double>();
  if (j.contains("mu") && !j["mu"].is_null()) c.mu = j["mu"].get<double>();
  if (j.contains("step_size") && !j["step_size"].is_null()) c.step_size = j["step_size"].get<double>();
  if (j.contains("step_decay")) c.step_decay = j["step_decay"].get<double>();
  if (j.contains("inner_tmax")) c.inner_tmax = j["inner_tmax"].get<int>();
  if (j.contains("outer_tmax")) c.outer_tmax = j["outer_tmax"].get<int>();
  if (j.contains("box_projection")) c.box_projection = j["box_projection"].get<bool>();
  if (j.contains("project_support")) c.project_support = j["project_support"].get<bool>();
  if (j.contains("identity_start")) c.identity_start = j["identity_start"].get<bool>();
  return c;
}

inline SceneSpec scene_from_json(const json& j, SceneSpec s) {
  check_keys(j, {"letter", "rows", "cols", "level", "jitter"}, "scene");
  if (j.contains("letter")) s.letter = parse_letter(j["letter"].get<std::string>());
  const int rows = j.value("rows", s.grid.rows()), cols = j.value("cols", s.grid.cols());
  s.grid = Grid(rows, cols);
  if (j.contains("level")) s.level = j["level"].get<double>();
  if (j.contains("jitter")) s.jitter = j["jitter"].get<int>();
  return s;
}

inline PerturbSpec perturb_from_json(const json& j, PerturbSpec p) {
  check_keys(j, {"displacement_radius", "max_shift", "swap_fraction", "max_attempts"}, "perturb");
  if (j.contains("displacement_radius")) p.displacement_radius = j["displacement_radius"].get<int>();
  if (j.contains("max_shift")) p.max_shift = j["max_shift"].get<int>();
  if (j.contains("swap_fraction")) p.swap_fraction = j["swap_fraction"].get<double>();
  if (j.contains("max_attempts")) p.max_attempts = j["max_attempts"].get<int>();
  return p;
}

}  // namespace detail

inline SweepConfig sweep_config_from_json(const nlohmann::json& j) {
  using detail::check_keys;
  check_keys(j, {"methods", "rates", "snr_db", "views", "seeds", "base_seed", "scene", "perturb", "recovery",
                 "baseline", "workers", "record_timing", "out"},
             "sweep config");
  SweepConfig c;
  try {
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j["methods"]) c.methods.push_back(parse_method(m.get<std::string>()));
    }
    if (j.contains("rates")) c.rates = j["rates"].get<std::vector<double>>();
    if (j.contains("snr_db")) {
      c.snr_db.clear();
      for (const auto& s : j["snr_db"]) c.snr_db.push_back(detail::json_snr(nlohmann::ordered_json(s)));
    }
    if (j.contains("views")) c.views = j["views"].get<std::vector<int>>();
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("base_seed")) c.base_seed = j["base_seed"].get<std::uint64_t>();
    if (j.contains("scene")) c.scene = detail::scene_from_json(j["scene"], c.scene);
    if (j.contains("perturb")) c.perturb = detail::perturb_from_json(j["perturb"], c.perturb);
    if (j.contains("recovery")) c.recovery = detail::recovery_from_json(j["recovery"], c.recovery);
    if (j.contains("baseline")) c.baseline = detail::baseline_from_json(j["baseline"], c.baseline);
    if (j.contains("workers")) c.workers = j["workers"].get<int>();
    if (j.contains("record_timing")) c.record_timing = j["record_timing"].get<bool>();
    if (j.contains("out")) c.out = j["out"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("sweep config: ") + e.what());
  }
  c.validate();
  return c;
}

inline SweepConfig load_sweep_config(const std::string& path) {
  std::ifstream is(path);
  require(bool(is), ErrorCode::Io, "cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, path + ": " + e.what());
  }
  return sweep_config_from_json(j);
}

}  // namespace otms

#endif  // OTMS_BENCH_HPP_
