// otms: generate instances, run one method on one instance, run sweeps, and
// run the oracle self-tests.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "otms.hpp"

namespace fs = std::filesystem;
using namespace otms;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out;
  std::string method;
  std::string instance;
};

SweepConfig load_config(const Options& o) {
  SweepConfig cfg = o.config.empty() ? SweepConfig{} : load_sweep_config(o.config);
  if (o.workers) cfg.workers = *o.workers;
  if (!o.out.empty()) cfg.out = o.out;
  if (!o.method.empty()) cfg.methods = {parse_method(o.method)};
  cfg.validate();
  return cfg;
}

std::string instance_name(int views, double rate, double snr, std::uint64_t seed) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "instance_k%d_rate%.3g_snr%s_seed%llu.json", views, rate,
                is_noiseless(snr) ? "inf" : std::to_string(int(std::lround(snr))).c_str(),
                static_cast<unsigned long long>(seed));
  return buf;
}

int cmd_gen(const Options& o) {
  SweepConfig cfg = load_config(o);
  if (o.seed) cfg.seeds = {*o.seed};
  const fs::path dir = cfg.out;
  fs::create_directories(dir);
  int written = 0;
  for (int k : cfg.views)
    for (double r : cfg.rates)
      for (double s : cfg.snr_db)
        for (std::uint64_t seed : cfg.seeds) {
          const Instance inst =
              build_instance(cfg.scene, cfg.perturb, k, r, s, cell_seed(cfg.base_seed, r, s, k, seed));
          save_instance(inst, (dir / instance_name(k, r, s, seed)).string());
          ++written;
        }
  std::cout << "wrote " << written << " instance(s) to " << dir.string() << "\n";
  return 0;
}

int cmd_recover(const Options& o) {
  SweepConfig cfg = load_config(o);
  const Instance inst = load_instance(o.instance);
  const Method m = o.method.empty() ? Method::Proposed : parse_method(o.method);
  MethodRun run = run_method(m, inst, cfg.recovery, cfg.baseline);
  std::printf("%s nmse=%.6g iters=%ld\n", std::string(to_string(m)).c_str(), nmse(run.estimate, inst.x_true),
              run.iters);
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    nlohmann::ordered_json j{{"method", to_string(m)},
                             {"rows", inst.grid().rows()},
                             {"cols", inst.grid().cols()},
                             {"estimate", std::vector<double>(run.estimate.values().begin(),
                                                              run.estimate.values().end())}};
    write_text(fs::path(o.out) / "estimate.json", j.dump(2) + "\n");
  }
  return 0;
}

int cmd_sweep(const Options& o) {
  SweepConfig cfg = load_config(o);
  if (o.seed) cfg.base_seed = *o.seed;
  const SweepResult result = run_sweep(cfg);
  emit_report(result, cfg.out);
  std::cout << result.records.size() << " record(s), " << result.failures.size() << " failure(s) -> "
            << cfg.out << "\n";
  for (const auto& f : result.failures)
    std::cerr << "failed: " << to_string(f.method) << " rate=" << f.rate << " views=" << f.views
              << " seed=" << f.seed << ": " << f.message << "\n";
  return 0;
}

int cmd_selftest() {
  bool ok = true;
  for (const auto& r : run_selftests()) {
    std::printf("%s  %-48s %s (%.2fs)\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str(), r.seconds);
    ok = ok && r.pass;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiview recovery with transport-regularized permutations"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON sweep config")->check(CLI::ExistingFile);
    sub->add_option("--workers", o.workers, "worker threads");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--method", o.method, "proposed | gradient | ignore_p");
  };

  auto* gen = app.add_subcommand("gen", "write instance files for every cell in the config");
  add_common(gen);
  gen->add_option("--seed", o.seed, "generate only this trial seed");

  auto* rec = app.add_subcommand("recover", "run one method on one instance and print its NMSE");
  add_common(rec);
  rec->add_option("instance", o.instance, "instance JSON")->required()->check(CLI::ExistingFile);

  auto* sweep = app.add_subcommand("sweep", "run a full sweep and write records.csv and summary.json");
  add_common(sweep);
  sweep->add_option("--seed", o.seed, "base seed mixed into every cell");

  auto* self = app.add_subcommand("selftest", "run the oracle and gradient checks");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_gen(o);
    if (*rec) return cmd_recover(o);
    if (*sweep) return cmd_sweep(o);
    if (*self) return cmd_selftest();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
