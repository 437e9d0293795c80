#include <CLI11.hpp>

#include "hamh/harness.hpp"

#include <cstdio>
#include <iostream>

namespace {

std::map<std::string, std::string> parse_overrides(const std::vector<std::string>& kvs) {
  std::map<std::string, std::string> out;
  for (const std::string& kv : kvs) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw CLI::ValidationError("--set expects key=value, got '" + kv + "'");
    out[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hamh: hyper-action multi-head PPO for multi-intersection traffic signal control"};
  app.require_subcommand(1);

  // ---- train ----
  auto* train = app.add_subcommand("train", "train a signal-control policy");
  hamh::harness::TrainOptions train_opt;
  std::vector<std::string> train_sets;
  train->add_option("--scenario", train_opt.scenario, "scenario name or path")->required();
  train->add_option("--controller", train_opt.controller,
                    "hamh | ppo-share | ppo-nonshare");
  train->add_option("--seed", train_opt.seed, "root seed");
  int train_episodes = -1;
  train->add_option("--episodes", train_episodes, "number of training episodes");
  train->add_option("--out", train_opt.out_dir, "output directory");
  train->add_option("--set", train_sets, "config override key=value (repeatable)");
  train->add_flag("--quiet", train_opt.quiet, "suppress progress lines");

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint with greedy actions");
  hamh::harness::EvalOptions eval_opt;
  std::vector<std::string> eval_sets;
  eval->add_option("--scenario", eval_opt.scenario)->required();
  eval->add_option("--checkpoint", eval_opt.checkpoint)->required();
  eval->add_option("--episodes", eval_opt.episodes, "number of greedy episodes");
  eval->add_option("--seed", eval_opt.seed);
  eval->add_option("--set", eval_sets, "config override key=value (repeatable)");

  // ---- baseline ----
  auto* baseline = app.add_subcommand("baseline", "run a non-learning controller");
  hamh::harness::BaselineOptions base_opt;
  baseline->add_option("--scenario", base_opt.scenario)->required();
  baseline->add_option("--controller", base_opt.controller, "fixedtime | maxpressure");
  baseline->add_option("--seeds", base_opt.seeds, "number of seeds");
  baseline->add_option("--seed", base_opt.seed_base, "first seed");
  baseline->add_option("--out", base_opt.out_dir, "output directory");

  // ---- gradcheck ----
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  std::uint64_t gc_seed = 2024;
  gradcheck->add_option("--seed", gc_seed);

  // ---- sweep ----
  auto* sweep = app.add_subcommand("sweep", "hyper-action dimension or parameter-scale sweep");
  hamh::harness::SweepOptions sweep_opt;
  std::vector<std::string> sweep_sets;
  sweep->add_option("--scenario", sweep_opt.scenario)->required();
  sweep->add_option("--what", sweep_opt.what, "k | scale");
  sweep->add_option("--seeds", sweep_opt.seeds);
  sweep->add_option("--seed", sweep_opt.seed_base, "first seed");
  sweep->add_option("--episodes", sweep_opt.episodes, "training episodes per point");
  sweep->add_option("--out", sweep_opt.out_dir);
  sweep->add_option("--set", sweep_sets, "config override key=value (repeatable)");

  // ---- export-obs ----
  auto* export_obs = app.add_subcommand("export-obs", "per-step observation CSV export");
  hamh::harness::ExportObsOptions obs_opt;
  export_obs->add_option("--scenario", obs_opt.scenario)->required();
  export_obs->add_option("--controller", obs_opt.controller, "fixedtime | maxpressure");
  export_obs->add_option("--seed", obs_opt.seed);
  export_obs->add_option("--out", obs_opt.out_path, "output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      train_opt.overrides = parse_overrides(train_sets);
      if (train_episodes > 0) train_opt.overrides["episodes"] = std::to_string(train_episodes);
      const auto result = hamh::harness::run_train(train_opt);
      std::cout << "final greedy m_tt " << result.final_eval_mtt << " (outputs in "
                << result.out_dir << ")\n";
      return 0;
    }
    if (eval->parsed()) {
      eval_opt.overrides = parse_overrides(eval_sets);
      const auto result = hamh::harness::run_eval(eval_opt);
      for (std::size_t i = 0; i < result.m_tts.size(); ++i)
        std::cout << "episode " << i << " m_tt " << result.m_tts[i] << "\n";
      std::cout << "m_tt mean " << result.mean << " +- " << result.stddev << " over "
                << result.m_tts.size() << " greedy episodes\n";
      return 0;
    }
    if (baseline->parsed()) {
      const auto result = hamh::harness::run_baseline(base_opt);
      std::cout << "median m_tt " << result.median << " over " << result.m_tts.size()
                << " seeds\n";
      return 0;
    }
    if (gradcheck->parsed()) {
      const auto entries = hamh::harness::run_gradcheck_suite(gc_seed);
      for (const auto& e : entries)
        std::printf("%-16s max_rel_error %.3e  %s\n", e.name.c_str(), e.max_rel_error,
                    e.passed() ? "ok" : "FAIL");
      const bool ok = hamh::harness::all_passed(entries);
      std::cout << (ok ? "gradcheck passed" : "gradcheck FAILED") << "\n";
      return ok ? 0 : 1;
    }
    if (sweep->parsed()) {
      sweep_opt.overrides = parse_overrides(sweep_sets);
      const auto rows = hamh::harness::run_sweep(sweep_opt);
      std::map<int, std::vector<double>> by_value;
      for (const auto& r : rows) by_value[r.value].push_back(r.final_mtt);
      for (const auto& [value, mtts] : by_value)
        std::cout << sweep_opt.what << "=" << value << " median m_tt "
                  << hamh::harness::median(mtts) << "\n";
      return 0;
    }
    if (export_obs->parsed()) {
      hamh::harness::run_export_obs(obs_opt);
      std::cout << "wrote " << obs_opt.out_path << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
