#pragma once

#include "hamh/algo.hpp"
#include "hamh/baselines.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace hamh::harness {

inline constexpr const char* kCodeVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Metrics CSV
// ---------------------------------------------------------------------------

// Headered, append-safe CSV with one row per episode and full f64 precision.
class MetricsWriter {
 public:
  explicit MetricsWriter(std::string path);
  void append(const algo::EpisodeMetrics& m);
  const std::string& path() const { return path_; }

  static const char* header();
  static std::vector<algo::EpisodeMetrics> read(const std::string& path);

 private:
  std::string path_;
};

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

struct RunManifest {
  std::string scenario_name;
  std::string scenario_hash;  // FNV-1a of the scenario file bytes, hex
  std::string controller;
  std::uint64_t seed = 0;
  std::string code_version = kCodeVersion;
  std::map<std::string, std::string> config;
  std::vector<std::string> outputs;

  void write(const std::string& path) const;
};

std::map<std::string, std::string> config_to_map(const algo::Config& cfg);
std::string hash_file_hex(const std::string& path);

// ---------------------------------------------------------------------------
// Gradient-check suite
// ---------------------------------------------------------------------------

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 1e-4;
  bool passed() const { return max_rel_error < tolerance; }
};

// Finite-difference verification of every primitive, the GRU cell, a GAT
// layer, and both full training losses on a small synthetic batch.
std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed = 2024);
bool all_passed(const std::vector<GradCheckEntry>& entries);

// Deterministic synthetic trajectory batch (integer wave counts, sampled
// actions, behavior log-probs, rollout values) used by the gradient checks
// and the verification experiments.
algo::TrajectoryBuffer synthetic_trajectory(int T, int N, int k, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Experiment orchestration
// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string scenario;  // bundled name or path
  std::string controller = "hamh";
  std::uint64_t seed = 1;
  std::string out_dir;  // empty -> runs/<scenario>_<controller>_seed<seed>
  std::map<std::string, std::string> overrides;
  bool quiet = false;
};

struct TrainResult {
  std::string out_dir;
  std::vector<algo::EpisodeMetrics> train_rows;
  std::vector<algo::EpisodeMetrics> eval_rows;
  double final_eval_mtt = 0.0;
  double wallclock_s = 0.0;
};

TrainResult run_train(const TrainOptions& opt);

struct EvalOptions {
  std::string scenario;
  std::string checkpoint;
  int episodes = 5;
  std::uint64_t seed = 1;
  std::map<std::string, std::string> overrides;
};

struct EvalResult {
  std::vector<double> m_tts;
  double mean = 0.0;
  double stddev = 0.0;
};

EvalResult run_eval(const EvalOptions& opt);

struct BaselineOptions {
  std::string scenario;
  std::string controller = "fixedtime";  // fixedtime | maxpressure
  int seeds = 5;
  std::uint64_t seed_base = 1;
  std::string out_dir;
  bool quiet = false;
};

struct BaselineResult {
  std::vector<double> m_tts;
  double median = 0.0;
};

BaselineResult run_baseline(const BaselineOptions& opt);

struct SweepOptions {
  std::string scenario;
  std::string what = "k";  // "k" or "scale"
  int seeds = 3;
  std::uint64_t seed_base = 1;
  int episodes = 40;  // per training run
  std::string out_dir;
  std::map<std::string, std::string> overrides;
  bool quiet = false;
};

struct SweepRow {
  std::string what;
  int value = 0;
  std::uint64_t seed = 0;
  double final_mtt = 0.0;
  std::size_t param_count = 0;
  double wallclock_s = 0.0;
};

std::vector<SweepRow> run_sweep(const SweepOptions& opt);

struct ExportObsOptions {
  std::string scenario;
  std::string controller = "fixedtime";
  std::uint64_t seed = 1;
  std::string out_path = "observations.csv";
};

// Per-decision-step observation trace: columns (t, intersection,
// lane0..lane11).
void run_export_obs(const ExportObsOptions& opt);

// Utility shared by experiments: median of a vector (empty -> throws).
double median(std::vector<double> values);
// Interquartile range (linear-interpolated quartiles).
double interquartile_range(std::vector<double> values);

// Resolves the output directory, honoring the HAMH_OUT_DIR environment
// variable override.
std::string resolve_out_dir(const std::string& requested, const std::string& fallback_name);

}  // namespace hamh::harness
