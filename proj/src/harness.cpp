#include "hamh/harness.hpp"

#include "hamh/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace hamh::harness {

namespace fs = std::filesystem;
using algo::Config;
using algo::EpisodeMetrics;
using nn::Mat;
using nn::Tensor;

namespace {

std::string fmt_f64(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Metrics CSV
// ---------------------------------------------------------------------------

const char* MetricsWriter::header() {
  return "episode,mode,m_tt,mean_reward,actor_obj,critic_loss,mean_hyper_entropy,wallclock_s";
}

MetricsWriter::MetricsWriter(std::string path) : path_(std::move(path)) {
  if (!fs::exists(path_) || fs::file_size(path_) == 0) {
    std::ofstream f(path_);
    if (!f) throw std::runtime_error("MetricsWriter: cannot open '" + path_ + "'");
    f << header() << "\n";
  }
}

void MetricsWriter::append(const EpisodeMetrics& m) {
  std::ofstream f(path_, std::ios::app);
  if (!f) throw std::runtime_error("MetricsWriter: cannot append to '" + path_ + "'");
  f << m.episode << ',' << m.mode << ',' << fmt_f64(m.m_tt) << ',' << fmt_f64(m.mean_reward)
    << ',' << fmt_f64(m.actor_obj) << ',' << fmt_f64(m.critic_loss) << ','
    << fmt_f64(m.mean_hyper_entropy) << ',' << fmt_f64(m.wallclock_s) << "\n";
  if (!f) throw std::runtime_error("MetricsWriter: write failed for '" + path_ + "'");
}

std::vector<EpisodeMetrics> MetricsWriter::read(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("MetricsWriter: cannot read '" + path + "'");
  std::string line;
  if (!std::getline(f, line) || line != header())
    throw std::runtime_error("MetricsWriter: bad header in '" + path + "'");
  std::vector<EpisodeMetrics> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    EpisodeMetrics m;
    std::string field;
    auto next = [&] {
      if (!std::getline(ls, field, ',')) throw std::runtime_error("MetricsWriter: short row");
      return field;
    };
    m.episode = std::stoi(next());
    m.mode = next();
    m.m_tt = std::strtod(next().c_str(), nullptr);
    m.mean_reward = std::strtod(next().c_str(), nullptr);
    m.actor_obj = std::strtod(next().c_str(), nullptr);
    m.critic_loss = std::strtod(next().c_str(), nullptr);
    m.mean_hyper_entropy = std::strtod(next().c_str(), nullptr);
    m.wallclock_s = std::strtod(next().c_str(), nullptr);
    rows.push_back(std::move(m));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

std::map<std::string, std::string> config_to_map(const Config& cfg) {
  std::map<std::string, std::string> m;
  m["gamma"] = fmt_f64(cfg.gamma);
  m["clip_eps"] = fmt_f64(cfg.clip_eps);
  m["epochs"] = std::to_string(cfg.epochs);
  m["entropy_coef"] = fmt_f64(cfg.entropy_coef);
  m["k"] = std::to_string(cfg.k);
  m["actor_lr"] = fmt_f64(cfg.actor_lr);
  m["critic_lr"] = fmt_f64(cfg.critic_lr);
  m["gae_lambda"] = fmt_f64(cfg.gae_lambda);
  m["episodes"] = std::to_string(cfg.episodes);
  m["hidden_dim"] = std::to_string(cfg.hidden_dim);
  m["gat_heads"] = std::to_string(cfg.gat_heads);
  m["gat_layers"] = std::to_string(cfg.gat_layers);
  m["hyper_grad_from_td"] = cfg.hyper_grad_from_td ? "true" : "false";
  m["normalize_advantages"] = cfg.normalize_advantages ? "true" : "false";
  m["grad_clip"] = fmt_f64(cfg.grad_clip);
  m["eval_interval"] = std::to_string(cfg.eval_interval);
  m["eval_episodes"] = std::to_string(cfg.eval_episodes);
  m["checkpoint_interval"] = std::to_string(cfg.checkpoint_interval);
  return m;
}

std::string hash_file_hex(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("hash_file_hex: cannot open '" + path + "'");
  std::ostringstream content;
  content << f.rdbuf();
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(content.str())));
  return buf;
}

void RunManifest::write(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("RunManifest: cannot open '" + path + "'");
  f << "hamh-manifest v1\n";
  f << "scenario " << scenario_name << "\n";
  f << "scenario_hash " << scenario_hash << "\n";
  f << "controller " << controller << "\n";
  f << "seed " << seed << "\n";
  f << "code_version " << code_version << "\n";
  for (const auto& [k, v] : config) f << "config " << k << ' ' << v << "\n";
  for (const auto& out : outputs) f << "output " << out << "\n";
}

// ---------------------------------------------------------------------------
// Gradient-check suite
// ---------------------------------------------------------------------------

algo::TrajectoryBuffer synthetic_trajectory(int T, int N, int k, std::uint64_t seed) {
  Rng rng = Rng(seed).substream("synthetic-trajectory");
  algo::TrajectoryBuffer b;
  b.T = T;
  b.N = N;
  b.k = k;
  b.logp_old.resize(T, N);
  b.values.resize(T + 1, N);
  b.rewards.resize(T, N);
  b.actions.assign(static_cast<std::size_t>(T), std::vector<int>(N, 0));
  for (int t = 0; t <= T; ++t) {
    Mat obs(N, sim::kObsDim);
    for (int i = 0; i < N; ++i)
      for (int c = 0; c < sim::kObsDim; ++c)
        obs(i, c) = static_cast<double>(rng.uniform_int(10));
    b.obs.push_back(obs);
    Mat w(N, k), z(N, k);
    for (int i = 0; i < N; ++i) {
      double total = 0.0;
      for (int c = 0; c < k; ++c) {
        w(i, c) = rng.uniform(0.05, 1.0);
        total += w(i, c);
        z(i, c) = rng.uniform(-5.0, 0.0);
      }
      w.row(i) /= total;
      b.values(t, i) = w.row(i).dot(z.row(i));
    }
    b.w_rollout.push_back(w);
    b.z_rollout.push_back(z);
    if (t < T) {
      for (int i = 0; i < N; ++i) {
        b.actions[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] =
            static_cast<int>(rng.uniform_int(8));
        b.logp_old(t, i) = std::log(rng.uniform(0.05, 0.9));
        b.rewards(t, i) = -static_cast<double>(rng.uniform_int(20));
      }
    }
  }
  return b;
}

namespace {

Mat random_mat(Rng& rng, nn::Index rows, nn::Index cols, double lo = -1.0, double hi = 1.0) {
  Mat m(rows, cols);
  for (nn::Index r = 0; r < rows; ++r)
    for (nn::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(lo, hi);
  return m;
}

Mat away_from(Mat m, double point, double margin = 0.05) {
  for (nn::Index r = 0; r < m.rows(); ++r)
    for (nn::Index c = 0; c < m.cols(); ++c)
      if (std::abs(m(r, c) - point) < margin) m(r, c) += 2.0 * margin;
  return m;
}

nets::Graph path_graph(int n) {
  Mat adj = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    adj(i, i) = 1.0;
    if (i + 1 < n) adj(i, i + 1) = adj(i + 1, i) = 1.0;
  }
  return nets::Graph::from_adjacency(std::move(adj));
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed) {
  std::vector<GradCheckEntry> out;
  Rng rng(seed);
  auto push = [&out](const std::string& name, double err) {
    out.push_back({name, err, 1e-4});
  };

  // Primitives on randomized shapes.
  const nn::Index n = 3, m = 4, p = 5;
  Tensor a = Tensor::param(random_mat(rng, n, m), "a");
  Tensor b = Tensor::param(random_mat(rng, m, p), "b");
  Tensor c = Tensor::param(random_mat(rng, n, m), "c");
  Tensor bias = Tensor::param(random_mat(rng, 1, m), "bias", 1);
  Tensor pos = Tensor::param(random_mat(rng, n, m, 0.1, 2.0), "pos");
  Tensor nz = Tensor::param(away_from(random_mat(rng, n, m), 0.0), "nz");
  using nn::grad_check;
  push("matmul", grad_check([&] { return nn::sum(nn::matmul(a, b)); }, {a, b}));
  push("add", grad_check([&] { return nn::sum(nn::square(nn::add(a, c))); }, {a, c}));
  push("add-bias", grad_check([&] { return nn::sum(nn::square(nn::add(a, bias))); }, {a, bias}));
  push("mul", grad_check([&] { return nn::sum(nn::mul(a, c)); }, {a, c}));
  push("concat", grad_check([&] { return nn::sum(nn::square(nn::concat(a, c))); }, {a, c}));
  push("relu", grad_check([&] { return nn::sum(nn::square(nn::relu(nz))); }, {nz}));
  push("tanh", grad_check([&] { return nn::sum(nn::square(nn::tanh(a))); }, {a}));
  push("sigmoid", grad_check([&] { return nn::sum(nn::square(nn::sigmoid(a))); }, {a}));
  push("softmax_lastdim",
       grad_check([&] { return nn::sum(nn::square(nn::softmax_lastdim(a))); }, {a}));
  push("log", grad_check([&] { return nn::sum(nn::square(nn::log(pos))); }, {pos}));
  push("sum", grad_check([&] { return nn::sum(nn::square(a)); }, {a}));
  push("mean", grad_check([&] { return nn::mean(nn::square(a)); }, {a}));
  push("square", grad_check([&] { return nn::sum(nn::square(nn::square(a))); }, {a}));
  push("exp", grad_check([&] { return nn::sum(nn::square(nn::exp(a))); }, {a}));
  push("xlogx", grad_check([&] { return nn::sum(nn::xlogx(pos)); }, {pos}));
  push("leaky_relu", grad_check([&] { return nn::sum(nn::square(nn::leaky_relu(nz, 0.2))); }, {nz}));
  push("elu", grad_check([&] { return nn::sum(nn::square(nn::elu(nz))); }, {nz}));

  const algo::Config cfg = [] {
    algo::Config c;
    c.hidden_dim = 16;
    c.k = 3;
    c.validate();
    return c;
  }();
  const nets::NetDims dims = cfg.dims(2);
  algo::AgentNets nets = algo::make_agent_nets(dims, rng.substream("nets"));

  // GRU cell.
  {
    Rng local = rng.substream("gru");
    Tensor x = Tensor::from_matrix(random_mat(local, 2, dims.hidden, -0.5, 0.5));
    Tensor h = Tensor::from_matrix(random_mat(local, 2, dims.hidden, -0.5, 0.5));
    std::vector<Tensor> params = {nets.actor.gru.W_z, nets.actor.gru.U_z, nets.actor.gru.b_z,
                                  nets.actor.gru.W_r, nets.actor.gru.U_r, nets.actor.gru.b_r,
                                  nets.actor.gru.W_h, nets.actor.gru.U_h, nets.actor.gru.b_h};
    push("gru", grad_check(
                    [&] { return nn::sum(nets::gru_step(nets.actor.gru, x, h)); }, params));
  }

  // One GAT layer on a 3-node path graph.
  {
    Rng local = rng.substream("gat");
    nets::Graph g = path_graph(3);
    Tensor x = Tensor::from_matrix(random_mat(local, 3, dims.hidden, -0.5, 0.5));
    std::vector<Tensor> params;
    for (const nets::GatHeadParams& head : nets.critic.gat[0].heads) {
      params.push_back(head.W);
      params.push_back(head.a_src);
      params.push_back(head.a_dst);
    }
    push("gat", grad_check(
                    [&] {
                      return nn::sum(nn::square(nets::gat_layer(nets.critic.gat[0], x, g)));
                    },
                    params));
  }

  // Full losses on a 2-agent, 3-step synthetic batch.
  {
    algo::TrajectoryBuffer buffer = synthetic_trajectory(3, 2, cfg.k, seed ^ 0x5eed);
    algo::AdvantageSet adv =
        algo::compute_gae(buffer.rewards, buffer.values, cfg.gamma, cfg.gae_lambda);
    algo::normalize_advantages(adv.advantages, {0, 1});
    algo::GroupBatch batch = algo::make_group_batch(buffer, adv, 0, 2);
    nets::Graph g = path_graph(2);
    push("actor-loss",
         grad_check(
             [&] { return algo::compute_group_losses(nets, batch, g, cfg).actor_objective; },
             nets::actor_param_list(nets.actor)));
    // Both stop-gradient quantities (the bootstrap target and the value-side
    // hyper-action) are pinned when sweeping the critic parameters; the
    // hyper head is swept separately with only the target pinned, since W_e
    // and b_e do not move the GRU features.
    const algo::LossPair base = algo::compute_group_losses(nets, batch, g, cfg);
    algo::LossFreeze freeze_all;
    freeze_all.td_target = &base.td_target;
    freeze_all.w_for_value = &base.w_value_used;
    push("critic-loss",
         grad_check(
             [&] {
               return algo::compute_group_losses(nets, batch, g, cfg, freeze_all).critic_loss;
             },
             nets::critic_param_list(nets.critic, true)));
    algo::LossFreeze freeze_target;
    freeze_target.td_target = &base.td_target;
    push("critic-loss-hyper-head",
         grad_check(
             [&] {
               return algo::compute_group_losses(nets, batch, g, cfg, freeze_target).critic_loss;
             },
             {nets.actor.W_e, nets.actor.b_e}));
  }
  return out;
}

bool all_passed(const std::vector<GradCheckEntry>& entries) {
  for (const GradCheckEntry& e : entries)
    if (!e.passed()) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Statistics helpers
// ---------------------------------------------------------------------------

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double interquartile_range(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("interquartile_range: empty input");
  std::sort(values.begin(), values.end());
  auto quartile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
  };
  return quartile(0.75) - quartile(0.25);
}

std::string resolve_out_dir(const std::string& requested, const std::string& fallback_name) {
  std::string base = requested;
  if (base.empty()) {
    if (const char* env = std::getenv("HAMH_OUT_DIR"))
      base = (fs::path(env) / fallback_name).string();
    else
      base = (fs::path("runs") / fallback_name).string();
  }
  fs::create_directories(base);
  return base;
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

namespace {

Config build_config(const sim::Scenario& scenario,
                    const std::map<std::string, std::string>& cli_overrides) {
  Config cfg;
  cfg.apply_overrides(scenario.config);
  cfg.apply_overrides(cli_overrides);
  return cfg;
}

}  // namespace

TrainResult run_train(const TrainOptions& opt) {
  const std::string path = sim::resolve_scenario_path(opt.scenario);
  const sim::Scenario scenario = sim::parse_scenario_file(path);
  const Config cfg = build_config(scenario, opt.overrides);
  const baselines::ControllerKind kind = baselines::controller_from_string(opt.controller);
  const baselines::VariantSetup setup = baselines::make_variant(kind, cfg);

  const std::string fallback =
      scenario.name + "_" + opt.controller + "_seed" + std::to_string(opt.seed);
  TrainResult result;
  result.out_dir = resolve_out_dir(opt.out_dir, fallback);

  RunManifest manifest;
  manifest.scenario_name = scenario.name;
  manifest.scenario_hash = hash_file_hex(path);
  manifest.controller = opt.controller;
  manifest.seed = opt.seed;
  manifest.config = config_to_map(setup.config);
  manifest.outputs = {"metrics.csv", "ckpt_final.txt"};
  manifest.write((fs::path(result.out_dir) / "manifest.txt").string());

  algo::Trainer trainer(scenario, setup.config, setup.variant, opt.seed);
  MetricsWriter metrics((fs::path(result.out_dir) / "metrics.csv").string());

  for (int ep = 0; ep < setup.config.episodes; ++ep) {
    algo::EpisodeMetrics m = trainer.train_episode(ep);
    metrics.append(m);
    result.train_rows.push_back(m);
    if (!opt.quiet && (ep % 10 == 0 || ep + 1 == setup.config.episodes))
      std::cout << "[train] episode " << ep << " m_tt=" << m.m_tt
                << " mean_reward=" << m.mean_reward << "\n";

    const bool last = ep + 1 == setup.config.episodes;
    if (setup.config.eval_interval > 0 &&
        ((ep + 1) % setup.config.eval_interval == 0 || last)) {
      for (int e = 0; e < setup.config.eval_episodes; ++e) {
        auto [mtt, mean_reward] =
            trainer.greedy_episode(static_cast<std::uint64_t>(ep) * 1000 + e);
        algo::EpisodeMetrics row;
        row.episode = ep;
        row.mode = "eval";
        row.m_tt = mtt;
        row.mean_reward = mean_reward;
        row.actor_obj = std::nan("");
        row.critic_loss = std::nan("");
        row.mean_hyper_entropy = std::nan("");
        row.wallclock_s = trainer.elapsed_s();
        metrics.append(row);
        result.eval_rows.push_back(row);
      }
    }
    if (setup.config.checkpoint_interval > 0 &&
        (ep + 1) % setup.config.checkpoint_interval == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "ckpt_ep%04d.txt", ep + 1);
      nn::ParamRegistry reg = trainer.registry();
      nn::save_checkpoint((fs::path(result.out_dir) / name).string(), reg,
                          trainer.checkpoint_meta());
    }
  }

  nn::ParamRegistry reg = trainer.registry();
  nn::save_checkpoint((fs::path(result.out_dir) / "ckpt_final.txt").string(), reg,
                      trainer.checkpoint_meta());

  auto [final_mtt, final_reward] = trainer.greedy_episode(999999);
  result.final_eval_mtt = final_mtt;
  result.wallclock_s = trainer.elapsed_s();
  return result;
}

EvalResult run_eval(const EvalOptions& opt) {
  const std::string path = sim::resolve_scenario_path(opt.scenario);
  const sim::Scenario scenario = sim::parse_scenario_file(path);
  const nn::MetaMap meta = nn::peek_checkpoint_meta(opt.checkpoint);

  Config cfg = build_config(scenario, opt.overrides);
  // Architecture fields come from the checkpoint.
  cfg.k = std::stoi(meta.at("k"));
  cfg.hidden_dim = std::stoi(meta.at("hidden_dim"));
  cfg.gat_heads = std::stoi(meta.at("gat_heads"));
  cfg.gat_layers = std::stoi(meta.at("gat_layers"));
  algo::Variant variant = algo::Variant::kHamh;
  for (algo::Variant v :
       {algo::Variant::kHamh, algo::Variant::kPpoShare, algo::Variant::kPpoNonShare})
    if (meta.at("variant") == algo::variant_name(v)) variant = v;

  algo::Trainer trainer(scenario, cfg, variant, opt.seed);
  trainer.load_checkpoint_file(opt.checkpoint);

  EvalResult result;
  for (int e = 0; e < opt.episodes; ++e) {
    auto [mtt, mean_reward] = trainer.greedy_episode(opt.seed + static_cast<std::uint64_t>(e));
    result.m_tts.push_back(mtt);
  }
  double sum = 0.0;
  for (double v : result.m_tts) sum += v;
  result.mean = sum / static_cast<double>(result.m_tts.size());
  double sq = 0.0;
  for (double v : result.m_tts) sq += (v - result.mean) * (v - result.mean);
  result.stddev = std::sqrt(sq / static_cast<double>(result.m_tts.size()));
  return result;
}

BaselineResult run_baseline(const BaselineOptions& opt) {
  const std::string path = sim::resolve_scenario_path(opt.scenario);
  const sim::Scenario scenario = sim::parse_scenario_file(path);
  const baselines::ControllerKind kind = baselines::controller_from_string(opt.controller);
  if (baselines::is_learning_controller(kind))
    throw std::invalid_argument("run_baseline: use train for learning controllers");

  const std::string fallback = scenario.name + "_" + opt.controller;
  const std::string out_dir = resolve_out_dir(opt.out_dir, fallback);
  MetricsWriter metrics((fs::path(out_dir) / "metrics.csv").string());

  RunManifest manifest;
  manifest.scenario_name = scenario.name;
  manifest.scenario_hash = hash_file_hex(path);
  manifest.controller = opt.controller;
  manifest.seed = opt.seed_base;
  manifest.config["seeds"] = std::to_string(opt.seeds);
  manifest.config["fixed_time_plan"] = "phases 0,1,2,3 at 30s green";
  manifest.config["decision_interval_s"] = std::to_string(scenario.decision_interval_s);
  manifest.outputs = {"metrics.csv"};
  manifest.write((fs::path(out_dir) / "manifest.txt").string());

  BaselineResult result;
  const auto start = std::chrono::steady_clock::now();
  for (int s = 0; s < opt.seeds; ++s) {
    const auto r = baselines::run_controller_episode(scenario, kind,
                                                     opt.seed_base + static_cast<std::uint64_t>(s));
    algo::EpisodeMetrics row;
    row.episode = s;
    row.mode = opt.controller;
    row.m_tt = r.m_tt;
    row.mean_reward = r.mean_reward;
    row.actor_obj = std::nan("");
    row.critic_loss = std::nan("");
    row.mean_hyper_entropy = std::nan("");
    row.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    metrics.append(row);
    result.m_tts.push_back(r.m_tt);
    if (!opt.quiet)
      std::cout << "[baseline] " << opt.controller << " seed " << (opt.seed_base + s)
                << " m_tt=" << r.m_tt << "\n";
  }
  result.median = median(result.m_tts);
  return result;
}

std::vector<SweepRow> run_sweep(const SweepOptions& opt) {
  const std::string path = sim::resolve_scenario_path(opt.scenario);
  const sim::Scenario scenario = sim::parse_scenario_file(path);
  std::vector<int> values;
  if (opt.what == "k")
    values = {1, 2, 8, 16, 32, 64};
  else if (opt.what == "scale")
    values = {16, 32, 64, 128};
  else
    throw std::invalid_argument("run_sweep: what must be 'k' or 'scale'");

  const std::string out_dir = resolve_out_dir(opt.out_dir, scenario.name + "_sweep_" + opt.what);
  std::ofstream csv(fs::path(out_dir) / ("sweep_" + opt.what + ".csv"));
  csv << "what,value,seed,final_mtt,param_count,wallclock_s\n";

  std::vector<SweepRow> rows;
  for (int value : values) {
    for (int s = 0; s < opt.seeds; ++s) {
      Config cfg = build_config(scenario, opt.overrides);
      cfg.episodes = opt.episodes;
      if (opt.what == "k") cfg.k = value;
      else cfg.hidden_dim = value;
      cfg.validate();

      algo::Trainer trainer(scenario, cfg, algo::Variant::kHamh,
                            opt.seed_base + static_cast<std::uint64_t>(s));
      for (int ep = 0; ep < cfg.episodes; ++ep) trainer.train_episode(ep);
      auto [mtt, mean_reward] = trainer.greedy_episode(12345);

      SweepRow row;
      row.what = opt.what;
      row.value = value;
      row.seed = opt.seed_base + static_cast<std::uint64_t>(s);
      row.final_mtt = mtt;
      row.param_count = trainer.registry().scalar_count();
      row.wallclock_s = trainer.elapsed_s();
      rows.push_back(row);
      csv << row.what << ',' << row.value << ',' << row.seed << ',' << fmt_f64(row.final_mtt)
          << ',' << row.param_count << ',' << fmt_f64(row.wallclock_s) << "\n";
      csv.flush();
      if (!opt.quiet)
        std::cout << "[sweep] " << opt.what << "=" << value << " seed=" << row.seed
                  << " final_mtt=" << row.final_mtt << "\n";
    }
  }
  return rows;
}

void run_export_obs(const ExportObsOptions& opt) {
  const std::string path = sim::resolve_scenario_path(opt.scenario);
  const sim::Scenario scenario = sim::parse_scenario_file(path);
  const baselines::ControllerKind kind = baselines::controller_from_string(opt.controller);
  if (baselines::is_learning_controller(kind))
    throw std::invalid_argument("run_export_obs: use a fixedtime or maxpressure controller");

  const sim::RoadNetwork net = sim::build_network(scenario);
  sim::SimState state(net, scenario, opt.seed);
  const baselines::FixedTimePlan plan = baselines::FixedTimePlan::default_plan();

  std::ofstream csv(opt.out_path);
  if (!csv) throw std::runtime_error("run_export_obs: cannot open '" + opt.out_path + "'");
  csv << "t,intersection";
  for (int l = 0; l < sim::kObsDim; ++l) csv << ",lane" << l;
  csv << "\n";

  const int T = scenario.steps_per_episode();
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < net.n_intersections(); ++i) {
      const Eigen::VectorXd obs = state.observe(i);
      csv << t << ',' << i;
      for (int l = 0; l < sim::kObsDim; ++l) csv << ',' << obs(l);
      csv << "\n";
    }
    std::vector<int> actions(static_cast<std::size_t>(net.n_intersections()), 0);
    for (int i = 0; i < net.n_intersections(); ++i)
      actions[static_cast<std::size_t>(i)] = kind == baselines::ControllerKind::kFixedTime
                                                 ? baselines::fixed_time_action(state.clock(), plan)
                                                 : baselines::max_pressure_action(state, i);
    state.apply_actions(actions);
    for (int s = 0; s < scenario.decision_interval_s; ++s) state.step_second();
  }
}

}  // namespace hamh::harness
