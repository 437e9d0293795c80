#include "hamh/algo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace hamh::algo {

using namespace hamh::nn;
using namespace hamh::nets;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void Config::validate() const {
  if (gamma < 0.0 || gamma >= 1.0) throw std::invalid_argument("Config: gamma must be in [0,1)");
  if (clip_eps <= 0.0) throw std::invalid_argument("Config: clip epsilon must be positive");
  if (k < 1) throw std::invalid_argument("Config: k must be >= 1");
  if (actor_lr <= 0.0 || critic_lr <= 0.0)
    throw std::invalid_argument("Config: learning rates must be positive");
  if (gae_lambda < 0.0 || gae_lambda > 1.0)
    throw std::invalid_argument("Config: gae_lambda must be in [0,1]");
  if (epochs < 1 || episodes < 1) throw std::invalid_argument("Config: epochs/episodes must be >= 1");
  if (hidden_dim < 1 || hidden_dim % gat_heads != 0)
    throw std::invalid_argument("Config: hidden_dim must be a positive multiple of gat_heads");
  if (grad_clip <= 0.0) throw std::invalid_argument("Config: grad_clip must be positive");
}

void Config::apply_overrides(const std::map<std::string, std::string>& overrides) {
  for (const auto& [key, value] : overrides) {
    auto as_double = [&value, &key] {
      std::size_t used = 0;
      const double v = std::stod(value, &used);
      if (used != value.size())
        throw std::invalid_argument("Config: bad numeric value for '" + key + "'");
      return v;
    };
    auto as_int = [&] { return static_cast<int>(std::lround(as_double())); };
    auto as_bool = [&value, &key] {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      throw std::invalid_argument("Config: bad boolean value for '" + key + "'");
    };
    if (key == "gamma") gamma = as_double();
    else if (key == "clip_eps") clip_eps = as_double();
    else if (key == "epochs") epochs = as_int();
    else if (key == "entropy_coef" || key == "lambda") entropy_coef = as_double();
    else if (key == "k") k = as_int();
    else if (key == "actor_lr") actor_lr = as_double();
    else if (key == "critic_lr") critic_lr = as_double();
    else if (key == "gae_lambda") gae_lambda = as_double();
    else if (key == "episodes") episodes = as_int();
    else if (key == "hidden_dim") hidden_dim = as_int();
    else if (key == "gat_heads") gat_heads = as_int();
    else if (key == "gat_layers") gat_layers = as_int();
    else if (key == "hyper_grad_from_td") hyper_grad_from_td = as_bool();
    else if (key == "normalize_advantages") normalize_advantages = as_bool();
    else if (key == "grad_clip") grad_clip = as_double();
    else if (key == "eval_interval") eval_interval = as_int();
    else if (key == "eval_episodes") eval_episodes = as_int();
    else if (key == "checkpoint_interval") checkpoint_interval = as_int();
    else throw std::invalid_argument("Config: unknown override '" + key + "'");
  }
  validate();
}

NetDims Config::dims(int n_agents, int obs_dim) const {
  NetDims d;
  d.obs_dim = obs_dim;
  d.hidden = hidden_dim;
  d.k = k;
  d.n_agents = n_agents;
  d.gat_heads = gat_heads;
  d.gat_layers = gat_layers;
  d.validate();
  return d;
}

// ---------------------------------------------------------------------------
// Buffer / GAE / PPO pieces
// ---------------------------------------------------------------------------

Mat TrajectoryBuffer::stacked_obs() const {
  if (obs.empty()) return {};
  Mat out(static_cast<Index>(obs.size()) * obs.front().rows(), obs.front().cols());
  Index at = 0;
  for (const Mat& block : obs) {
    out.middleRows(at, block.rows()) = block;
    at += block.rows();
  }
  return out;
}

AdvantageSet compute_gae(const Mat& rewards, const Mat& values, double gamma, double gae_lambda) {
  const Index T = rewards.rows();
  const Index N = rewards.cols();
  if (values.rows() != T + 1 || values.cols() != N)
    throw std::invalid_argument("compute_gae: values must be (T+1) x N");
  AdvantageSet out;
  out.advantages.resize(T, N);
  out.value_targets.resize(T, N);
  for (Index i = 0; i < N; ++i) {
    double carry = 0.0;
    for (Index t = T - 1; t >= 0; --t) {
      const double delta = rewards(t, i) + gamma * values(t + 1, i) - values(t, i);
      carry = delta + gamma * gae_lambda * carry;
      out.advantages(t, i) = carry;
      out.value_targets(t, i) = carry + values(t, i);
    }
  }
  return out;
}

void normalize_advantages(Mat& advantages, const std::vector<int>& agent_cols) {
  double sum = 0.0;
  long n = 0;
  for (int c : agent_cols) {
    sum += advantages.col(c).sum();
    n += advantages.rows();
  }
  const double mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (int c : agent_cols) sq += (advantages.col(c).array() - mean).square().sum();
  const double stddev = std::sqrt(sq / static_cast<double>(n));
  for (int c : agent_cols)
    advantages.col(c) = (advantages.col(c).array() - mean) / (stddev + 1e-8);
}

double ppo_clip_term(double logp_new, double logp_old, double advantage, double eps) {
  const double rho = std::exp(logp_new - logp_old);
  const double clipped = std::clamp(rho, 1.0 - eps, 1.0 + eps);
  return std::min(rho * advantage, clipped * advantage);
}

Tensor ppo_clip_terms(const Tensor& logp_new, const Mat& logp_old, const Mat& advantages,
                      double eps) {
  Tensor ratio = nn::exp(nn::sub(logp_new, Tensor::from_matrix(logp_old)));
  Tensor adv = Tensor::from_matrix(advantages);
  return nn::minimum(nn::mul(ratio, adv), nn::mul(nn::clamp(ratio, 1.0 - eps, 1.0 + eps), adv));
}

// ---------------------------------------------------------------------------
// Nets / env
// ---------------------------------------------------------------------------

AgentNets make_agent_nets(const NetDims& dims, const Rng& rng, const std::string& prefix) {
  EmbedParams embed = make_embed_params(dims, rng, prefix + "actor.embed.");
  AgentNets nets;
  nets.actor = make_actor_params(dims, rng, embed, prefix + "actor.");
  nets.critic = make_critic_params(dims, rng, embed, prefix + "critic.");
  return nets;
}

Env::Env(const sim::Scenario& scenario, std::uint64_t seed)
    : scenario_(&scenario), net_(sim::build_network(scenario)) {
  reset(seed);
}

void Env::reset(std::uint64_t seed) { state_.emplace(net_, *scenario_, seed); }

Mat Env::observe_all() const { return state_->observe_all(); }

Eigen::VectorXd Env::step(const std::vector<int>& actions) {
  state_->apply_actions(actions);
  for (int s = 0; s < scenario_->decision_interval_s; ++s) state_->step_second();
  Eigen::VectorXd rewards(n_agents());
  for (int i = 0; i < n_agents(); ++i) rewards(i) = state_->reward(i);
  return rewards;
}

bool Env::done() const { return state_->clock() >= scenario_->episode_s; }

double Env::travel_time() const {
  return sim::travel_time_metric(state_->vehicles(), scenario_->episode_s);
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kHamh: return "hamh";
    case Variant::kPpoShare: return "ppo-share";
    case Variant::kPpoNonShare: return "ppo-nonshare";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

GroupBatch make_group_batch(const TrajectoryBuffer& buffer, const AdvantageSet& adv, int start,
                            int count) {
  GroupBatch b;
  b.start = start;
  b.count = count;
  b.stacked_obs = buffer.stacked_obs();
  const int T = buffer.T;
  b.onehot = Mat::Zero(static_cast<Index>(T + 1) * count, buffer.N);
  b.logp_old_flat.resize(static_cast<Index>(T) * count, 1);
  b.advantages_flat.resize(static_cast<Index>(T) * count, 1);
  b.rewards_flat.resize(static_cast<Index>(T) * count, 1);
  b.actions_flat.reserve(static_cast<std::size_t>(T) * count);
  for (int t = 0; t <= T; ++t)
    for (int a = 0; a < count; ++a) b.onehot(static_cast<Index>(t) * count + a, start + a) = 1.0;
  for (int t = 0; t < T; ++t)
    for (int a = 0; a < count; ++a) {
      const Index row = static_cast<Index>(t) * count + a;
      const int agent = start + a;
      b.actions_flat.push_back(buffer.actions[static_cast<std::size_t>(t)][static_cast<std::size_t>(agent)]);
      b.logp_old_flat(row, 0) = buffer.logp_old(t, agent);
      b.advantages_flat(row, 0) = adv.advantages(t, agent);
      b.rewards_flat(row, 0) = buffer.rewards(t, agent);
    }
  return b;
}

LossPair compute_group_losses(const AgentNets& nets, const GroupBatch& batch,
                              const nets::Graph& graph, const Config& cfg,
                              const LossFreeze& freeze) {
  const int N = static_cast<int>(graph.size());
  const int m = batch.count;
  const Index total_rows = batch.stacked_obs.rows();
  const int T = static_cast<int>(total_rows / N) - 1;
  const int hidden = nets.actor.dims.hidden;

  // Shared embedding over every agent and step; the actor reads its group's
  // rows, the critic consumes all of them.
  Tensor obs = Tensor::from_matrix(batch.stacked_obs);
  Tensor x_all = embed_obs(nets.actor.embed, obs);

  // Recurrent re-unroll from h0 = 0 over the stored observation sequence.
  Tensor h = Tensor::zeros(m, hidden);
  std::vector<Tensor> h_steps;
  h_steps.reserve(static_cast<std::size_t>(T) + 1);
  for (int t = 0; t <= T; ++t) {
    Tensor x_t = slice_rows(x_all, static_cast<Index>(t) * N + batch.start, m);
    h = gru_step(nets.actor.gru, x_t, h);
    h_steps.push_back(h);
  }
  std::vector<Tensor> h_past(h_steps.begin(), h_steps.end() - 1);
  Tensor h_stack = concat_rows(h_past);   // T*m rows
  Tensor h_full = concat_rows(h_steps);   // (T+1)*m rows

  // Policy log-probabilities of the stored actions.
  Tensor probs = action_policy(nets.actor, h_stack);
  Tensor logp_new = nn::log(gather_lastdim(probs, batch.actions_flat));

  // Hyper-actions for every step including the bootstrap.
  Tensor w_full = hyper_action(nets.actor, h_full, batch.onehot);
  Tensor w_steps = slice_rows(w_full, 0, static_cast<Index>(T) * m);

  // Averaged PPO term plus entropy regularization on the hyper-action.
  Tensor clip_terms =
      ppo_clip_terms(logp_new, batch.logp_old_flat, batch.advantages_flat, cfg.clip_eps);
  Tensor entropy_mean = scale(nn::mean(xlogx(w_steps)), -static_cast<double>(cfg.k));
  Tensor objective = nn::add(nn::mean(clip_terms), scale(entropy_mean, cfg.entropy_coef));

  // Critic: recomputed joint values with a stop-gradient bootstrap.
  Tensor z_all = critic_values_from_embed(nets.critic, x_all, graph);
  Tensor z_group;
  if (m == N) {
    z_group = z_all;
  } else {
    std::vector<Tensor> slices;
    slices.reserve(static_cast<std::size_t>(T) + 1);
    for (int t = 0; t <= T; ++t)
      slices.push_back(slice_rows(z_all, static_cast<Index>(t) * N + batch.start, m));
    z_group = concat_rows(slices);
  }
  Tensor w_for_value;
  if (freeze.w_for_value != nullptr)
    w_for_value = Tensor::from_matrix(*freeze.w_for_value);
  else if (cfg.hyper_grad_from_td)
    w_for_value = hyper_action(nets.actor, h_full.detach(), batch.onehot);
  else
    w_for_value = w_full.detach();
  Tensor v_all = joint_value(z_group, w_for_value);
  Tensor v_pred = slice_rows(v_all, 0, static_cast<Index>(T) * m);
  Mat target = freeze.td_target != nullptr
                   ? *freeze.td_target
                   : (batch.rewards_flat +
                      cfg.gamma * v_all.value().middleRows(m, static_cast<Index>(T) * m))
                         .eval();
  Tensor td = nn::sub(Tensor::from_matrix(target), v_pred);
  Tensor critic_loss = scale(nn::mean(nn::square(td)), 0.5);

  if (!std::isfinite(objective.item()) || !std::isfinite(critic_loss.item()))
    throw std::runtime_error("compute_group_losses: non-finite loss term");

  LossPair out;
  out.actor_objective = objective;
  out.critic_loss = critic_loss;
  out.mean_hyper_entropy = entropy_mean.item();
  out.td_target = std::move(target);
  out.w_value_used = w_for_value.value();
  return out;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(const sim::Scenario& scenario, const Config& cfg, Variant variant,
                 std::uint64_t seed)
    : scenario_(scenario),
      cfg_(cfg),
      variant_(variant),
      env_(scenario_, seed),
      root_rng_(seed),
      start_time_(std::chrono::steady_clock::now()) {
  cfg_.validate();
  const int N = env_.n_agents();
  const NetDims dims = cfg_.dims(N);
  const Rng init_rng = root_rng_.substream("init");
  if (variant == Variant::kPpoNonShare) {
    for (int i = 0; i < N; ++i) {
      Group g;
      g.prefix = "agent" + std::to_string(i) + ".";
      g.nets = make_agent_nets(dims, init_rng.substream("group", static_cast<std::uint64_t>(i)),
                               g.prefix);
      g.start = i;
      g.count = 1;
      groups_.push_back(std::move(g));
    }
  } else {
    Group g;
    g.nets = make_agent_nets(dims, init_rng);
    g.start = 0;
    g.count = N;
    groups_.push_back(std::move(g));
  }
  for (Group& g : groups_) {
    g.actor_opt = std::make_unique<AdamOptimizer>(actor_param_list(g.nets.actor), cfg_.actor_lr,
                                                  cfg_.grad_clip);
    g.critic_opt = std::make_unique<AdamOptimizer>(critic_param_list(g.nets.critic, false),
                                                   cfg_.critic_lr, cfg_.grad_clip);
  }
}

double Trainer::elapsed_s() const {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time_).count();
}

void Trainer::rollout(bool greedy, TrajectoryBuffer* buffer, Rng& policy_rng) {
  const int N = env_.n_agents();
  const int T = env_.steps();
  const int hidden = cfg_.hidden_dim;

  if (buffer != nullptr) {
    buffer->T = T;
    buffer->N = N;
    buffer->k = cfg_.k;
    buffer->obs.clear();
    buffer->hidden.clear();
    buffer->actions.assign(static_cast<std::size_t>(T), std::vector<int>(N, 0));
    buffer->logp_old.resize(T, N);
    buffer->w_rollout.clear();
    buffer->z_rollout.clear();
    buffer->values.resize(T + 1, N);
    buffer->rewards.resize(T, N);
  }

  std::vector<Mat> hidden_states;
  hidden_states.reserve(groups_.size());
  for (const Group& g : groups_) hidden_states.push_back(Mat::Zero(g.count, hidden));

  for (int t = 0; t <= T; ++t) {
    const bool bootstrap_step = t == T;
    const Mat obs = env_.observe_all();
    if (buffer != nullptr) buffer->obs.push_back(obs);

    Mat w_now = Mat::Zero(N, cfg_.k);
    Mat z_now = Mat::Zero(N, cfg_.k);
    Mat h_record = Mat::Zero(N, hidden);
    std::vector<int> actions(static_cast<std::size_t>(N), 0);

    for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
      Group& g = groups_[gi];
      Tensor obs_t = Tensor::from_matrix(obs);
      Tensor x_all = embed_obs(g.nets.actor.embed, obs_t);
      Tensor x_g = g.count == N ? x_all : slice_rows(x_all, g.start, g.count);
      for (int a = 0; a < g.count; ++a)
        h_record.row(g.start + a) = hidden_states[gi].row(a);
      Tensor h_new =
          gru_step(g.nets.actor.gru, x_g, Tensor::from_matrix(hidden_states[gi]));
      hidden_states[gi] = h_new.value();

      if (!bootstrap_step) {
        Tensor probs = action_policy(g.nets.actor, h_new);
        for (int a = 0; a < g.count; ++a) {
          const int agent = g.start + a;
          const int act = greedy ? argmax_row(probs.value(), a)
                                 : sample_row(probs.value(), a, policy_rng);
          actions[static_cast<std::size_t>(agent)] = act;
          if (buffer != nullptr) {
            buffer->actions[static_cast<std::size_t>(t)][static_cast<std::size_t>(agent)] = act;
            buffer->logp_old(t, agent) = std::log(probs.value()(a, act));
          }
        }
      }

      if (buffer != nullptr) {
        Mat onehot = Mat::Zero(g.count, N);
        for (int a = 0; a < g.count; ++a) onehot(a, g.start + a) = 1.0;
        Tensor w = hyper_action(g.nets.actor, h_new, onehot);
        Tensor z_full = critic_values_from_embed(g.nets.critic, x_all, env_.graph());
        for (int a = 0; a < g.count; ++a) {
          const int agent = g.start + a;
          w_now.row(agent) = w.value().row(a);
          z_now.row(agent) = z_full.value().row(agent);
          buffer->values(t, agent) = w.value().row(a).dot(z_full.value().row(agent));
        }
      }
    }

    if (buffer != nullptr) {
      buffer->w_rollout.push_back(w_now);
      buffer->z_rollout.push_back(z_now);
      if (!bootstrap_step) buffer->hidden.push_back(h_record);
    }
    if (bootstrap_step) break;

    const Eigen::VectorXd rewards = env_.step(actions);
    if (buffer != nullptr) buffer->rewards.row(t) = rewards.transpose();
  }
}

TrajectoryBuffer Trainer::collect_episode(int episode_index) {
  env_.reset(root_rng_.substream("episode", static_cast<std::uint64_t>(episode_index)).next_u64());
  Rng policy_rng = root_rng_.substream("policy", static_cast<std::uint64_t>(episode_index));
  TrajectoryBuffer buffer;
  rollout(/*greedy=*/false, &buffer, policy_rng);
  return buffer;
}

std::pair<double, double> Trainer::greedy_episode(std::uint64_t eval_seed) {
  env_.reset(root_rng_.substream("eval-episode", eval_seed).next_u64());
  Rng unused = root_rng_.substream("eval-policy", eval_seed);
  TrajectoryBuffer buffer;
  rollout(/*greedy=*/true, &buffer, unused);
  return {env_.travel_time(), buffer.rewards.mean()};
}

EpisodeMetrics Trainer::train_episode(int episode_index) {
  TrajectoryBuffer buffer = collect_episode(episode_index);
  const AdvantageSet raw = compute_gae(buffer.rewards, buffer.values, cfg_.gamma, cfg_.gae_lambda);

  EpisodeMetrics metrics;
  metrics.episode = episode_index;
  metrics.mode = "train";
  metrics.m_tt = env_.travel_time();
  metrics.mean_reward = buffer.rewards.mean();

  AdvantageSet adv = raw;
  if (cfg_.normalize_advantages) {
    for (const Group& g : groups_) {
      std::vector<int> cols;
      for (int a = 0; a < g.count; ++a) cols.push_back(g.start + a);
      normalize_advantages(adv.advantages, cols);
    }
  }

  double obj_sum = 0.0, loss_sum = 0.0, ent_sum = 0.0;
  long samples = 0;
  for (Group& g : groups_) {
    const GroupBatch batch = make_group_batch(buffer, adv, g.start, g.count);
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      g.actor_opt->zero_grad();
      g.critic_opt->zero_grad();
      Tape tape;
      LossPair losses = compute_group_losses(g.nets, batch, env_.graph(), cfg_);
      Tensor total = nn::add(scale(losses.actor_objective, -1.0), losses.critic_loss);
      tape.backward(total);
      g.actor_opt->step();
      g.critic_opt->step();
      obj_sum += losses.actor_objective.item() * g.count;
      loss_sum += losses.critic_loss.item() * g.count;
      ent_sum += losses.mean_hyper_entropy * g.count;
      samples += g.count;
    }
  }
  metrics.actor_obj = obj_sum / static_cast<double>(samples);
  metrics.critic_loss = loss_sum / static_cast<double>(samples);
  metrics.mean_hyper_entropy = ent_sum / static_cast<double>(samples);
  metrics.wallclock_s = elapsed_s();
  return metrics;
}

nn::ParamRegistry Trainer::registry() const {
  nn::ParamRegistry reg;
  for (const Group& g : groups_) {
    register_actor_params(reg, g.nets.actor);
    register_critic_params(reg, g.nets.critic, /*include_embed=*/false);
  }
  return reg;
}

nn::MetaMap Trainer::checkpoint_meta() const {
  nn::MetaMap meta;
  meta["variant"] = variant_name(variant_);
  meta["k"] = std::to_string(cfg_.k);
  meta["hidden_dim"] = std::to_string(cfg_.hidden_dim);
  meta["gat_heads"] = std::to_string(cfg_.gat_heads);
  meta["gat_layers"] = std::to_string(cfg_.gat_layers);
  meta["n_agents"] = std::to_string(env_.n_agents());
  meta["obs_dim"] = std::to_string(sim::kObsDim);
  return meta;
}

void Trainer::load_checkpoint_file(const std::string& path) {
  nn::ParamRegistry reg = registry();
  nn::load_checkpoint(path, reg);
}

}  // namespace hamh::algo
