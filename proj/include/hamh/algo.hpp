#pragma once

#include "hamh/checkpoint.hpp"
#include "hamh/nets.hpp"
#include "hamh/optim.hpp"
#include "hamh/rng.hpp"
#include "hamh/sim.hpp"

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace hamh::algo {

using nn::Mat;
using nn::Tensor;

// Training hyperparameters. Defaults follow the standard configuration for
// this method; scenario files and CLI flags may override any field.
struct Config {
  double gamma = 0.98;
  double clip_eps = 0.2;
  int epochs = 15;             // E
  double entropy_coef = 0.01;  // lambda, on the hyper-action distribution
  int k = 32;                  // hyper-action dimension
  double actor_lr = 5e-4;
  double critic_lr = 5e-4;
  double gae_lambda = 0.95;
  int episodes = 200;  // K
  int hidden_dim = 128;
  int gat_heads = 4;
  int gat_layers = 2;
  bool hyper_grad_from_td = true;
  bool normalize_advantages = true;
  double grad_clip = 10.0;
  int eval_interval = 0;  // 0 disables periodic greedy evaluations
  int eval_episodes = 1;
  int checkpoint_interval = 0;  // 0 keeps only the final checkpoint

  void validate() const;
  void apply_overrides(const std::map<std::string, std::string>& overrides);
  nets::NetDims dims(int n_agents, int obs_dim = sim::kObsDim) const;
};

// Per-agent, per-step records for one episode plus the final observation and
// bootstrap values. Rectangular over (step, agent); rebuilt from scratch at
// every episode start.
struct TrajectoryBuffer {
  int T = 0;
  int N = 0;
  int k = 0;
  std::vector<Mat> obs;     // T+1 entries, N x obs_dim
  std::vector<Mat> hidden;  // T entries, N x hidden: h before step t
  std::vector<std::vector<int>> actions;  // T x N
  Mat logp_old;                           // T x N
  std::vector<Mat> w_rollout;             // T+1 entries, N x k
  std::vector<Mat> z_rollout;             // T+1 entries, N x k
  Mat values;                             // (T+1) x N; last row is the bootstrap
  Mat rewards;                            // T x N

  // All T+1 observation blocks stacked t-major into ((T+1)N x obs_dim).
  Mat stacked_obs() const;
};

struct AdvantageSet {
  Mat advantages;     // T x N
  Mat value_targets;  // T x N, A + V
};

// GAE by backward recursion; values holds T+1 rows per agent including the
// time-limit bootstrap (episode ends are not treated as terminal).
AdvantageSet compute_gae(const Mat& rewards, const Mat& values, double gamma, double gae_lambda);

// In-place normalization of the listed agent columns to zero mean and unit
// (population) standard deviation.
void normalize_advantages(Mat& advantages, const std::vector<int>& agent_cols);

// min(rho A, clip(rho, 1-eps, 1+eps) A) with rho = exp(logp_new - logp_old).
double ppo_clip_term(double logp_new, double logp_old, double advantage, double eps);
// Batched tensor version; logp_old and advantages are constants.
Tensor ppo_clip_terms(const Tensor& logp_new, const Mat& logp_old, const Mat& advantages,
                      double eps);

// One parameter set: the shared actor/critic pair (the embedding tensors are
// the same objects in both).
struct AgentNets {
  nets::ActorParams actor;
  nets::CriticParams critic;
};

AgentNets make_agent_nets(const nets::NetDims& dims, const Rng& rng,
                          const std::string& prefix = "");

// Simulator adapter stepping one decision interval at a time.
class Env {
 public:
  Env(const sim::Scenario& scenario, std::uint64_t seed);

  void reset(std::uint64_t seed);
  int n_agents() const { return net_.n_intersections(); }
  const nets::Graph& graph() const { return net_.graph; }
  const sim::RoadNetwork& network() const { return net_; }
  const sim::SimState& state() const { return *state_; }
  const sim::Scenario& scenario() const { return *scenario_; }
  int steps() const { return scenario_->steps_per_episode(); }

  Mat observe_all() const;
  // Applies the joint action, advances one decision interval, and returns the
  // per-agent rewards sampled at the new boundary.
  Eigen::VectorXd step(const std::vector<int>& actions);
  bool done() const;
  // m_tt over all vehicles that entered, with the episode end as horizon.
  double travel_time() const;

 private:
  const sim::Scenario* scenario_;
  sim::RoadNetwork net_;
  std::optional<sim::SimState> state_;
};

enum class Variant { kHamh, kPpoShare, kPpoNonShare };
const char* variant_name(Variant v);

struct EpisodeMetrics {
  int episode = 0;
  std::string mode;  // "train" or "eval"
  double m_tt = 0.0;
  double mean_reward = 0.0;
  double actor_obj = 0.0;
  double critic_loss = 0.0;
  double mean_hyper_entropy = 0.0;
  double wallclock_s = 0.0;
};

// Precomputed constants for one group's epoch updates.
struct GroupBatch {
  int start = 0;  // first agent (contiguous range)
  int count = 0;
  Mat stacked_obs;       // (T+1)N x obs_dim
  Mat onehot;            // (T+1)m x n_agents
  std::vector<int> actions_flat;  // T*m, t-major
  Mat logp_old_flat;     // T*m x 1
  Mat advantages_flat;   // T*m x 1
  Mat rewards_flat;      // T*m x 1
};

GroupBatch make_group_batch(const TrajectoryBuffer& buffer, const AdvantageSet& adv, int start,
                            int count);

struct LossPair {
  Tensor actor_objective;  // J, to maximize
  Tensor critic_loss;      // L, to minimize
  double mean_hyper_entropy = 0.0;
  Mat td_target;      // r + gamma * stopgrad(V'), as used this pass
  Mat w_value_used;   // hyper-action values the joint value was built from
};

// Pins stop-gradient quantities. Finite-difference checks need them frozen
// because the analytic gradient treats them as constants.
struct LossFreeze {
  const Mat* td_target = nullptr;
  const Mat* w_for_value = nullptr;
};

// Recurrent recomputation of both losses on the full episode batch: the GRU
// is re-unrolled from zeros over the stored observations, values are
// recomputed with a stop-gradient bootstrap, advantages stay frozen. Inside
// the TD loss the joint value uses w evaluated on stop-gradient GRU features,
// so the TD error trains the hyper head (when hyper_grad_from_td is set) and
// the critic, but never reaches the actor's recurrent core.
LossPair compute_group_losses(const AgentNets& nets, const GroupBatch& batch,
                              const nets::Graph& graph, const Config& cfg,
                              const LossFreeze& freeze = {});

// The full training procedure: per episode, collect one on-policy rollout,
// compute GAE once from the rollout values, then run E epochs of combined
// backward passes with one Adam step for the actor and one for the critic.
class Trainer {
 public:
  Trainer(const sim::Scenario& scenario, const Config& cfg, Variant variant, std::uint64_t seed);

  // Samples actions; fills a trajectory buffer.
  TrajectoryBuffer collect_episode(int episode_index);
  // Greedy rollout without recording; returns (m_tt, mean reward).
  std::pair<double, double> greedy_episode(std::uint64_t eval_seed);

  // collect + GAE + E epochs; returns the episode metrics row.
  EpisodeMetrics train_episode(int episode_index);

  const Config& config() const { return cfg_; }
  Variant variant() const { return variant_; }
  Env& env() { return env_; }
  int n_groups() const { return static_cast<int>(groups_.size()); }
  AgentNets& group_nets(int g) { return groups_[static_cast<std::size_t>(g)].nets; }
  double elapsed_s() const;

  // Named parameters in a stable order for checkpointing.
  nn::ParamRegistry registry() const;
  nn::MetaMap checkpoint_meta() const;
  void load_checkpoint_file(const std::string& path);

 private:
  struct Group {
    AgentNets nets;
    int start = 0;
    int count = 0;
    std::string prefix;
    std::unique_ptr<nn::AdamOptimizer> actor_opt;
    std::unique_ptr<nn::AdamOptimizer> critic_opt;
  };

  void rollout(bool greedy, TrajectoryBuffer* buffer, Rng& policy_rng);

  sim::Scenario scenario_;
  Config cfg_;
  Variant variant_;
  Env env_;
  std::vector<Group> groups_;
  Rng root_rng_;
  std::chrono::steady_clock::time_point start_time_;
};

}  // namespace hamh::algo
