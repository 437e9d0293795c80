#pragma once

#include "hamh/checkpoint.hpp"
#include "hamh/rng.hpp"
#include "hamh/tensor.hpp"

#include <string>
#include <vector>

namespace hamh::nets {

using nn::Index;
using nn::Mat;
using nn::Tensor;

// Intersection connectivity for the critic: binary, symmetric, self-loops
// forced on the diagonal. Fixed per scenario.
struct Graph {
  Mat adjacency;

  Index size() const { return adjacency.rows(); }
  static Graph from_adjacency(Mat a);
};

struct NetDims {
  int obs_dim = 12;
  int hidden = 128;    // GRU hidden size; also the GAT feature width
  int n_actions = 8;   // signal phases
  int k = 32;          // hyper-action / value-head dimension
  int n_agents = 1;
  int gat_heads = 4;
  int gat_layers = 2;
  double leaky_slope = 0.2;

  void validate() const;
  int head_dim() const { return hidden / gat_heads; }
};

// Two-layer ReLU embedding shared between actor and critic: the tensors here
// are literally the same objects in both parameter sets, so both losses
// deposit gradients into them.
struct EmbedParams {
  Tensor W_d, b_d;  // obs_dim -> hidden
  Tensor W_c, b_c;  // hidden -> hidden
};

struct GruParams {
  Tensor W_z, U_z, b_z;
  Tensor W_r, U_r, b_r;
  Tensor W_h, U_h, b_h;
};

struct ActorParams {
  NetDims dims;
  EmbedParams embed;
  GruParams gru;
  Tensor W_a, b_a;  // action head: hidden -> n_actions
  Tensor W_e, b_e;  // hyper head: (hidden + n_agents) -> k
};

struct GatHeadParams {
  Tensor W;              // in_dim -> out_dim
  Tensor a_src, a_dst;   // out_dim -> 1 attention projections
};

struct GatLayerParams {
  std::vector<GatHeadParams> heads;
  bool concat_heads = true;  // first layer concatenates, last layer averages
};

struct CriticParams {
  NetDims dims;
  EmbedParams embed;  // same objects as the actor's
  std::vector<GatLayerParams> gat;
  Tensor W_v1, b_v1;  // value MLP: hidden -> hidden
  Tensor W_v2, b_v2;  // hidden -> k, no final activation
};

// Parameter construction. Weights are uniform in +-1/sqrt(fan_in); output
// heads (action, hyper, final value layer) are scaled down by 100x so initial
// policies and hyper-actions start near uniform. All draws come from per-name
// substreams of `rng`, so adding parameters never shifts existing ones.
EmbedParams make_embed_params(const NetDims& dims, const Rng& rng, const std::string& prefix);
ActorParams make_actor_params(const NetDims& dims, const Rng& rng, EmbedParams shared_embed,
                              const std::string& prefix = "actor.");
CriticParams make_critic_params(const NetDims& dims, const Rng& rng, EmbedParams shared_embed,
                                const std::string& prefix = "critic.");

// Registration order defines the checkpoint layout. The shared embedding is
// registered once, under the actor prefix.
void register_actor_params(nn::ParamRegistry& reg, const ActorParams& actor);
void register_critic_params(nn::ParamRegistry& reg, const CriticParams& critic,
                            bool include_embed);

std::vector<Tensor> actor_param_list(const ActorParams& actor);
std::vector<Tensor> critic_param_list(const CriticParams& critic, bool include_embed);

// Scalar parameter counts; `include_index_rows` controls whether the hyper
// head rows that consume the agent one-hot are counted.
std::size_t actor_param_count(const ActorParams& actor, bool include_index_rows = true);
std::size_t critic_param_count(const CriticParams& critic, bool include_embed = true);

// ---------------------------------------------------------------------------
// Forward passes. Rows are samples; every function accepts batched input.
// ---------------------------------------------------------------------------

// x = ReLU(W_c . ReLU(W_d . o + b_d) + b_c), batched over rows of obs.
Tensor embed_obs(const EmbedParams& embed, const Tensor& obs);

// Standard GRU cell: z, r gates, candidate h~, h' = (1-z) h + z h~.
Tensor gru_step(const GruParams& gru, const Tensor& x, const Tensor& h);

Tensor action_logits(const ActorParams& actor, const Tensor& h);
// Softmax over the 8 phase logits, rows sum to 1.
Tensor action_policy(const ActorParams& actor, const Tensor& h);

// w = softmax((h (+) onehot(i)) W_e + b_e). `onehot` carries one row per row
// of h; use agent_onehot_rows to build it.
Tensor hyper_action(const ActorParams& actor, const Tensor& h, const Mat& onehot);
// Single-agent convenience; throws if agent_index is out of range.
Tensor hyper_action(const ActorParams& actor, const Tensor& h, int agent_index);

// One-hot rows for `groups` repetitions of agents 0..n_agents-1.
Mat agent_onehot_rows(int n_agents, Index groups = 1);

// One GAT layer over row blocks of size G.size(): X holds `groups`
// consecutive feature blocks of N rows each (e.g. one block per timestep).
// Per head: e_ij = LeakyReLU(a^T [W x_i (+) W x_j]) over neighbors incl.
// self, attention softmax per row, out_i = ELU(sum_j alpha_ij W x_j).
Tensor gat_layer(const GatLayerParams& layer, const Tensor& x, const Graph& g,
                 double leaky_slope = 0.2);

// Full critic: shared embedding -> GAT stack -> per-node value MLP -> k
// values per node, no output activation.
Tensor critic_values(const CriticParams& critic, const Tensor& obs, const Graph& g);
// Variant reusing an already-computed embedding (keeps the actor and critic
// on one shared taped embedding during training).
Tensor critic_values_from_embed(const CriticParams& critic, const Tensor& x, const Graph& g);

// V = sum_j w_j z_j, rowwise: (B x k, B x k) -> (B x 1).
Tensor joint_value(const Tensor& z, const Tensor& w);

// Categorical draw / argmax over one probability row.
int sample_row(const Mat& probs, Index row, Rng& rng);
int argmax_row(const Mat& probs, Index row);

}  // namespace hamh::nets
