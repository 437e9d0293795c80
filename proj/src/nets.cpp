#include "hamh/nets.hpp"

#include <cmath>
#include <stdexcept>

namespace hamh::nets {

using namespace hamh::nn;

Graph Graph::from_adjacency(Mat a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("Graph: adjacency must be square");
  for (Index i = 0; i < a.rows(); ++i) {
    a(i, i) = 1.0;
    for (Index j = 0; j < a.cols(); ++j) {
      if (a(i, j) != 0.0 && a(i, j) != 1.0)
        throw std::invalid_argument("Graph: adjacency must be binary");
      if (a(i, j) != a(j, i)) throw std::invalid_argument("Graph: adjacency must be symmetric");
    }
  }
  return Graph{std::move(a)};
}

void NetDims::validate() const {
  if (obs_dim <= 0 || hidden <= 0 || n_actions <= 0 || k < 1 || n_agents < 1)
    throw std::invalid_argument("NetDims: dimensions must be positive");
  if (gat_layers < 1 || gat_heads < 1) throw std::invalid_argument("NetDims: bad GAT shape");
  if (hidden % gat_heads != 0)
    throw std::invalid_argument("NetDims: hidden must be divisible by gat_heads");
}

namespace {

Mat uniform_init(const Rng& rng, const std::string& name, Index rows, Index cols, double scale) {
  Rng stream = rng.substream("init/" + name);
  const double bound = scale / std::sqrt(static_cast<double>(rows));
  Mat m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = stream.uniform(-bound, bound);
  return m;
}

Tensor weight(const Rng& rng, const std::string& name, Index in, Index out, double scale = 1.0) {
  return Tensor::param(uniform_init(rng, name, in, out, scale), name);
}

Tensor bias(const std::string& name, Index n) {
  return Tensor::param(Mat::Zero(1, n), name, 1);
}

// Output heads start 100x smaller than hidden layers.
constexpr double kHeadScale = 0.01;

}  // namespace

EmbedParams make_embed_params(const NetDims& dims, const Rng& rng, const std::string& prefix) {
  EmbedParams e;
  e.W_d = weight(rng, prefix + "W_d", dims.obs_dim, dims.hidden);
  e.b_d = bias(prefix + "b_d", dims.hidden);
  e.W_c = weight(rng, prefix + "W_c", dims.hidden, dims.hidden);
  e.b_c = bias(prefix + "b_c", dims.hidden);
  return e;
}

ActorParams make_actor_params(const NetDims& dims, const Rng& rng, EmbedParams shared_embed,
                              const std::string& prefix) {
  dims.validate();
  ActorParams a;
  a.dims = dims;
  a.embed = std::move(shared_embed);
  const int h = dims.hidden;
  a.gru.W_z = weight(rng, prefix + "gru.W_z", h, h);
  a.gru.U_z = weight(rng, prefix + "gru.U_z", h, h);
  a.gru.b_z = bias(prefix + "gru.b_z", h);
  a.gru.W_r = weight(rng, prefix + "gru.W_r", h, h);
  a.gru.U_r = weight(rng, prefix + "gru.U_r", h, h);
  a.gru.b_r = bias(prefix + "gru.b_r", h);
  a.gru.W_h = weight(rng, prefix + "gru.W_h", h, h);
  a.gru.U_h = weight(rng, prefix + "gru.U_h", h, h);
  a.gru.b_h = bias(prefix + "gru.b_h", h);
  a.W_a = weight(rng, prefix + "head.W_a", h, dims.n_actions, kHeadScale);
  a.b_a = bias(prefix + "head.b_a", dims.n_actions);
  a.W_e = weight(rng, prefix + "hyper.W_e", h + dims.n_agents, dims.k, kHeadScale);
  a.b_e = bias(prefix + "hyper.b_e", dims.k);
  return a;
}

CriticParams make_critic_params(const NetDims& dims, const Rng& rng, EmbedParams shared_embed,
                                const std::string& prefix) {
  dims.validate();
  CriticParams c;
  c.dims = dims;
  c.embed = std::move(shared_embed);
  for (int layer = 0; layer < dims.gat_layers; ++layer) {
    GatLayerParams lp;
    lp.concat_heads = layer + 1 < dims.gat_layers;
    // Concatenating layers split the width across heads; the averaged final
    // layer keeps full width per head.
    const int out_dim = lp.concat_heads ? dims.head_dim() : dims.hidden;
    for (int head = 0; head < dims.gat_heads; ++head) {
      const std::string hp =
          prefix + "gat." + std::to_string(layer) + ".head." + std::to_string(head) + ".";
      GatHeadParams gp;
      gp.W = weight(rng, hp + "W", dims.hidden, out_dim);
      gp.a_src = weight(rng, hp + "a_src", out_dim, 1);
      gp.a_dst = weight(rng, hp + "a_dst", out_dim, 1);
      lp.heads.push_back(std::move(gp));
    }
    c.gat.push_back(std::move(lp));
  }
  c.W_v1 = weight(rng, prefix + "value.W1", dims.hidden, dims.hidden);
  c.b_v1 = bias(prefix + "value.b1", dims.hidden);
  c.W_v2 = weight(rng, prefix + "value.W2", dims.hidden, dims.k, kHeadScale);
  c.b_v2 = bias(prefix + "value.b2", dims.k);
  return c;
}

void register_actor_params(nn::ParamRegistry& reg, const ActorParams& a) {
  for (const Tensor& t : actor_param_list(a)) reg.add(t.name(), t);
}

void register_critic_params(nn::ParamRegistry& reg, const CriticParams& c, bool include_embed) {
  for (const Tensor& t : critic_param_list(c, include_embed)) reg.add(t.name(), t);
}

std::vector<Tensor> actor_param_list(const ActorParams& a) {
  return {a.embed.W_d, a.embed.b_d, a.embed.W_c, a.embed.b_c, a.gru.W_z, a.gru.U_z,
          a.gru.b_z,   a.gru.W_r,   a.gru.U_r,   a.gru.b_r,   a.gru.W_h, a.gru.U_h,
          a.gru.b_h,   a.W_a,       a.b_a,       a.W_e,       a.b_e};
}

std::vector<Tensor> critic_param_list(const CriticParams& c, bool include_embed) {
  std::vector<Tensor> out;
  if (include_embed) {
    out.push_back(c.embed.W_d);
    out.push_back(c.embed.b_d);
    out.push_back(c.embed.W_c);
    out.push_back(c.embed.b_c);
  }
  for (const GatLayerParams& layer : c.gat)
    for (const GatHeadParams& head : layer.heads) {
      out.push_back(head.W);
      out.push_back(head.a_src);
      out.push_back(head.a_dst);
    }
  out.push_back(c.W_v1);
  out.push_back(c.b_v1);
  out.push_back(c.W_v2);
  out.push_back(c.b_v2);
  return out;
}

std::size_t actor_param_count(const ActorParams& a, bool include_index_rows) {
  std::size_t n = 0;
  for (const Tensor& t : actor_param_list(a)) n += static_cast<std::size_t>(t.size());
  if (!include_index_rows)
    n -= static_cast<std::size_t>(a.dims.n_agents) * static_cast<std::size_t>(a.dims.k);
  return n;
}

std::size_t critic_param_count(const CriticParams& c, bool include_embed) {
  std::size_t n = 0;
  for (const Tensor& t : critic_param_list(c, include_embed))
    n += static_cast<std::size_t>(t.size());
  return n;
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

Tensor embed_obs(const EmbedParams& e, const Tensor& obs) {
  Tensor hidden = relu(add(matmul(obs, e.W_d), e.b_d));
  return relu(add(matmul(hidden, e.W_c), e.b_c));
}

Tensor gru_step(const GruParams& g, const Tensor& x, const Tensor& h) {
  Tensor z = sigmoid(add(add(matmul(x, g.W_z), matmul(h, g.U_z)), g.b_z));
  Tensor r = sigmoid(add(add(matmul(x, g.W_r), matmul(h, g.U_r)), g.b_r));
  Tensor candidate = tanh(add(add(matmul(x, g.W_h), matmul(mul(r, h), g.U_h)), g.b_h));
  return add(mul(affine(z, -1.0, 1.0), h), mul(z, candidate));
}

Tensor action_logits(const ActorParams& a, const Tensor& h) {
  return add(matmul(h, a.W_a), a.b_a);
}

Tensor action_policy(const ActorParams& a, const Tensor& h) {
  return softmax_lastdim(action_logits(a, h));
}

Tensor hyper_action(const ActorParams& a, const Tensor& h, const Mat& onehot) {
  if (onehot.rows() != h.rows() || onehot.cols() != a.dims.n_agents)
    throw std::invalid_argument("hyper_action: one-hot block shape mismatch");
  Tensor joined = concat(h, Tensor::from_matrix(onehot));
  return softmax_lastdim(add(matmul(joined, a.W_e), a.b_e));
}

Tensor hyper_action(const ActorParams& a, const Tensor& h, int agent_index) {
  if (agent_index < 0 || agent_index >= a.dims.n_agents)
    throw std::out_of_range("hyper_action: agent index " + std::to_string(agent_index) +
                            " out of range [0, " + std::to_string(a.dims.n_agents) + ")");
  Mat onehot = Mat::Zero(h.rows(), a.dims.n_agents);
  onehot.col(agent_index).setOnes();
  return hyper_action(a, h, onehot);
}

Mat agent_onehot_rows(int n_agents, Index groups) {
  Mat m = Mat::Zero(groups * n_agents, n_agents);
  for (Index g = 0; g < groups; ++g)
    for (int i = 0; i < n_agents; ++i) m(g * n_agents + i, i) = 1.0;
  return m;
}

Tensor gat_layer(const GatLayerParams& layer, const Tensor& x, const Graph& g,
                 double leaky_slope) {
  const Index n = g.size();
  if (n == 0 || x.rows() % n != 0)
    throw std::invalid_argument("gat_layer: feature rows do not tile the graph size");
  const Index groups = x.rows() / n;
  const Mat mask = g.adjacency.replicate(groups, 1);

  std::vector<Tensor> head_outputs;
  head_outputs.reserve(layer.heads.size());
  for (const GatHeadParams& head : layer.heads) {
    Tensor projected = matmul(x, head.W);
    Tensor src_score = matmul(projected, head.a_src);
    Tensor dst_score = matmul(projected, head.a_dst);
    Tensor scores = leaky_relu(pairwise_sum_blocks(src_score, dst_score, n), leaky_slope);
    Tensor attention = masked_softmax_lastdim(scores, mask);
    head_outputs.push_back(block_matmul(attention, projected, n));
  }

  if (layer.concat_heads) {
    Tensor out = head_outputs.front();
    for (std::size_t i = 1; i < head_outputs.size(); ++i) out = concat(out, head_outputs[i]);
    return elu(out);
  }
  Tensor out = head_outputs.front();
  for (std::size_t i = 1; i < head_outputs.size(); ++i) out = add(out, head_outputs[i]);
  return elu(scale(out, 1.0 / static_cast<double>(head_outputs.size())));
}

Tensor critic_values_from_embed(const CriticParams& c, const Tensor& x, const Graph& g) {
  Tensor features = x;
  for (const GatLayerParams& layer : c.gat)
    features = gat_layer(layer, features, g, c.dims.leaky_slope);
  Tensor hidden = relu(add(matmul(features, c.W_v1), c.b_v1));
  return add(matmul(hidden, c.W_v2), c.b_v2);
}

Tensor critic_values(const CriticParams& c, const Tensor& obs, const Graph& g) {
  return critic_values_from_embed(c, embed_obs(c.embed, obs), g);
}

Tensor joint_value(const Tensor& z, const Tensor& w) {
  if (z.rows() != w.rows() || z.cols() != w.cols())
    throw std::invalid_argument("joint_value: length mismatch " + z.shape_str() + " vs " +
                                w.shape_str());
  return sum_lastdim(mul(z, w));
}

int sample_row(const Mat& probs, Index row, Rng& rng) {
  double u = rng.uniform();
  for (Index c = 0; c < probs.cols(); ++c) {
    u -= probs(row, c);
    if (u < 0.0) return static_cast<int>(c);
  }
  return static_cast<int>(probs.cols()) - 1;
}

int argmax_row(const Mat& probs, Index row) {
  Index best = 0;
  probs.row(row).maxCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace hamh::nets
