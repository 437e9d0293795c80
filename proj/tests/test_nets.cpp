#include <doctest.h>

#include "hamh/gradcheck.hpp"
#include "hamh/nets.hpp"
#include "hamh/rng.hpp"

#include <cmath>

using namespace hamh;
using namespace hamh::nets;
using nn::Mat;
using nn::Tensor;

namespace {

NetDims small_dims(int n_agents = 3, int k = 4, int hidden = 16) {
  NetDims d;
  d.obs_dim = 12;
  d.hidden = hidden;
  d.k = k;
  d.n_agents = n_agents;
  return d;
}

struct TestNets {
  ActorParams actor;
  CriticParams critic;
};

TestNets make_nets(const NetDims& dims, std::uint64_t seed) {
  Rng rng(seed);
  EmbedParams embed = make_embed_params(dims, rng, "actor.embed.");
  TestNets nets;
  nets.actor = make_actor_params(dims, rng, embed);
  nets.critic = make_critic_params(dims, rng, embed);
  return nets;
}

void set_zero(std::vector<Tensor> params) {
  for (Tensor& p : params) p.value().setZero();
}

Mat random_obs(Rng& rng, Index rows, int obs_dim) {
  Mat m(rows, obs_dim);
  for (Index r = 0; r < rows; ++r)
    for (int c = 0; c < obs_dim; ++c)
      m(r, c) = static_cast<double>(rng.uniform_int(12));
  return m;
}

// Independent dense GAT oracle: explicit per-pair attention loops, no shared
// code with the library implementation.
struct GatOracleResult {
  std::vector<Mat> alpha;  // per head, N x N
  Mat out;                 // N x out_dim
};

GatOracleResult gat_oracle(const GatLayerParams& layer, const Mat& x, const Mat& adj,
                           double slope) {
  const Index n = x.rows();
  GatOracleResult res;
  std::vector<Mat> head_out;
  for (const GatHeadParams& head : layer.heads) {
    Mat h = x * head.W.value();
    Mat e = Mat::Constant(n, n, -std::numeric_limits<double>::infinity());
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) {
        if (adj(i, j) == 0.0) continue;
        const double raw = (h.row(i) * head.a_src.value())(0, 0) +
                           (h.row(j) * head.a_dst.value())(0, 0);
        e(i, j) = raw > 0.0 ? raw : slope * raw;
      }
    Mat alpha = Mat::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Index j = 0; j < n; ++j)
        if (adj(i, j) != 0.0) mx = std::max(mx, e(i, j));
      double denom = 0.0;
      for (Index j = 0; j < n; ++j)
        if (adj(i, j) != 0.0) {
          alpha(i, j) = std::exp(e(i, j) - mx);
          denom += alpha(i, j);
        }
      alpha.row(i) /= denom;
    }
    Mat out = Mat::Zero(n, h.cols());
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        if (alpha(i, j) != 0.0) out.row(i) += alpha(i, j) * h.row(j);
    res.alpha.push_back(std::move(alpha));
    head_out.push_back(std::move(out));
  }
  if (layer.concat_heads) {
    Index cols = 0;
    for (const Mat& m : head_out) cols += m.cols();
    res.out.resize(n, cols);
    Index at = 0;
    for (const Mat& m : head_out) {
      res.out.middleCols(at, m.cols()) = m;
      at += m.cols();
    }
  } else {
    res.out = Mat::Zero(n, head_out.front().cols());
    for (const Mat& m : head_out) res.out += m;
    res.out /= static_cast<double>(head_out.size());
  }
  for (Index i = 0; i < res.out.rows(); ++i)
    for (Index j = 0; j < res.out.cols(); ++j)
      if (res.out(i, j) <= 0.0) res.out(i, j) = std::exp(res.out(i, j)) - 1.0;
  return res;
}

}  // namespace

TEST_CASE("observation embedding") {
  const NetDims dims = small_dims();
  SUBCASE("zero network maps everything to zero") {
    TestNets nets = make_nets(dims, 0);
    set_zero({nets.actor.embed.W_d, nets.actor.embed.b_d, nets.actor.embed.W_c,
              nets.actor.embed.b_c});
    Rng rng(5);
    Tensor x = embed_obs(nets.actor.embed, Tensor::from_matrix(random_obs(rng, 3, dims.obs_dim)));
    CHECK(x.value().isZero());
  }
  SUBCASE("bias pass-through gives all ones") {
    TestNets nets = make_nets(dims, 0);
    Mat wd = Mat::Zero(dims.obs_dim, dims.hidden);
    for (int i = 0; i < dims.obs_dim; ++i) wd(i, i % dims.hidden) = 1.0;
    nets.actor.embed.W_d.value() = wd;
    nets.actor.embed.b_d.value().setZero();
    nets.actor.embed.W_c.value().setZero();
    nets.actor.embed.b_c.value().setOnes();
    Rng rng(6);
    Tensor x = embed_obs(nets.actor.embed, Tensor::from_matrix(random_obs(rng, 2, dims.obs_dim)));
    CHECK((x.value().array() == 1.0).all());
  }
  SUBCASE("seed-0 parameters separate distinct inputs") {
    TestNets nets = make_nets(dims, 0);
    Tensor zeros = embed_obs(nets.actor.embed, Tensor::from_matrix(Mat::Zero(1, dims.obs_dim)));
    Tensor ones = embed_obs(nets.actor.embed, Tensor::from_matrix(Mat::Ones(1, dims.obs_dim)));
    CHECK((zeros.value() - ones.value()).norm() > 1e-8);
  }
}

TEST_CASE("gru step") {
  const NetDims dims = small_dims();
  TestNets nets = make_nets(dims, 1);
  SUBCASE("zero parameters halve the hidden state") {
    set_zero(
        {nets.actor.gru.W_z, nets.actor.gru.U_z, nets.actor.gru.b_z, nets.actor.gru.W_r,
         nets.actor.gru.U_r, nets.actor.gru.b_r, nets.actor.gru.W_h, nets.actor.gru.U_h,
         nets.actor.gru.b_h});
    Rng rng(3);
    Mat h0(1, dims.hidden);
    for (int i = 0; i < dims.hidden; ++i) h0(0, i) = rng.uniform(-1, 1);
    Tensor x = Tensor::from_matrix(Mat::Ones(1, dims.hidden));
    Tensor h1 = gru_step(nets.actor.gru, x, Tensor::from_matrix(h0));
    CHECK((h1.value() - 0.5 * h0).cwiseAbs().maxCoeff() < 1e-15);

    Tensor hz = gru_step(nets.actor.gru, x, Tensor::from_matrix(Mat::Zero(1, dims.hidden)));
    CHECK(hz.value().isZero());
  }
  SUBCASE("gradient through the cell matches finite differences") {
    Rng rng(4);
    Tensor x = Tensor::from_matrix(random_obs(rng, 2, dims.hidden) / 4.0);
    Tensor h = Tensor::from_matrix(random_obs(rng, 2, dims.hidden) / 6.0);
    std::vector<Tensor> params = {nets.actor.gru.W_z, nets.actor.gru.U_z, nets.actor.gru.b_z,
                                  nets.actor.gru.W_r, nets.actor.gru.U_r, nets.actor.gru.b_r,
                                  nets.actor.gru.W_h, nets.actor.gru.U_h, nets.actor.gru.b_h};
    auto f = [&] { return nn::sum(gru_step(nets.actor.gru, x, h)); };
    CHECK(nn::grad_check(f, params, 1e-5) < 1e-4);
  }
}

TEST_CASE("action policy") {
  const NetDims dims = small_dims();
  TestNets nets = make_nets(dims, 2);
  SUBCASE("zero head is uniform over the 8 phases") {
    set_zero({nets.actor.W_a, nets.actor.b_a});
    Tensor h = Tensor::from_matrix(Mat::Ones(1, dims.hidden));
    Tensor pi = action_policy(nets.actor, h);
    REQUIRE(pi.cols() == 8);
    for (Index c = 0; c < 8; ++c) CHECK(pi.value()(0, c) == doctest::Approx(0.125));
  }
  SUBCASE("an extreme logit saturates without overflow") {
    set_zero({nets.actor.W_a, nets.actor.b_a});
    nets.actor.b_a.value()(0, 5) = 1000.0;
    Tensor pi = action_policy(nets.actor, Tensor::from_matrix(Mat::Zero(1, dims.hidden)));
    CHECK(pi.value().allFinite());
    CHECK(std::abs(pi.value()(0, 5) - 1.0) < 1e-12);
  }
  SUBCASE("sampling frequencies match probabilities within 3 sigma") {
    Tensor h = Tensor::from_matrix(Mat::Ones(1, dims.hidden) * 0.5);
    // Spread the logits so probabilities are distinctly non-uniform.
    Rng prng(11);
    for (Index c = 0; c < nets.actor.b_a.cols(); ++c)
      nets.actor.b_a.value()(0, c) = prng.uniform(-1.0, 1.0);
    Tensor pi = action_policy(nets.actor, h);
    const int draws = 100000;
    std::vector<int> counts(8, 0);
    Rng rng(1234);
    for (int i = 0; i < draws; ++i) ++counts[sample_row(pi.value(), 0, rng)];
    for (Index c = 0; c < 8; ++c) {
      const double p = pi.value()(0, c);
      const double sigma = std::sqrt(p * (1.0 - p) * draws);
      CHECK(std::abs(counts[c] - p * draws) <= 3.0 * sigma + 1.0);
    }
  }
}

TEST_CASE("hyper action") {
  const NetDims dims = small_dims(/*n_agents=*/3, /*k=*/4);
  TestNets nets = make_nets(dims, 3);
  SUBCASE("zero head is uniform over k") {
    set_zero({nets.actor.W_e, nets.actor.b_e});
    Tensor h = Tensor::from_matrix(Mat::Ones(1, dims.hidden));
    Tensor w = hyper_action(nets.actor, h, 1);
    for (Index c = 0; c < dims.k; ++c) CHECK(w.value()(0, c) == doctest::Approx(0.25));
  }
  SUBCASE("k = 2 output is a two-entry distribution") {
    const NetDims d2 = small_dims(3, 2);
    TestNets n2 = make_nets(d2, 4);
    Rng rng(7);
    Tensor h = Tensor::from_matrix(random_obs(rng, 1, d2.hidden));
    Tensor w = hyper_action(n2.actor, h, 0);
    REQUIRE(w.cols() == 2);
    CHECK(w.value().minCoeff() >= 0.0);
    CHECK(std::abs(w.value().sum() - 1.0) < 1e-9);
  }
  SUBCASE("agent index changes the output when its rows differ") {
    // Make the index rows clearly distinct.
    for (int i = 0; i < dims.n_agents; ++i)
      for (int c = 0; c < dims.k; ++c)
        nets.actor.W_e.value()(dims.hidden + i, c) = (i == 0 ? 1.0 : -1.0) * (c + 1) * 0.3;
    Rng rng(8);
    Tensor h = Tensor::from_matrix(random_obs(rng, 1, dims.hidden));
    Tensor w0 = hyper_action(nets.actor, h, 0);
    Tensor w1 = hyper_action(nets.actor, h, 1);
    CHECK((w0.value() - w1.value()).cwiseAbs().maxCoeff() > 1e-6);
  }
  SUBCASE("out-of-range index throws") {
    Tensor h = Tensor::from_matrix(Mat::Zero(1, dims.hidden));
    CHECK_THROWS_AS(hyper_action(nets.actor, h, 3), std::out_of_range);
    CHECK_THROWS_AS(hyper_action(nets.actor, h, -1), std::out_of_range);
  }
}

TEST_CASE("gat layer") {
  const NetDims dims = small_dims();
  TestNets nets = make_nets(dims, 5);
  const GatLayerParams& layer = nets.critic.gat[0];

  SUBCASE("isolated node attends only to itself") {
    Graph g = Graph::from_adjacency(Mat::Ones(1, 1));
    Rng rng(9);
    Mat x = random_obs(rng, 1, dims.hidden) / 3.0;
    Tensor out = gat_layer(layer, Tensor::from_matrix(x), g);
    GatOracleResult oracle = gat_oracle(layer, x, g.adjacency, dims.leaky_slope);
    for (const Mat& alpha : oracle.alpha) CHECK(alpha(0, 0) == doctest::Approx(1.0));
    CHECK((out.value() - oracle.out).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("identical features on a symmetric edge split attention evenly") {
    Graph g = Graph::from_adjacency((Mat(2, 2) << 1, 1, 1, 1).finished());
    Mat x(2, dims.hidden);
    Rng rng(10);
    x.row(0) = random_obs(rng, 1, dims.hidden) / 3.0;
    x.row(1) = x.row(0);
    GatOracleResult oracle = gat_oracle(layer, x, g.adjacency, dims.leaky_slope);
    for (const Mat& alpha : oracle.alpha) {
      CHECK(alpha(0, 0) == doctest::Approx(0.5));
      CHECK(alpha(0, 1) == doctest::Approx(0.5));
    }
    Tensor out = gat_layer(layer, Tensor::from_matrix(x), g);
    CHECK((out.value().row(0) - out.value().row(1)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("3-node path graph matches the dense oracle") {
    Mat adj(3, 3);
    adj << 1, 1, 0, 1, 1, 1, 0, 1, 1;
    Graph g = Graph::from_adjacency(adj);
    Rng rng(11);
    Mat x = random_obs(rng, 3, dims.hidden) / 3.0;
    Tensor out = gat_layer(layer, Tensor::from_matrix(x), g);
    GatOracleResult oracle = gat_oracle(layer, x, g.adjacency, dims.leaky_slope);
    CHECK((out.value() - oracle.out).cwiseAbs().maxCoeff() < 1e-10);

    // Second (averaged) layer against the oracle as well.
    Mat x2 = oracle.out;
    Tensor out2 = gat_layer(nets.critic.gat[1], Tensor::from_matrix(x2), g);
    GatOracleResult oracle2 = gat_oracle(nets.critic.gat[1], x2, g.adjacency, dims.leaky_slope);
    CHECK((out2.value() - oracle2.out).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("attention rows over neighborhoods sum to one") {
    Mat adj(4, 4);
    adj << 1, 1, 0, 1, 1, 1, 1, 0, 0, 1, 1, 1, 1, 0, 1, 1;
    Graph g = Graph::from_adjacency(adj);
    Rng rng(12);
    Mat x = random_obs(rng, 4, dims.hidden) / 2.0;
    GatOracleResult oracle = gat_oracle(layer, x, g.adjacency, dims.leaky_slope);
    for (const Mat& alpha : oracle.alpha)
      for (Index i = 0; i < 4; ++i) CHECK(std::abs(alpha.row(i).sum() - 1.0) < 1e-9);
  }
  SUBCASE("gradient through the layer matches finite differences") {
    Mat adj(3, 3);
    adj << 1, 1, 0, 1, 1, 1, 0, 1, 1;
    Graph g = Graph::from_adjacency(adj);
    Rng rng(13);
    Tensor x = Tensor::from_matrix(random_obs(rng, 3, dims.hidden) / 3.0);
    std::vector<Tensor> params;
    for (const GatHeadParams& head : layer.heads) {
      params.push_back(head.W);
      params.push_back(head.a_src);
      params.push_back(head.a_dst);
    }
    auto f = [&] { return nn::sum(nn::square(gat_layer(layer, x, g))); };
    CHECK(nn::grad_check(f, params, 1e-5) < 1e-4);
  }
}

TEST_CASE("critic values") {
  const NetDims dims = small_dims(4, 3);
  SUBCASE("zero parameters give zero values") {
    TestNets nets = make_nets(dims, 6);
    set_zero(critic_param_list(nets.critic, true));
    Graph g = Graph::from_adjacency(Mat::Ones(4, 4));
    Rng rng(14);
    Tensor z = critic_values(nets.critic, Tensor::from_matrix(random_obs(rng, 4, dims.obs_dim)), g);
    CHECK(z.value().isZero());
    CHECK(z.cols() == dims.k);
  }
  SUBCASE("k = 1 collapses to a scalar-value critic") {
    NetDims d1 = small_dims(4, 1);
    TestNets nets = make_nets(d1, 7);
    Graph g = Graph::from_adjacency(Mat::Identity(4, 4));
    Rng rng(15);
    Tensor z = critic_values(nets.critic, Tensor::from_matrix(random_obs(rng, 4, d1.obs_dim)), g);
    CHECK(z.cols() == 1);
  }
  SUBCASE("permuting agents and adjacency permutes values identically") {
    TestNets nets = make_nets(dims, 8);
    Mat adj(4, 4);
    adj << 1, 1, 0, 0, 1, 1, 1, 0, 0, 1, 1, 1, 0, 0, 1, 1;
    Graph g = Graph::from_adjacency(adj);
    Rng rng(16);
    Mat obs = random_obs(rng, 4, dims.obs_dim);
    Tensor z = critic_values(nets.critic, Tensor::from_matrix(obs), g);

    const std::vector<int> perm = {2, 0, 3, 1};
    Mat obs_p(4, dims.obs_dim);
    Mat adj_p(4, 4);
    for (int i = 0; i < 4; ++i) {
      obs_p.row(i) = obs.row(perm[i]);
      for (int j = 0; j < 4; ++j) adj_p(i, j) = adj(perm[i], perm[j]);
    }
    Tensor z_p = critic_values(nets.critic, Tensor::from_matrix(obs_p),
                               Graph::from_adjacency(adj_p));
    for (int i = 0; i < 4; ++i)
      CHECK((z_p.value().row(i) - z.value().row(perm[i])).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("joint value") {
  Tensor z = Tensor::row({1, 2, 3, 4});
  SUBCASE("one-hot selects a head") {
    CHECK(joint_value(z, Tensor::row({0, 0, 1, 0})).item() == 3.0);
  }
  SUBCASE("uniform weights give the mean") {
    CHECK(joint_value(z, Tensor::row({0.25, 0.25, 0.25, 0.25})).item() == doctest::Approx(2.5));
  }
  SUBCASE("hand arithmetic") {
    CHECK(joint_value(z, Tensor::row({0.1, 0.2, 0.3, 0.4})).item() == doctest::Approx(3.0));
  }
  SUBCASE("length mismatch throws") {
    CHECK_THROWS_AS(joint_value(z, Tensor::row({0.5, 0.5})), std::invalid_argument);
  }
  SUBCASE("bounded by min and max for any simplex weight") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
      Mat zs(1, 4), logits(1, 4);
      for (int c = 0; c < 4; ++c) {
        zs(0, c) = rng.uniform(-10, 10);
        logits(0, c) = rng.uniform(-5, 5);
      }
      Tensor w = nn::softmax_lastdim(Tensor::from_matrix(logits));
      const double v = joint_value(Tensor::from_matrix(zs), w).item();
      CHECK(v >= zs.minCoeff() - 1e-12);
      CHECK(v <= zs.maxCoeff() + 1e-12);
    }
  }
  SUBCASE("k = 1 forces w = [1] and V = z0") {
    Tensor z1 = Tensor::row({7.25});
    Tensor w1 = nn::softmax_lastdim(Tensor::row({123.0}));
    CHECK(w1.item() == 1.0);
    CHECK(joint_value(z1, w1).item() == 7.25);
  }
}

TEST_CASE("policy and hyper outputs are simplex vectors for random nets") {
  Rng rng(18);
  for (int trial = 0; trial < 20; ++trial) {
    NetDims dims = small_dims(2 + static_cast<int>(rng.uniform_int(3)),
                              1 + static_cast<int>(rng.uniform_int(6)),
                              8 * (1 + static_cast<int>(rng.uniform_int(2))));
    TestNets nets = make_nets(dims, rng.next_u64());
    // Exaggerate weights to probe extreme logits.
    nets.actor.W_a.value() *= std::pow(10.0, static_cast<double>(rng.uniform_int(4)));
    nets.actor.W_e.value() *= std::pow(10.0, static_cast<double>(rng.uniform_int(4)));
    Mat h = Mat::Zero(3, dims.hidden);
    for (Index r = 0; r < 3; ++r)
      for (int c = 0; c < dims.hidden; ++c) h(r, c) = rng.uniform(-30, 30);
    Mat onehot = Mat::Zero(3, dims.n_agents);
    for (Index r = 0; r < 3; ++r) onehot(r, r % dims.n_agents) = 1.0;
    Tensor pi = action_policy(nets.actor, Tensor::from_matrix(h));
    Tensor w = hyper_action(nets.actor, Tensor::from_matrix(h), onehot);
    for (Index r = 0; r < 3; ++r) {
      CHECK(pi.value().row(r).minCoeff() >= 0.0);
      CHECK(std::abs(pi.value().row(r).sum() - 1.0) < 1e-9);
      CHECK(w.value().row(r).minCoeff() >= 0.0);
      CHECK(std::abs(w.value().row(r).sum() - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("share vs non-share parameter counts") {
  const NetDims dims = small_dims(3, 1);
  TestNets nets = make_nets(dims, 19);
  const std::size_t shared = actor_param_count(nets.actor, false);
  std::size_t nonshare_total = 0;
  for (int i = 0; i < dims.n_agents; ++i) {
    Rng rng(100 + i);
    EmbedParams e = make_embed_params(dims, rng, "a" + std::to_string(i) + ".embed.");
    ActorParams a = make_actor_params(dims, rng, e, "a" + std::to_string(i) + ".");
    nonshare_total += actor_param_count(a, false);
  }
  CHECK(nonshare_total == dims.n_agents * shared);
}
