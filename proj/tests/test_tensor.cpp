#include <doctest.h>

#include "hamh/checkpoint.hpp"
#include "hamh/gradcheck.hpp"
#include "hamh/optim.hpp"
#include "hamh/rng.hpp"
#include "hamh/tensor.hpp"

#include <cmath>
#include <sstream>

using namespace hamh;
using namespace hamh::nn;

namespace {

Mat random_mat(Rng& rng, Index rows, Index cols, double lo = -1.0, double hi = 1.0) {
  Mat m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(lo, hi);
  return m;
}

// Keeps elementwise inputs away from derivative kinks so that central
// differences stay valid.
Mat away_from(Mat m, double point, double margin = 0.05) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c)
      if (std::abs(m(r, c) - point) < margin) m(r, c) += 2.0 * margin;
  return m;
}

}  // namespace

TEST_CASE("primitive forward examples") {
  CHECK(softmax_lastdim(Tensor::row({0, 0})).value()(0, 0) == doctest::Approx(0.5));
  CHECK(softmax_lastdim(Tensor::row({0, 0})).value()(0, 1) == doctest::Approx(0.5));

  Tensor r = relu(Tensor::row({-1, 0, 2}));
  CHECK(r.value()(0, 0) == 0.0);
  CHECK(r.value()(0, 1) == 0.0);
  CHECK(r.value()(0, 2) == 2.0);

  Mat a(1, 2), b(2, 1);
  a << 1, 2;
  b << 3, 4;
  CHECK(matmul(Tensor::from_matrix(a), Tensor::from_matrix(b)).item() == 11.0);
}

TEST_CASE("shape errors name the primitive and shapes") {
  Mat a(1, 3), b(2, 2);
  a.setZero();
  b.setZero();
  try {
    matmul(Tensor::from_matrix(a), Tensor::from_matrix(b));
    FAIL("expected a shape error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("1x3") != std::string::npos);
    CHECK(msg.find("2x2") != std::string::npos);
  }
}

TEST_CASE("backward examples") {
  SUBCASE("d sum(x^2)/dx = 2x") {
    Tensor x = Tensor::param(Mat::Constant(1, 1, 3.0), "x", 1);
    Tape tape;
    Tensor loss = sum(square(x));
    tape.backward(loss);
    CHECK(x.grad()(0, 0) == doctest::Approx(6.0));
  }
  SUBCASE("mean rule") {
    Tensor x = Tensor::param((Mat(1, 4) << 1, 2, 3, 4).finished(), "x", 1);
    Tape tape;
    tape.backward(mean(x));
    for (Index c = 0; c < 4; ++c) CHECK(x.grad()(0, c) == doctest::Approx(0.25));
  }
  SUBCASE("cross-entropy gradient matches finite differences") {
    Tensor z = Tensor::param((Mat(1, 3) << 1, 2, 3).finished(), "z", 1);
    auto f = [&] { return scale(log(gather_lastdim(softmax_lastdim(z), {2})), -1.0); };
    CHECK(grad_check(f, {z}, 1e-5) < 1e-6);
  }
  SUBCASE("non-scalar loss is rejected") {
    Tensor x = Tensor::param(Mat::Ones(2, 2), "x");
    Tape tape;
    Tensor y = square(x);
    CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
  }
  SUBCASE("backward consumes the tape") {
    Tensor x = Tensor::param(Mat::Ones(1, 1), "x");
    Tape tape;
    Tensor loss = sum(square(x));
    CHECK(tape.size() > 0);
    tape.backward(loss);
    CHECK(tape.size() == 0);
  }
}

TEST_CASE("fan-out accumulates gradients additively") {
  Tensor x = Tensor::param(Mat::Constant(1, 1, 1.7), "x", 1);
  Tape tape;
  tape.backward(sum(add(x, x)));
  CHECK(x.grad()(0, 0) == 2.0);  // exact
}

TEST_CASE("gradients of every primitive match central finite differences") {
  Rng rng(1234);
  auto check = [&](const char* name, const std::function<Tensor()>& f,
                   const std::vector<Tensor>& inputs) {
    INFO("op: " << name);
    CHECK(grad_check(f, inputs, 1e-5) < 1e-4);
  };

  for (int trial = 0; trial < 3; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.uniform_int(3));
    const Index m = 2 + static_cast<Index>(rng.uniform_int(3));
    const Index k = 2 + static_cast<Index>(rng.uniform_int(3));

    Tensor a = Tensor::param(random_mat(rng, n, m), "a");
    Tensor b = Tensor::param(random_mat(rng, m, k), "b");
    Tensor c = Tensor::param(random_mat(rng, n, m), "c");
    Tensor bias = Tensor::param(random_mat(rng, 1, m), "bias", 1);
    Tensor pos = Tensor::param(random_mat(rng, n, m, 0.1, 2.0), "pos");

    check("matmul", [&] { return sum(matmul(a, b)); }, {a, b});
    check("add", [&] { return sum(square(add(a, c))); }, {a, c});
    check("add_bias", [&] { return sum(square(add(a, bias))); }, {a, bias});
    check("sub", [&] { return sum(square(sub(a, c))); }, {a, c});
    check("mul", [&] { return sum(mul(a, c)); }, {a, c});
    check("mul_bias", [&] { return sum(mul(a, bias)); }, {a, bias});
    check("concat", [&] { return sum(square(concat(a, c))); }, {a, c});
    check("concat_rows", [&] { return sum(square(concat_rows({a, c}))); }, {a, c});
    check("slice_rows", [&] { return sum(square(slice_rows(a, 1, n - 1))); }, {a});

    Tensor nz = Tensor::param(away_from(random_mat(rng, n, m), 0.0), "nz");
    check("relu", [&] { return sum(square(relu(nz))); }, {nz});
    check("leaky_relu", [&] { return sum(square(leaky_relu(nz, 0.2))); }, {nz});
    check("elu", [&] { return sum(square(elu(nz))); }, {nz});
    check("tanh", [&] { return sum(square(tanh(a))); }, {a});
    check("sigmoid", [&] { return sum(square(sigmoid(a))); }, {a});
    check("log", [&] { return sum(square(log(pos))); }, {pos});
    check("exp", [&] { return sum(square(exp(a))); }, {a});
    check("square", [&] { return sum(square(square(a))); }, {a});
    check("xlogx", [&] { return sum(xlogx(pos)); }, {pos});
    check("affine", [&] { return sum(square(affine(a, -1.7, 0.3))); }, {a});
    check("softmax", [&] { return sum(square(softmax_lastdim(a))); }, {a});
    check("sum_lastdim", [&] { return sum(square(sum_lastdim(a))); }, {a});
    check("mean", [&] { return mean(square(a)); }, {a});

    std::vector<int> idx;
    for (Index r = 0; r < n; ++r) idx.push_back(static_cast<int>(rng.uniform_int(m)));
    check("gather_lastdim", [&] { return sum(square(gather_lastdim(a, idx))); }, {a});

    Tensor d = Tensor::param(away_from(random_mat(rng, n, m), 0.0), "d");
    // Keep the two minimum branches separated.
    Tensor d2 = Tensor::param((d.value().array() + 0.3).matrix(), "d2");
    check("minimum", [&] { return sum(square(minimum(d, d2))); }, {d, d2});

    Mat clamped = random_mat(rng, n, m, -2.0, 2.0);
    clamped = away_from(std::move(clamped), -0.5);
    clamped = away_from(std::move(clamped), 0.5);
    Tensor cl = Tensor::param(std::move(clamped), "cl");
    check("clamp", [&] { return sum(square(clamp(cl, -0.5, 0.5))); }, {cl});

    const Index groups = 2;
    Tensor s = Tensor::param(random_mat(rng, groups * n, 1), "s");
    Tensor rr = Tensor::param(random_mat(rng, groups * n, 1), "r");
    check("pairwise_sum_blocks",
          [&] { return sum(square(pairwise_sum_blocks(s, rr, n))); }, {s, rr});

    Tensor att = Tensor::param(random_mat(rng, groups * n, n), "att");
    Tensor h = Tensor::param(random_mat(rng, groups * n, m), "h");
    check("block_matmul", [&] { return sum(square(block_matmul(att, h, n))); }, {att, h});

    Mat mask = Mat::Zero(n, m);
    for (Index r = 0; r < n; ++r) {
      mask(r, rng.uniform_int(static_cast<std::uint64_t>(m))) = 1.0;
      for (Index cc = 0; cc < m; ++cc)
        if (rng.uniform() < 0.5) mask(r, cc) = 1.0;
    }
    check("masked_softmax",
          [&] { return sum(square(masked_softmax_lastdim(a, mask))); }, {a});
  }
}

TEST_CASE("softmax rows are simplex vectors") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    Mat m = random_mat(rng, 1 + static_cast<Index>(rng.uniform_int(5)),
                       1 + static_cast<Index>(rng.uniform_int(8)), -50.0, 50.0);
    Tensor y = softmax_lastdim(Tensor::from_matrix(m));
    for (Index r = 0; r < y.rows(); ++r) {
      CHECK(y.value().row(r).minCoeff() >= 0.0);
      CHECK(std::abs(y.value().row(r).sum() - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("primitive_forward dispatch covers the named op set") {
  Tensor v = Tensor::row({0.5, 1.5});
  for (Op op : {Op::kRelu, Op::kTanh, Op::kSigmoid, Op::kSoftmaxLastDim, Op::kLog, Op::kSum,
                Op::kMean, Op::kSquare}) {
    Tensor out = primitive_forward(op, {v});
    CHECK(out.value().allFinite());
  }
  CHECK(primitive_forward(Op::kAdd, {v, v}).value()(0, 1) == 3.0);
  CHECK(primitive_forward(Op::kMul, {v, v}).value()(0, 1) == 2.25);
  CHECK(primitive_forward(Op::kConcat, {v, v}).cols() == 4);
  Mat a(1, 2), b(2, 1);
  a << 1, 2;
  b << 3, 4;
  CHECK(primitive_forward(Op::kMatmul,
                          {Tensor::from_matrix(a), Tensor::from_matrix(b)})
            .item() == 11.0);
  CHECK_THROWS(primitive_forward(Op::kSum, {v, v}));
}

TEST_CASE("adam optimizer") {
  SUBCASE("first step moves by about -lr for unit gradient") {
    const double lr = 5e-4;
    Tensor p = Tensor::param(Mat::Constant(1, 1, 2.0), "p");
    AdamOptimizer opt({p}, lr);
    p.grad()(0, 0) = 1.0;
    opt.step();
    const double delta = p.value()(0, 0) - 2.0;
    CHECK(std::abs(delta + lr * 1.0 / (std::sqrt(1.0) + 1e-8)) < 1e-9);
  }
  SUBCASE("zero gradient is the identity and still counts the step") {
    Tensor p = Tensor::param((Mat(1, 3) << 1, -2, 3).finished(), "p", 1);
    AdamOptimizer opt({p}, 1e-3);
    const Mat before = p.value();
    opt.step();
    opt.step();
    CHECK(p.value() == before);
    CHECK(opt.step_count() == 2);
  }
  SUBCASE("constant positive gradient decreases the parameter monotonically") {
    // Scalar hand-rolled Adam oracle: with g = 1 every step, m-hat = 1 and
    // v-hat = 1, so each update subtracts lr/(1 + eps) > 0.
    Tensor p = Tensor::param(Mat::Constant(1, 1, 0.0), "p");
    AdamOptimizer opt({p}, 5e-4);
    double prev = p.value()(0, 0);
    for (int i = 0; i < 2; ++i) {
      p.grad()(0, 0) = 1.0;
      opt.step();
      CHECK(p.value()(0, 0) < prev);
      prev = p.value()(0, 0);
    }
  }
  SUBCASE("non-finite gradient names the parameter") {
    Tensor p = Tensor::param(Mat::Ones(1, 1), "theta.weird");
    AdamOptimizer opt({p}, 1e-3);
    p.grad()(0, 0) = std::nan("");
    try {
      opt.step();
      FAIL("expected an error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("theta.weird") != std::string::npos);
    }
  }
  SUBCASE("grads are zeroed after the step") {
    Tensor p = Tensor::param(Mat::Ones(1, 2), "p", 1);
    AdamOptimizer opt({p}, 1e-3);
    p.grad().setConstant(2.0);
    opt.step();
    CHECK(p.grad().isZero());
  }
}

TEST_CASE("gradient clipping by global norm") {
  Tensor p = Tensor::param(Mat::Ones(1, 2), "p", 1);
  p.grad() << 30.0, 40.0;  // norm 50
  const double norm = clip_grad_norm({p}, 10.0);
  CHECK(norm == doctest::Approx(50.0));
  CHECK(p.grad()(0, 0) == doctest::Approx(6.0));
  CHECK(p.grad()(0, 1) == doctest::Approx(8.0));
  // Below the bound nothing changes.
  p.grad() << 3.0, 4.0;
  clip_grad_norm({p}, 10.0);
  CHECK(p.grad()(0, 0) == doctest::Approx(3.0));
}

TEST_CASE("grad_check on x^2 is tight") {
  Tensor x = Tensor::param(Mat::Constant(1, 1, 3.0), "x", 1);
  CHECK(grad_check([&] { return square(x); }, {x}, 1e-5) < 1e-8);
}

TEST_CASE("grad_check rejects functions that go non-finite") {
  Tensor x = Tensor::param(Mat::Constant(1, 1, -1.0), "x", 1);
  CHECK_THROWS_AS(grad_check([&] { return log(x); }, {x}, 1e-5), std::runtime_error);
}

TEST_CASE("checkpoint round trip and shape rejection") {
  Rng rng(7);
  ParamRegistry reg;
  reg.add("actor.embed.W_d", Tensor::param(random_mat(rng, 3, 4), "actor.embed.W_d"));
  reg.add("actor.embed.b_d", Tensor::param(random_mat(rng, 1, 4), "actor.embed.b_d", 1));

  std::ostringstream os;
  save_checkpoint(os, reg, {{"k", "32"}});
  const std::string text = os.str();

  SUBCASE("identical values after reload") {
    ParamRegistry reg2;
    reg2.add("actor.embed.W_d", Tensor::param(Mat::Zero(3, 4), "actor.embed.W_d"));
    reg2.add("actor.embed.b_d", Tensor::param(Mat::Zero(1, 4), "actor.embed.b_d", 1));
    std::istringstream is(text);
    const auto meta = load_checkpoint(is, reg2);
    CHECK(meta.at("k") == "32");
    CHECK(reg2.get("actor.embed.W_d").value() == reg.get("actor.embed.W_d").value());
    CHECK(reg2.get("actor.embed.b_d").value() == reg.get("actor.embed.b_d").value());
  }
  SUBCASE("shape mismatch is rejected") {
    ParamRegistry reg2;
    reg2.add("actor.embed.W_d", Tensor::param(Mat::Zero(3, 5), "actor.embed.W_d"));
    reg2.add("actor.embed.b_d", Tensor::param(Mat::Zero(1, 4), "actor.embed.b_d", 1));
    std::istringstream is(text);
    CHECK_THROWS_WITH_AS(load_checkpoint(is, reg2),
                         doctest::Contains("shape mismatch"), std::runtime_error);
  }
  SUBCASE("missing parameter is rejected") {
    ParamRegistry reg2;
    reg2.add("actor.embed.W_d", Tensor::param(Mat::Zero(3, 4), "actor.embed.W_d"));
    reg2.add("actor.embed.b_d", Tensor::param(Mat::Zero(1, 4), "actor.embed.b_d", 1));
    reg2.add("actor.gru.W_z", Tensor::param(Mat::Zero(2, 2), "actor.gru.W_z"));
    std::istringstream is(text);
    CHECK_THROWS_WITH_AS(load_checkpoint(is, reg2), doctest::Contains("missing parameter"),
                         std::runtime_error);
  }
}

TEST_CASE("rng substreams are deterministic and independent") {
  Rng a(42);
  Rng b(42);
  CHECK(a.substream("arrivals").next_u64() == b.substream("arrivals").next_u64());
  CHECK(a.substream("arrivals").next_u64() != a.substream("policy").next_u64());
  Rng c(43);
  CHECK(a.substream("arrivals").next_u64() != c.substream("arrivals").next_u64());

  Rng u(7);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
}
