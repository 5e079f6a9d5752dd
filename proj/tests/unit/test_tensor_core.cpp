#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "werprobe/digest.hpp"
#include "werprobe/error.hpp"
#include "werprobe/graph.hpp"
#include "werprobe/optim.hpp"
#include "werprobe/parameters.hpp"
#include "werprobe/rng.hpp"
#include "werprobe/tensor.hpp"

namespace {

using namespace werprobe;

constexpr double kTol = kDoublePrecision ? 1e-12 : 1e-5;

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorKind::Config;
}

Tensor random_tensor(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (Real& v : t.values()) v = static_cast<Real>(rng.uniform(-1.0, 1.0));
  return t;
}

TEST(Tensor, ShapesAndAccess) {
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  t.at(1, 2) = 5;
  EXPECT_EQ(t[5], 5);
  EXPECT_EQ(Tensor::scalar(3).item(), 3);
  EXPECT_EQ(kind_of([] { Tensor({2, 0}); }), ErrorKind::Dimension);
  EXPECT_EQ(kind_of([] { Tensor({2, 2}, {1, 2, 3}); }), ErrorKind::Dimension);
  EXPECT_EQ(kind_of([] { (void)Tensor({2}).item(); }), ErrorKind::Dimension);
  Tensor f({2});
  f[0] = std::numeric_limits<Real>::quiet_NaN();
  EXPECT_FALSE(f.all_finite());
}

TEST(Ops, DenseMatchesLoop) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t in = 1 + rng.below(7), out = 1 + rng.below(5);
    const Tensor x = random_tensor(rng, {in}), w = random_tensor(rng, {out, in}), b = random_tensor(rng, {out});
    Graph g(false);
    const Tensor& y = g.value(dense(g, g.constant(x), g.constant(w), g.constant(b)));
    ASSERT_EQ(y.shape(), Shape{out});
    for (std::size_t j = 0; j < out; ++j) {
      long double acc = b[j];
      for (std::size_t i = 0; i < in; ++i) acc += static_cast<long double>(w.at(j, i)) * x[i];
      EXPECT_NEAR(y[j], static_cast<double>(acc), kTol);
    }
  }
}

TEST(Ops, Conv1dMatchesLoop) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c_in = 1 + rng.below(3), c_out = 1 + rng.below(3), k = 1 + rng.below(4);
    const std::size_t stride = 1 + rng.below(3), len = k + rng.below(9);
    const Tensor x = random_tensor(rng, {c_in, len}), w = random_tensor(rng, {c_out, c_in, k});
    const Tensor b = random_tensor(rng, {c_out});
    Graph g(false);
    const Tensor& y = g.value(conv1d(g, g.constant(x), g.constant(w), g.constant(b), stride));
    const std::size_t out_len = (len - k) / stride + 1;
    ASSERT_EQ(y.shape(), (Shape{c_out, out_len}));
    for (std::size_t o = 0; o < c_out; ++o) {
      for (std::size_t t = 0; t < out_len; ++t) {
        long double acc = b[o];
        for (std::size_t c = 0; c < c_in; ++c) {
          for (std::size_t j = 0; j < k; ++j) acc += static_cast<long double>(w.at(o, c, j)) * x.at(c, t * stride + j);
        }
        EXPECT_NEAR(y.at(o, t), static_cast<double>(acc), kTol);
      }
    }
  }
  Graph g(false);
  EXPECT_EQ(kind_of([&] {
              conv1d(g, g.constant(Tensor({1, 2})), g.constant(Tensor({1, 1, 3})), g.constant(Tensor({1})), 1);
            }),
            ErrorKind::InvalidWindow);
}

TEST(Ops, MaxPoolRoutesGradientToFirstMaximum) {
  Graph g;
  ParameterSet ps;
  ps.add("x", Tensor({5}, {1, 3, 3, 2, 0}));
  const Var x = g.parameter(ps.at("x"));
  const Var y = maxpool1d(g, x, 3, 2);
  EXPECT_EQ(g.value(y), Tensor({2}, {3, 3}));
  g.backward(sum(g, y));
  EXPECT_EQ(g.gradient(x), Tensor({5}, {0, 1, 1, 0, 0}));
}

TEST(Ops, GlobalPools) {
  Graph g(false);
  const Var x = g.constant(Tensor({2, 3}, {1, 5, 3, -1, -2, -6}));
  EXPECT_EQ(g.value(global_max_pool(g, x)), Tensor({2}, {5, -1}));
  const Tensor& avg = g.value(global_avg_pool(g, x));
  EXPECT_NEAR(avg[0], 3.0, kTol);
  EXPECT_NEAR(avg[1], -3.0, kTol);
}

TEST(Ops, SoftmaxMatchesExtendedPrecision) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(10);
    Tensor logits({n});
    for (Real& v : logits.values()) v = static_cast<Real>(rng.uniform(-20.0, 20.0));
    Graph g(false);
    const Tensor& p = g.value(softmax(g, g.constant(logits)));
    long double z = 0;
    for (Real v : logits.values()) z += std::exp(static_cast<long double>(v));
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(p[i], static_cast<double>(std::exp(static_cast<long double>(logits[i])) / z), kTol);
    }
  }
  Graph g(false);
  const Tensor& p = g.value(softmax(g, g.constant(Tensor({3}, {1000, 1000, -1000}))));
  EXPECT_NEAR(p[0], 0.5, kTol);
  EXPECT_NEAR(p[1], 0.5, kTol);
  EXPECT_EQ(p[2], 0);
}

TEST(Ops, CrossEntropyFloorAndFusedForm) {
  Graph g(false);
  const Var zero = g.constant(Tensor({2}, {1, 0}));
  EXPECT_NEAR(g.value(cross_entropy(g, zero, 1)).item(), -std::log(kProbabilityFloor), 1e-3);
  const Var logits = g.constant(Tensor({3}, {0.2f, -1.0f, 2.0f}));
  const double fused = g.value(softmax_cross_entropy(g, logits, 1)).item();
  const double plain = g.value(cross_entropy(g, softmax(g, logits), 1)).item();
  EXPECT_NEAR(fused, plain, kDoublePrecision ? 1e-9 : 1e-5);
  EXPECT_EQ(kind_of([&] { softmax_cross_entropy(g, logits, 3); }), ErrorKind::Label);
}

TEST(Ops, MaeLossValueAndTieSubgradient) {
  Graph g;
  ParameterSet ps;
  ps.add("a", Tensor::scalar(2));
  ps.add("b", Tensor::scalar(5));
  const std::vector<Var> pred{g.parameter(ps.at("a")), g.parameter(ps.at("b"))};
  const std::vector<double> truth{3.0, 5.0};
  const Var loss = mae_loss(g, pred, truth);
  EXPECT_NEAR(g.value(loss).item(), 0.5, kTol);
  g.backward(loss);
  EXPECT_NEAR(g.gradient(pred[0]).item(), -0.5, kTol);
  EXPECT_EQ(g.gradient(pred[1]).item(), 0);
  EXPECT_EQ(kind_of([&] { mae_loss(g, {}, {}); }), ErrorKind::EmptyBatch);
}

TEST(Ops, DropoutIsInverted) {
  Rng rng(9);
  Graph g(false);
  const Tensor x = Tensor({4}, {1, 2, 3, 4});
  const Var v = g.constant(x);
  EXPECT_EQ(g.value(dropout(g, v, 0.5, false, rng)), x);
  EXPECT_EQ(g.value(dropout(g, v, 0.0, true, rng)), x);
  const Tensor& y = g.value(dropout(g, v, 0.5, true, rng));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_TRUE(y[i] == 0 || std::abs(y[i] - 2 * x[i]) < kTol);
  EXPECT_EQ(kind_of([&] { dropout(g, v, 1.0, true, rng); }), ErrorKind::Config);
}

TEST(Ops, EmbeddingPadsWithRowZero) {
  Graph g;
  ParameterSet ps;
  ps.add("t", Tensor({3, 2}, {0, 0, 1, 2, 3, 4}));
  const Var table = g.parameter(ps.at("t"));
  const std::vector<std::uint32_t> tokens{2, 1};
  const Var m = embedding(g, table, tokens, 3);
  EXPECT_EQ(g.value(m), Tensor({3, 2}, {3, 4, 1, 2, 0, 0}));
  g.backward(sum(g, m));
  EXPECT_EQ(g.gradient(table), Tensor({3, 2}, {0, 0, 1, 1, 1, 1}));
  const std::vector<std::uint32_t> bad{3};
  EXPECT_EQ(kind_of([&] { embedding(g, table, bad, 3); }), ErrorKind::Vocabulary);
}

TEST(Ops, ConcatTransposeExpectation) {
  Graph g(false);
  const std::vector<Var> parts{g.constant(Tensor({2}, {1, 2})), g.constant(Tensor({1}, {3}))};
  EXPECT_EQ(g.value(concat(g, parts)), Tensor({3}, {1, 2, 3}));
  EXPECT_EQ(g.value(transpose(g, g.constant(Tensor({2, 3}, {1, 2, 3, 4, 5, 6})))),
            Tensor({3, 2}, {1, 4, 2, 5, 3, 6}));
  const std::vector<double> w{10, 20};
  EXPECT_NEAR(g.value(expectation(g, g.constant(Tensor({2}, {0.25f, 0.75f})), w)).item(), 17.5, kTol);
}

TEST(Graph, ParameterBindingIsCached) {
  Graph g;
  ParameterSet ps;
  ps.add("w", Tensor::scalar(3));
  ps.add("unused", Tensor::scalar(1));
  const Var a = g.parameter(ps.at("w"));
  const Var b = g.parameter(ps.at("w"));
  EXPECT_EQ(a.id, b.id);
  g.backward(add(g, scale(g, a, 2.0), b));
  g.write_gradients(ps);
  EXPECT_NEAR(ps.at("w").gradient.item(), 3.0, kTol);
  EXPECT_EQ(ps.at("unused").gradient.item(), 0);
}

TEST(Graph, InferenceGraphRejectsBackward) {
  Graph g(false);
  const Var x = g.constant(Tensor::scalar(1));
  EXPECT_FALSE(g.requires_grad(x));
  EXPECT_THROW(g.backward(g.constant(Tensor({2}))), Error);
}

// Scalar reference implementations of the update rules.
struct AdamOracle {
  double lr, b1, b2, eps, m = 0, v = 0;
  int t = 0;
  double step(double theta, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    return theta - lr * mh / (std::sqrt(vh) + eps);
  }
};

struct AdadeltaOracle {
  double rho, eps, lr, eg2 = 0, edx2 = 0;
  double step(double theta, double g) {
    eg2 = rho * eg2 + (1 - rho) * g * g;
    const double dx = -std::sqrt(edx2 + eps) / std::sqrt(eg2 + eps) * g;
    edx2 = rho * edx2 + (1 - rho) * dx * dx;
    return theta + lr * dx;
  }
};

TEST(Optim, AdamMatchesScalarOracle) {
  const AdamConfig c{0.01, 0.9, 0.999, 1e-8};
  Parameter p{"p", Tensor::scalar(0.5), Tensor::scalar(0)};
  AdamState s = make_adam_state(p, c);
  AdamOracle o{c.lr, c.beta1, c.beta2, c.epsilon};
  double theta = 0.5;
  const double grads[] = {0.3, -1.2, 0.05, 2.0, -0.7, 0.0};
  for (double g : grads) {
    p.gradient[0] = static_cast<Real>(g);
    adam_step(p, s);
    theta = o.step(theta, static_cast<Real>(g));
    EXPECT_NEAR(p.value[0], theta, kDoublePrecision ? 1e-12 : 1e-6);
  }
  // First step moves by lr in the direction opposite the gradient.
  Parameter q{"q", Tensor::scalar(0), Tensor::scalar(4)};
  AdamState sq = make_adam_state(q, c);
  adam_step(q, sq);
  EXPECT_NEAR(q.value[0], -0.01, 1e-6);
  EXPECT_THROW(make_adam_state(q, {0.01, 1.0, 0.999, 1e-8}), Error);
}

TEST(Optim, AdadeltaMatchesScalarOracle) {
  const AdadeltaConfig c{0.95, 1e-6, 1.0};
  Parameter p{"p", Tensor::scalar(-0.2), Tensor::scalar(0)};
  AdadeltaState s = make_adadelta_state(p, c);
  AdadeltaOracle o{c.rho, c.epsilon, c.lr};
  double theta = -0.2;
  const double grads[] = {1.0, 0.5, -0.25, 3.0, 0.0, -2.0};
  for (double g : grads) {
    p.gradient[0] = static_cast<Real>(g);
    adadelta_step(p, s);
    theta = o.step(theta, static_cast<Real>(g));
    EXPECT_NEAR(p.value[0], theta, kDoublePrecision ? 1e-12 : 1e-6);
  }
}

TEST(Optim, OptimizerStepsEveryParameter) {
  ParameterSet ps;
  ps.add("a", Tensor::scalar(1)).gradient = Tensor::scalar(1);
  ps.add("b", Tensor::scalar(1)).gradient = Tensor::scalar(-1);
  Optimizer opt = Optimizer::adam(ps, {0.1, 0.9, 0.999, 1e-8});
  opt.step(ps);
  EXPECT_EQ(opt.steps_taken(), 1u);
  EXPECT_LT(ps.at("a").value[0], 1);
  EXPECT_GT(ps.at("b").value[0], 1);
}

TEST(Parameters, NamesAndDigest) {
  ParameterSet ps;
  ps.add("w", Tensor({2}, {1, 2}));
  EXPECT_EQ(kind_of([&] { ps.add("w", Tensor({1})); }), ErrorKind::Config);
  EXPECT_EQ(kind_of([&] { (void)ps.at("missing"); }), ErrorKind::Config);
  EXPECT_EQ(ps.scalar_count(), 2u);
  ParameterSet other = ps;
  EXPECT_EQ(ps.digest(), other.digest());
  other.at("w").value[1] = 3;
  EXPECT_NE(ps.digest(), other.digest());
}

TEST(Rng, DeterministicStreams) {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next(), b.next());
  Rng c(42);
  EXPECT_NE(c.fork(1).next(), c.fork(2).next());
  EXPECT_NE(mix_seed(1, 2), mix_seed(2, 1));
  Rng d(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = d.uniform();
    ASSERT_TRUE(u >= 0.0 && u < 1.0);
    ASSERT_LT(d.below(5), 5u);
  }
}

TEST(Digest, Fnv1a64KnownValues) {
  EXPECT_EQ(hash64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(hash64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(digest_of("a"), "af63dc4c8601ec8c");
}

}  // namespace
