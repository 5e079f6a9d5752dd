#include "gradient_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>

#include "werprobe/digest.hpp"
#include "werprobe/graph.hpp"
#include "werprobe/predictor.hpp"

#if defined(WERPROBE_DOUBLE)
namespace werprobe_test::f64 {
#else
namespace werprobe_test::f32 {
#endif

using namespace werprobe;

namespace {

using Build = std::function<Var(Graph&, const ParameterSet&)>;
// Entries excluded from the check (the padding row of an embedding table).
using Frozen = std::function<bool(const Parameter&, std::size_t)>;

constexpr double kStep = 1e-6;
constexpr double kTolerance = kDoublePrecision ? 1e-6 : 1e-3;

double loss_at(const ParameterSet& params, const Build& build) {
  Graph g(false);
  return static_cast<double>(g.value(build(g, params)).item());
}

std::vector<double> flat_values(const ParameterSet& params) {
  std::vector<double> out;
  for (const Parameter& p : params.all()) out.insert(out.end(), p.value.values().begin(), p.value.values().end());
  return out;
}

// Central differences at the current parameter values; frozen entries are 0.
std::vector<double> numeric_gradient(ParameterSet& params, const Build& build, const Frozen& frozen) {
  std::vector<double> out;
  for (Parameter& p : params.all()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      if (frozen && frozen(p, i)) {
        out.push_back(0.0);
        continue;
      }
      const Real original = p.value[i];
      p.value[i] = static_cast<Real>(original + kStep);
      const double up = loss_at(params, build);
      p.value[i] = static_cast<Real>(original - kStep);
      const double down = loss_at(params, build);
      p.value[i] = original;
      const double step = static_cast<double>(static_cast<Real>(original + kStep)) -
                          static_cast<double>(static_cast<Real>(original - kStep));
      out.push_back((up - down) / step);
    }
  }
  return out;
}

std::vector<double> analytic_gradient(ParameterSet& params, const Build& build, const Frozen& frozen) {
  Graph g;
  const Var loss = build(g, params);
  g.backward(loss);
  params.zero_grad();
  g.write_gradients(params);
  std::vector<double> out;
  for (const Parameter& p : params.all()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) out.push_back(frozen && frozen(p, i) ? 0.0 : p.gradient[i]);
  }
  return out;
}

// ||analytic - numeric|| / max(||analytic||, ||numeric||).
double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff2 += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    a2 += analytic[i] * analytic[i];
    n2 += numeric[i] * numeric[i];
  }
  if (analytic.size() != numeric.size()) return INFINITY;
  const double scale = std::sqrt(std::max(a2, n2));
  if (scale < 1e-12) return std::sqrt(diff2);
  return std::sqrt(diff2) / scale;
}

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (Real& v : t.values()) v = static_cast<Real>(rng.uniform(lo, hi));
  return t;
}

// Values with pairwise gaps well above the finite-difference step, so that
// max-selection and ReLU kinks are never crossed.
Tensor separated_tensor(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const double spacing = 0.1;
  const double offset = -spacing * static_cast<double>(t.size() / 2) + 0.05;
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[order[i]] = static_cast<Real>(offset + spacing * static_cast<double>(i) + rng.uniform(-0.02, 0.02));
  }
  return t;
}

std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

// Projects a tensor onto fixed random weights to obtain a scalar loss.
Var project(Graph& g, Var v, std::uint64_t seed) {
  Rng rng(seed);
  const Tensor& value = g.value(v);
  Tensor w(value.shape());
  for (Real& x : w.values()) x = static_cast<Real>(rng.uniform(-1.0, 1.0));
  return inner(g, v, w);
}

struct Instance {
  std::shared_ptr<ParameterSet> owned = std::make_shared<ParameterSet>();
  std::shared_ptr<Model> model;
  ParameterSet& params() { return model ? model->parameters() : *owned; }
  Build build;
  Frozen frozen;
};

using Generator = std::function<Instance(Rng&)>;

ModelConfig tiny_model_config(Rng& rng) {
  ModelConfig c;
  c.layers = {4, 3, 2, 3, 3, 2, 2, 4, 3};
  c.text.vocab_size = 12;
  c.text.max_tokens = 6;
  c.text.embed_dim = 3;
  c.text.filter_widths = {1, 2};
  c.signal.input_len = 40;
  c.signal.stages = {{2, 4, 2, 2}, {3, 3, 1, 0}};
  c.wer_vector = WerVector::uniform(0.0, 10.0, 6);
  c.tasks = {{Task::Style, {"NonSpontaneous", "Spontaneous"}}, {Task::Accent, {"Native", "NonNative"}}};
  c.seed = rng.next();
  return c;
}

std::vector<std::pair<std::string, Generator>> generators() {
  std::vector<std::pair<std::string, Generator>> out;

  out.emplace_back("dense", [](Rng& rng) {
    const std::size_t in = between(rng, 1, 6), outd = between(rng, 1, 5);
    Instance s;
    s.params().add("x", random_tensor(rng, {in}));
    s.params().add("w", random_tensor(rng, {outd, in}));
    s.params().add("b", random_tensor(rng, {outd}));
    const std::uint64_t ps = rng.next();
    s.build = [ps](Graph& g, const ParameterSet& p) {
      return project(g, dense(g, g.parameter(p.at("x")), g.parameter(p.at("w")), g.parameter(p.at("b"))), ps);
    };
    return s;
  });

  out.emplace_back("conv1d", [](Rng& rng) {
    const std::size_t c_in = between(rng, 1, 3), c_out = between(rng, 1, 3), k = between(rng, 1, 4);
    const std::size_t stride = between(rng, 1, 3), len = k + between(rng, 0, 8);
    Instance s;
    s.params().add("x", random_tensor(rng, {c_in, len}));
    s.params().add("k", random_tensor(rng, {c_out, c_in, k}));
    s.params().add("b", random_tensor(rng, {c_out}));
    const std::uint64_t ps = rng.next();
    s.build = [ps, stride](Graph& g, const ParameterSet& p) {
      return project(g, conv1d(g, g.parameter(p.at("x")), g.parameter(p.at("k")), g.parameter(p.at("b")), stride),
                     ps);
    };
    return s;
  });

  out.emplace_back("relu", [](Rng& rng) {
    Instance s;
    s.params().add("x", separated_tensor(rng, {between(rng, 1, 12)}));
    const std::uint64_t ps = rng.next();
    s.build = [ps](Graph& g, const ParameterSet& p) { return project(g, relu(g, g.parameter(p.at("x"))), ps); };
    return s;
  });

  out.emplace_back("maxpool1d", [](Rng& rng) {
    const std::size_t c = between(rng, 1, 3), width = between(rng, 1, 4), stride = between(rng, 1, 3);
    const std::size_t len = width + between(rng, 0, 8);
    Instance s;
    s.params().add("x", separated_tensor(rng, {c, len}));
    const std::uint64_t ps = rng.next();
    s.build = [ps, width, stride](Graph& g, const ParameterSet& p) {
      return project(g, maxpool1d(g, g.parameter(p.at("x")), width, stride), ps);
    };
    return s;
  });

  out.emplace_back("global_max_pool", [](Rng& rng) {
    Instance s;
    s.params().add("x", separated_tensor(rng, {between(rng, 1, 4), between(rng, 1, 8)}));
    const std::uint64_t ps = rng.next();
    s.build = [ps](Graph& g, const ParameterSet& p) {
      return project(g, global_max_pool(g, g.parameter(p.at("x"))), ps);
    };
    return s;
  });

  out.emplace_back("global_avg_pool", [](Rng& rng) {
    Instance s;
    s.params().add("x", random_tensor(rng, {between(rng, 1, 4), between(rng, 1, 8)}));
    const std::uint64_t ps = rng.next();
    s.build = [ps](Graph& g, const ParameterSet& p) {
      return project(g, global_avg_pool(g, g.parameter(p.at("x"))), ps);
    };
    return s;
  });

  out.emplace_back("pool_and_activate", [](Rng& rng) {
    Instance s;
    s.params().add("x", separated_tensor(rng, {between(rng, 1, 3), between(rng, 4, 9)}));
    PoolSpec spec;
    spec.kind = static_cast<PoolKind>(rng.below(4));
    spec.width = between(rng, 1, 3);
    spec.stride = between(rng, 1, 3);
    const std::uint64_t ps = rng.next();
    s.build = [ps, spec](Graph& g, const ParameterSet& p) {
      return project(g, pool_and_activate(g, g.parameter(p.at("x")), spec), ps);
    };
    return s;
  });

  out.emplace_back("softmax", [](Rng& rng) {
    Instance s;
    s.params().add("x", random_tensor(rng, {between(rng, 1, 8)}, -3.0, 3.0));
    const std::uint64_t ps = rng.next();
    s.build = [ps](Graph& g, const ParameterSet& p) { return project(g, softmax(g, g.parameter(p.at("x"))), ps); };
    return s;
  });

  out.emplace_back("cross_entropy", [](Rng& rng) {
    const std::size_t n = between(rng, 2, 8), cls = rng.below(n);
    Instance s;
    s.params().add("x", random_tensor(rng, {n}, -2.0, 2.0));
    s.build = [cls](Graph& g, const ParameterSet& p) {
      return cross_entropy(g, softmax(g, g.parameter(p.at("x"))), cls);
    };
    return s;
  });

  out.emplace_back("softmax_cross_entropy", [](Rng& rng) {
    const std::size_t n = between(rng, 2, 8), cls = rng.below(n);
    Instance s;
    s.params().add("x", random_tensor(rng, {n}, -3.0, 3.0));
    s.build = [cls](Graph& g, const ParameterSet& p) {
      return softmax_cross_entropy(g, g.parameter(p.at("x")), cls);
    };
    return s;
  });

  out.emplace_back("mae_loss", [](Rng& rng) {
    const std::size_t n = between(rng, 1, 6);
    Instance s;
    std::vector<double> truth;
    for (std::size_t i = 0; i < n; ++i) {
      s.params().add("y" + std::to_string(i), Tensor::scalar(static_cast<Real>(rng.uniform(-1.0, 1.0))));
      // Keep every residual away from the kink at zero.
      const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
      truth.push_back(static_cast<double>(s.params().all()[i].value[0]) + sign * rng.uniform(0.1, 2.0));
    }
    s.build = [truth](Graph& g, const ParameterSet& p) {
      std::vector<Var> pred;
      for (const Parameter& q : p.all()) pred.push_back(g.parameter(q));
      return mae_loss(g, pred, truth);
    };
    return s;
  });

  out.emplace_back("dropout", [](Rng& rng) {
    Instance s;
    s.params().add("x", random_tensor(rng, {between(rng, 1, 10)}));
    const double rate = rng.uniform(0.0, 0.8);
    const std::uint64_t ds = rng.next(), ps = rng.next();
    s.build = [rate, ds, ps](Graph& g, const ParameterSet& p) {
      Rng mask(ds);
      return project(g, dropout(g, g.parameter(p.at("x")), rate, true, mask), ps);
    };
    return s;
  });

  out.emplace_back("concat", [](Rng& rng) {
    const std::size_t parts = between(rng, 1, 4);
    Instance s;
    for (std::size_t i = 0; i < parts; ++i) s.params().add("x" + std::to_string(i), random_tensor(rng, {between(rng, 1, 4)}));
    const std::uint64_t ps = rng.next();
    s.build = [ps](Graph& g, const ParameterSet& p) {
      std::vector<Var> vs;
      for (const Parameter& q : p.all()) vs.push_back(g.parameter(q));
      return project(g, concat(g, vs), ps);
    };
    return s;
  });

  out.emplace_back("transpose", [](Rng& rng) {
    Instance s;
    s.params().add("x", random_tensor(rng, {between(rng, 1, 4), between(rng, 1, 4)}));
    const std::uint64_t ps = rng.next();
    s.build = [ps](Graph& g, const ParameterSet& p) { return project(g, transpose(g, g.parameter(p.at("x"))), ps); };
    return s;
  });

  out.emplace_back("embedding", [](Rng& rng) {
    const std::size_t vocab = between(rng, 2, 6), d = between(rng, 1, 3), max_tokens = between(rng, 1, 6);
    std::vector<std::uint32_t> tokens(between(rng, 0, max_tokens + 2));
    for (auto& t : tokens) t = static_cast<std::uint32_t>(rng.below(vocab));
    Instance s;
    Tensor table = random_tensor(rng, {vocab, d});
    for (std::size_t j = 0; j < d; ++j) table.at(0, j) = 0;
    s.params().add("table", std::move(table));
    s.frozen = [d](const Parameter&, std::size_t i) { return i < d; };
    const std::uint64_t ps = rng.next();
    s.build = [ps, tokens, max_tokens](Graph& g, const ParameterSet& p) {
      return project(g, embedding(g, g.parameter(p.at("table")), tokens, max_tokens), ps);
    };
    return s;
  });

  out.emplace_back("expectation", [](Rng& rng) {
    const std::size_t n = between(rng, 1, 8);
    std::vector<double> w(n);
    for (double& x : w) x = rng.uniform(-5.0, 5.0);
    Instance s;
    s.params().add("x", random_tensor(rng, {n}, -2.0, 2.0));
    s.build = [w](Graph& g, const ParameterSet& p) {
      return expectation(g, softmax(g, g.parameter(p.at("x"))), w);
    };
    return s;
  });

  out.emplace_back("add_scale_sum", [](Rng& rng) {
    const std::size_t n = between(rng, 1, 6);
    const double factor = rng.uniform(-3.0, 3.0);
    Instance s;
    s.params().add("a", random_tensor(rng, {n}));
    s.params().add("b", separated_tensor(rng, {n}));
    s.build = [factor](Graph& g, const ParameterSet& p) {
      const Var a = g.parameter(p.at("a"));
      const Var b = g.parameter(p.at("b"));
      return sum(g, scale(g, add(g, a, relu(g, add(g, b, b))), factor));
    };
    return s;
  });

  out.emplace_back("mean", [](Rng& rng) {
    const std::size_t n = between(rng, 1, 6);
    Instance s;
    for (std::size_t i = 0; i < n; ++i) s.params().add("x" + std::to_string(i), random_tensor(rng, {1}));
    s.build = [](Graph& g, const ParameterSet& p) {
      std::vector<Var> vs;
      for (const Parameter& q : p.all()) vs.push_back(g.parameter(q));
      return mean(g, vs);
    };
    return s;
  });

  out.emplace_back("predict_wer", [](Rng& rng) {
    const std::size_t n = between(rng, 2, 10);
    const WerVector centers = WerVector::uniform(rng.uniform(0.0, 5.0), rng.uniform(0.5, 3.0), n);
    Instance s;
    s.params().add("x", random_tensor(rng, {n}, -2.0, 2.0));
    s.build = [centers](Graph& g, const ParameterSet& p) {
      return scale(g, predict_wer(g, g.parameter(p.at("x")), centers), 0.1);
    };
    return s;
  });

  out.emplace_back("composite_loss", [](Rng& rng) {
    const std::size_t batch = between(rng, 1, 4), n_tasks = between(rng, 0, 3);
    Instance s;
    std::vector<double> truth;
    for (std::size_t i = 0; i < batch; ++i) {
      s.params().add("w" + std::to_string(i), Tensor::scalar(static_cast<Real>(rng.uniform(-1.0, 1.0))));
      truth.push_back(static_cast<double>(s.params().all()[i].value[0]) + (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(0.1, 1.0));
    }
    std::vector<std::vector<std::size_t>> labels(n_tasks);
    for (std::size_t t = 0; t < n_tasks; ++t) {
      const std::size_t classes = between(rng, 2, 5);
      for (std::size_t i = 0; i < batch; ++i) {
        s.params().add("t" + std::to_string(t) + "_" + std::to_string(i), random_tensor(rng, {classes}, -2.0, 2.0));
        labels[t].push_back(rng.below(classes));
      }
    }
    LossWeights weights{rng.uniform(0.5, 2.0), rng.uniform(0.0, 1.0)};
    s.build = [batch, truth, labels, weights](Graph& g, const ParameterSet& p) {
      std::vector<Var> pred;
      for (std::size_t i = 0; i < batch; ++i) pred.push_back(g.parameter(p.at("w" + std::to_string(i))));
      std::vector<TaskBatch> tasks(labels.size());
      for (std::size_t t = 0; t < labels.size(); ++t) {
        for (std::size_t i = 0; i < batch; ++i) {
          tasks[t].logits.push_back(g.parameter(p.at("t" + std::to_string(t) + "_" + std::to_string(i))));
        }
        tasks[t].labels = labels[t];
      }
      return composite_loss(g, pred, truth, tasks, weights);
    };
    return s;
  });

  out.emplace_back("dual_encoder_composite", [](Rng& rng) {
    const ModelConfig config = tiny_model_config(rng);
    std::vector<Utterance> batch(2);
    for (Utterance& u : batch) {
      u.tokens.resize(between(rng, 1, 8));
      for (auto& t : u.tokens) t = static_cast<std::uint32_t>(1 + rng.below(config.text.vocab_size - 1));
      u.signal.resize(between(rng, 20, 50));
      for (float& x : u.signal) x = static_cast<float>(rng.uniform(-1.0, 1.0));
      u.style = rng.bernoulli(0.5) ? Style::Spontaneous : Style::NonSpontaneous;
      u.accent = rng.bernoulli(0.5) ? Accent::NonNative : Accent::Native;
      // Targets beyond the center range keep the absolute error away from its kink.
      u.wer = rng.bernoulli(0.5) ? rng.uniform(60.0, 80.0) : -rng.uniform(10.0, 30.0);
    }
    Instance s;
    s.model = std::make_shared<Model>(config);
    // Zero-initialized biases put padded positions exactly on ReLU and max kinks.
    for (Parameter& p : s.model->parameters().all()) {
      if (p.name.ends_with(".bias")) {
        for (Real& v : p.value.values()) v = static_cast<Real>(rng.uniform(-0.5, 0.5));
      }
    }
    s.frozen = [d = config.text.embed_dim](const Parameter& p, std::size_t i) {
      return p.name == "text.embedding" && i < d;
    };
    s.build = [model = s.model.get(), config, batch](Graph& g, const ParameterSet&) {
      const Model& m = *model;
      std::vector<Var> pred;
      std::vector<double> truth;
      std::vector<TaskBatch> tasks(config.tasks.size());
      for (const Utterance& u : batch) {
        const ForwardResult r = forward_utterance(g, m, u);
        pred.push_back(r.wer);
        truth.push_back(u.wer);
        for (std::size_t t = 0; t < config.tasks.size(); ++t) {
          tasks[t].logits.push_back(r.head.task_logits[t]);
          tasks[t].labels.push_back(*config.tasks[t].index_of(label_of(u, config.tasks[t].task)));
        }
      }
      return scale(g, composite_loss(g, pred, truth, tasks, {1.0, 0.3}), 0.05);
    };
    return s;
  });

  return out;
}

Instance make_instance(const Generator& make, const std::string& name, std::uint64_t seed, std::size_t index) {
  Rng rng(mix_seed(seed, hash64(name)));
  for (std::size_t i = 0; i < index; ++i) make(rng);
  return make(rng);
}

}  // namespace

std::vector<double> reference_gradient(std::size_t case_index, std::size_t instance, std::uint64_t seed,
                                       std::span<const double> values) {
  const auto gens = generators();
  const auto& [name, make] = gens.at(case_index);
  Instance inst = make_instance(make, name, seed, instance);
  std::size_t k = 0;
  for (Parameter& p : inst.params().all()) {
    for (Real& v : p.value.values()) v = static_cast<Real>(values[k++]);
  }
  return numeric_gradient(inst.params(), inst.build, inst.frozen);
}

GradientSuiteResult run_gradient_suite(std::size_t instances, std::uint64_t seed) {
  GradientSuiteResult result;
  result.tolerance = kTolerance;
  result.step = kStep;
  const auto gens = generators();
  for (std::size_t ci = 0; ci < gens.size(); ++ci) {
    const auto& [name, make] = gens[ci];
    GradientCaseResult c;
    c.op = name;
    Rng rng(mix_seed(seed, hash64(name)));
    for (std::size_t i = 0; i < instances; ++i) {
      Instance inst = make(rng);
      const std::vector<double> analytic = analytic_gradient(inst.params(), inst.build, inst.frozen);
#if defined(WERPROBE_DOUBLE)
      const std::vector<double> numeric = numeric_gradient(inst.params(), inst.build, inst.frozen);
#else
      // Single-precision losses cannot resolve central differences at this
      // step; the reference comes from the 64-bit build at the same point.
      const std::vector<double> numeric = f64::reference_gradient(ci, i, seed, flat_values(inst.params()));
#endif
      const double err = relative_error(analytic, numeric);
      c.worst_error = std::max(c.worst_error, std::isnan(err) ? INFINITY : err);
      if (!(err < kTolerance)) ++c.failures;
      ++c.instances;
    }
    result.cases.push_back(c);
  }
  return result;
}

}  // namespace
