#include "werprobe/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "werprobe/error.hpp"

WERPROBE_NAMESPACE_BEGIN

namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, 1>>;
using ConstVecMap = Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>>;

ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
MatMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
ConstVecMap as_vector(const Tensor& t) { return ConstVecMap(t.data(), static_cast<Eigen::Index>(t.size())); }
VecMap as_vector(Tensor& t) { return VecMap(t.data(), static_cast<Eigen::Index>(t.size())); }

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    fail(ErrorKind::Dimension, std::string(op) + ": " + what + " must have rank " +
                                   std::to_string(rank) + ", got " + to_string(t.shape()));
  }
}

void require_scalar(const Tensor& t, const char* op) {
  if (t.size() != 1) fail(ErrorKind::Dimension, std::string(op) + ": expected a scalar, got " + to_string(t.shape()));
}

// Views a rank-1 [L] or rank-2 [C x L] tensor as channels x length.
std::pair<std::size_t, std::size_t> channels_and_length(const Tensor& t, const char* op) {
  if (t.rank() == 1) return {1, t.dim(0)};
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  fail(ErrorKind::Dimension, std::string(op) + ": expected [L] or [C x L], got " + to_string(t.shape()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Graph

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var{nodes_.size() - 1};
}

Var Graph::parameter(const Parameter& param) {
  if (auto it = bound_.find(&param); it != bound_.end()) return Var{it->second};
  nodes_.push_back(Node{param.value, {}, record_gradients_, {}});
  bound_.emplace(&param, nodes_.size() - 1);
  return Var{nodes_.size() - 1};
}

const Graph::Node& Graph::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) fail(ErrorKind::Config, "invalid graph variable");
  return nodes_[v.id];
}

const Tensor& Graph::value(Var v) const { return node(v).value; }
const Tensor& Graph::gradient(Var v) const { return node(v).grad; }
bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

Var Graph::emit(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return emit(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Graph::emit(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  bool needs = false;
  if (record_gradients_) {
    for (Var in : inputs) needs = needs || node(in).requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : BackwardFn{}});
  return Var{nodes_.size() - 1};
}

Tensor& Graph::grad_buffer(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Graph::backward(Var loss) {
  const Node& root = node(loss);
  if (root.value.size() != 1) {
    fail(ErrorKind::Dimension, "backward: root must be a scalar, got " + to_string(root.value.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  if (!root.requires_grad) return;
  grad_buffer(loss)[0] = Real(1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

void Graph::write_gradients(ParameterSet& params) const {
  for (Parameter& p : params.all()) {
    auto it = bound_.find(&p);
    if (it != bound_.end() && !nodes_[it->second].grad.empty()) {
      p.gradient = nodes_[it->second].grad;
    } else {
      p.gradient = Tensor(p.value.shape());
    }
  }
}

// ---------------------------------------------------------------------------
// Operations

Var dense(Graph& g, Var input, Var weight, Var bias) {
  const Tensor& x = g.value(input);
  const Tensor& w = g.value(weight);
  const Tensor& b = g.value(bias);
  require_rank(w, 2, "dense", "weight");
  const std::size_t n_out = w.dim(0), n_in = w.dim(1);
  if (x.rank() != 1 || x.dim(0) != n_in || b.rank() != 1 || b.dim(0) != n_out) {
    fail(ErrorKind::Dimension, "dense: input " + to_string(x.shape()) + " and bias " + to_string(b.shape()) +
                                   " do not conform to weight " + to_string(w.shape()));
  }
  Tensor out({n_out});
  as_vector(out).noalias() = as_matrix(w, n_out, n_in) * as_vector(x) + as_vector(b);
  return g.emit(std::move(out), {input, weight, bias}, [=](Graph& g, const Tensor& go) {
    const auto gov = as_vector(go);
    if (g.requires_grad(input)) {
      as_vector(g.grad_buffer(input)).noalias() += as_matrix(g.value(weight), n_out, n_in).transpose() * gov;
    }
    if (g.requires_grad(weight)) {
      as_matrix(g.grad_buffer(weight), n_out, n_in).noalias() += gov * as_vector(g.value(input)).transpose();
    }
    if (g.requires_grad(bias)) as_vector(g.grad_buffer(bias)) += gov;
  });
}

Var conv1d(Graph& g, Var input, Var kernels, Var bias, std::size_t stride) {
  const Tensor& x = g.value(input);
  const Tensor& k = g.value(kernels);
  const Tensor& b = g.value(bias);
  if (stride < 1) fail(ErrorKind::Config, "conv1d: stride must be >= 1");
  require_rank(x, 2, "conv1d", "input");
  require_rank(k, 3, "conv1d", "kernels");
  const std::size_t c_in = x.dim(0), len = x.dim(1);
  const std::size_t c_out = k.dim(0), width = k.dim(2);
  if (k.dim(1) != c_in || b.rank() != 1 || b.dim(0) != c_out) {
    fail(ErrorKind::Dimension, "conv1d: input " + to_string(x.shape()) + ", kernels " + to_string(k.shape()) +
                                   " and bias " + to_string(b.shape()) + " do not conform");
  }
  if (width > len) {
    fail(ErrorKind::InvalidWindow, "conv1d: kernel width " + std::to_string(width) + " exceeds input length " +
                                       std::to_string(len));
  }
  const std::size_t len_out = (len - width) / stride + 1;
  const std::size_t patch = c_in * width;

  RowMat col(static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(len_out));
  for (std::size_t c = 0; c < c_in; ++c) {
    const Real* row = x.data() + c * len;
    for (std::size_t j = 0; j < width; ++j) {
      Real* dst = col.data() + (c * width + j) * len_out;
      for (std::size_t t = 0; t < len_out; ++t) dst[t] = row[t * stride + j];
    }
  }
  Tensor out({c_out, len_out});
  auto out_m = as_matrix(out, c_out, len_out);
  out_m.noalias() = as_matrix(k, c_out, patch) * col;
  out_m.colwise() += as_vector(b);

  return g.emit(std::move(out), {input, kernels, bias},
                [=, col = std::move(col)](Graph& g, const Tensor& go) {
                  const auto gm = as_matrix(go, c_out, len_out);
                  if (g.requires_grad(kernels)) {
                    as_matrix(g.grad_buffer(kernels), c_out, patch).noalias() += gm * col.transpose();
                  }
                  if (g.requires_grad(bias)) as_vector(g.grad_buffer(bias)) += gm.rowwise().sum();
                  if (g.requires_grad(input)) {
                    RowMat dcol = as_matrix(g.value(kernels), c_out, patch).transpose() * gm;
                    Real* gx = g.grad_buffer(input).data();
                    for (std::size_t c = 0; c < c_in; ++c) {
                      Real* row = gx + c * len;
                      for (std::size_t j = 0; j < width; ++j) {
                        const Real* src = dcol.data() + (c * width + j) * len_out;
                        for (std::size_t t = 0; t < len_out; ++t) row[t * stride + j] += src[t];
                      }
                    }
                  }
                });
}

Var relu(Graph& g, Var input) {
  const Tensor& x = g.value(input);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > Real(0) ? x[i] : Real(0);
  return g.emit(std::move(out), {input}, [=](Graph& g, const Tensor& go) {
    const Tensor& xv = g.value(input);
    Tensor& gx = g.grad_buffer(input);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      if (xv[i] > Real(0)) gx[i] += go[i];
    }
  });
}

Var maxpool1d(Graph& g, Var input, std::size_t width, std::size_t stride) {
  const Tensor& x = g.value(input);
  if (width < 1 || stride < 1) fail(ErrorKind::Config, "maxpool1d: width and stride must be >= 1");
  const auto [channels, len] = channels_and_length(x, "maxpool1d");
  if (width > len) {
    fail(ErrorKind::InvalidWindow, "maxpool1d: window " + std::to_string(width) + " exceeds length " +
                                       std::to_string(len));
  }
  const std::size_t len_out = (len - width) / stride + 1;
  Tensor out(x.rank() == 1 ? Shape{len_out} : Shape{channels, len_out});
  std::vector<std::size_t> argmax(channels * len_out);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t t = 0; t < len_out; ++t) {
      const std::size_t base = c * len + t * stride;
      std::size_t best = base;
      for (std::size_t j = 1; j < width; ++j) {
        if (x[base + j] > x[best]) best = base + j;
      }
      argmax[c * len_out + t] = best;
      out[c * len_out + t] = x[best];
    }
  }
  return g.emit(std::move(out), {input}, [=, argmax = std::move(argmax)](Graph& g, const Tensor& go) {
    Tensor& gx = g.grad_buffer(input);
    for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += go[i];
  });
}

Var global_max_pool(Graph& g, Var input) {
  const Tensor& x = g.value(input);
  const auto [channels, len] = channels_and_length(x, "global_max_pool");
  Tensor out({channels});
  std::vector<std::size_t> argmax(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    std::size_t best = c * len;
    for (std::size_t t = 1; t < len; ++t) {
      if (x[c * len + t] > x[best]) best = c * len + t;
    }
    argmax[c] = best;
    out[c] = x[best];
  }
  return g.emit(std::move(out), {input}, [=, argmax = std::move(argmax)](Graph& g, const Tensor& go) {
    Tensor& gx = g.grad_buffer(input);
    for (std::size_t c = 0; c < argmax.size(); ++c) gx[argmax[c]] += go[c];
  });
}

Var global_avg_pool(Graph& g, Var input) {
  const Tensor& x = g.value(input);
  const auto [channels, len] = channels_and_length(x, "global_avg_pool");
  Tensor out({channels});
  as_vector(out) = as_matrix(x, channels, len).rowwise().mean();
  return g.emit(std::move(out), {input}, [=](Graph& g, const Tensor& go) {
    auto gx = as_matrix(g.grad_buffer(input), channels, len);
    gx.colwise() += as_vector(go) / static_cast<Real>(len);
  });
}

Var pool_and_activate(Graph& g, Var input, const PoolSpec& spec) {
  switch (spec.kind) {
    case PoolKind::Relu: return relu(g, input);
    case PoolKind::MaxPool1d: return maxpool1d(g, input, spec.width, spec.stride);
    case PoolKind::GlobalMaxPool: return global_max_pool(g, input);
    case PoolKind::GlobalAvgPool: return global_avg_pool(g, input);
  }
  fail(ErrorKind::Config, "unknown pooling kind");
}

namespace {

Tensor softmax_values(const Tensor& z) {
  Tensor p(z.shape());
  Real m = z[0];
  for (std::size_t i = 1; i < z.size(); ++i) m = std::max(m, z[i]);
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = static_cast<Real>(std::exp(static_cast<double>(z[i] - m)));
    total += p[i];
  }
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = static_cast<Real>(p[i] / total);
  return p;
}

}  // namespace

Var softmax(Graph& g, Var logits) {
  const Tensor& z = g.value(logits);
  require_rank(z, 1, "softmax", "logits");
  Tensor p = softmax_values(z);
  Tensor saved = p;
  return g.emit(std::move(p), {logits}, [=, p = std::move(saved)](Graph& g, const Tensor& go) {
    double dot = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) dot += static_cast<double>(go[i]) * p[i];
    Tensor& gz = g.grad_buffer(logits);
    for (std::size_t i = 0; i < p.size(); ++i) gz[i] += static_cast<Real>(p[i] * (go[i] - dot));
  });
}

Var cross_entropy(Graph& g, Var probabilities, std::size_t true_class) {
  const Tensor& p = g.value(probabilities);
  require_rank(p, 1, "cross_entropy", "probabilities");
  if (true_class >= p.size()) {
    fail(ErrorKind::Label, "cross_entropy: class " + std::to_string(true_class) + " out of range for " +
                               std::to_string(p.size()) + " classes");
  }
  const double pc = static_cast<double>(p[true_class]) + kProbabilityFloor;
  return g.emit(Tensor::scalar(static_cast<Real>(-std::log(pc))), {probabilities},
                [=](Graph& g, const Tensor& go) {
                  g.grad_buffer(probabilities)[true_class] += static_cast<Real>(-go[0] / pc);
                });
}

Var softmax_cross_entropy(Graph& g, Var logits, std::size_t true_class) {
  const Tensor& z = g.value(logits);
  require_rank(z, 1, "softmax_cross_entropy", "logits");
  if (true_class >= z.size()) {
    fail(ErrorKind::Label, "softmax_cross_entropy: class " + std::to_string(true_class) +
                               " out of range for " + std::to_string(z.size()) + " classes");
  }
  Tensor p = softmax_values(z);
  const double loss = -std::log(static_cast<double>(p[true_class]) + kProbabilityFloor);
  return g.emit(Tensor::scalar(static_cast<Real>(loss)), {logits},
                [=, p = std::move(p)](Graph& g, const Tensor& go) {
                  Tensor& gz = g.grad_buffer(logits);
                  for (std::size_t i = 0; i < p.size(); ++i) {
                    const Real target = i == true_class ? Real(1) : Real(0);
                    gz[i] += go[0] * (p[i] - target);
                  }
                });
}

Var mae_loss(Graph& g, std::span<const Var> predicted, std::span<const double> truth) {
  if (predicted.empty()) fail(ErrorKind::EmptyBatch, "mae_loss: no predictions");
  if (predicted.size() != truth.size()) {
    fail(ErrorKind::Dimension, "mae_loss: " + std::to_string(predicted.size()) + " predictions vs " +
                                   std::to_string(truth.size()) + " targets");
  }
  const std::size_t n = predicted.size();
  double total = 0.0;
  std::vector<Real> signs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor& p = g.value(predicted[i]);
    require_scalar(p, "mae_loss");
    const double diff = static_cast<double>(p[0]) - truth[i];
    total += std::abs(diff);
    signs[i] = diff > 0 ? Real(1) : (diff < 0 ? Real(-1) : Real(0));
  }
  std::vector<Var> inputs(predicted.begin(), predicted.end());
  return g.emit(Tensor::scalar(static_cast<Real>(total / static_cast<double>(n))), inputs,
                [inputs, signs = std::move(signs), n](Graph& g, const Tensor& go) {
                  const Real step = go[0] / static_cast<Real>(n);
                  for (std::size_t i = 0; i < n; ++i) {
                    if (g.requires_grad(inputs[i])) g.grad_buffer(inputs[i])[0] += signs[i] * step;
                  }
                });
}

Var dropout(Graph& g, Var input, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) fail(ErrorKind::Config, "dropout: rate must lie in [0, 1)");
  if (!training || rate == 0.0) return input;
  const Tensor& x = g.value(input);
  const Real keep_scale = static_cast<Real>(1.0 / (1.0 - rate));
  Tensor mask(x.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = rng.uniform() < rate ? Real(0) : keep_scale;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * mask[i];
  return g.emit(std::move(out), {input}, [=, mask = std::move(mask)](Graph& g, const Tensor& go) {
    Tensor& gx = g.grad_buffer(input);
    for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += go[i] * mask[i];
  });
}

Var concat(Graph& g, std::span<const Var> parts) {
  if (parts.empty()) fail(ErrorKind::Dimension, "concat: no inputs");
  std::vector<std::size_t> sizes;
  std::vector<Real> values;
  for (Var v : parts) {
    const Tensor& t = g.value(v);
    require_rank(t, 1, "concat", "part");
    sizes.push_back(t.size());
    values.insert(values.end(), t.values().begin(), t.values().end());
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return g.emit(Tensor::vector(std::move(values)), inputs,
                [inputs, sizes = std::move(sizes)](Graph& g, const Tensor& go) {
                  std::size_t offset = 0;
                  for (std::size_t k = 0; k < inputs.size(); ++k) {
                    if (g.requires_grad(inputs[k])) {
                      Tensor& gx = g.grad_buffer(inputs[k]);
                      for (std::size_t i = 0; i < sizes[k]; ++i) gx[i] += go[offset + i];
                    }
                    offset += sizes[k];
                  }
                });
}

Var transpose(Graph& g, Var matrix) {
  const Tensor& x = g.value(matrix);
  require_rank(x, 2, "transpose", "input");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor out({cols, rows});
  as_matrix(out, cols, rows) = as_matrix(x, rows, cols).transpose();
  return g.emit(std::move(out), {matrix}, [=](Graph& g, const Tensor& go) {
    as_matrix(g.grad_buffer(matrix), rows, cols) += as_matrix(go, cols, rows).transpose();
  });
}

Var embedding(Graph& g, Var table, std::span<const std::uint32_t> tokens, std::size_t max_tokens) {
  const Tensor& e = g.value(table);
  require_rank(e, 2, "embedding", "table");
  if (max_tokens < 1) fail(ErrorKind::Config, "embedding: max_tokens must be >= 1");
  const std::size_t vocab = e.dim(0), d = e.dim(1);
  for (std::uint32_t tok : tokens) {
    if (tok >= vocab) {
      fail(ErrorKind::Vocabulary, "token index " + std::to_string(tok) + " >= vocabulary size " +
                                      std::to_string(vocab));
    }
  }
  const std::size_t used = std::min(tokens.size(), max_tokens);
  std::vector<std::uint32_t> kept(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(used));
  Tensor out({max_tokens, d});
  for (std::size_t i = 0; i < max_tokens; ++i) {
    const std::size_t row = i < used ? kept[i] : 0;
    std::copy_n(e.data() + row * d, d, out.data() + i * d);
  }
  return g.emit(std::move(out), {table}, [=, kept = std::move(kept)](Graph& g, const Tensor& go) {
    Tensor& ge = g.grad_buffer(table);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (kept[i] == 0) continue;
      Real* dst = ge.data() + static_cast<std::size_t>(kept[i]) * d;
      const Real* src = go.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

Var expectation(Graph& g, Var probabilities, std::span<const double> weights) {
  const Tensor& p = g.value(probabilities);
  if (p.rank() != 1 || p.size() != weights.size()) {
    fail(ErrorKind::Dimension, "expectation: probabilities " + to_string(p.shape()) + " vs " +
                                   std::to_string(weights.size()) + " weights");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += static_cast<double>(p[i]) * weights[i];
  std::vector<double> w(weights.begin(), weights.end());
  return g.emit(Tensor::scalar(static_cast<Real>(total)), {probabilities},
                [=, w = std::move(w)](Graph& g, const Tensor& go) {
                  Tensor& gp = g.grad_buffer(probabilities);
                  for (std::size_t i = 0; i < w.size(); ++i) gp[i] += static_cast<Real>(go[0] * w[i]);
                });
}

Var add(Graph& g, Var a, Var b) {
  const Tensor& x = g.value(a);
  const Tensor& y = g.value(b);
  if (x.shape() != y.shape()) {
    fail(ErrorKind::Dimension, "add: shapes " + to_string(x.shape()) + " and " + to_string(y.shape()));
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return g.emit(std::move(out), {a, b}, [=](Graph& g, const Tensor& go) {
    if (g.requires_grad(a)) as_vector(g.grad_buffer(a)) += as_vector(go);
    if (g.requires_grad(b)) as_vector(g.grad_buffer(b)) += as_vector(go);
  });
}

Var scale(Graph& g, Var a, double factor) {
  const Tensor& x = g.value(a);
  Tensor out(x.shape());
  const Real f = static_cast<Real>(factor);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * f;
  return g.emit(std::move(out), {a}, [=](Graph& g, const Tensor& go) {
    as_vector(g.grad_buffer(a)) += as_vector(go) * f;
  });
}

Var sum(Graph& g, Var a) {
  const Tensor& x = g.value(a);
  double total = 0.0;
  for (Real v : x.values()) total += v;
  return g.emit(Tensor::scalar(static_cast<Real>(total)), {a}, [=](Graph& g, const Tensor& go) {
    as_vector(g.grad_buffer(a)).array() += go[0];
  });
}

Var mean(Graph& g, std::span<const Var> scalars) {
  if (scalars.empty()) fail(ErrorKind::EmptyBatch, "mean: no inputs");
  double total = 0.0;
  for (Var v : scalars) {
    const Tensor& t = g.value(v);
    require_scalar(t, "mean");
    total += t[0];
  }
  const std::size_t n = scalars.size();
  std::vector<Var> inputs(scalars.begin(), scalars.end());
  return g.emit(Tensor::scalar(static_cast<Real>(total / static_cast<double>(n))), inputs,
                [inputs, n](Graph& g, const Tensor& go) {
                  const Real step = go[0] / static_cast<Real>(n);
                  for (Var v : inputs) {
                    if (g.requires_grad(v)) g.grad_buffer(v)[0] += step;
                  }
                });
}

Var inner(Graph& g, Var input, const Tensor& weights) {
  const Tensor& x = g.value(input);
  if (x.size() != weights.size()) {
    fail(ErrorKind::Dimension, "inner: input " + to_string(x.shape()) + " vs weights " + to_string(weights.shape()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += static_cast<double>(x[i]) * weights[i];
  return g.emit(Tensor::scalar(static_cast<Real>(total)), {input}, [=](Graph& g, const Tensor& go) {
    as_vector(g.grad_buffer(input)) += as_vector(weights) * go[0];
  });
}

WERPROBE_NAMESPACE_END
