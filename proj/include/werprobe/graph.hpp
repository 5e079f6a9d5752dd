#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include "werprobe/parameters.hpp"
#include "werprobe/rng.hpp"
#include "werprobe/tensor.hpp"

WERPROBE_NAMESPACE_BEGIN

/// Handle to a node of a Graph.
struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
  bool valid() const noexcept { return id != std::numeric_limits<std::size_t>::max(); }
};

/// Reverse-mode tape. Operations append nodes in evaluation order; backward()
/// walks them in reverse. A graph constructed with gradients disabled records
/// values only and is the inference path.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& output_grad)>;

  explicit Graph(bool record_gradients = true) : record_gradients_(record_gradients) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  bool records_gradients() const noexcept { return record_gradients_; }

  Var constant(Tensor value);
  /// Binds a parameter as a differentiable leaf. Binding the same parameter
  /// twice returns the same node.
  Var parameter(const Parameter& param);

  const Tensor& value(Var v) const;
  /// Gradient accumulated by backward(); empty when the node was unreached.
  const Tensor& gradient(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Populates gradients of every node reachable from a scalar loss.
  void backward(Var loss);

  /// Copies d(loss)/d(param) into each parameter's gradient; parameters that
  /// were never bound (or never reached) receive zeros.
  void write_gradients(ParameterSet& params) const;

  // Operation-implementer interface.
  Var emit(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var emit(Tensor value, std::span<const Var> inputs, BackwardFn backward);
  /// Accumulation buffer for a node's gradient, zero-initialized on first use.
  Tensor& grad_buffer(Var v);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  const Node& node(Var v) const;

  bool record_gradients_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> bound_;
};

// ---------------------------------------------------------------------------
// Differentiable operations. Shapes follow the conventions:
//   vectors [n], matrices [rows x cols], channel-major sequences [C x L].

/// output[j] = sum_i weight[j,i] * input[i] + bias[j].
Var dense(Graph& g, Var input, Var weight, Var bias);

/// Valid cross-correlation: input [c_in x L], kernels [c_out x c_in x k],
/// bias [c_out], output [c_out x ((L-k)/stride + 1)].
Var conv1d(Graph& g, Var input, Var kernels, Var bias, std::size_t stride);

Var relu(Graph& g, Var input);

/// Windowed max along the last axis of a [L] or [C x L] input. Gradient is
/// routed to the first maximal element of each window.
Var maxpool1d(Graph& g, Var input, std::size_t width, std::size_t stride);

/// [C x L] -> [C]; a rank-1 [L] input is treated as a single channel.
Var global_max_pool(Graph& g, Var input);
Var global_avg_pool(Graph& g, Var input);

enum class PoolKind { Relu, MaxPool1d, GlobalMaxPool, GlobalAvgPool };

struct PoolSpec {
  PoolKind kind = PoolKind::Relu;
  std::size_t width = 0;
  std::size_t stride = 0;
};

Var pool_and_activate(Graph& g, Var input, const PoolSpec& spec);

/// Numerically stable softmax of a rank-1 tensor.
Var softmax(Graph& g, Var logits);

inline constexpr double kProbabilityFloor = 1e-12;

/// -ln(p[true_class] + 1e-12) for a probability vector.
Var cross_entropy(Graph& g, Var probabilities, std::size_t true_class);

/// Fused softmax + cross-entropy on logits; gradient is (p - onehot).
Var softmax_cross_entropy(Graph& g, Var logits, std::size_t true_class);

/// Mean absolute error over scalar predictions; subgradient 0 at a tie.
Var mae_loss(Graph& g, std::span<const Var> predicted, std::span<const double> truth);

/// Inverted dropout. Returns the input unchanged when not training or when
/// rate == 0.
Var dropout(Graph& g, Var input, double rate, bool training, Rng& rng);

/// Concatenation of rank-1 tensors.
Var concat(Graph& g, std::span<const Var> parts);
Var transpose(Graph& g, Var matrix);

/// Lookup of token rows into [max_tokens x d]. Rows past the sequence use
/// row 0 (padding); row 0 never receives gradient.
Var embedding(Graph& g, Var table, std::span<const std::uint32_t> tokens, std::size_t max_tokens);

/// sum_k probabilities[k] * weights[k] for a constant weight vector.
Var expectation(Graph& g, Var probabilities, std::span<const double> weights);

Var add(Graph& g, Var a, Var b);
Var scale(Graph& g, Var a, double factor);
Var sum(Graph& g, Var a);
/// Mean of scalar nodes.
Var mean(Graph& g, std::span<const Var> scalars);
/// sum_i input[i] * weights[i]; weights are constant and must match in size.
Var inner(Graph& g, Var input, const Tensor& weights);

WERPROBE_NAMESPACE_END
