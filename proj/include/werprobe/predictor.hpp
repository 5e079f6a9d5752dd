#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "werprobe/corpus.hpp"
#include "werprobe/graph.hpp"
#include "werprobe/parameters.hpp"

WERPROBE_NAMESPACE_BEGIN

enum class Layer { A1, A2, A3, B1, B2, B3, B4, C1, C2 };

inline constexpr std::array<Layer, 9> kAllLayers{Layer::A1, Layer::A2, Layer::A3, Layer::B1, Layer::B2,
                                                 Layer::B3, Layer::B4, Layer::C1, Layer::C2};

std::string_view to_string(Layer layer);
/// Throws Config listing the valid names.
Layer parse_layer(std::string_view text);
/// Comma-separated; the empty string yields every layer.
std::vector<Layer> parse_layer_list(std::string_view text);

struct LayerSpec {
  std::size_t a1 = 160, a2 = 32, a3 = 16;
  std::size_t b1 = 64, b2 = 64, b3 = 32, b4 = 16;
  std::size_t c1 = 32, c2 = 16;

  static LayerSpec reference_scale();
  /// Reference widths divided by 8, at least 16.
  static LayerSpec desk_scale();
  std::size_t width(Layer layer) const;
  void validate() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct WerVector {
  std::vector<double> centers;

  /// n centers lo, lo+step, ...
  static WerVector uniform(double lo, double step, std::size_t n);
  /// 0, 3, ..., 150.
  static WerVector standard() { return uniform(0.0, 3.0, 51); }
  void validate(double wer_max) const;

  friend bool operator==(const WerVector&, const WerVector&) = default;
};

struct TextEncoderConfig {
  std::size_t vocab_size = 512;
  std::size_t max_tokens = 64;
  std::size_t embed_dim = 32;
  std::vector<std::size_t> filter_widths{1, 2, 3, 4, 5};

  friend bool operator==(const TextEncoderConfig&, const TextEncoderConfig&) = default;
};

struct ConvStage {
  std::size_t channels = 8;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  /// Max-pool width (and stride) after the ReLU; 0 on the last stage means
  /// global average pooling.
  std::size_t pool = 0;

  friend bool operator==(const ConvStage&, const ConvStage&) = default;
};

struct SignalEncoderConfig {
  std::size_t input_len = 12000;
  std::vector<ConvStage> stages{{8, 32, 8, 4}, {16, 3, 1, 4}, {32, 3, 1, 4}, {64, 3, 1, 0}};

  friend bool operator==(const SignalEncoderConfig&, const SignalEncoderConfig&) = default;
};

struct TaskHead {
  Task task = Task::Style;
  /// Class labels in head-output order.
  std::vector<std::string> labels;

  std::size_t classes() const noexcept { return labels.size(); }
  /// Index of a label, or nullopt when the head does not know it.
  std::optional<std::size_t> index_of(std::string_view label) const;

  friend bool operator==(const TaskHead&, const TaskHead&) = default;
};

/// Which encoder branch, if any, is replaced by zeros before fusion.
enum class BranchAblation { None, Text, Signal };

std::string_view to_string(BranchAblation ablation);
BranchAblation parse_branch_ablation(std::string_view text);

struct ModelConfig {
  LayerSpec layers;
  TextEncoderConfig text;
  SignalEncoderConfig signal;
  WerVector wer_vector = WerVector::standard();
  std::vector<TaskHead> tasks;
  BranchAblation ablation = BranchAblation::None;
  std::uint64_t seed = 1;

  std::size_t filters_per_width() const;
  /// Throws Config on inconsistent widths or stage arithmetic.
  void validate() const;
  const TaskHead* head(Task task) const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Head for a task with labels taken from the corpus TRAIN split (sorted).
TaskHead make_task_head(const Corpus& corpus, Task task);

/// Desk-scale config matched to a corpus (vocabulary, input length) with
/// heads for the given tasks.
ModelConfig model_config_for(const Corpus& corpus, std::span<const Task> tasks, ModelConfig base = {});

/// Number of scalars the config's parameters hold.
std::size_t parameter_count(const ModelConfig& config);

class Model {
 public:
  /// Builds and initializes parameters from config.seed.
  explicit Model(ModelConfig config);
  /// Wraps existing parameters; names and shapes must match the config.
  Model(ModelConfig config, ParameterSet parameters);

  const ModelConfig& config() const noexcept { return config_; }
  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const { return params_.scalar_count(); }
  std::string digest() const { return params_.digest(); }

 private:
  ModelConfig config_;
  ParameterSet params_;
};

struct TextActivations {
  Var a1, a2, a3;
};

struct SignalActivations {
  Var b1, b2, b3, b4;
};

struct HeadOutputs {
  Var c1, c2;
  Var wer_logits;
  /// One entry per configured task, in config order.
  std::vector<Var> task_logits;
};

struct ForwardResult {
  TextActivations text;
  SignalActivations signal;
  HeadOutputs head;
  /// Expected WER under the softmax over wer_logits.
  Var wer;

  Var layer(Layer layer) const;
};

/// text_matrix: [max_tokens x embed_dim].
TextActivations text_encoder_forward(Graph& g, const Model& model, Var text_matrix);
/// signal: [1 x input_len].
SignalActivations signal_encoder_forward(Graph& g, const Model& model, Var signal);
HeadOutputs fuse_and_head(Graph& g, const Model& model, Var a3, Var b4);

/// Full forward pass on one utterance (signal padded or truncated to the
/// configured input length).
ForwardResult forward_utterance(Graph& g, const Model& model, const Utterance& utt);

double predict_wer(std::span<const double> logits, const WerVector& wer_vector);
Var predict_wer(Graph& g, Var logits, const WerVector& wer_vector);

struct LossWeights {
  double main = 1.0;
  double task = 0.3;
};

/// Per-task logits and gold class indices for a batch.
struct TaskBatch {
  std::vector<Var> logits;
  std::vector<std::size_t> labels;
};

/// main·MAE + task·Σ_tasks mean CE.
Var composite_loss(Graph& g, std::span<const Var> wer_pred, std::span<const double> wer_true,
                   std::span<const TaskBatch> tasks, const LossWeights& weights = {});

/// Scalar form of the same combination.
double combine_losses(double mae, std::span<const double> task_ce, const LossWeights& weights = {});

WERPROBE_NAMESPACE_END
