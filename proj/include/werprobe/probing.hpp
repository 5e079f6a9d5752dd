#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "werprobe/analysis.hpp"
#include "werprobe/corpus.hpp"
#include "werprobe/graph.hpp"
#include "werprobe/optim.hpp"
#include "werprobe/predictor.hpp"

WERPROBE_NAMESPACE_BEGIN

/// Frozen per-utterance representations from one layer.
struct ActivationSet {
  Layer layer = Layer::C2;
  std::size_t dim = 0;
  /// rows() x dim, row-major.
  std::vector<Real> values;
  std::vector<std::string> labels;
  std::vector<std::string> ids;
  std::string source_model_digest;

  std::size_t rows() const noexcept { return ids.size(); }
  std::span<const Real> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  void validate() const;
};

/// One inference pass per utterance; returns one set per requested layer,
/// labelled for the given task.
std::vector<ActivationSet> extract_activations(const Model& model, const Corpus& corpus, std::span<const Layer> layers,
                                               Task task);
ActivationSet extract_activations(const Model& model, const Corpus& corpus, Layer layer, Task task);

/// Activations as doubles (for t-SNE).
PointMatrix to_points(const ActivationSet& set);

void save_activations(const ActivationSet& set, const std::filesystem::path& dir);
ActivationSet load_activations(const std::filesystem::path& dir);

struct ProbeConfig {
  std::size_t hidden_size = 128;
  double dropout_rate = 0.5;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  AdamConfig adam;
  std::uint64_t seed = 1;

  void validate() const;
};

/// dense(in -> hidden) -> dropout -> ReLU -> dense(hidden -> K) -> softmax.
class Probe {
 public:
  Probe(std::size_t input_dim, std::vector<std::string> labels, const ProbeConfig& config);

  std::size_t input_dim() const noexcept { return input_dim_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const ProbeConfig& config() const noexcept { return config_; }
  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const { return params_.scalar_count(); }

  /// Logits (pre-softmax) for one input row.
  Var logits(Graph& g, Var input, bool training, Rng& rng) const;
  std::vector<double> probabilities(std::span<const Real> row) const;
  std::size_t predict(std::span<const Real> row) const;
  std::optional<std::size_t> label_index(const std::string& label) const;

 private:
  std::size_t input_dim_;
  std::vector<std::string> labels_;
  ProbeConfig config_;
  ParameterSet params_;
};

Probe build_probe(std::size_t input_dim, std::vector<std::string> labels, const ProbeConfig& config);

/// Fraction of rows the probe labels correctly; unknown labels count wrong.
double probe_accuracy(const Probe& probe, const ActivationSet& set);
ConfusionMatrix probe_confusion(const Probe& probe, const ActivationSet& set);

struct ProbeCell {
  Task task = Task::Style;
  Layer layer = Layer::C2;
  std::size_t dim = 0;
  double dev_accuracy = 0.0;
  std::optional<double> test_accuracy;
  std::size_t n_train = 0, n_dev = 0, n_test = 0;
  ConfusionMatrix dev_confusion;
};

struct ProbeTable {
  std::vector<Task> tasks;
  std::vector<Layer> layers;
  std::vector<ProbeCell> cells;  // task-major
  std::string model_digest;

  const ProbeCell& cell(Task task, Layer layer) const;
  /// Rows per layer with DEV/TEST columns per task, followed by the chance row.
  std::string to_csv() const;
  /// Same layout with DEV||TEST cells, for terminals and reports.
  std::string to_text() const;
};

/// Chance accuracy on a balanced set with n_classes labels.
double chance_accuracy(std::size_t n_classes);

struct ProbeSuiteOptions {
  ProbeConfig probe;
  std::uint64_t balance_seed = 11;
};

ProbeTable run_probe_suite(const Model& model, const Corpus& corpus, std::span<const Task> tasks,
                           std::span<const Layer> layers, const ProbeSuiteOptions& options = {});

WERPROBE_NAMESPACE_END
