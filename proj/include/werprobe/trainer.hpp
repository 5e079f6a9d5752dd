#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "werprobe/analysis.hpp"
#include "werprobe/corpus.hpp"
#include "werprobe/optim.hpp"
#include "werprobe/predictor.hpp"
#include "werprobe/probing.hpp"

WERPROBE_NAMESPACE_BEGIN

enum class OptimizerKind { Adam, Adadelta };
enum class SelectionMetric { DevMae, DevAccuracy };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view text);
std::string_view to_string(SelectionMetric metric);
SelectionMetric parse_selection_metric(std::string_view text);

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  OptimizerKind optimizer = OptimizerKind::Adadelta;
  AdamConfig adam;
  AdadeltaConfig adadelta;
  SelectionMetric selection = SelectionMetric::DevMae;
  LossWeights weights;
  std::uint64_t seed = 1;
  bool shuffle = true;

  void validate() const;
};

/// One epoch of a TrainLog. Metrics that do not apply are NaN.
struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_mae = 0.0;
  double dev_kendall = 0.0;
  double dev_acc_show = 0.0;
  double dev_acc_style = 0.0;
  double dev_acc_accent = 0.0;
  bool selected = false;

  double dev_accuracy(Task task) const;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;

  const EpochRecord& selected() const;
  std::string to_csv() const;
  static TrainLog from_csv(const std::string& text);
};

struct TaskMetrics {
  double accuracy = 0.0;
  /// Utterances whose label the head knows (unseen shows are skipped).
  std::size_t evaluated = 0;
  ConfusionMatrix confusion;
};

struct MetricsReport {
  Split split = Split::Dev;
  std::size_t count = 0;
  double mae = 0.0;
  /// NaN when undefined (all predictions or truths tied).
  double kendall = 0.0;
  std::map<Task, TaskMetrics> tasks;
  PredictionSet predictions;
};

/// Inference over one split of the corpus.
MetricsReport evaluate_model(const Model& model, const Corpus& corpus, Split split);

/// Observer called after every optimizer step (1-based step count).
using StepObserver = std::function<void(std::size_t step, const Model& model, double batch_loss)>;

struct TrainResult {
  Model model;  // parameters of the selected epoch
  TrainLog log;
};

/// Minimizes the composite loss over the TRAIN split for the tasks the
/// model has heads for; selects the epoch by DEV metric. Never reads TEST.
TrainResult train_prediction_model(const Model& initial, const Corpus& corpus, const TrainConfig& config,
                                   const StepObserver& observer = {});

struct ProbeTrainResult {
  Probe probe;  // selected epoch
  TrainLog log;
  double dev_accuracy = 0.0;
};

/// Trains a probe with Adam on cross-entropy, keeping the best DEV epoch.
/// Accuracies are logged in the column of the given task.
ProbeTrainResult train_probe(const ActivationSet& train, const ActivationSet& dev, const ProbeConfig& config,
                             Task task = Task::Style);

struct Checkpoint {
  Model model;
  TrainLog log;
  std::uint64_t train_seed = 0;
};

std::string checkpoint_bytes(const Model& model, const TrainLog& log, std::uint64_t train_seed);
Checkpoint parse_checkpoint(const std::string& bytes);
void save_checkpoint(const Model& model, const TrainLog& log, std::uint64_t train_seed,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint16_t kCheckpointVersion = 1;

WERPROBE_NAMESPACE_END
