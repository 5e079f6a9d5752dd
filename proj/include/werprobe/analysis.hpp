#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "werprobe/corpus.hpp"

WERPROBE_NAMESPACE_BEGIN

/// Kendall tau-b by exhaustive pair enumeration. Throws
/// UndefinedCorrelation when every pair is tied on x or on y.
double kendall_tau(std::span<const double> x, std::span<const double> y);

double mean_absolute_error(std::span<const double> predicted, std::span<const double> truth);

struct ConfusionMatrix {
  std::vector<std::string> labels;
  /// counts[true][predicted].
  std::vector<std::vector<std::size_t>> counts;

  std::size_t total() const;
  std::size_t row_total(std::size_t row) const;
  double accuracy() const;
  /// Each row divided by its total; all-zero rows stay zero.
  std::vector<std::vector<double>> row_normalized() const;
  std::string to_csv() const;
};

ConfusionMatrix confusion_matrix(std::span<const std::string> truths, std::span<const std::string> predictions,
                                 std::vector<std::string> labels);

/// Row-major matrix of doubles.
struct PointMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
};

struct TsneConfig {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  std::size_t exaggeration_iterations = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  std::size_t momentum_switch = 250;
  /// Center the input and divide by its largest absolute value.
  bool normalize_input = true;
  std::uint64_t seed = 1;
};

struct TsneResult {
  PointMatrix embedding;  // N x 2
  double perplexity = 0.0;  // value actually used
  double kl_initial = 0.0;
  double kl_final = 0.0;
};

/// Perplexity after the small-N reduction: min(p, (N-1)/3).
double effective_perplexity(double perplexity, std::size_t n);

/// Row-conditional Gaussian affinities p(j|i), each row tuned to the target
/// perplexity by bisection on the precision.
PointMatrix conditional_probabilities(const PointMatrix& points, double perplexity);

TsneResult tsne_project(const PointMatrix& points, const TsneConfig& config);

/// Mean silhouette coefficient under Euclidean distance.
double silhouette_score(const PointMatrix& points, std::span<const std::size_t> labels);

/// Utterances with lo <= duration < hi, in corpus order.
Corpus duration_bucket(const Corpus& corpus, double lo_s, double hi_s);

/// Parses "LO..HI" (HI may be "inf").
std::pair<double, double> parse_bucket(std::string_view text);

struct PredictionRow {
  std::string id;
  Split split = Split::Dev;
  double wer_true = 0.0;
  double wer_pred = 0.0;

  friend bool operator==(const PredictionRow&, const PredictionRow&) = default;
};

using PredictionSet = std::vector<PredictionRow>;

std::string prediction_csv(const PredictionSet& rows);
PredictionSet parse_prediction_csv(const std::string& text, const std::string& what);

/// Per-utterance mean over systems whose rows share ids in the same order.
PredictionSet combine_predictions(std::span<const PredictionSet> systems);

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  std::string label;
};

std::string scatter_svg(std::span<const ScatterPoint> points, const std::string& title);
std::string heatmap_svg(const ConfusionMatrix& matrix, const std::string& title);

WERPROBE_NAMESPACE_END
