#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "werprobe/tensor.hpp"

WERPROBE_NAMESPACE_BEGIN

enum class Split { Train, Dev, Test };
enum class Style { NonSpontaneous, Spontaneous };
enum class Accent { Native, NonNative };
enum class Task { Show, Style, Accent };

inline constexpr std::array<Split, 3> kAllSplits{Split::Train, Split::Dev, Split::Test};
inline constexpr std::array<Task, 3> kAllTasks{Task::Show, Task::Style, Task::Accent};

std::string_view to_string(Split split);
std::string_view to_string(Style style);
std::string_view to_string(Accent accent);
std::string_view to_string(Task task);
Split parse_split(std::string_view text);
Style parse_style(std::string_view text);
Accent parse_accent(std::string_view text);
Task parse_task(std::string_view text);
/// Parses a comma-separated task list; the empty string yields no tasks.
std::vector<Task> parse_task_list(std::string_view text);

struct Utterance {
  std::string id;
  std::vector<std::uint32_t> tokens;
  std::vector<float> signal;
  double duration = 0.0;  // seconds; len(signal) / sample_rate
  double wer = 0.0;       // percent
  Style style = Style::NonSpontaneous;
  Accent accent = Accent::Native;
  std::string show;
  Split split = Split::Train;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

/// Label string of an utterance for a classification task.
std::string label_of(const Utterance& utt, Task task);

struct CorpusMetadata {
  std::uint64_t seed = 0;
  std::string config_digest;
  /// Canonical JSON of the generator configuration ("{}" when unknown).
  std::string generator_config = "{}";

  friend bool operator==(const CorpusMetadata&, const CorpusMetadata&) = default;
};

struct Corpus {
  std::vector<Utterance> utterances;
  /// index -> token; index 0 is the padding symbol.
  std::vector<std::string> vocabulary;
  std::uint32_t sample_rate = 2000;
  CorpusMetadata metadata;

  std::vector<std::size_t> indices(Split split) const;
  std::size_t count(Split split) const;
  /// Copy holding only the utterances at the given positions, in that order.
  Corpus subset(std::span<const std::size_t> positions) const;
  Corpus only(Split split) const;
  /// Throws Data on broken invariants (token range, unique ids, durations).
  void validate() const;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

struct FactorEffects {
  double tokens = 1.0;
  double signal = 1.0;
  double wer = 1.0;
};

struct GeneratorConfig {
  std::size_t n_train = 2000;
  std::size_t n_dev = 1500;
  std::size_t n_test = 1000;
  /// Shows present in TRAIN and DEV.
  std::size_t n_shows = 6;
  /// Additional shows that only occur in TEST.
  std::size_t n_test_shows = 2;
  std::size_t vocab_size = 512;
  std::uint32_t sample_rate = 2000;
  double max_duration_s = 6.0;
  std::array<double, 3> wer_means{22.29, 22.35, 31.20};
  double wer_max = 150.0;
  double wer_noise_std = 5.0;
  FactorEffects style;
  FactorEffects accent;
  FactorEffects show;
  std::array<double, 3> spontaneous_fraction{0.25, 0.25, 0.55};
  std::array<double, 3> non_native_fraction{0.35, 0.35, 0.22};
  /// Relative frequency of each TRAIN/DEV show; size n_shows.
  std::vector<double> show_weights{0.14, 0.03, 0.10, 0.30, 0.28, 0.15};
  std::uint64_t seed = 7;

  void validate() const;
  /// Same config with every planted effect set to zero.
  GeneratorConfig without_effects() const;
  std::size_t input_length() const;
};

/// Names of the TRAIN/DEV shows followed by the TEST-only shows.
std::vector<std::string> show_names(const GeneratorConfig& config);

Corpus generate_synthetic_corpus(const GeneratorConfig& config);

/// Zero-pads or truncates at the end.
std::vector<float> pad_or_truncate_signal(std::span<const float> signal, std::size_t target_len);

/// Embedding rows for each token, padding rows beyond the sequence, shape
/// [max_tokens x d].
Tensor encode_text(std::span<const std::uint32_t> tokens, const Tensor& embeddings, std::size_t max_tokens);

struct BalanceSpec {
  Task task = Task::Style;
  /// Labels dropped entirely; unset means the task default (the show with the
  /// fewest TRAIN utterances for SHOW, nothing otherwise).
  std::optional<std::set<std::string>> excluded_labels;
  std::uint64_t seed = 0;
};

std::set<std::string> default_excluded_labels(const Corpus& corpus, Task task);

/// Downsamples each retained label within each requested split to the
/// smallest retained-label count of that split.
Corpus balance_for_task(const Corpus& corpus, const BalanceSpec& spec, std::span<const Split> splits);

/// label -> count for one split and task.
std::map<std::string, std::size_t> label_counts(const Corpus& corpus, Task task, Split split);

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

WERPROBE_NAMESPACE_END
