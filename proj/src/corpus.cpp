#include "werprobe/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "json_util.hpp"
#include "werprobe/digest.hpp"
#include "werprobe/error.hpp"
#include "werprobe/json_config.hpp"
#include "werprobe/rng.hpp"

WERPROBE_NAMESPACE_BEGIN

// ---------------------------------------------------------------------------
// Enumerations

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "TRAIN";
    case Split::Dev: return "DEV";
    case Split::Test: return "TEST";
  }
  return "?";
}

std::string_view to_string(Style style) {
  return style == Style::Spontaneous ? "Spontaneous" : "NonSpontaneous";
}

std::string_view to_string(Accent accent) { return accent == Accent::NonNative ? "NonNative" : "Native"; }

std::string_view to_string(Task task) {
  switch (task) {
    case Task::Show: return "SHOW";
    case Task::Style: return "STYLE";
    case Task::Accent: return "ACCENT";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  for (Split s : kAllSplits) {
    if (text == to_string(s)) return s;
  }
  fail(ErrorKind::Parse, "unknown split '" + std::string(text) + "'");
}

Style parse_style(std::string_view text) {
  if (text == "Spontaneous") return Style::Spontaneous;
  if (text == "NonSpontaneous") return Style::NonSpontaneous;
  fail(ErrorKind::Parse, "unknown style '" + std::string(text) + "'");
}

Accent parse_accent(std::string_view text) {
  if (text == "Native") return Accent::Native;
  if (text == "NonNative") return Accent::NonNative;
  fail(ErrorKind::Parse, "unknown accent '" + std::string(text) + "'");
}

Task parse_task(std::string_view text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  for (Task t : kAllTasks) {
    if (upper == to_string(t)) return t;
  }
  fail(ErrorKind::Config, "unknown task '" + std::string(text) + "' (expected SHOW, STYLE or ACCENT)");
}

std::vector<Task> parse_task_list(std::string_view text) {
  std::vector<Task> tasks;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    const std::string_view item = text.substr(start, comma - start);
    if (!item.empty()) {
      const Task t = parse_task(item);
      if (std::find(tasks.begin(), tasks.end(), t) != tasks.end()) {
        fail(ErrorKind::Config, "task '" + std::string(item) + "' listed twice");
      }
      tasks.push_back(t);
    }
    start = comma + 1;
  }
  return tasks;
}

std::string label_of(const Utterance& utt, Task task) {
  switch (task) {
    case Task::Show: return utt.show;
    case Task::Style: return std::string(to_string(utt.style));
    case Task::Accent: return std::string(to_string(utt.accent));
  }
  return {};
}

// ---------------------------------------------------------------------------
// Corpus

std::vector<std::size_t> Corpus::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    if (utterances[i].split == split) out.push_back(i);
  }
  return out;
}

std::size_t Corpus::count(Split split) const {
  return static_cast<std::size_t>(
      std::count_if(utterances.begin(), utterances.end(), [&](const Utterance& u) { return u.split == split; }));
}

Corpus Corpus::subset(std::span<const std::size_t> positions) const {
  Corpus out;
  out.vocabulary = vocabulary;
  out.sample_rate = sample_rate;
  out.metadata = metadata;
  out.utterances.reserve(positions.size());
  for (std::size_t i : positions) out.utterances.push_back(utterances.at(i));
  return out;
}

Corpus Corpus::only(Split split) const {
  const auto idx = indices(split);
  return subset(idx);
}

void Corpus::validate() const {
  if (vocabulary.empty()) fail(ErrorKind::Data, "corpus vocabulary is empty");
  if (sample_rate == 0) fail(ErrorKind::Data, "corpus sample_rate is zero");
  std::unordered_set<std::string> ids;
  for (const Utterance& u : utterances) {
    if (!ids.insert(u.id).second) fail(ErrorKind::Data, "duplicate utterance id '" + u.id + "'");
    if (u.tokens.empty()) fail(ErrorKind::Data, "utterance '" + u.id + "' has no tokens");
    for (std::uint32_t t : u.tokens) {
      if (t >= vocabulary.size()) {
        fail(ErrorKind::Vocabulary, "utterance '" + u.id + "' token " + std::to_string(t) +
                                        " >= vocabulary size " + std::to_string(vocabulary.size()));
      }
    }
    const double expected = static_cast<double>(u.signal.size()) / sample_rate;
    if (std::abs(expected - u.duration) > 0.5 / sample_rate) {
      fail(ErrorKind::Data, "utterance '" + u.id + "' duration disagrees with its signal length");
    }
    if (!(u.wer >= 0.0)) fail(ErrorKind::Data, "utterance '" + u.id + "' has negative WER");
  }
}

// ---------------------------------------------------------------------------
// Generator

void GeneratorConfig::validate() const {
  if (n_train == 0 || n_dev == 0 || n_test == 0) fail(ErrorKind::Config, "generator: split counts must be > 0");
  if (n_shows < 2) fail(ErrorKind::Config, "generator: need at least 2 shows");
  if (n_test_shows < 1) fail(ErrorKind::Config, "generator: need at least 1 TEST-only show");
  if (show_weights.size() != n_shows) {
    fail(ErrorKind::Config, "generator: show_weights has " + std::to_string(show_weights.size()) +
                                " entries for " + std::to_string(n_shows) + " shows");
  }
  for (double w : show_weights) {
    if (!(w > 0)) fail(ErrorKind::Config, "generator: show weights must be positive");
  }
  if (sample_rate < 100) fail(ErrorKind::Config, "generator: sample_rate must be >= 100 Hz");
  if (!(max_duration_s > 0.5)) fail(ErrorKind::Config, "generator: max_duration_s must exceed 0.5");
  if (!(wer_max > 0)) fail(ErrorKind::Config, "generator: wer_max must be positive");
  for (double m : wer_means) {
    if (!(m >= 0 && m <= wer_max)) fail(ErrorKind::Config, "generator: wer_means must lie in [0, wer_max]");
  }
  for (double f : spontaneous_fraction) {
    if (!(f > 0 && f < 1)) fail(ErrorKind::Config, "generator: spontaneous_fraction must lie in (0, 1)");
  }
  for (double f : non_native_fraction) {
    if (!(f > 0 && f < 1)) fail(ErrorKind::Config, "generator: non_native_fraction must lie in (0, 1)");
  }
  if (!(wer_noise_std >= 0)) fail(ErrorKind::Config, "generator: wer_noise_std must be >= 0");
  for (const FactorEffects* e : {&style, &accent, &show}) {
    if (!(e->tokens >= 0 && e->signal >= 0 && e->wer >= 0)) {
      fail(ErrorKind::Config, "generator: effect sizes must be >= 0");
    }
  }
  const std::size_t minimum_vocab = 1 + 4 + 40 + 24 * (n_shows + n_test_shows) + 50;
  if (vocab_size < minimum_vocab) {
    fail(ErrorKind::Config, "generator: vocab_size must be >= " + std::to_string(minimum_vocab));
  }
}

GeneratorConfig GeneratorConfig::without_effects() const {
  GeneratorConfig c = *this;
  c.style = c.accent = c.show = FactorEffects{0.0, 0.0, 0.0};
  return c;
}

std::size_t GeneratorConfig::input_length() const {
  return static_cast<std::size_t>(std::llround(sample_rate * max_duration_s));
}

std::vector<std::string> show_names(const GeneratorConfig& config) {
  static const std::array<const char*, 6> kSeen{"debate-a", "debate-b", "politics",
                                                "news-intl", "news-local", "phone-in"};
  static const std::array<const char*, 2> kUnseen{"magazine", "sport"};
  std::vector<std::string> names;
  for (std::size_t k = 0; k < config.n_shows; ++k) {
    names.push_back(k < kSeen.size() && config.n_shows == kSeen.size() ? kSeen[k] : "show-" + std::to_string(k));
  }
  for (std::size_t k = 0; k < config.n_test_shows; ++k) {
    names.push_back(k < kUnseen.size() ? kUnseen[k] : "unseen-" + std::to_string(k));
  }
  return names;
}

namespace {

constexpr std::uint32_t kFillerBegin = 1;
constexpr std::uint32_t kFillerCount = 4;
constexpr std::uint32_t kConfusionBegin = kFillerBegin + kFillerCount;
constexpr std::uint32_t kConfusionCount = 40;
constexpr std::uint32_t kTopicBegin = kConfusionBegin + kConfusionCount;
constexpr std::uint32_t kTopicSize = 24;

// Planted-factor magnitudes at effect size 1.
constexpr double kSpontaneousLengthShrink = 0.3;
constexpr double kBaseFillerRate = 0.03;
constexpr double kSpontaneousFillerRate = 0.25;
constexpr double kTopicRate = 0.30;
constexpr double kNonNativeSubstitution = 0.3;
constexpr double kNonNativePitchShift = 0.35;
constexpr double kNonNativeHarmonic = 0.35;
constexpr double kSpontaneousRateGain = 0.45;
constexpr double kSpontaneousPauseRate = 0.8;
constexpr double kSpontaneousWer = 16.0;
constexpr double kNonNativeWer = 14.0;

double show_wer_offset(std::size_t k, std::size_t n_seen) {
  static const std::array<double, 6> kSeen{6.0, 9.0, 0.0, -10.0, -5.0, 18.0};
  static const std::array<double, 2> kUnseen{10.0, 6.0};
  if (k < n_seen) return n_seen == kSeen.size() ? kSeen[k] : static_cast<double>((k * 7) % 11) - 5.0;
  const std::size_t u = k - n_seen;
  return u < kUnseen.size() ? kUnseen[u] : 2.0 * static_cast<double>(u % 5);
}

double show_pitch_offset(std::size_t k, std::size_t n_seen) {
  static const std::array<double, 6> kSeen{-50.0, -25.0, 0.0, 25.0, 50.0, 80.0};
  static const std::array<double, 2> kUnseen{-12.0, 18.0};
  if (k < n_seen) return n_seen == kSeen.size() ? kSeen[k] : -35.0 + 15.0 * static_cast<double>(k % 7);
  const std::size_t u = k - n_seen;
  return u < kUnseen.size() ? kUnseen[u] : -10.0 + 8.0 * static_cast<double>(u % 4);
}

double show_noise(std::size_t k, std::size_t n_seen) {
  static const std::array<double, 6> kSeen{0.0, 0.08, 0.0, 0.08, 0.03, 0.12};
  if (k < n_seen) return n_seen == kSeen.size() ? kSeen[k] : 0.005 * static_cast<double>(k % 4);
  return 0.02 + 0.01 * static_cast<double>((k - n_seen) % 2);
}

// Moving-average width of the show's channel, 1 meaning unfiltered.
std::size_t show_channel_width(std::size_t k, std::size_t n_seen) {
  static const std::array<std::size_t, 6> kSeen{1, 1, 2, 3, 4, 6};
  static const std::array<std::size_t, 2> kUnseen{2, 1};
  if (k < n_seen) return n_seen == kSeen.size() ? kSeen[k] : 1 + k % 3;
  const std::size_t u = k - n_seen;
  return u < kUnseen.size() ? kUnseen[u] : 1 + u % 2;
}

double hashed_fraction(std::uint64_t value, std::uint64_t salt) {
  return static_cast<double>(mix_seed(value, salt) >> 11) * 0x1.0p-53;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

struct VocabLayout {
  std::uint32_t n_topic_blocks;
  std::uint32_t common_begin;
  std::uint32_t common_count;
  std::vector<double> common_cdf;
};

VocabLayout make_layout(const GeneratorConfig& c) {
  VocabLayout v;
  v.n_topic_blocks = static_cast<std::uint32_t>(c.n_shows + c.n_test_shows);
  v.common_begin = kTopicBegin + kTopicSize * v.n_topic_blocks;
  v.common_count = static_cast<std::uint32_t>(c.vocab_size) - v.common_begin;
  double total = 0.0;
  for (std::uint32_t r = 0; r < v.common_count; ++r) {
    total += 1.0 / (r + 1.0);
    v.common_cdf.push_back(total);
  }
  for (double& x : v.common_cdf) x /= total;
  return v;
}

std::vector<std::string> make_vocabulary(const GeneratorConfig& c, const VocabLayout& layout) {
  std::vector<std::string> vocab(c.vocab_size);
  vocab[0] = "<pad>";
  for (std::uint32_t i = 0; i < kFillerCount; ++i) vocab[kFillerBegin + i] = "<filler" + std::to_string(i) + ">";
  for (std::uint32_t i = 0; i < kConfusionCount; ++i) vocab[kConfusionBegin + i] = "conf" + std::to_string(i);
  const auto shows = show_names(c);
  for (std::uint32_t b = 0; b < layout.n_topic_blocks; ++b) {
    for (std::uint32_t i = 0; i < kTopicSize; ++i) {
      vocab[kTopicBegin + b * kTopicSize + i] = shows[b] + ":t" + std::to_string(i);
    }
  }
  for (std::uint32_t i = 0; i < layout.common_count; ++i) vocab[layout.common_begin + i] = "w" + std::to_string(i);
  return vocab;
}

std::size_t sample_categorical(Rng& rng, std::span<const double> weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return weights.size() - 1;
}

struct Draft {
  Utterance utt;
  std::size_t show_index = 0;
  double raw_wer = 0.0;
};

Draft draft_utterance(const GeneratorConfig& c, const VocabLayout& layout, const std::vector<std::string>& shows,
                      Split split, std::size_t ordinal, Rng rng) {
  const std::size_t si = static_cast<std::size_t>(split);
  const bool spont = rng.bernoulli(c.spontaneous_fraction[si]);
  const bool non_native = rng.bernoulli(c.non_native_fraction[si]);
  std::size_t show = 0;
  if (split == Split::Test) {
    show = c.n_shows + static_cast<std::size_t>(rng.below(c.n_test_shows));
  } else {
    show = sample_categorical(rng, c.show_weights);
  }

  // Token sequence.
  double length_factor = 1.0;
  if (spont) length_factor = std::max(0.2, 1.0 - kSpontaneousLengthShrink * c.style.tokens);
  const auto target_tokens =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(rng.uniform(6.0, 34.0) * length_factor)));
  const double p_filler = clamp01(kBaseFillerRate + (spont ? kSpontaneousFillerRate * c.style.tokens : 0.0));
  const double p_own_topic = clamp01(c.show.tokens);
  const double p_substitute = non_native ? clamp01(kNonNativeSubstitution * c.accent.tokens) : 0.0;

  std::vector<std::uint32_t> tokens;
  for (std::size_t i = 0; i < target_tokens; ++i) {
    std::uint32_t tok;
    if (rng.bernoulli(p_filler)) {
      tok = kFillerBegin + static_cast<std::uint32_t>(rng.below(kFillerCount));
    } else {
      if (rng.bernoulli(kTopicRate)) {
        const std::size_t block = rng.bernoulli(p_own_topic) ? show : static_cast<std::size_t>(rng.below(layout.n_topic_blocks));
        tok = kTopicBegin + static_cast<std::uint32_t>(block) * kTopicSize +
              static_cast<std::uint32_t>(rng.below(kTopicSize));
      } else {
        const double u = rng.uniform();
        const auto it = std::upper_bound(layout.common_cdf.begin(), layout.common_cdf.end(), u);
        const auto r = static_cast<std::uint32_t>(
            std::min<std::ptrdiff_t>(it - layout.common_cdf.begin(), layout.common_count - 1));
        tok = layout.common_begin + r;
      }
      if (rng.bernoulli(p_substitute)) {
        tok = kConfusionBegin + static_cast<std::uint32_t>(rng.below(kConfusionCount));
      }
    }
    tokens.push_back(tok);
  }

  // Signal: one tone burst per token over a speaker/show dependent carrier.
  const double sr = c.sample_rate;
  const std::size_t max_samples = c.input_length();
  const double pitch = (150.0 + c.show.signal * show_pitch_offset(show, c.n_shows)) * rng.uniform(0.9, 1.1) *
                       (non_native ? 1.0 + kNonNativePitchShift * c.accent.signal : 1.0);
  const double noise_level = rng.uniform(0.01, 0.05) + c.show.signal * show_noise(show, c.n_shows);
  const double rate = spont ? std::max(0.5, 1.0 - kSpontaneousRateGain * c.style.signal) : 1.0;
  const double pause_prob = spont ? clamp01(kSpontaneousPauseRate * c.style.signal) : 0.0;
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double harmonic = kNonNativeHarmonic * c.accent.signal;

  std::vector<float> signal;
  std::size_t kept_tokens = 0;
  for (std::uint32_t tok : tokens) {
    const bool filler = tok >= kFillerBegin && tok < kFillerBegin + kFillerCount;
    const double dur = filler ? 0.3 : (0.12 + 0.1 * hashed_fraction(tok, 1)) * rate;
    const double pause = 0.03 + (rng.bernoulli(pause_prob) ? 0.25 : 0.0);
    const auto n_burst = static_cast<std::size_t>(dur * sr);
    const auto n_pause = static_cast<std::size_t>(pause * sr);
    if (signal.size() + n_burst > max_samples) break;
    const double tone = 250.0 + 600.0 * hashed_fraction(tok, 2);
    for (std::size_t n = 0; n < n_burst; ++n) {
      const double t = n / sr;
      const double env = std::pow(std::sin(std::numbers::pi * n / static_cast<double>(n_burst)), 2);
      double s = 0.6 * std::sin(2.0 * std::numbers::pi * pitch * (filler ? 0.9 : 1.0) * t + phase);
      if (!filler) s += 0.4 * std::sin(2.0 * std::numbers::pi * tone * t);
      if (non_native) s += harmonic * std::sin(4.0 * std::numbers::pi * pitch * t + 2.0 * phase);
      signal.push_back(static_cast<float>(env * s));
    }
    signal.resize(std::min(signal.size() + n_pause, max_samples), 0.0f);
    ++kept_tokens;
  }
  if (kept_tokens == 0) {
    kept_tokens = 1;
    signal.assign(std::min<std::size_t>(static_cast<std::size_t>(0.2 * sr), max_samples), 0.0f);
  }
  tokens.resize(kept_tokens);
  for (float& s : signal) s += static_cast<float>(rng.normal(0.0, noise_level));
  const std::size_t width =
      1 + static_cast<std::size_t>(std::lround((show_channel_width(show, c.n_shows) - 1) * clamp01(c.show.signal)));
  if (width > 1) {
    std::vector<float> smoothed(signal.size());
    for (std::size_t i = 0; i < signal.size(); ++i) {
      double acc = 0.0;
      std::size_t n = 0;
      for (std::size_t j = 0; j < width && j <= i; ++j, ++n) acc += signal[i - j];
      smoothed[i] = static_cast<float>(acc / n);
    }
    signal = std::move(smoothed);
  }
  float peak = 0.0f;
  for (float s : signal) peak = std::max(peak, std::abs(s));
  if (peak > 0.0f) {
    for (float& s : signal) s = std::clamp(s * (0.9f / peak), -1.0f, 1.0f);
  }

  Draft d;
  d.show_index = show;
  d.raw_wer = (spont ? kSpontaneousWer * c.style.wer : 0.0) + (non_native ? kNonNativeWer * c.accent.wer : 0.0) +
              c.show.wer * show_wer_offset(show, c.n_shows) + rng.normal(0.0, c.wer_noise_std);
  Utterance& u = d.utt;
  char id[32];
  std::snprintf(id, sizeof(id), "%s-%05zu", split == Split::Train ? "train" : split == Split::Dev ? "dev" : "test",
                ordinal);
  u.id = id;
  u.tokens = std::move(tokens);
  u.signal = std::move(signal);
  u.duration = static_cast<double>(u.signal.size()) / sr;
  u.style = spont ? Style::Spontaneous : Style::NonSpontaneous;
  u.accent = non_native ? Accent::NonNative : Accent::Native;
  u.show = shows[show];
  u.split = split;
  return d;
}

}  // namespace

Corpus generate_synthetic_corpus(const GeneratorConfig& config) {
  config.validate();
  const VocabLayout layout = make_layout(config);
  const auto shows = show_names(config);
  Corpus corpus;
  corpus.vocabulary = make_vocabulary(config, layout);
  corpus.sample_rate = config.sample_rate;
  const std::string config_json = canonical(to_json(config));
  corpus.metadata = CorpusMetadata{config.seed, digest_of(config_json), config_json};

  const Rng base(config.seed);
  const std::array<std::size_t, 3> counts{config.n_train, config.n_dev, config.n_test};
  std::uint64_t stream = 0;
  for (Split split : kAllSplits) {
    const std::size_t si = static_cast<std::size_t>(split);
    std::vector<Draft> drafts;
    drafts.reserve(counts[si]);
    for (std::size_t i = 0; i < counts[si]; ++i) {
      drafts.push_back(draft_utterance(config, layout, shows, split, i, base.fork(stream++)));
    }
    // Recenter so the split mean WER hits its target before clamping.
    double mean_raw = 0.0;
    for (const Draft& d : drafts) mean_raw += d.raw_wer;
    mean_raw /= static_cast<double>(drafts.size());
    for (Draft& d : drafts) {
      d.utt.wer = std::clamp(config.wer_means[si] + d.raw_wer - mean_raw, 0.0, config.wer_max);
      corpus.utterances.push_back(std::move(d.utt));
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Input encoding

std::vector<float> pad_or_truncate_signal(std::span<const float> signal, std::size_t target_len) {
  std::vector<float> out(target_len, 0.0f);
  std::copy_n(signal.begin(), std::min(signal.size(), target_len), out.begin());
  return out;
}

Tensor encode_text(std::span<const std::uint32_t> tokens, const Tensor& embeddings, std::size_t max_tokens) {
  if (embeddings.rank() != 2) fail(ErrorKind::Dimension, "encode_text: embeddings must be [vocab x d]");
  if (max_tokens < 1) fail(ErrorKind::Config, "encode_text: max_tokens must be >= 1");
  const std::size_t vocab = embeddings.dim(0), d = embeddings.dim(1);
  Tensor out({max_tokens, d});
  for (std::size_t i = 0; i < max_tokens; ++i) {
    std::size_t row = 0;
    if (i < tokens.size()) {
      row = tokens[i];
      if (row >= vocab) {
        fail(ErrorKind::Vocabulary, "token index " + std::to_string(row) + " >= vocabulary size " +
                                        std::to_string(vocab));
      }
    }
    std::copy_n(embeddings.data() + row * d, d, out.data() + i * d);
  }
  for (std::size_t i = max_tokens; i < tokens.size(); ++i) {
    if (tokens[i] >= vocab) {
      fail(ErrorKind::Vocabulary, "token index " + std::to_string(tokens[i]) + " >= vocabulary size " +
                                      std::to_string(vocab));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Balancing

std::map<std::string, std::size_t> label_counts(const Corpus& corpus, Task task, Split split) {
  std::map<std::string, std::size_t> counts;
  for (const Utterance& u : corpus.utterances) {
    if (u.split == split) ++counts[label_of(u, task)];
  }
  return counts;
}

std::set<std::string> default_excluded_labels(const Corpus& corpus, Task task) {
  if (task != Task::Show) return {};
  auto counts = label_counts(corpus, task, Split::Train);
  if (counts.empty()) {
    for (const Utterance& u : corpus.utterances) ++counts[u.show];
  }
  if (counts.empty()) return {};
  auto smallest = std::min_element(counts.begin(), counts.end(),
                                   [](const auto& a, const auto& b) { return a.second < b.second; });
  return {smallest->first};
}

Corpus balance_for_task(const Corpus& corpus, const BalanceSpec& spec, std::span<const Split> splits) {
  const std::set<std::string> excluded = spec.excluded_labels.value_or(default_excluded_labels(corpus, spec.task));
  std::set<std::string> retained;
  for (const Utterance& u : corpus.utterances) {
    if (std::find(splits.begin(), splits.end(), u.split) == splits.end()) continue;
    std::string label = label_of(u, spec.task);
    if (!excluded.contains(label)) retained.insert(std::move(label));
  }
  if (retained.size() < 2) {
    fail(ErrorKind::InfeasibleBalance, std::string(to_string(spec.task)) + ": fewer than 2 retained labels");
  }

  std::vector<std::size_t> kept;
  for (Split split : splits) {
    std::map<std::string, std::vector<std::size_t>> by_label;
    for (const std::string& label : retained) by_label[label];
    for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
      const Utterance& u = corpus.utterances[i];
      if (u.split != split) continue;
      auto it = by_label.find(label_of(u, spec.task));
      if (it != by_label.end()) it->second.push_back(i);
    }
    std::size_t target = std::numeric_limits<std::size_t>::max();
    for (const auto& [label, members] : by_label) {
      if (members.empty()) {
        fail(ErrorKind::InfeasibleBalance, std::string(to_string(spec.task)) + ": label '" + label +
                                               "' is absent from split " + std::string(to_string(split)));
      }
      target = std::min(target, members.size());
    }
    for (auto& [label, members] : by_label) {
      Rng rng(mix_seed(spec.seed, hash64(std::string(to_string(split)) + "/" + label)));
      rng.shuffle(std::span(members));
      kept.insert(kept.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(target));
    }
  }
  std::sort(kept.begin(), kept.end());
  return corpus.subset(kept);
}

// ---------------------------------------------------------------------------
// Storage

namespace {

void write_floats_le(std::ostream& out, std::span<const float> values) {
  std::vector<char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());

  Json meta;
  meta["format"] = "werprobe-corpus";
  meta["version"] = 1;
  meta["vocabulary"] = corpus.vocabulary;
  meta["sample_rate"] = corpus.sample_rate;
  meta["generator"] = {{"seed", corpus.metadata.seed},
                       {"digest", corpus.metadata.config_digest},
                       {"config", parse_json(corpus.metadata.generator_config, "generator config")}};
  {
    std::ofstream out(dir / "meta.json", std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + (dir / "meta.json").string());
    out << meta.dump(2) << '\n';
  }

  std::ofstream lines(dir / "utterances.jsonl", std::ios::binary);
  std::ofstream signals(dir / "signals.bin", std::ios::binary);
  if (!lines || !signals) fail(ErrorKind::Io, "cannot write corpus files in " + dir.string());
  std::uint64_t offset = 0;
  for (const Utterance& u : corpus.utterances) {
    Json rec;
    rec["id"] = u.id;
    rec["tokens"] = u.tokens;
    rec["wer"] = u.wer;
    rec["style"] = to_string(u.style);
    rec["accent"] = to_string(u.accent);
    rec["show"] = u.show;
    rec["split"] = to_string(u.split);
    rec["signal_offset"] = offset;
    rec["signal_len"] = u.signal.size();
    lines << rec.dump() << '\n';
    write_floats_le(signals, u.signal);
    offset += u.signal.size();
  }
  if (!lines || !signals) fail(ErrorKind::Io, "failed writing corpus in " + dir.string());
}

Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  const std::string meta_text = read_file(dir / "meta.json");
  const Json meta = parse_json(meta_text, (dir / "meta.json").string());
  try {
    if (meta.at("format").get<std::string>() != "werprobe-corpus") {
      fail(ErrorKind::Format, "meta.json: not a werprobe corpus");
    }
    if (meta.at("version").get<int>() != 1) {
      fail(ErrorKind::UnsupportedVersion, "meta.json: corpus version " + meta.at("version").dump());
    }
    corpus.vocabulary = meta.at("vocabulary").get<std::vector<std::string>>();
    corpus.sample_rate = meta.at("sample_rate").get<std::uint32_t>();
    const Json& gen = meta.at("generator");
    corpus.metadata.seed = gen.at("seed").get<std::uint64_t>();
    corpus.metadata.config_digest = gen.at("digest").get<std::string>();
    corpus.metadata.generator_config = canonical(gen.at("config"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Parse, "meta.json: " + std::string(e.what()));
  }

  const std::string raw = read_file(dir / "signals.bin");
  if (raw.size() % 4 != 0) {
    fail(ErrorKind::Parse, "signals.bin: size " + std::to_string(raw.size()) + " is not a multiple of 4");
  }
  const std::uint64_t n_floats = raw.size() / 4;

  std::istringstream lines(read_file(dir / "utterances.jsonl"));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "utterances.jsonl line " + std::to_string(line_no);
    const Json rec = parse_json(line, where);
    Utterance u;
    std::uint64_t offset = 0, len = 0;
    try {
      u.id = rec.at("id").get<std::string>();
      u.tokens = rec.at("tokens").get<std::vector<std::uint32_t>>();
      u.wer = rec.at("wer").get<double>();
      u.style = parse_style(rec.at("style").get<std::string>());
      u.accent = parse_accent(rec.at("accent").get<std::string>());
      u.show = rec.at("show").get<std::string>();
      u.split = parse_split(rec.at("split").get<std::string>());
      offset = rec.at("signal_offset").get<std::uint64_t>();
      len = rec.at("signal_len").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Parse, where + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorKind::Parse, where + ": " + e.what());
    }
    if (offset > n_floats || len > n_floats - offset) {
      fail(ErrorKind::Parse, where + ": signal range [" + std::to_string(offset) + ", " +
                                 std::to_string(offset + len) + ") exceeds signals.bin (" +
                                 std::to_string(n_floats) + " samples) at byte offset " +
                                 std::to_string(offset * 4));
    }
    u.signal.resize(len);
    for (std::uint64_t i = 0; i < len; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[(offset + i) * 4 + b])) << (8 * b);
      }
      u.signal[i] = std::bit_cast<float>(bits);
    }
    u.duration = static_cast<double>(len) / corpus.sample_rate;
    corpus.utterances.push_back(std::move(u));
  }
  corpus.validate();
  return corpus;
}

WERPROBE_NAMESPACE_END
