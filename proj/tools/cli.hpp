#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "werprobe/analysis.hpp"
#include "werprobe/corpus.hpp"
#include "werprobe/error.hpp"
#include "werprobe/predictor.hpp"
#include "werprobe/probing.hpp"
#include "werprobe/trainer.hpp"

namespace werprobe::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitData = 4;
inline constexpr int kExitNumeric = 5;

int exit_code_for(ErrorKind kind);

struct RunPaths {
  std::string corpus = "run/corpus";
  std::string run = "run";
};

/// Every section of the run configuration, defaults filled in.
struct RunConfig {
  GeneratorConfig generator;
  ModelConfig model;
  TrainConfig train;
  ProbeConfig probe;
  TsneConfig tsne;
  RunPaths paths;
  /// When set, seeds the model, training, probes and t-SNE.
  std::optional<std::uint64_t> seed;

  /// Applies the top-level seed to the dependent sections.
  void apply_seed(std::uint64_t value);
  nlohmann::json to_json() const;
  /// Digest of the canonical JSON form.
  std::string digest() const;
};

RunConfig run_config_from_json(const nlohmann::json& j);
/// Empty path yields the defaults.
RunConfig load_run_config(const std::filesystem::path& path);

struct ManifestEntry {
  std::string name;
  std::vector<Task> tasks;
};

/// WER; WER+SHOW; WER+STYLE; WER+ACCENT; WER+STYLE+ACCENT; WER+SHOW+ACCENT;
/// WER+SHOW+STYLE; WER+SHOW+STYLE+ACCENT.
std::vector<ManifestEntry> default_manifest();
std::vector<ManifestEntry> parse_manifest(const nlohmann::json& j);
std::string system_name(std::span<const Task> tasks);

/// Fan-out cap from WERPROBE_THREADS (at least 1).
std::size_t thread_cap();

/// Entry point; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace werprobe::cli
