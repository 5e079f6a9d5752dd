#pragma once

// JSON (de)serialization of the configuration types. Readers reject unknown
// keys and keep defaults for missing ones.

#include <json.hpp>
#include <string>

#include "werprobe/analysis.hpp"
#include "werprobe/corpus.hpp"
#include "werprobe/predictor.hpp"
#include "werprobe/probing.hpp"
#include "werprobe/trainer.hpp"

WERPROBE_NAMESPACE_BEGIN

nlohmann::json to_json(const GeneratorConfig& config);
GeneratorConfig generator_config_from_json(const nlohmann::json& j, GeneratorConfig base = {});

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

nlohmann::json to_json(const ProbeConfig& config);
ProbeConfig probe_config_from_json(const nlohmann::json& j, ProbeConfig base = {});

nlohmann::json to_json(const TsneConfig& config);
TsneConfig tsne_config_from_json(const nlohmann::json& j, TsneConfig base = {});

nlohmann::json to_json(const TrainLog& log);
TrainLog train_log_from_json(const nlohmann::json& j);

/// Compact dump with sorted keys; the form hashed into digests.
std::string canonical(const nlohmann::json& j);

WERPROBE_NAMESPACE_END
