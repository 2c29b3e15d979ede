#pragma once

#include <string>

#include "json.hpp"
#include "tfno/sim/dataset.hpp"
#include "tfno/training/training.hpp"

namespace tfno::train {

using Json = nlohmann::ordered_json;

/// Strict readers: unknown keys and wrong types throw ConfigError, missing
/// keys keep the defaults of the target struct.
op::OperatorConfig operator_config_from_json(const Json& j);
Json to_json(const op::OperatorConfig& c);

loss::LossWeights loss_weights_from_json(const Json& j);
Json to_json(const loss::LossWeights& w);
loss::SobolevConfig sobolev_from_json(const Json& j);
Json to_json(const loss::SobolevConfig& s);

TrainConfig train_config_from_json(const Json& j);
Json to_json(const TrainConfig& c);

sim::SamplerConfig sampler_config_from_json(const Json& j);
Json to_json(const sim::SamplerConfig& c);

sim::Normalization normalization_from_json(const Json& j);
Json to_json(const sim::Normalization& n);

/// Parses text, throwing ConfigError with `what` in the message on bad syntax.
Json parse_json(const std::string& text, const std::string& what);

} // namespace tfno::train
