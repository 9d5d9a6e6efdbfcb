#pragma once

#include <cstddef>
#include <string>

#include "leopard/network.hpp"

namespace leopard {

/// Self-describing JSON document with every shape, weight, centroid,
/// statistic, and config field. load(save(m)) reproduces m exactly.
std::string model_to_json(const LeopardModel& model);
LeopardModel model_from_json(const std::string& text);

void save_model(const LeopardModel& model, const std::string& path);
LeopardModel load_model(const std::string& path);

/// Hash of the serialized state; used to prove evaluation never mutates.
std::size_t state_signature(const LeopardModel& model);

}  // namespace leopard
