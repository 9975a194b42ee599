#pragma once

#include <json.hpp>

#include "metsyn/synthesis.hpp"

namespace metsyn::detail {

nlohmann::json to_json(const Provenance &p);
Provenance provenance_from_json(const nlohmann::json &j);
nlohmann::json to_json(const YieldSummary &y);

} // namespace metsyn::detail
