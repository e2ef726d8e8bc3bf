#pragma once

#include <json.hpp>

#include "hybridpool/design.hpp"

namespace hybridpool::detail {

nlohmann::json design_to_json_value(const DesignSpec& design);
DesignSpec design_from_json_value(const nlohmann::json& value);

}  // namespace hybridpool::detail
