#pragma once

#include <json.hpp>

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "labelflow/workflow.hpp"

namespace labelflow {

/// Ids of the shipped workflow templates, in listing order.
std::vector<std::string> template_names();

/// The embedded canonical workflow file of a template. Throws UnknownTemplate.
std::string_view template_source(std::string_view name);

/// Instantiates a template with config overrides. An override key is either
/// a bare parameter name (applied to every node whose config or
/// implementation schema has it) or "nodeId.parameter".
WorkflowGraph instantiate_template(std::string_view name,
                                   const std::map<std::string, nlohmann::json>& overrides = {});

}  // namespace labelflow
