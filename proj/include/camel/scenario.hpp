#pragma once

// Scenario files: sectioned INI text ([run], [link], [cross], [flow],
// [flowN], [estimator], [detector], [burst], [controller]). See README for
// the key reference. Overrides address keys as "section.key".

#include <string>
#include <utility>
#include <vector>

#include "camel/netsim.hpp"

namespace camel {

using Override = std::pair<std::string, std::string>;

// Throws Error with a "section.key: reason" message on any problem.
ScenarioConfig parse_scenario(const std::string& text, const std::string& base_dir = ".",
                              const std::vector<Override>& overrides = {});
ScenarioConfig load_scenario(const std::string& path, const std::vector<Override>& overrides = {});

}  // namespace camel
