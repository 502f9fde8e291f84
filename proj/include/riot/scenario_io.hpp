#pragma once

#include <filesystem>

#include "json.hpp"
#include "riot/harvest.hpp"
#include "riot/scenario.hpp"

// JSON forms of scenarios, timelines, totals and harvest settings. Readers
// reject unknown keys and throw ValidationError with the offending path.
namespace riot::scenario {

using Json = nlohmann::ordered_json;

Json to_json(const gateway::ApOperatingPoint& p);
gateway::ApOperatingPoint ap_point_from_json(const Json& j);

Json to_json(const SegmentState& s);
SegmentState segment_state_from_json(const Json& j);

Json to_json(const Scenario& s);
Scenario scenario_from_json(const Json& j);

Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& s, const std::filesystem::path& path);

Json to_json(const Timeline& t);
Json to_json(const EnergyTotals& e);

Json to_json(const HarvestConfig& c);
HarvestConfig harvest_config_from_json(const Json& j);
Json to_json(const HarvestResult& r);

}  // namespace riot::scenario
