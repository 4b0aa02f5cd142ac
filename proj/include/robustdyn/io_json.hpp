#pragma once

#include <string>

#include <json.hpp>

#include "robustdyn/bridge.hpp"
#include "robustdyn/eot.hpp"
#include "robustdyn/measures.hpp"
#include "robustdyn/sensitivity.hpp"
#include "robustdyn/synth.hpp"

namespace robustdyn::io {

using nlohmann::json;

json to_json(const DiscreteMeasure& m);
DiscreteMeasure measure_from_json(const json& j);

json to_json(const Coupling& c);
Coupling coupling_from_json(const json& j);

json to_json(const MarkovChain& chain);
MarkovChain chain_from_json(const json& j);

json to_json(const PathLaw& law);
PathLaw path_law_from_json(const json& j);

json to_json(const EotSolution& sol);

json to_json(const SensitivityConfig& cfg);
void apply_config_overrides(SensitivityConfig& cfg, const json& j);

SynthCarSpec car_spec_from_json(const json& j);
SynthTaxiSpec taxi_spec_from_json(const json& j);

std::string bound_curve_csv(const BoundCurve& curve);

// FNV-1a 64-bit as a stable content fingerprint for run manifests
std::string content_hash(const std::string& bytes);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace robustdyn::io
