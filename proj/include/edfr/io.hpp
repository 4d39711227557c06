#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "edfr/dfr.hpp"
#include "edfr/market.hpp"
#include "edfr/network.hpp"
#include "edfr/scenario.hpp"

namespace edfr {

using json = nlohmann::json;

// ---- file helpers ----------------------------------------------------------
std::string read_text_file(const std::string& path);           // throws IoError
void write_text_file(const std::string& path, const std::string& content);
json read_json_file(const std::string& path);                  // throws IoError / ParseError
void write_json_file(const std::string& path, const json& j);  // 2-space indent, trailing newline

// ---- JSON round trips ------------------------------------------------------
json network_to_json(const Network& net);
Network network_from_json(const json& j);

json tree_to_json(const ScenarioTree& tree);
ScenarioTree tree_from_json(const json& j);

json fleet_to_json(const GeneratorFleet& fleet, const std::vector<std::string>& node_ids);
GeneratorFleet fleet_from_json(const json& j, const std::vector<std::string>& node_ids);

json bids_to_json(const BidSet& bids);
BidSet bids_from_json(const json& j);

json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const json& j);

// Bundled network + generators (+ optional scenario tree).
struct ProblemInstance {
  Network net;
  GeneratorFleet fleet;
  ScenarioTree tree;
  bool has_tree = false;
};

json instance_to_json(const ProblemInstance& inst);
ProblemInstance instance_from_json(const json& j);

json dfr_instance_to_json(const DfrInstance& inst);
DfrInstance dfr_instance_from_json(const json& j);

// ---- CSV -------------------------------------------------------------------
// Rows of trimmed fields; blank lines and '#' comment lines skipped.
std::vector<std::vector<std::string>> read_csv(const std::string& path);

// Expects the header  node,kind,qmin_mw,qmax_mw,cost_a,cost_b,cost_c  with
// kind one of dispatch|regulation; one row per generator.
GeneratorFleet fleet_from_csv(const std::string& path, const std::vector<std::string>& node_ids);

double parse_double(const std::string& field);  // throws ParseError
int parse_int(const std::string& field);

// ---- flat TOML subset ------------------------------------------------------
// Supports:  key = number | "string" | [number, ...]   plus # comments.
struct TomlValue {
  enum class Kind { Number, String, Array };
  Kind kind = Kind::Number;
  double num = 0.0;
  std::string str;
  std::vector<double> arr;
};

std::map<std::string, TomlValue> parse_flat_toml(const std::string& text);
std::map<std::string, TomlValue> parse_flat_toml_file(const std::string& path);

}  // namespace edfr
