#include "edfr/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace edfr {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

int node_index_of(const std::vector<std::string>& ids, const std::string& id,
                  const std::string& context) {
  const auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw ParseError(context + ": unknown node id '" + id + "'");
  return static_cast<int>(it - ids.begin());
}

}  // namespace

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failure on '" + path + "'");
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw IoError("write failure on '" + path + "'");
}

json read_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("'" + path + "': " + e.what());
  }
}

void write_json_file(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

json network_to_json(const Network& net) {
  json lines = json::array();
  for (const Line& l : net.lines())
    lines.push_back({{"tail", net.node_ids()[l.tail]},
                     {"head", net.node_ids()[l.head]},
                     {"susceptance", l.susceptance},
                     {"capacity_mw", l.capacity_mw}});
  return {{"nodes", net.node_ids()}, {"lines", lines}};
}

Network network_from_json(const json& j) {
  try {
    std::vector<std::string> ids = j.at("nodes").get<std::vector<std::string>>();
    std::vector<Line> lines;
    for (const json& lj : j.at("lines")) {
      Line l;
      l.tail = node_index_of(ids, lj.at("tail").get<std::string>(), "line");
      l.head = node_index_of(ids, lj.at("head").get<std::string>(), "line");
      l.susceptance = lj.at("susceptance").get<double>();
      l.capacity_mw = lj.at("capacity_mw").get<double>();
      lines.push_back(l);
    }
    return Network::build(std::move(ids), std::move(lines));
  } catch (const json::exception& e) {
    throw ParseError(std::string("network json: ") + e.what());
  }
}

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Eigen::VectorXd vector_from_json(const json& j) {
  if (!j.is_array()) throw ParseError("expected a numeric array");
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ParseError("expected a numeric array");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

json tree_to_json(const ScenarioTree& tree) {
  json outs = json::array();
  for (const Outcome& o : tree.outcomes)
    outs.push_back({{"id", o.id},
                    {"period", o.period},
                    {"parent", o.parent},
                    {"p", o.p},
                    {"demand", vector_to_json(o.demand)}});
  json j = {{"K", tree.K}, {"period_duration_s", tree.period_duration_s}, {"outcomes", outs}};
  if (tree.has_seed) j["seed"] = tree.seed;
  return j;
}

ScenarioTree tree_from_json(const json& j) {
  try {
    ScenarioTree tree;
    tree.K = j.at("K").get<int>();
    tree.period_duration_s = j.value("period_duration_s", 0.0);
    if (j.contains("seed")) {
      tree.has_seed = true;
      tree.seed = j.at("seed").get<std::uint64_t>();
    }
    for (const json& oj : j.at("outcomes")) {
      Outcome o;
      o.id = oj.at("id").get<int>();
      o.period = oj.at("period").get<int>();
      o.parent = oj.value("parent", -1);
      o.p = oj.at("p").get<double>();
      o.demand = vector_from_json(oj.at("demand"));
      tree.outcomes.push_back(std::move(o));
    }
    return tree;
  } catch (const json::exception& e) {
    throw ParseError(std::string("tree json: ") + e.what());
  }
}

json fleet_to_json(const GeneratorFleet& fleet, const std::vector<std::string>& node_ids) {
  json arr = json::array();
  auto emit = [&](const std::vector<Generator>& gens, const char* kind) {
    for (size_t n = 0; n < gens.size(); ++n) {
      if (!gens[n].present) continue;
      arr.push_back({{"node", node_ids[n]},
                     {"kind", kind},
                     {"qmin_mw", gens[n].lo},
                     {"qmax_mw", gens[n].hi},
                     {"cost_a", gens[n].cost.a},
                     {"cost_b", gens[n].cost.b},
                     {"cost_c", gens[n].cost.c}});
    }
  };
  emit(fleet.dispatch, "dispatch");
  emit(fleet.regulation, "regulation");
  return arr;
}

GeneratorFleet fleet_from_json(const json& j, const std::vector<std::string>& node_ids) {
  GeneratorFleet fleet;
  fleet.dispatch.assign(node_ids.size(), {});
  fleet.regulation.assign(node_ids.size(), {});
  try {
    for (const json& gj : j) {
      const int n = node_index_of(node_ids, gj.at("node").get<std::string>(), "generator");
      const std::string kind = gj.at("kind").get<std::string>();
      Generator g;
      g.present = true;
      g.lo = gj.at("qmin_mw").get<double>();
      g.hi = gj.at("qmax_mw").get<double>();
      g.cost.a = gj.value("cost_a", 0.0);
      g.cost.b = gj.at("cost_b").get<double>();
      g.cost.c = gj.at("cost_c").get<double>();
      if (kind == "dispatch")
        fleet.dispatch[n] = g;
      else if (kind == "regulation")
        fleet.regulation[n] = g;
      else
        throw ParseError("generator kind must be dispatch or regulation, got '" + kind + "'");
    }
    return fleet;
  } catch (const json::exception& e) {
    throw ParseError(std::string("generators json: ") + e.what());
  }
}

json bids_to_json(const BidSet& bids) {
  auto emit = [](const std::vector<SupplyBid>& v) {
    json arr = json::array();
    for (const SupplyBid& b : v) arr.push_back({{"alpha", b.alpha}, {"gamma", b.gamma}});
    return arr;
  };
  return {{"dispatch", emit(bids.dispatch)}, {"regulation", emit(bids.regulation)}};
}

BidSet bids_from_json(const json& j) {
  try {
    auto take = [](const json& arr) {
      std::vector<SupplyBid> out;
      for (const json& bj : arr)
        out.push_back({bj.at("alpha").get<double>(), bj.at("gamma").get<double>()});
      return out;
    };
    return {take(j.at("dispatch")), take(j.at("regulation"))};
  } catch (const json::exception& e) {
    throw ParseError(std::string("bids json: ") + e.what());
  }
}

json instance_to_json(const ProblemInstance& inst) {
  json j = {{"network", network_to_json(inst.net)},
            {"generators", fleet_to_json(inst.fleet, inst.net.node_ids())}};
  if (inst.has_tree) j["tree"] = tree_to_json(inst.tree);
  return j;
}

ProblemInstance instance_from_json(const json& j) {
  ProblemInstance inst;
  try {
    inst.net = network_from_json(j.at("network"));
    inst.fleet = fleet_from_json(j.at("generators"), inst.net.node_ids());
    if (j.contains("tree")) {
      inst.tree = tree_from_json(j.at("tree"));
      inst.has_tree = true;
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("instance json: ") + e.what());
  }
  return inst;
}

json dfr_instance_to_json(const DfrInstance& inst) {
  return {{"network", network_to_json(inst.net)},
          {"generators", fleet_to_json(inst.fleet, inst.net.node_ids())},
          {"q_b", vector_to_json(inst.q_b)},
          {"q_p", vector_to_json(inst.q_p)},
          {"demand", vector_to_json(inst.demand)},
          {"inertia", inst.inertia},
          {"damping", inst.damping},
          {"barrier", inst.barrier}};
}

DfrInstance dfr_instance_from_json(const json& j) {
  DfrInstance inst;
  try {
    inst.net = network_from_json(j.at("network"));
    inst.fleet = fleet_from_json(j.at("generators"), inst.net.node_ids());
    inst.q_b = vector_from_json(j.at("q_b"));
    inst.q_p = vector_from_json(j.at("q_p"));
    inst.demand = vector_from_json(j.at("demand"));
    inst.inertia = j.value("inertia", 0.1);
    inst.damping = j.value("damping", 1.0);
    inst.barrier = j.value("barrier", 0.0);
  } catch (const json::exception& e) {
    throw ParseError(std::string("dfr instance json: ") + e.what());
  }
  inst.validate();
  return inst;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  const std::string text = read_text_file(path);
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(t);
    while (std::getline(ls, field, ',')) fields.push_back(trim(field));
    if (!t.empty() && t.back() == ',') fields.push_back("");
    rows.push_back(std::move(fields));
  }
  return rows;
}

double parse_double(const std::string& field) {
  const std::string t = trim(field);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size())
    throw ParseError("not a number: '" + field + "'");
  return v;
}

int parse_int(const std::string& field) {
  const std::string t = trim(field);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size())
    throw ParseError("not an integer: '" + field + "'");
  return v;
}

GeneratorFleet fleet_from_csv(const std::string& path, const std::vector<std::string>& node_ids) {
  const auto rows = read_csv(path);
  if (rows.empty()) throw ParseError("'" + path + "': empty generator table");
  const std::vector<std::string> header = {"node",   "kind",   "qmin_mw", "qmax_mw",
                                           "cost_a", "cost_b", "cost_c"};
  if (rows[0] != header)
    throw ParseError("'" + path + "': expected header node,kind,qmin_mw,qmax_mw,cost_a,cost_b,cost_c");
  GeneratorFleet fleet;
  fleet.dispatch.assign(node_ids.size(), {});
  fleet.regulation.assign(node_ids.size(), {});
  for (size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() != header.size())
      throw ParseError("'" + path + "' row " + std::to_string(i + 1) + ": wrong field count");
    const int n = node_index_of(node_ids, r[0], path);
    Generator g;
    g.present = true;
    g.lo = parse_double(r[2]);
    g.hi = parse_double(r[3]);
    g.cost.a = parse_double(r[4]);
    g.cost.b = parse_double(r[5]);
    g.cost.c = parse_double(r[6]);
    if (r[1] == "dispatch")
      fleet.dispatch[n] = g;
    else if (r[1] == "regulation")
      fleet.regulation[n] = g;
    else
      throw ParseError("'" + path + "' row " + std::to_string(i + 1) +
                       ": kind must be dispatch or regulation");
  }
  return fleet;
}

std::map<std::string, TomlValue> parse_flat_toml(const std::string& text) {
  std::map<std::string, TomlValue> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError("toml line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (key.empty() || val.empty())
      throw ParseError("toml line " + std::to_string(lineno) + ": empty key or value");
    TomlValue tv;
    if (val.front() == '"') {
      if (val.size() < 2 || val.back() != '"')
        throw ParseError("toml line " + std::to_string(lineno) + ": unterminated string");
      tv.kind = TomlValue::Kind::String;
      tv.str = val.substr(1, val.size() - 2);
    } else if (val.front() == '[') {
      if (val.back() != ']')
        throw ParseError("toml line " + std::to_string(lineno) + ": unterminated array");
      tv.kind = TomlValue::Kind::Array;
      std::string inner = trim(val.substr(1, val.size() - 2));
      if (!inner.empty()) {
        std::istringstream items(inner);
        std::string item;
        while (std::getline(items, item, ',')) tv.arr.push_back(parse_double(item));
      }
    } else {
      tv.kind = TomlValue::Kind::Number;
      tv.num = parse_double(val);
    }
    out[key] = std::move(tv);
  }
  return out;
}

std::map<std::string, TomlValue> parse_flat_toml_file(const std::string& path) {
  try {
    return parse_flat_toml(read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError("'" + path + "': " + e.what());
  }
}

}  // namespace edfr
