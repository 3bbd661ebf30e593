#pragma once

#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tollsub/errors.hpp"
#include "tollsub/netmodel.hpp"

// Instance files are JSON documents:
//
//   {
//     "name":        "pigou-1",                         (optional)
//     "nodes":       ["o", "d"],
//     "edges":       [{"id": "e1", "tail": "o", "head": "d", "coeffs": [0, 1]}, ...],
//     "commodities": [{"origin": "o", "destination": "d", "demand": 1}],
//     "sensitivity": {"bounds": [1, 4], "classes": [{"mass": 0.5, "s": 1}, ...]}   (optional)
//   }
//
// coeffs lists a0..ap of l(f) = sum a_i f^i. A missing sensitivity block means
// a homogeneous population (one class, s = 1). See docs/instance-format.md.

namespace tollsub {

namespace detail {

using json = nlohmann::json;

inline const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where, std::string("missing field '") + key + "'");
  return *it;
}

inline double as_number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ParseError(where, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ParseError(where, "expected a finite number");
  return d;
}

inline std::string as_string(const json& v, const std::string& where) {
  if (!v.is_string()) throw ParseError(where, "expected a string");
  return v.get<std::string>();
}

inline const json& as_array(const json& v, const std::string& where) {
  if (!v.is_array()) throw ParseError(where, "expected a list");
  return v;
}

inline void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed,
                           const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (auto a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ParseError(where, "unknown field '" + it.key() + "'");
  }
}

}  // namespace detail

/// Parses and validates an instance document. Every invariant of the
/// routing problem and sensitivity model is checked; failures carry the
/// location of the offending field. The returned instance has zero incentives.
inline GameInstance parse_instance(std::string_view text) {
  using detail::json;
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError("byte " + std::to_string(e.byte), "malformed instance text");
  }
  if (!doc.is_object()) throw ParseError("", "instance must be a single top-level object");
  detail::reject_unknown(doc, {"name", "nodes", "edges", "commodities", "sensitivity"}, "");

  std::vector<std::string> nodes;
  std::unordered_map<std::string, std::size_t> node_ids;
  const json& jnodes = detail::as_array(detail::require(doc, "nodes", ""), "nodes");
  for (std::size_t i = 0; i < jnodes.size(); ++i) {
    const std::string where = "nodes[" + std::to_string(i) + "]";
    std::string name = detail::as_string(jnodes[i], where);
    if (!node_ids.emplace(name, nodes.size()).second)
      throw ParseError(where, "duplicate node '" + name + "'");
    nodes.push_back(std::move(name));
  }
  auto node_ref = [&](const json& v, const std::string& where) {
    const std::string name = detail::as_string(v, where);
    auto it = node_ids.find(name);
    if (it == node_ids.end()) throw ParseError(where, "dangling node '" + name + "'");
    return it->second;
  };

  std::vector<Edge> edges;
  const json& jedges = detail::as_array(detail::require(doc, "edges", ""), "edges");
  for (std::size_t i = 0; i < jedges.size(); ++i) {
    const std::string where = "edges[" + std::to_string(i) + "]";
    const json& je = jedges[i];
    if (!je.is_object()) throw ParseError(where, "expected an object");
    detail::reject_unknown(je, {"id", "tail", "head", "coeffs"}, where);
    Edge edge;
    edge.id = detail::as_string(detail::require(je, "id", where), where + ".id");
    edge.tail = node_ref(detail::require(je, "tail", where), where + ".tail");
    edge.head = node_ref(detail::require(je, "head", where), where + ".head");
    const json& jc = detail::as_array(detail::require(je, "coeffs", where), where + ".coeffs");
    if (jc.empty()) throw ParseError(where + ".coeffs", "need at least one coefficient");
    std::vector<double> coeffs;
    for (std::size_t k = 0; k < jc.size(); ++k) {
      const std::string cw = where + ".coeffs[" + std::to_string(k) + "]";
      const double a = detail::as_number(jc[k], cw);
      if (a < 0.0) throw ParseError(cw, "negative latency coefficient");
      coeffs.push_back(a);
    }
    edge.latency = LatencyFunction(std::move(coeffs));
    edges.push_back(std::move(edge));
  }

  std::vector<Commodity> commodities;
  const json& jcom = detail::as_array(detail::require(doc, "commodities", ""), "commodities");
  double demand_total = 0.0;
  for (std::size_t i = 0; i < jcom.size(); ++i) {
    const std::string where = "commodities[" + std::to_string(i) + "]";
    const json& jc = jcom[i];
    if (!jc.is_object()) throw ParseError(where, "expected an object");
    detail::reject_unknown(jc, {"origin", "destination", "demand"}, where);
    Commodity c;
    c.origin = node_ref(detail::require(jc, "origin", where), where + ".origin");
    c.destination = node_ref(detail::require(jc, "destination", where), where + ".destination");
    c.demand = detail::as_number(detail::require(jc, "demand", where), where + ".demand");
    if (c.demand < 0.0) throw ParseError(where + ".demand", "negative demand");
    demand_total += c.demand;
    commodities.push_back(c);
  }
  if (std::abs(demand_total - 1.0) > kFeasibilityTolerance) {
    std::ostringstream os;
    os.precision(17);
    os << "demand mismatch: demands sum to " << demand_total << ", expected 1";
    throw ParseError("commodities", os.str());
  }

  SensitivityModel sensitivity;
  if (auto it = doc.find("sensitivity"); it != doc.end()) {
    const json& js = *it;
    if (!js.is_object()) throw ParseError("sensitivity", "expected an object");
    detail::reject_unknown(js, {"bounds", "classes"}, "sensitivity");
    const json& jb = detail::as_array(detail::require(js, "bounds", "sensitivity"), "sensitivity.bounds");
    if (jb.size() != 2) throw ParseError("sensitivity.bounds", "expected [s_L, s_U]");
    const double lo = detail::as_number(jb[0], "sensitivity.bounds[0]");
    const double hi = detail::as_number(jb[1], "sensitivity.bounds[1]");
    const json& jk =
        detail::as_array(detail::require(js, "classes", "sensitivity"), "sensitivity.classes");
    std::vector<SensitivityClass> classes;
    for (std::size_t i = 0; i < jk.size(); ++i) {
      const std::string where = "sensitivity.classes[" + std::to_string(i) + "]";
      if (!jk[i].is_object()) throw ParseError(where, "expected an object");
      detail::reject_unknown(jk[i], {"mass", "s"}, where);
      classes.push_back({detail::as_number(detail::require(jk[i], "mass", where), where + ".mass"),
                         detail::as_number(detail::require(jk[i], "s", where), where + ".s")});
    }
    try {
      sensitivity = SensitivityModel(std::move(classes), lo, hi);
    } catch (const InvariantError& e) {
      throw ParseError("sensitivity", e.what());
    }
  }

  try {
    auto problem =
        std::make_shared<const RoutingProblem>(std::move(nodes), std::move(edges), std::move(commodities));
    return GameInstance(std::move(problem), std::move(sensitivity));
  } catch (const InvariantError& e) {
    throw ParseError("", e.what());
  }
}

/// Serializes the routing problem and population of `instance`. Incentives
/// are not part of the file format; they come from a mechanism string.
inline std::string serialize_instance(const GameInstance& instance, const std::string& name = {}) {
  using ojson = nlohmann::ordered_json;
  const RoutingProblem& problem = instance.problem();
  ojson doc;
  if (!name.empty()) doc["name"] = name;
  doc["nodes"] = ojson::array();
  for (const auto& n : problem.nodes()) doc["nodes"].push_back(n);
  doc["edges"] = ojson::array();
  for (const Edge& e : problem.edges()) {
    ojson je;
    je["id"] = e.id;
    je["tail"] = problem.nodes()[e.tail];
    je["head"] = problem.nodes()[e.head];
    je["coeffs"] = e.latency.coefficients();
    doc["edges"].push_back(std::move(je));
  }
  doc["commodities"] = ojson::array();
  for (const Commodity& c : problem.commodities()) {
    doc["commodities"].push_back({{"origin", problem.nodes()[c.origin]},
                                  {"destination", problem.nodes()[c.destination]},
                                  {"demand", c.demand}});
  }
  const SensitivityModel& s = instance.sensitivity();
  ojson js;
  js["bounds"] = {s.s_low(), s.s_high()};
  js["classes"] = ojson::array();
  for (const auto& c : s.classes()) js["classes"].push_back({{"mass", c.mass}, {"s", c.s}});
  doc["sensitivity"] = std::move(js);
  return doc.dump(2) + "\n";
}

inline GameInstance load_instance(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, "cannot open instance file");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_instance(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path + (e.location().empty() ? "" : ":" + e.location()),
                     std::string(e.what()).substr(e.location().empty() ? 0 : e.location().size() + 2));
  }
}

}  // namespace tollsub
