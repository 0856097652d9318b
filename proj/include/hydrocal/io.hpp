#pragma once

// File formats. Data files are JSON in strict SI units; reports are CSV.
//
//   network      {"fluid": {...}, "nodes": [...], "pipes": [...], "sensors": [...]}
//   loads        {"loads": [{"demands": {...}, "source_heads": {...}}]}
//   measurements {"head_convention": "pressure", "sensors": [...], "sets": [...]}
//   result       {"roughness_mm": [...], "unmeasured_heads_m": {...}, "merit": v, ...}
//
// Per-node quantities are objects keyed by node id; demands and source heads
// may also be given as arrays in node order.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hydrocal/calibration.hpp"
#include "hydrocal/error.hpp"
#include "hydrocal/network.hpp"
#include "hydrocal/steady_state.hpp"
#include "hydrocal/topology.hpp"

namespace hydrocal::io {

using Json = nlohmann::ordered_json;

enum class HeadConvention { pressure, piezometric };

struct NetworkFile {
  Network network;
  std::vector<std::string> sensors;  // may be empty
};

struct MeasurementFile {
  HeadConvention convention = HeadConvention::pressure;
  std::vector<std::string> sensors;
  std::vector<MeasurementSet> sets;  // sensed heads as stored in the file
};

// ---------------------------------------------------------------- text

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << text;
  if (!out) throw ParseError("write to '" + path + "' failed");
}

/// Parses JSON text; syntax errors are reported with line and column.
inline Json parse_json(const std::string& text, const std::string& origin = "<input>") {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    const std::size_t pos = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < pos; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) +
                     ": malformed JSON (" + e.what() + ")");
  }
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

namespace detail {

inline const Json& member(const Json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + ": missing '" + key + "'");
  return *it;
}

inline double number(const Json& v, const std::string& where) {
  if (!v.is_number()) throw ParseError(where + ": expected a number");
  return v.get<double>();
}

inline std::string text(const Json& v, const std::string& where) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw ParseError(where + ": expected a string id");
}

inline std::vector<std::string> id_list(const Json& v, const std::string& where) {
  if (!v.is_array()) throw ParseError(where + ": expected an array of ids");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(text(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

/// Per-node values: an object keyed by id (missing ids take `fill`) or an
/// array in node order whose length must match exactly.
template <class IdAt>
Vector node_values(const Json& v, std::size_t n, IdAt id_at, double fill, const std::string& where,
                   const std::string& kind) {
  Vector out = Vector::Constant(static_cast<Eigen::Index>(n), fill);
  if (v.is_array()) {
    if (v.size() != n)
      throw DimensionError(where + ": " + std::to_string(v.size()) + " values for " + std::to_string(n) +
                           " " + kind);
    for (std::size_t k = 0; k < n; ++k) out(static_cast<Eigen::Index>(k)) = number(v[k], where);
    return out;
  }
  if (!v.is_object()) throw ParseError(where + ": expected an object keyed by node id or an array");
  for (auto it = v.begin(); it != v.end(); ++it) {
    std::size_t k = 0;
    while (k < n && id_at(k) != it.key()) ++k;
    if (k == n) throw ParseError(where + ": '" + it.key() + "' is not one of the " + kind);
    out(static_cast<Eigen::Index>(k)) = number(*it, where + "." + it.key());
  }
  return out;
}

inline Vector demands_from(const Json& v, const Network& net, const std::string& where) {
  return node_values(v, net.n_inner(), [&](std::size_t k) { return net.inner_node(k).id; }, 0.0, where,
                     "inner nodes");
}

inline Vector source_heads_from(const Json& v, const Network& net, const std::string& where) {
  Vector h = node_values(v, net.n_sources(), [&](std::size_t s) { return net.source_node(s).id; },
                         std::numeric_limits<double>::quiet_NaN(), where, "sources");
  for (std::size_t s = 0; s < net.n_sources(); ++s)
    if (std::isnan(h(static_cast<Eigen::Index>(s))))
      throw ParseError(where + ": no head for source '" + net.source_node(s).id + "'");
  return h;
}

inline Json inner_object(const Network& net, const Vector& v) {
  Json o = Json::object();
  for (std::size_t k = 0; k < net.n_inner(); ++k) o[net.inner_node(k).id] = v(static_cast<Eigen::Index>(k));
  return o;
}

inline Json source_object(const Network& net, const Vector& v) {
  Json o = Json::object();
  for (std::size_t s = 0; s < net.n_sources(); ++s) o[net.source_node(s).id] = v(static_cast<Eigen::Index>(s));
  return o;
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace detail

// ---------------------------------------------------------------- network

inline NetworkFile network_from_json(const Json& j) {
  FluidProperties fluid;
  if (auto it = j.find("fluid"); j.is_object() && it != j.end()) {
    const Json& f = *it;
    if (!f.is_object()) throw ParseError("fluid: expected an object");
    if (f.contains("density")) fluid.density = detail::number(f["density"], "fluid.density");
    if (f.contains("viscosity")) fluid.viscosity = detail::number(f["viscosity"], "fluid.viscosity");
    if (f.contains("gravity")) fluid.gravity = detail::number(f["gravity"], "fluid.gravity");
  }
  const Json& jn = detail::member(j, "nodes", "network");
  const Json& jp = detail::member(j, "pipes", "network");
  if (!jn.is_array()) throw ParseError("nodes: expected an array");
  if (!jp.is_array()) throw ParseError("pipes: expected an array");

  std::vector<Node> nodes;
  for (std::size_t i = 0; i < jn.size(); ++i) {
    const std::string where = "nodes[" + std::to_string(i) + "]";
    const Json& e = jn[i];
    Node n;
    n.id = detail::text(detail::member(e, "id", where), where + ".id");
    const std::string type = e.contains("type") ? detail::text(e["type"], where + ".type") : "inner";
    if (type == "inner" || type == "junction")
      n.kind = NodeKind::inner;
    else if (type == "source" || type == "reservoir")
      n.kind = NodeKind::source;
    else
      throw ParseError(where + ".type: unknown node type '" + type + "'");
    if (e.contains("elevation")) n.elevation = detail::number(e["elevation"], where + ".elevation");
    nodes.push_back(std::move(n));
  }

  std::vector<Pipe> pipes;
  for (std::size_t i = 0; i < jp.size(); ++i) {
    const std::string where = "pipes[" + std::to_string(i) + "]";
    const Json& e = jp[i];
    Pipe p;
    p.id = detail::text(detail::member(e, "id", where), where + ".id");
    p.from = detail::text(detail::member(e, "from", where), where + ".from");
    p.to = detail::text(detail::member(e, "to", where), where + ".to");
    p.length = detail::number(detail::member(e, "length", where), where + ".length");
    p.diameter = detail::number(detail::member(e, "diameter", where), where + ".diameter");
    if (e.contains("roughness") && !e["roughness"].is_null())
      p.roughness = detail::number(e["roughness"], where + ".roughness");
    if (e.contains("minor_loss")) p.minor_loss = detail::number(e["minor_loss"], where + ".minor_loss");
    pipes.push_back(std::move(p));
  }

  NetworkFile out{Network(fluid, std::move(nodes), std::move(pipes)), {}};
  if (j.contains("sensors")) out.sensors = detail::id_list(j["sensors"], "sensors");
  return out;
}

inline Json network_to_json(const Network& net, const std::vector<std::string>& sensors = {}) {
  Json j;
  j["fluid"] = {{"density", net.fluid().density},
                {"viscosity", net.fluid().viscosity},
                {"gravity", net.fluid().gravity}};
  Json nodes = Json::array();
  for (const Node& n : net.nodes())
    nodes.push_back({{"id", n.id},
                     {"type", n.kind == NodeKind::inner ? "inner" : "source"},
                     {"elevation", n.elevation}});
  j["nodes"] = std::move(nodes);
  Json pipes = Json::array();
  for (const Pipe& p : net.pipes()) {
    Json e = {{"id", p.id}, {"from", p.from}, {"to", p.to}, {"length", p.length}, {"diameter", p.diameter}};
    if (p.roughness) e["roughness"] = *p.roughness;
    if (p.minor_loss != 0.0) e["minor_loss"] = p.minor_loss;
    pipes.push_back(std::move(e));
  }
  j["pipes"] = std::move(pipes);
  if (!sensors.empty()) j["sensors"] = sensors;
  return j;
}

inline NetworkFile read_network(const std::string& path) {
  return network_from_json(parse_json(read_text(path), path));
}

// ---------------------------------------------------------------- loads

inline std::vector<LoadingCondition> loads_from_json(const Json& j, const Network& net) {
  const Json& arr = detail::member(j, "loads", "loads file");
  if (!arr.is_array() || arr.empty()) throw ParseError("loads: expected a non-empty array");
  std::vector<LoadingCondition> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string where = "loads[" + std::to_string(i) + "]";
    LoadingCondition l;
    l.demands = detail::demands_from(detail::member(arr[i], "demands", where), net, where + ".demands");
    l.source_heads =
        detail::source_heads_from(detail::member(arr[i], "source_heads", where), net, where + ".source_heads");
    out.push_back(std::move(l));
  }
  return out;
}

inline Json loads_to_json(const std::vector<LoadingCondition>& loads, const Network& net) {
  Json arr = Json::array();
  for (const LoadingCondition& l : loads)
    arr.push_back({{"demands", detail::inner_object(net, l.demands)},
                   {"source_heads", detail::source_object(net, l.source_heads)}});
  return Json{{"loads", std::move(arr)}};
}

inline std::vector<LoadingCondition> read_loads(const std::string& path, const Network& net) {
  return loads_from_json(parse_json(read_text(path), path), net);
}

// ---------------------------------------------------------------- measurements

inline HeadConvention convention_from(const std::string& s) {
  if (s == "pressure") return HeadConvention::pressure;
  if (s == "piezometric") return HeadConvention::piezometric;
  throw ParseError("head_convention: expected 'pressure' or 'piezometric', got '" + s + "'");
}

inline const char* to_string(HeadConvention c) {
  return c == HeadConvention::pressure ? "pressure" : "piezometric";
}

inline MeasurementFile measurements_from_json(const Json& j, const Network& net,
                                              const std::vector<std::string>& default_sensors = {}) {
  MeasurementFile out;
  if (j.is_object() && j.contains("head_convention"))
    out.convention = convention_from(detail::text(j["head_convention"], "head_convention"));
  out.sensors = j.is_object() && j.contains("sensors") ? detail::id_list(j["sensors"], "sensors") : default_sensors;
  if (out.sensors.empty()) throw ParseError("measurements: no sensor list in the file or the network");
  const Json& arr = detail::member(j, "sets", "measurements");
  if (!arr.is_array() || arr.empty()) throw ParseError("sets: expected a non-empty array");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string where = "sets[" + std::to_string(i) + "]";
    MeasurementSet m;
    m.demands = detail::demands_from(detail::member(arr[i], "demands", where), net, where + ".demands");
    m.source_heads =
        detail::source_heads_from(detail::member(arr[i], "source_heads", where), net, where + ".source_heads");
    const Json& y = detail::member(arr[i], "sensed_heads", where);
    const std::vector<std::string>& ids = out.sensors;
    m.sensed_heads = detail::node_values(y, ids.size(), [&](std::size_t r) { return ids[r]; },
                                         std::numeric_limits<double>::quiet_NaN(), where + ".sensed_heads",
                                         "sensors");
    for (std::size_t r = 0; r < ids.size(); ++r)
      if (std::isnan(m.sensed_heads(static_cast<Eigen::Index>(r))))
        throw ParseError(where + ".sensed_heads: no value for sensor '" + ids[r] + "'");
    out.sets.push_back(std::move(m));
  }
  return out;
}

inline Json measurements_to_json(const MeasurementFile& mf, const Network& net) {
  Json j;
  j["head_convention"] = to_string(mf.convention);
  j["sensors"] = mf.sensors;
  Json arr = Json::array();
  for (const MeasurementSet& m : mf.sets) {
    Json y = Json::object();
    for (std::size_t r = 0; r < mf.sensors.size(); ++r) y[mf.sensors[r]] = m.sensed_heads(static_cast<Eigen::Index>(r));
    arr.push_back({{"demands", detail::inner_object(net, m.demands)},
                   {"source_heads", detail::source_object(net, m.source_heads)},
                   {"sensed_heads", std::move(y)}});
  }
  j["sets"] = std::move(arr);
  return j;
}

inline MeasurementFile read_measurements(const std::string& path, const Network& net,
                                         const std::vector<std::string>& default_sensors = {}) {
  return measurements_from_json(parse_json(read_text(path), path), net, default_sensors);
}

/// Sensed heads converted to the pressure convention used internally.
inline std::vector<MeasurementSet> pressure_sets(const MeasurementFile& mf, const Network& net) {
  std::vector<MeasurementSet> out = mf.sets;
  if (mf.convention == HeadConvention::piezometric)
    for (MeasurementSet& m : out)
      for (std::size_t r = 0; r < mf.sensors.size(); ++r) {
        const Endpoint ep = net.endpoint(mf.sensors[r]);
        if (ep.kind != NodeKind::inner) throw NetworkError("sensor '" + mf.sensors[r] + "' is a source");
        m.sensed_heads(static_cast<Eigen::Index>(r)) -= net.inner_node(ep.index).elevation;
      }
  return out;
}

// ---------------------------------------------------------------- results

inline Json decision_to_json(const CalibrationProblem& pb, const Vector& x) {
  const DecisionLayout& lay = pb.layout();
  Json heads = Json::object();
  for (std::size_t i = 0; i < lay.n_sets; ++i) {
    Json set = Json::object();
    for (std::size_t u = 0; u < lay.n_unmeasured; ++u)
      set[pb.network().inner_node(pb.sensors().unmeasured()[u]).id] = x(static_cast<Eigen::Index>(lay.head_offset(i) + u));
    heads[std::to_string(i + 1)] = std::move(set);
  }
  std::vector<double> mm;
  for (std::size_t p = 0; p < lay.n_pipes; ++p) mm.push_back(x(static_cast<Eigen::Index>(p)) * 1e3);
  return Json{{"roughness_mm", mm}, {"unmeasured_heads_m", std::move(heads)}};
}

/// Inverse of decision_to_json.
inline Vector decision_from_json(const CalibrationProblem& pb, const Json& j) {
  const DecisionLayout& lay = pb.layout();
  Vector x(static_cast<Eigen::Index>(lay.size()));
  const Json& mm = detail::member(j, "roughness_mm", "result");
  if (!mm.is_array() || mm.size() != lay.n_pipes)
    throw DimensionError("roughness_mm: expected " + std::to_string(lay.n_pipes) + " values");
  for (std::size_t p = 0; p < lay.n_pipes; ++p)
    x(static_cast<Eigen::Index>(p)) = detail::number(mm[p], "roughness_mm") * 1e-3;
  const Json& heads = detail::member(j, "unmeasured_heads_m", "result");
  for (std::size_t i = 0; i < lay.n_sets; ++i) {
    const std::string where = "unmeasured_heads_m." + std::to_string(i + 1);
    const Json& set = detail::member(heads, std::to_string(i + 1).c_str(), "unmeasured_heads_m");
    for (std::size_t u = 0; u < lay.n_unmeasured; ++u) {
      const std::string& id = pb.network().inner_node(pb.sensors().unmeasured()[u]).id;
      x(static_cast<Eigen::Index>(lay.head_offset(i) + u)) =
          detail::number(detail::member(set, id.c_str(), where), where + "." + id);
    }
  }
  return x;
}

inline Json result_to_json(const CalibrationProblem& pb, const CalibrationResult& r) {
  Json j = decision_to_json(pb, r.x);
  j["merit"] = r.merit;
  j["norm"] = to_string(r.norm);
  j["feasible"] = r.feasible;
  j["converged"] = r.converged;
  j["seed"] = r.seed;
  j["residual"] = detail::to_std(r.f);
  Json trace = Json::array();
  for (const OuterRecord& rec : r.trace) {
    Json t = {{"outer_iter", rec.outer_iteration},
              {"x0", detail::to_std(rec.x0)},
              {"x", detail::to_std(rec.x)},
              {"v", rec.merit},
              {"within_bounds", rec.within_bounds},
              {"buffered", rec.buffered},
              {"newton_iterations", rec.newton_iterations}};
    if (!rec.failure.empty()) t["failure"] = rec.failure;
    trace.push_back(std::move(t));
  }
  j["trace"] = std::move(trace);
  Json regime = Json::array();
  for (const RegimeFlag& f : r.non_turbulent) regime.push_back({{"pipe", f.pipe_id}, {"reynolds", f.reynolds}});
  j["non_turbulent"] = std::move(regime);
  j["warnings"] = r.warnings;
  return j;
}

// ---------------------------------------------------------------- CSV

inline std::string fixed(double v, int decimals) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::string full(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Outer-iteration table: one row per start value and one per result, with
/// roughness in mm, heads in m and the merit scaled by 1e5.
inline std::string trace_csv(const CalibrationProblem& pb, const CalibrationResult& r) {
  const DecisionLayout& lay = pb.layout();
  std::ostringstream out;
  out << "outer_iter,point";
  for (std::size_t p = 0; p < lay.n_pipes; ++p) out << ",eps_" << pb.network().pipe(p).id << "_mm";
  for (std::size_t i = 0; i < lay.n_sets; ++i)
    for (std::size_t u : pb.sensors().unmeasured()) out << ",h_" << pb.network().inner_node(u).id << "_" << (i + 1) << "_m";
  out << ",v_1e5\n";
  auto row = [&](int outer, const char* kind, const Vector& x, double v) {
    out << outer << ',' << kind;
    for (std::size_t p = 0; p < lay.n_pipes; ++p) out << ',' << fixed(x(static_cast<Eigen::Index>(p)) * 1e3, 4);
    for (auto j = static_cast<Eigen::Index>(lay.n_pipes); j < x.size(); ++j) out << ',' << fixed(x(j), 4);
    out << ',' << fixed(v * 1e5, 4) << '\n';
  };
  for (const OuterRecord& rec : r.trace) {
    row(rec.outer_iteration, "x0", rec.x0, merit(residual(pb, rec.x0), r.norm));
    row(rec.outer_iteration, "x", rec.x, rec.merit);
  }
  return out.str();
}

inline std::string scan_csv(const ScanResult& s) {
  std::ostringstream out;
  out << "a,b,v_L1,v_L2,v_Linf\n";
  for (const ScanPoint& p : s.points)
    out << full(p.a) << ',' << full(p.b) << ',' << full(p.l1) << ',' << full(p.l2) << ',' << full(p.linf) << '\n';
  return out.str();
}

}  // namespace hydrocal::io
