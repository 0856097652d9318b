#pragma once

// Water-distribution network description: inner (junction) nodes, fixed-head
// source nodes and the pipes connecting them. Everything downstream indexes
// nodes and pipes in the order they were supplied here.

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hydrocal/error.hpp"

namespace hydrocal {

/// Water at 18 degC by default.
struct FluidProperties {
  double density = 998.5986;      // kg/m^3
  double viscosity = 1.0526e-3;   // dynamic, Pa s
  double gravity = 9.81;          // m/s^2
};

enum class NodeKind { inner, source };

struct Node {
  std::string id;
  NodeKind kind = NodeKind::inner;
  double elevation = 0.0;  // m; ignored for sources, whose head already includes it
};

struct Pipe {
  std::string id;
  std::string from;
  std::string to;
  double length = 0.0;              // m
  double diameter = 0.0;            // m
  std::optional<double> roughness;  // m
  double minor_loss = 0.0;          // s^2/m^5, must stay zero
};

/// Where a pipe endpoint lands: an inner node index or a source index.
struct Endpoint {
  NodeKind kind;
  std::size_t index;
};

/// Immutable network graph. The constructor only rejects descriptions that
/// cannot be indexed (duplicate ids, dangling pipe endpoints); the physical
/// admissibility checks live in validate_network().
class Network {
 public:
  Network() = default;

  Network(FluidProperties fluid, std::vector<Node> nodes, std::vector<Pipe> pipes)
      : fluid_(fluid), nodes_(std::move(nodes)), pipes_(std::move(pipes)) {
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
      const Node& node = nodes_[n];
      if (node.id.empty()) throw NetworkError("node with empty id");
      Endpoint ep{node.kind, node.kind == NodeKind::inner ? inner_.size() : sources_.size()};
      if (!lookup_.emplace(node.id, ep).second)
        throw NetworkError("duplicate node id '" + node.id + "'");
      (node.kind == NodeKind::inner ? inner_ : sources_).push_back(n);
    }
    std::unordered_map<std::string, std::size_t> pipe_ids;
    for (std::size_t p = 0; p < pipes_.size(); ++p) {
      const Pipe& pipe = pipes_[p];
      if (!pipe_ids.emplace(pipe.id, p).second)
        throw NetworkError("duplicate pipe id '" + pipe.id + "'");
      for (const std::string* end : {&pipe.from, &pipe.to})
        if (!lookup_.count(*end))
          throw NetworkError("pipe '" + pipe.id + "' references unknown node '" + *end + "'");
    }
    pipe_lookup_ = std::move(pipe_ids);
  }

  const FluidProperties& fluid() const noexcept { return fluid_; }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  const std::vector<Pipe>& pipes() const noexcept { return pipes_; }

  std::size_t n_inner() const noexcept { return inner_.size(); }
  std::size_t n_sources() const noexcept { return sources_.size(); }
  std::size_t n_pipes() const noexcept { return pipes_.size(); }

  /// k-th inner node in file order.
  const Node& inner_node(std::size_t k) const { return nodes_.at(inner_.at(k)); }
  const Node& source_node(std::size_t s) const { return nodes_.at(sources_.at(s)); }
  const Pipe& pipe(std::size_t p) const { return pipes_.at(p); }

  std::optional<Endpoint> find_node(const std::string& id) const {
    auto it = lookup_.find(id);
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }

  Endpoint endpoint(const std::string& id) const {
    auto ep = find_node(id);
    if (!ep) throw NetworkError("unknown node '" + id + "'");
    return *ep;
  }

  std::optional<std::size_t> find_pipe(const std::string& id) const {
    auto it = pipe_lookup_.find(id);
    if (it == pipe_lookup_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t inner_index(const std::string& id) const {
    Endpoint ep = endpoint(id);
    if (ep.kind != NodeKind::inner) throw NetworkError("node '" + id + "' is a source");
    return ep.index;
  }

  std::size_t source_index(const std::string& id) const {
    Endpoint ep = endpoint(id);
    if (ep.kind != NodeKind::source) throw NetworkError("node '" + id + "' is not a source");
    return ep.index;
  }

  /// Elevations of the inner nodes, in inner-node order.
  std::vector<double> elevations() const {
    std::vector<double> z;
    z.reserve(inner_.size());
    for (std::size_t n : inner_) z.push_back(nodes_[n].elevation);
    return z;
  }

  bool all_roughness_set() const noexcept {
    for (const Pipe& p : pipes_)
      if (!p.roughness) return false;
    return true;
  }

  /// Copy of the network with every pipe roughness replaced.
  Network with_roughness(const std::vector<double>& roughness) const {
    if (roughness.size() != pipes_.size())
      throw DimensionError("roughness vector has " + std::to_string(roughness.size()) +
                           " entries, network has " + std::to_string(pipes_.size()) + " pipes");
    std::vector<Pipe> pipes = pipes_;
    for (std::size_t p = 0; p < pipes.size(); ++p) pipes[p].roughness = roughness[p];
    return Network(fluid_, nodes_, std::move(pipes));
  }

 private:
  FluidProperties fluid_;
  std::vector<Node> nodes_;
  std::vector<Pipe> pipes_;
  std::vector<std::size_t> inner_;
  std::vector<std::size_t> sources_;
  std::unordered_map<std::string, Endpoint> lookup_;
  std::unordered_map<std::string, std::size_t> pipe_lookup_;
};

struct Violation {
  std::string code;  // "self-loop", "disconnected", "no-source", ...
  std::string message;
};

/// Diagnostics for a structurally indexable network. An empty result means
/// the graph is connected, loop-free, has a source, and every pipe has
/// admissible geometry.
inline std::vector<Violation> validate_network(const Network& net) {
  std::vector<Violation> out;
  const FluidProperties& fl = net.fluid();
  if (!(fl.density > 0.0) || !(fl.viscosity > 0.0) || !(fl.gravity > 0.0))
    out.push_back({"fluid", "fluid density, viscosity and gravity must be positive"});
  if (net.n_sources() == 0) out.push_back({"no-source", "network has no source node"});
  if (net.n_inner() == 0) out.push_back({"no-inner", "network has no inner node"});

  const auto& nodes = net.nodes();
  std::unordered_map<std::string, std::size_t> node_pos;
  for (std::size_t n = 0; n < nodes.size(); ++n) node_pos.emplace(nodes[n].id, n);

  // Union-find over all nodes for connectivity.
  std::vector<std::size_t> parent(nodes.size());
  for (std::size_t n = 0; n < parent.size(); ++n) parent[n] = n;
  auto root = [&](std::size_t n) {
    while (parent[n] != n) n = parent[n] = parent[parent[n]];
    return n;
  };

  for (const Pipe& p : net.pipes()) {
    if (p.from == p.to)
      out.push_back({"self-loop", "pipe '" + p.id + "' starts and ends at node '" + p.from + "'"});
    if (!(p.length > 0.0)) out.push_back({"geometry", "pipe '" + p.id + "' has non-positive length"});
    if (!(p.diameter > 0.0))
      out.push_back({"geometry", "pipe '" + p.id + "' has non-positive diameter"});
    if (p.roughness && !(*p.roughness >= 0.0))
      out.push_back({"roughness", "pipe '" + p.id + "' has negative roughness"});
    if (p.minor_loss != 0.0)
      out.push_back({"minor-loss", "pipe '" + p.id + "' has a non-zero minor-loss coefficient"});
    parent[root(node_pos.at(p.from))] = root(node_pos.at(p.to));
  }

  if (!nodes.empty()) {
    const std::size_t r0 = root(0);
    std::vector<std::string> cut;
    for (std::size_t n = 1; n < nodes.size(); ++n)
      if (root(n) != r0) cut.push_back(nodes[n].id);
    if (!cut.empty()) {
      std::string msg = "graph is disconnected; unreachable from '" + nodes[0].id + "':";
      for (const auto& id : cut) msg += " " + id;
      out.push_back({"disconnected", msg});
    }
  }
  return out;
}

}  // namespace hydrocal
