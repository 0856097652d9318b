#pragma once

// Integer structure matrices of a network: node-pipe incidence A, source
// incidence C_s, a cycle basis S with S*A^T = 0, and the sensor selectors.
// All of them are kept as exact integers.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

#include "hydrocal/error.hpp"
#include "hydrocal/network.hpp"

namespace hydrocal {

using IntMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

struct TopologyMatrices {
  IntMatrix incidence;         // A, n_j x n_l: +1 where a pipe flows into an inner node
  IntMatrix cycles;            // S, (n_l - n_j) x n_l
  IntMatrix source_incidence;  // C_s, n_l x n_s: +1 where a pipe leaves a source
};

inline void require_valid(const Network& net) {
  auto v = validate_network(net);
  if (!v.empty()) throw NetworkError("invalid network: " + v.front().message);
}

/// Fills A and C_s; S is left empty.
inline TopologyMatrices build_incidence(const Network& net) {
  require_valid(net);
  const auto nj = static_cast<Eigen::Index>(net.n_inner());
  const auto nl = static_cast<Eigen::Index>(net.n_pipes());
  const auto ns = static_cast<Eigen::Index>(net.n_sources());
  TopologyMatrices t;
  t.incidence = IntMatrix::Zero(nj, nl);
  t.source_incidence = IntMatrix::Zero(nl, ns);
  for (Eigen::Index p = 0; p < nl; ++p) {
    const Pipe& pipe = net.pipe(static_cast<std::size_t>(p));
    const Endpoint from = net.endpoint(pipe.from);
    const Endpoint to = net.endpoint(pipe.to);
    if (from.kind == NodeKind::inner)
      t.incidence(static_cast<Eigen::Index>(from.index), p) = -1;
    else
      t.source_incidence(p, static_cast<Eigen::Index>(from.index)) = 1;
    if (to.kind == NodeKind::inner)
      t.incidence(static_cast<Eigen::Index>(to.index), p) = 1;
    else
      t.source_incidence(p, static_cast<Eigen::Index>(to.index)) = -1;
  }
  return t;
}

/// Fundamental cycle basis. All sources are merged into one super-node, a BFS
/// spanning tree is grown over (inner nodes + super-node) and every non-tree
/// pipe closes one cycle. A non-tree pipe whose path runs between two sources
/// yields the source-to-source pseudo-cycle. Row signs follow the pipe
/// direction: +1 when the cycle traverses the pipe from its `from` end.
inline IntMatrix build_cycle_basis(const Network& net) {
  require_valid(net);
  const std::size_t nj = net.n_inner();
  const std::size_t nl = net.n_pipes();
  const std::size_t super = nj;  // vertex id of the merged sources

  auto vertex = [&](const std::string& id) {
    Endpoint ep = net.endpoint(id);
    return ep.kind == NodeKind::inner ? ep.index : super;
  };
  std::vector<std::size_t> tail(nl), head(nl);
  std::vector<std::vector<std::size_t>> adj(nj + 1);
  for (std::size_t p = 0; p < nl; ++p) {
    tail[p] = vertex(net.pipe(p).from);
    head[p] = vertex(net.pipe(p).to);
    adj[tail[p]].push_back(p);
    if (head[p] != tail[p]) adj[head[p]].push_back(p);
  }

  constexpr std::size_t none = static_cast<std::size_t>(-1);
  std::vector<std::size_t> parent_pipe(nj + 1, none), depth(nj + 1, 0);
  std::vector<bool> seen(nj + 1, false), in_tree(nl, false);
  std::deque<std::size_t> queue{super};
  seen[super] = true;
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (std::size_t p : adj[u]) {
      const std::size_t w = tail[p] == u ? head[p] : tail[p];
      if (seen[w]) continue;
      seen[w] = true;
      in_tree[p] = true;
      parent_pipe[w] = p;
      depth[w] = depth[u] + 1;
      queue.push_back(w);
    }
  }

  const auto rows = static_cast<Eigen::Index>(nl - nj);
  IntMatrix s = IntMatrix::Zero(rows, static_cast<Eigen::Index>(nl));
  Eigen::Index row = 0;
  for (std::size_t p = 0; p < nl; ++p) {
    if (in_tree[p]) continue;
    // Traverse p forward (tail -> head), then walk back from head to tail
    // through the tree.
    s(row, static_cast<Eigen::Index>(p)) += 1;
    std::size_t a = head[p];  // walking forward from here
    std::size_t b = tail[p];  // path must end here
    while (a != b) {
      if (depth[a] >= depth[b]) {
        const std::size_t q = parent_pipe[a];
        const std::size_t up = tail[q] == a ? head[q] : tail[q];
        // moving a -> up along q
        s(row, static_cast<Eigen::Index>(q)) += (tail[q] == a) ? 1 : -1;
        a = up;
      } else {
        const std::size_t q = parent_pipe[b];
        const std::size_t up = tail[q] == b ? head[q] : tail[q];
        // path continues up -> b along q
        s(row, static_cast<Eigen::Index>(q)) += (tail[q] == up) ? 1 : -1;
        b = up;
      }
    }
    ++row;
  }
  return s;
}

/// A, C_s and S together.
inline TopologyMatrices build_topology(const Network& net) {
  TopologyMatrices t = build_incidence(net);
  t.cycles = build_cycle_basis(net);
  return t;
}

/// Exact rank of an integer matrix via fraction-free (Bareiss) elimination.
inline Eigen::Index integer_rank(const IntMatrix& m) {
  using Wide = Eigen::Matrix<__int128, Eigen::Dynamic, Eigen::Dynamic>;
  Wide a = m.cast<__int128>();
  const Eigen::Index rows = a.rows(), cols = a.cols();
  Eigen::Index rank = 0;
  __int128 prev = 1;
  for (Eigen::Index c = 0; c < cols && rank < rows; ++c) {
    Eigen::Index piv = rank;
    while (piv < rows && a(piv, c) == 0) ++piv;
    if (piv == rows) continue;
    a.row(piv).swap(a.row(rank));
    for (Eigen::Index r = rank + 1; r < rows; ++r) {
      for (Eigen::Index k = c + 1; k < cols; ++k)
        a(r, k) = (a(rank, c) * a(r, k) - a(r, c) * a(rank, k)) / prev;
      a(r, c) = 0;
    }
    prev = a(rank, c);
    ++rank;
  }
  return rank;
}

/// Number of measurement sets at which equations (n_m * n_j) overtake
/// unknowns (n_l + n_m * (n_j - n_p)): ceil(n_pipes / n_sensors).
inline std::size_t min_measurement_sets(std::size_t n_pipes, std::size_t n_sensors) {
  if (n_sensors == 0) throw DimensionError("at least one pressure sensor is required");
  return (n_pipes + n_sensors - 1) / n_sensors;
}

/// Pressure-sensor placement: measured inner nodes P (in the given order) and
/// their complement (in inner-node order).
class SensorConfig {
 public:
  SensorConfig() = default;

  SensorConfig(const Network& net, const std::vector<std::string>& measured_ids) {
    const std::size_t nj = net.n_inner();
    std::vector<bool> hit(nj, false);
    for (const auto& id : measured_ids) {
      auto ep = net.find_node(id);
      if (!ep) throw NetworkError("sensor at unknown node '" + id + "'");
      if (ep->kind != NodeKind::inner) throw NetworkError("sensor at source node '" + id + "'");
      if (hit[ep->index]) throw NetworkError("duplicate sensor at node '" + id + "'");
      hit[ep->index] = true;
      measured_.push_back(ep->index);
    }
    if (measured_.empty()) throw NetworkError("no pressure sensors configured");
    if (measured_.size() >= nj)
      throw NetworkError("every inner node is sensed (n_p = n_j); at least one must be unmeasured");
    for (std::size_t k = 0; k < nj; ++k)
      if (!hit[k]) unmeasured_.push_back(k);

    const auto nje = static_cast<Eigen::Index>(nj);
    selector_ = IntMatrix::Zero(static_cast<Eigen::Index>(measured_.size()), nje);
    complement_ = IntMatrix::Zero(static_cast<Eigen::Index>(unmeasured_.size()), nje);
    for (std::size_t r = 0; r < measured_.size(); ++r)
      selector_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(measured_[r])) = 1;
    for (std::size_t r = 0; r < unmeasured_.size(); ++r)
      complement_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(unmeasured_[r])) = 1;
  }

  std::size_t n_measured() const noexcept { return measured_.size(); }
  std::size_t n_unmeasured() const noexcept { return unmeasured_.size(); }
  const std::vector<std::size_t>& measured() const noexcept { return measured_; }
  const std::vector<std::size_t>& unmeasured() const noexcept { return unmeasured_; }
  const IntMatrix& selector() const noexcept { return selector_; }        // C_h
  const IntMatrix& complement() const noexcept { return complement_; }    // C_h bar

 private:
  std::vector<std::size_t> measured_;
  std::vector<std::size_t> unmeasured_;
  IntMatrix selector_;
  IntMatrix complement_;
};

}  // namespace hydrocal
