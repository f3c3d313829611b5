#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace heatlab {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

enum class ErrorKind {
  invalid_argument,
  dimension_mismatch,
  unsupported,
  non_convergence,
  not_applicable,
  disconnected,
  truncation,
  config,
  io
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::dimension_mismatch: return "dimension_mismatch";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::non_convergence: return "non_convergence";
    case ErrorKind::not_applicable: return "not_applicable";
    case ErrorKind::disconnected: return "disconnected";
    case ErrorKind::truncation: return "truncation";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

// One undirected edge. `c` is the conductance entering both L and Gamma,
// `length` is the chart length used by graph distances.
struct Edge {
  Index i = 0;
  Index j = 0;
  double c = 0.0;
  double length = 0.0;
};

struct Neighbor {
  Index node;
  Index edge;
};

// Finite stand-in for (M, mu, L). Built once through make_model(), then
// treated as immutable.
struct DiscretizedModel {
  std::string id;
  int chart_dim = 0;
  Mat nodes;                  // N x chart_dim
  Vec mu;                     // dual-cell measure
  SpMat L;                    // acts on fields: (Lf)_i = sum_j L_ij f_j
  std::vector<Edge> edges;    // i < j
  std::vector<char> boundary; // truncation boundary (lost edges)
  std::vector<char> trusted;  // nodes where pointwise second-order forms are reliable
  double mesh_h = 0.0;        // characteristic spacing
  int mesh_order = 2;         // expected consistency order of pointwise stencils
  std::vector<std::vector<Neighbor>> adjacency;

  Index size() const { return mu.size(); }
  double total_measure() const { return mu.sum(); }
  double integrate(const Vec& f) const { return mu.dot(f); }
  double inner(const Vec& f, const Vec& g) const { return (mu.array() * f.array() * g.array()).sum(); }
  double max_edge_length() const {
    double m = 0.0;
    for (const auto& e : edges) m = std::max(m, e.length);
    return m;
  }
  bool has_boundary() const {
    return std::any_of(boundary.begin(), boundary.end(), [](char b) { return b != 0; });
  }
};

inline SpMat assemble_graph_laplacian(const Vec& mu, const std::vector<Edge>& edges) {
  const Index n = mu.size();
  std::vector<Triplet> trip;
  trip.reserve(4 * edges.size());
  Vec deg = Vec::Zero(n);
  for (const auto& e : edges) {
    trip.emplace_back(e.i, e.j, e.c / mu[e.i]);
    trip.emplace_back(e.j, e.i, e.c / mu[e.j]);
    deg[e.i] += e.c;
    deg[e.j] += e.c;
  }
  for (Index i = 0; i < n; ++i) trip.emplace_back(i, i, -deg[i] / mu[i]);
  SpMat L(n, n);
  L.setFromTriplets(trip.begin(), trip.end());
  L.makeCompressed();
  return L;
}

inline std::vector<std::vector<Neighbor>> build_adjacency(Index n, const std::vector<Edge>& edges) {
  std::vector<std::vector<Neighbor>> adj(static_cast<size_t>(n));
  for (size_t k = 0; k < edges.size(); ++k) {
    adj[edges[k].i].push_back({edges[k].j, static_cast<Index>(k)});
    adj[edges[k].j].push_back({edges[k].i, static_cast<Index>(k)});
  }
  return adj;
}

// Assembles L from the edge list. Pass `L_override` only to build deliberately
// inconsistent models (negative controls).
inline DiscretizedModel make_model(std::string id, Mat nodes, Vec mu, std::vector<Edge> edges,
                                   std::vector<char> boundary = {}, std::vector<char> trusted = {},
                                   double mesh_h = 0.0, int mesh_order = 2,
                                   const SpMat* L_override = nullptr) {
  const Index n = mu.size();
  require(n > 0, ErrorKind::invalid_argument, "model has no nodes");
  require(nodes.rows() == n, ErrorKind::dimension_mismatch, "node table and measure disagree in length");
  for (Index i = 0; i < n; ++i)
    require(mu[i] > 0.0 && std::isfinite(mu[i]), ErrorKind::invalid_argument, "measure weights must be positive");
  for (auto& e : edges) {
    require(e.i != e.j && e.i >= 0 && e.j >= 0 && e.i < n && e.j < n, ErrorKind::invalid_argument,
            "edge endpoint out of range");
    require(e.c > 0.0, ErrorKind::invalid_argument, "edge conductance must be positive");
    if (e.i > e.j) std::swap(e.i, e.j);
  }
  DiscretizedModel m;
  m.id = std::move(id);
  m.chart_dim = static_cast<int>(nodes.cols());
  m.nodes = std::move(nodes);
  m.mu = std::move(mu);
  m.edges = std::move(edges);
  m.L = L_override ? *L_override : assemble_graph_laplacian(m.mu, m.edges);
  m.boundary = boundary.empty() ? std::vector<char>(static_cast<size_t>(n), 0) : std::move(boundary);
  m.trusted = trusted.empty() ? std::vector<char>(static_cast<size_t>(n), 1) : std::move(trusted);
  require(static_cast<Index>(m.boundary.size()) == n && static_cast<Index>(m.trusted.size()) == n,
          ErrorKind::dimension_mismatch, "mask length differs from node count");
  m.mesh_h = mesh_h > 0.0 ? mesh_h : m.max_edge_length();
  m.mesh_order = mesh_order;
  m.adjacency = build_adjacency(n, m.edges);
  return m;
}

// One real value per node, tagged with the model it belongs to.
class ScalarField {
 public:
  ScalarField() = default;
  ScalarField(std::string model_id, Vec values) : model_id_(std::move(model_id)), values_(std::move(values)) {
    for (Index i = 0; i < values_.size(); ++i)
      require(std::isfinite(values_[i]), ErrorKind::invalid_argument, "field has a non-finite entry");
  }
  ScalarField(const DiscretizedModel& m, Vec values) : ScalarField(m.id, std::move(values)) {
    require(values_.size() == m.size(), ErrorKind::dimension_mismatch,
            "field length " + std::to_string(values_.size()) + " vs model size " + std::to_string(m.size()));
  }
  static ScalarField constant(const DiscretizedModel& m, double v) { return {m, Vec::Constant(m.size(), v)}; }

  const std::string& model_id() const { return model_id_; }
  const Vec& values() const { return values_; }
  Index size() const { return values_.size(); }
  double operator[](Index i) const { return values_[i]; }

 private:
  std::string model_id_;
  Vec values_;
};

inline void check_belongs(const DiscretizedModel& m, const ScalarField& f) {
  require(f.size() == m.size() && f.model_id() == m.id, ErrorKind::dimension_mismatch,
          "field of model '" + f.model_id() + "' (" + std::to_string(f.size()) + " nodes) used on model '" + m.id +
              "' (" + std::to_string(m.size()) + " nodes)");
}

struct CDParameters {
  double rho1 = 0.0;
  double rho2 = 1.0;
  double kappa = 0.0;
  double n = 1.0;

  void validate() const {
    require(rho2 > 0.0, ErrorKind::invalid_argument, "rho2 must be positive");
    require(kappa >= 0.0, ErrorKind::invalid_argument, "kappa must be nonnegative");
    require(n > 0.0, ErrorKind::invalid_argument, "dimension n must be positive");
  }
};

// tol(scale) = abs + rel * h^mesh_order * scale
struct Tolerance {
  double abs = 1e-10;
  double rel = 0.0;
  int mesh_order = 0;

  double rel_at(double h) const { return rel * (mesh_order == 0 ? 1.0 : std::pow(h, mesh_order)); }
  double bound(double scale, double h) const { return abs + rel_at(h) * scale; }
  Tolerance scaled(double s) const { return {abs * s, rel * s, mesh_order}; }
};

// ---------------------------------------------------------------- masks

inline std::vector<int> hop_distance(const DiscretizedModel& m, const std::vector<char>& seeds) {
  const Index n = m.size();
  std::vector<int> hop(static_cast<size_t>(n), std::numeric_limits<int>::max());
  std::deque<Index> q;
  for (Index i = 0; i < n; ++i)
    if (seeds[i]) {
      hop[i] = 0;
      q.push_back(i);
    }
  while (!q.empty()) {
    Index i = q.front();
    q.pop_front();
    for (const auto& nb : m.adjacency[i])
      if (hop[nb.node] > hop[i] + 1) {
        hop[nb.node] = hop[i] + 1;
        q.push_back(nb.node);
      }
  }
  return hop;
}

inline std::vector<char> untrusted_or_boundary(const DiscretizedModel& m) {
  std::vector<char> bad(static_cast<size_t>(m.size()));
  for (Index i = 0; i < m.size(); ++i) bad[i] = m.boundary[i] || !m.trusted[i];
  return bad;
}

// Nodes at least `hops` graph steps away from the boundary and from untrusted nodes.
inline std::vector<char> deep_interior(const DiscretizedModel& m, int hops = 2) {
  auto hop = hop_distance(m, untrusted_or_boundary(m));
  std::vector<char> mask(static_cast<size_t>(m.size()));
  for (Index i = 0; i < m.size(); ++i) mask[i] = hop[i] >= hops;
  return mask;
}

// Multi-source chart-length distance to the seed set (infinity when no seeds).
inline Vec distance_to_set(const DiscretizedModel& m, const std::vector<char>& seeds) {
  const Index n = m.size();
  Vec d = Vec::Constant(n, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, Index>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  for (Index i = 0; i < n; ++i)
    if (seeds[i]) {
      d[i] = 0.0;
      pq.emplace(0.0, i);
    }
  while (!pq.empty()) {
    auto [di, i] = pq.top();
    pq.pop();
    if (di > d[i]) continue;
    for (const auto& nb : m.adjacency[i]) {
      double nd = di + m.edges[nb.edge].length;
      if (nd < d[nb.node]) {
        d[nb.node] = nd;
        pq.emplace(nd, nb.node);
      }
    }
  }
  return d;
}

// Deep-interior nodes whose chart distance to the truncation boundary is at least `radius`.
inline std::vector<char> safe_interior(const DiscretizedModel& m, double radius, int hops = 2) {
  auto mask = deep_interior(m, hops);
  if (!m.has_boundary()) return mask;
  Vec d = distance_to_set(m, m.boundary);
  for (Index i = 0; i < m.size(); ++i) mask[i] = mask[i] && d[i] >= radius;
  return mask;
}

inline Index mask_count(const std::vector<char>& mask) {
  return std::count_if(mask.begin(), mask.end(), [](char c) { return c != 0; });
}

inline std::vector<Index> mask_indices(const std::vector<char>& mask) {
  std::vector<Index> idx;
  for (size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) idx.push_back(static_cast<Index>(i));
  return idx;
}

// Node nearest to a chart point.
inline Index nearest_node(const DiscretizedModel& m, const Eigen::RowVectorXd& p) {
  Index best = 0;
  (m.nodes.rowwise() - p).rowwise().squaredNorm().minCoeff(&best);
  return best;
}

// 64-bit FNV-1a over the bytes that define the operator.
inline std::uint64_t fnv1a(const void* data, size_t len, std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t k = 0; k < len; ++k) {
    h ^= p[k];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t model_hash(const DiscretizedModel& m) {
  std::uint64_t h = fnv1a(m.id.data(), m.id.size());
  h = fnv1a(m.mu.data(), sizeof(double) * static_cast<size_t>(m.mu.size()), h);
  for (Index r = 0; r < m.L.outerSize(); ++r)
    for (SpMat::InnerIterator it(m.L, r); it; ++it) {
      Index c = it.col();
      double v = it.value();
      h = fnv1a(&r, sizeof r, h);
      h = fnv1a(&c, sizeof c, h);
      h = fnv1a(&v, sizeof v, h);
    }
  return h;
}

}  // namespace heatlab
