#pragma once

#include "heatlab/models.hpp"
#include "heatlab/report.hpp"
#include "heatlab/axioms.hpp"

#include <Eigen/SparseCholesky>

namespace heatlab {

enum class DistanceMethod { graph, dual, oracle, subunit };

inline const char* to_string(DistanceMethod m) {
  switch (m) {
    case DistanceMethod::graph: return "graph";
    case DistanceMethod::dual: return "dual";
    case DistanceMethod::oracle: return "oracle";
    case DistanceMethod::subunit: return "subunit";
  }
  return "unknown";
}

struct DistanceField {
  Index source = 0;
  Vec values;
  DistanceMethod method = DistanceMethod::graph;
  Json metadata = Json::object();
};

// Dijkstra over the model edges with their chart lengths. On the Heisenberg
// lattice the edge list is horizontal only, so paths are horizontal.
inline DistanceField graph_distance(const DiscretizedModel& m, Index source) {
  require(source >= 0 && source < m.size(), ErrorKind::invalid_argument, "source out of range");
  std::vector<char> seed(static_cast<size_t>(m.size()), 0);
  seed[source] = 1;
  DistanceField d{source, distance_to_set(m, seed), DistanceMethod::graph, Json::object()};
  for (Index i = 0; i < m.size(); ++i)
    require(std::isfinite(d.values[i]), ErrorKind::disconnected, "graph is disconnected");
  return d;
}

inline DistanceField oracle_distance(const BuiltModel& b, Index source) {
  require(static_cast<bool>(b.oracle.exact_distance), ErrorKind::not_applicable, "oracle has no distance");
  const auto& m = b.model;
  DistanceField d{source, Vec(m.size()), DistanceMethod::oracle, Json::object()};
  ChartPoint x = m.nodes.row(source);
  for (Index i = 0; i < m.size(); ++i) d.values[i] = b.oracle.exact_distance(x, m.nodes.row(i));
  return d;
}

// Largest graph/oracle ratio over random pairs; annotation only.
inline double calibrate_anisotropy(const BuiltModel& b, int pairs = 100, std::uint64_t seed = 0) {
  if (!b.oracle.exact_distance) return std::numeric_limits<double>::quiet_NaN();
  const auto& m = b.model;
  Rng rng(seed);
  std::uniform_int_distribution<Index> pick(0, m.size() - 1);
  double worst = 1.0;
  for (int k = 0; k < pairs; ++k) {
    Index s = pick(rng);
    Index t = pick(rng);
    if (s == t) continue;
    double g = graph_distance(m, s).values[t];
    double o = b.oracle.exact_distance(m.nodes.row(s), m.nodes.row(t));
    if (o > 4 * m.mesh_h) worst = std::max(worst, g / o);
  }
  return worst;
}

// ------------------------------------------------------------ dual distance

struct DualOptions {
  int max_iter = 2000;
  double rel_tol = 1e-7;
  double rho = 1.0;
};

struct DualResult {
  double bound = 0.0;    // certified: the field below is feasible
  ScalarField field;     // max_i Gamma(f)_i <= 1
  int iterations = 0;
  double max_gamma = 0.0;
};

namespace detail {

// Rows: one per (node, incident edge), weight sqrt(c / (2 mu_i)), so that
// Gamma(f)_i is the squared norm of node i's block of G f.
struct GradientBlocks {
  Eigen::SparseMatrix<double> G;
  std::vector<Index> block_start;  // N + 1 offsets
};

inline GradientBlocks gradient_blocks(const DiscretizedModel& m) {
  GradientBlocks gb;
  gb.block_start.assign(static_cast<size_t>(m.size()) + 1, 0);
  std::vector<Triplet> trip;
  Index row = 0;
  for (Index i = 0; i < m.size(); ++i) {
    gb.block_start[i] = row;
    for (const auto& nb : m.adjacency[i]) {
      double w = std::sqrt(m.edges[nb.edge].c / (2.0 * m.mu[i]));
      trip.emplace_back(row, nb.node, w);
      trip.emplace_back(row, i, -w);
      ++row;
    }
  }
  gb.block_start[m.size()] = row;
  gb.G.resize(row, m.size());
  gb.G.setFromTriplets(trip.begin(), trip.end());
  gb.G.makeCompressed();
  return gb;
}

inline double certify_scale(const DiscretizedModel& m, const Vec& f) {
  return 1.0 / std::sqrt(std::max(1.0, gamma_values(m, f).maxCoeff()));
}

}  // namespace detail

// Maximizes f(x) - f(y) subject to Gamma(f) <= 1 at every node by ADMM on
// the splitting z = G f, with each node's block projected exactly onto the
// unit ball. Every iterate is rescaled to feasibility, so the returned value
// is a certified lower bound whatever the budget.
inline DualResult dual_distance(const DiscretizedModel& m, Index x, Index y, const DualOptions& opt = {}) {
  require(x >= 0 && y >= 0 && x < m.size() && y < m.size(), ErrorKind::invalid_argument, "node index out of range");
  DualResult res;
  if (x == y) {
    res.field = ScalarField::constant(m, 0.0);
    return res;
  }
  const Index N = m.size();
  auto gb = detail::gradient_blocks(m);
  // drop the pinned column y
  std::vector<Index> col(static_cast<size_t>(N));
  for (Index i = 0, c = 0; i < N; ++i) col[i] = i == y ? -1 : c++;
  std::vector<Triplet> trip;
  for (Index r = 0; r < gb.G.outerSize(); ++r)
    for (Eigen::SparseMatrix<double>::InnerIterator it(gb.G, r); it; ++it)
      if (col[it.col()] >= 0) trip.emplace_back(it.row(), col[it.col()], it.value());
  Eigen::SparseMatrix<double> Gr(gb.G.rows(), N - 1);
  Gr.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseMatrix<double> K = Gr.transpose() * Gr;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(K);
  require(ldlt.info() == Eigen::Success, ErrorKind::disconnected, "dual system singular (disconnected graph?)");

  auto expand = [&](const Vec& fr) {
    Vec f(N);
    for (Index i = 0; i < N; ++i) f[i] = col[i] < 0 ? 0.0 : fr[col[i]];
    return f;
  };
  auto project = [&](Vec& v) {
    for (Index i = 0; i < N; ++i) {
      Index b = gb.block_start[i], e = gb.block_start[i + 1];
      double nrm = v.segment(b, e - b).norm();
      if (nrm > 1.0) v.segment(b, e - b) /= nrm;
    }
  };

  // warm start from the feasible rescaled graph distance
  Vec f0 = graph_distance(m, y).values;
  f0 *= detail::certify_scale(m, f0);
  Vec z = gb.G * f0;
  Vec u = Vec::Zero(z.size());
  double rho = opt.rho;
  Vec ex = Vec::Zero(N - 1);
  ex[col[x]] = 1.0;

  Vec best = f0;
  double best_bound = f0[x] - f0[y];
  double last_check = best_bound;
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    Vec fr = ldlt.solve(ex / rho + Gr.transpose() * (z - u));
    Vec f = expand(fr);
    Vec Gf = gb.G * f;
    Vec zold = z;
    z = Gf + u;
    project(z);
    u += Gf - z;
    if (it % 10 == 9) {
      double s = detail::certify_scale(m, f);
      double bound = s * (f[x] - f[y]);
      if (bound > best_bound) {
        best_bound = bound;
        best = s * f;
      }
      double r = (Gf - z).norm();
      double d = rho * (gb.G.transpose() * (z - zold)).norm();
      if (r > 10 * d) {
        rho *= 2;
        u /= 2;
      } else if (d > 10 * r) {
        rho /= 2;
        u *= 2;
      }
      if (it % 200 == 199) {
        if (best_bound - last_check <= opt.rel_tol * std::abs(best_bound)) break;
        last_check = best_bound;
      }
    }
  }
  res.bound = best_bound;
  res.field = ScalarField(m, best);
  res.iterations = it;
  res.max_gamma = gamma_values(m, best).maxCoeff();
  return res;
}

// ------------------------------------------------------------ Heisenberg subunit curves

struct SubunitResult {
  double length = 0.0;         // travel time of the returned unit-speed curve
  double miss = 0.0;           // endpoint miss of the returned curve
  double arc_length = 0.0;     // best circular-arc control (continuum)
  std::vector<double> headings;
};

namespace detail {

inline heisenberg::Point integrate_headings(const std::vector<double>& th, double T) {
  heisenberg::Point p{0, 0, 0};
  double tau = T / static_cast<double>(th.size());
  for (double a : th) p = heisenberg::flow_segment(p, a, tau);
  return p;
}

// Minimum-norm Gauss-Newton / Levenberg-Marquardt on the three endpoint
// equations; returns the final miss.
inline double solve_headings(std::vector<double>& th, double T, const heisenberg::Point& target, int iters = 60) {
  const size_t M = th.size();
  auto residual = [&](const std::vector<double>& a) {
    auto p = integrate_headings(a, T);
    return Eigen::Vector3d(p[0] - target[0], p[1] - target[1], p[2] - target[2]);
  };
  Eigen::Vector3d r = residual(th);
  double lambda = 1e-6;
  for (int k = 0; k < iters && r.norm() > 1e-13; ++k) {
    Eigen::MatrixXd J(3, static_cast<Index>(M));
    for (size_t c = 0; c < M; ++c) {
      auto a = th;
      const double e = 1e-6;
      a[c] += e;
      Eigen::Vector3d rp = residual(a);
      a[c] -= 2 * e;
      Eigen::Vector3d rm = residual(a);
      J.col(static_cast<Index>(c)) = (rp - rm) / (2 * e);
    }
    Eigen::Matrix3d JJ = J * J.transpose();
    bool improved = false;
    for (int tries = 0; tries < 20; ++tries) {
      Eigen::Vector3d w = (JJ + lambda * Eigen::Matrix3d::Identity()).ldlt().solve(r);
      Eigen::VectorXd step = -J.transpose() * w;
      auto a = th;
      for (size_t c = 0; c < M; ++c) a[c] += step[static_cast<Index>(c)];
      Eigen::Vector3d rn = residual(a);
      if (rn.norm() < r.norm()) {
        th = a;
        r = rn;
        lambda = std::max(lambda / 10, 1e-15);
        improved = true;
        break;
      }
      lambda *= 10;
    }
    if (!improved) break;
  }
  return r.norm();
}

}  // namespace detail

// Upper bound on the Carnot-Caratheodory distance from p to q: piecewise
// constant unit-speed horizontal controls on `segments` equal pieces, seeded
// by the optimal circular arc and refined so the endpoint is hit exactly; the
// travel time is then reduced by bisection while the endpoint stays reachable.
inline SubunitResult subunit_distance_heisenberg(const heisenberg::Point& p, const heisenberg::Point& q,
                                                 int segments = 64, double miss_tol = 1e-10) {
  require(segments >= 4, ErrorKind::invalid_argument, "need at least four control segments");
  auto target = heisenberg::relative(p, q);
  auto arc = heisenberg::arc_to(target);
  SubunitResult out;
  out.arc_length = arc.length;
  const double scale = std::max({1.0, std::abs(target[0]), std::abs(target[1]), std::abs(target[2])});
  const size_t M = static_cast<size_t>(segments);
  if (arc.length == 0.0) {
    out.headings.assign(M, 0.0);
    return out;
  }
  auto seed = [&]() {
    std::vector<double> th(M);
    for (size_t k = 0; k < M; ++k) th[k] = arc.heading + arc.turn * (k + 0.5) / static_cast<double>(M);
    return th;
  };
  auto attempt = [&](double T, std::vector<double>& th) {
    th = seed();
    return detail::solve_headings(th, T, target);
  };

  // find a feasible upper length
  double hi = arc.length;
  std::vector<double> th;
  double miss = attempt(hi, th);
  int grow = 0;
  while (miss > miss_tol * scale) {
    require(grow < 40, ErrorKind::non_convergence,
            "subunit optimizer cannot reach the endpoint; raise the control resolution");
    hi *= 1.0 + 0.25 / (static_cast<double>(M) * M) * std::pow(2.0, grow);
    miss = attempt(hi, th);
    ++grow;
  }
  std::vector<double> best = th;
  double best_miss = miss;
  double lo = arc.length;
  if (hi > lo) {
    for (int k = 0; k < 40 && hi - lo > 1e-12 * hi; ++k) {
      double mid = 0.5 * (lo + hi);
      std::vector<double> trial;
      double mm = attempt(mid, trial);
      if (mm <= miss_tol * scale) {
        hi = mid;
        best = trial;
        best_miss = mm;
      } else {
        lo = mid;
      }
    }
  }
  out.length = hi;
  out.miss = best_miss;
  out.headings = best;
  return out;
}

// ------------------------------------------------------------ balls and perimeters

enum class Coverage { sharp, smooth };
enum class PerimeterKind { none, cut, level_set };

struct BallTable {
  Index center = 0;
  std::vector<double> radii;
  std::vector<double> volumes;
  std::vector<double> perimeters;  // empty when not requested
};

// Cut-edge perimeter: sum over edges leaving the set of c_ij * length_ij (the
// dual face area on grids).
inline double discrete_perimeter(const DiscretizedModel& m, const std::vector<char>& in) {
  double p = 0.0;
  for (const auto& e : m.edges)
    if (in[e.i] != in[e.j]) p += e.c * e.length;
  return p;
}

// `cell_dim` sets the smoothing width mu_i^(1/cell_dim) for smooth coverage.
inline BallTable ball_table(const DiscretizedModel& m, const DistanceField& d, std::vector<double> radii,
                            Coverage cov = Coverage::sharp, PerimeterKind per = PerimeterKind::none,
                            double cell_dim = 0.0) {
  require(std::is_sorted(radii.begin(), radii.end()), ErrorKind::invalid_argument, "radii must be ascending");
  BallTable t;
  t.center = d.source;
  t.radii = radii;
  Vec width;
  if (cov == Coverage::smooth) {
    require(cell_dim > 0, ErrorKind::invalid_argument, "smooth coverage needs the cell dimension");
    width = m.mu.array().pow(1.0 / cell_dim);
  }
  for (double r : radii) {
    double v = 0.0;
    for (Index i = 0; i < m.size(); ++i) {
      if (cov == Coverage::sharp)
        v += d.values[i] <= r ? m.mu[i] : 0.0;
      else
        v += m.mu[i] * std::clamp(0.5 + (r - d.values[i]) / width[i], 0.0, 1.0);
    }
    t.volumes.push_back(v);
    if (per != PerimeterKind::none) {
      double p = 0.0;
      for (const auto& e : m.edges) {
        bool a = d.values[e.i] <= r, b = d.values[e.j] <= r;
        if (a == b) continue;
        p += per == PerimeterKind::cut ? e.c * e.length : e.c * std::abs(d.values[e.j] - d.values[e.i]);
      }
      t.perimeters.push_back(p);
    }
  }
  return t;
}

inline std::string to_csv(const BallTable& t) {
  std::ostringstream os;
  os << "r,volume" << (t.perimeters.empty() ? "" : ",perimeter") << '\n';
  for (size_t k = 0; k < t.radii.size(); ++k) {
    os << format_double(t.radii[k]) << ',' << format_double(t.volumes[k]);
    if (!t.perimeters.empty()) os << ',' << format_double(t.perimeters[k]);
    os << '\n';
  }
  return os.str();
}

inline std::string to_csv(const DistanceField& d) {
  std::ostringstream os;
  os << "node,distance\n";
  for (Index i = 0; i < d.values.size(); ++i) os << i << ',' << format_double(d.values[i]) << '\n';
  return os.str();
}

}  // namespace heatlab
