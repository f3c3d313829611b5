#pragma once

#include "heatlab/spectral.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <atomic>
#include <fstream>
#include <optional>
#include <filesystem>
#include <memory>

namespace heatlab {

class HeatSemigroup {
 public:
  virtual ~HeatSemigroup() = default;
  virtual const DiscretizedModel& model() const = 0;
  virtual Vec apply(const Vec& f, double t) const = 0;
  // Sup-norm bound on the error of apply(f, t) from truncation (0 if none).
  virtual double tail_bound(const Vec& f, double t) const = 0;
  virtual std::string name() const = 0;
};

class SpectralSemigroup : public HeatSemigroup {
 public:
  SpectralSemigroup(const DiscretizedModel& m, const SpectralData& sd) : m_(m), sd_(sd) {
    require(sd.model_id == m.id && sd.eigenfields.rows() == m.size(), ErrorKind::dimension_mismatch,
            "spectral data belongs to another model");
    inv_sqrt_mu_max_ = m.mu.cwiseSqrt().cwiseInverse().maxCoeff();
  }
  const DiscretizedModel& model() const override { return m_; }
  const SpectralData& spectral() const { return sd_; }

  Vec coefficients(const Vec& f) const { return sd_.eigenfields.transpose() * m_.mu.cwiseProduct(f); }

  Vec apply(const Vec& f, double t) const override {
    Vec c = coefficients(f);
    for (Index k = 0; k < c.size(); ++k) c[k] *= std::exp(-sd_.eigenvalues[k] * t);
    return sd_.eigenfields * c;
  }

  // |omitted part|(x) <= exp(-lambda_last t) ||f||_2 / sqrt(mu_x)
  double tail_bound(const Vec& f, double t) const override {
    if (sd_.count() == m_.size()) return 0.0;
    return std::exp(-sd_.eigenvalues[sd_.count() - 1] * t) * std::sqrt(m_.inner(f, f)) * inv_sqrt_mu_max_;
  }
  std::string name() const override { return "spectral"; }

 private:
  const DiscretizedModel& m_;
  const SpectralData& sd_;
  double inv_sqrt_mu_max_ = 0.0;
};

struct CrankNicolsonOptions {
  int base_steps = 64;
  int max_steps = 8192;
  double tol = 1e-9;  // relative sup-norm agreement of successive step counts
};

// Crank-Nicolson on the symmetrized system with a Rannacher start (the first
// step is replaced by four implicit Euler quarter steps), step count doubled
// from t/base_steps until two successive answers agree, then extrapolated.
class CrankNicolsonSemigroup : public HeatSemigroup {
 public:
  explicit CrankNicolsonSemigroup(const DiscretizedModel& m, CrankNicolsonOptions opt = {})
      : m_(m), opt_(opt), S_(symmetrized_operator(m)) {
    sqrt_mu_ = m.mu.cwiseSqrt();
    direct_ = m.size() <= 8000 || (m.size() <= 40000 && m.chart_dim <= 2);
  }
  const DiscretizedModel& model() const override { return m_; }

  Vec apply(const Vec& f, double t) const override {
    require(t >= 0.0, ErrorKind::invalid_argument, "negative time");
    if (t == 0.0) return f;
    Vec y0 = sqrt_mu_.cwiseProduct(f);
    // agreement is relative to the answer, floored so that a fully decayed
    // solution is judged against the input instead of against roundoff
    const double floor = 1e-4 * std::max(f.cwiseAbs().maxCoeff(), 1e-300);
    int n = opt_.base_steps;
    Vec prev = march(y0, t, n), prev_x;
    while (true) {
      n *= 2;
      require(n <= opt_.max_steps, ErrorKind::non_convergence,
              "Crank-Nicolson did not settle within " + std::to_string(opt_.max_steps) + " steps");
      Vec next = march(y0, t, n);
      Vec x = (4.0 * next - prev) / 3.0;  // Richardson, the error is second order in dt
      last_steps_ = n;
      if (prev_x.size()) {
        double scale = std::max(x.cwiseQuotient(sqrt_mu_).cwiseAbs().maxCoeff(), floor);
        double diff = (x - prev_x).cwiseQuotient(sqrt_mu_).cwiseAbs().maxCoeff();
        if (diff <= opt_.tol * scale) return x.cwiseQuotient(sqrt_mu_);
      }
      prev = std::move(next);
      prev_x = std::move(x);
    }
  }
  double tail_bound(const Vec&, double) const override { return 0.0; }
  std::string name() const override { return "crank_nicolson"; }
  int last_steps() const { return last_steps_; }

 private:
  Eigen::SparseMatrix<double> shifted(double c) const {
    Eigen::SparseMatrix<double> A = c * S_;
    Eigen::SparseMatrix<double> I(S_.rows(), S_.cols());
    I.setIdentity();
    A += I;
    return A;
  }

  // Solves (I + c S) x = b repeatedly.
  struct Solver {
    bool direct = true;
    Eigen::SparseMatrix<double> A;  // cg keeps a reference
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
    Vec solve(const Vec& b, const Vec& guess) {
      if (direct) return ldlt.solve(b);
      Vec x = cg.solveWithGuess(b, guess);
      require(cg.info() == Eigen::Success, ErrorKind::non_convergence, "conjugate gradient failed");
      return x;
    }
  };

  void prepare(Solver& s, Eigen::SparseMatrix<double> A) const {
    s.direct = direct_;
    s.A = std::move(A);
    if (direct_) {
      s.ldlt.compute(s.A);
      require(s.ldlt.info() == Eigen::Success, ErrorKind::non_convergence, "factorization failed");
    } else {
      s.cg.setTolerance(1e-15);
      s.cg.setMaxIterations(20000);
      s.cg.compute(s.A);
    }
  }

  Vec march(const Vec& y0, double t, int n) const {
    const double dt = t / n;
    Solver half, quarter;
    prepare(half, shifted(0.5 * dt));
    prepare(quarter, shifted(0.25 * dt));
    Vec y = y0;
    for (int q = 0; q < 4; ++q) y = quarter.solve(y, y);
    for (int s = 1; s < n; ++s) {
      Vec rhs = y - 0.5 * dt * (S_ * y);
      y = half.solve(rhs, y);
    }
    return y;
  }

  const DiscretizedModel& m_;
  CrankNicolsonOptions opt_;
  Eigen::SparseMatrix<double> S_;
  Vec sqrt_mu_;
  bool direct_ = true;
  mutable std::atomic<int> last_steps_{0};
};

// Spectral when the truncation bound is negligible at this t, otherwise
// Crank-Nicolson. Small times on big models end up on the stepper.
class HybridSemigroup : public HeatSemigroup {
 public:
  HybridSemigroup(const DiscretizedModel& m, const SpectralData* sd, CrankNicolsonOptions opt = {},
                  double tail_tol = 1e-10)
      : m_(m), cn_(m, opt), tail_tol_(tail_tol) {
    if (sd) spec_.emplace(m, *sd);
  }
  const DiscretizedModel& model() const override { return m_; }
  bool uses_spectral(const Vec& f, double t) const {
    if (!spec_) return false;
    double ref = std::max(f.cwiseAbs().maxCoeff(), 1e-300);
    return spec_->tail_bound(f, t) <= tail_tol_ * ref;
  }
  Vec apply(const Vec& f, double t) const override {
    require(t >= 0.0, ErrorKind::invalid_argument, "negative time");
    if (t == 0.0) return f;
    return uses_spectral(f, t) ? spec_->apply(f, t) : cn_.apply(f, t);
  }
  double tail_bound(const Vec& f, double t) const override {
    return uses_spectral(f, t) ? spec_->tail_bound(f, t) : 0.0;
  }
  std::string name() const override { return "hybrid"; }
  const SpectralSemigroup* spectral() const { return spec_ ? &*spec_ : nullptr; }

 private:
  const DiscretizedModel& m_;
  std::optional<SpectralSemigroup> spec_;
  CrankNicolsonSemigroup cn_;
  double tail_tol_;
};

inline ScalarField apply_semigroup(const DiscretizedModel& m, const HeatSemigroup& engine, const ScalarField& f,
                                   double t) {
  check_belongs(m, f);
  require(t >= 0.0, ErrorKind::invalid_argument, "negative time");
  require(&engine.model() == &m || engine.model().id == m.id, ErrorKind::dimension_mismatch,
          "engine built for another model");
  if (t == 0.0) return f;
  return {m, engine.apply(f.values(), t)};
}

// ------------------------------------------------------------ kernels

struct KernelEval {
  double t = 0.0;
  Index i = 0;
  Index j = 0;
  double value = 0.0;
  double truncation_bound = 0.0;
};

// |tail| <= exp(-lambda_last t) / sqrt(mu_i mu_j) by completeness of the full basis.
inline double kernel_tail_bound(const DiscretizedModel& m, const SpectralData& sd, double t, Index i, Index j) {
  if (sd.count() == m.size()) return 0.0;
  return std::exp(-sd.eigenvalues[sd.count() - 1] * t) / std::sqrt(m.mu[i] * m.mu[j]);
}

inline KernelEval heat_kernel(const DiscretizedModel& m, const SpectralData& sd, double t, Index i, Index j,
                              double tol = 1e-8) {
  require(t > 0.0, ErrorKind::invalid_argument, "kernel time must be positive");
  require(i >= 0 && j >= 0 && i < m.size() && j < m.size(), ErrorKind::invalid_argument, "node index out of range");
  KernelEval e{t, i, j, 0.0, kernel_tail_bound(m, sd, t, i, j)};
  require(e.truncation_bound <= tol, ErrorKind::truncation,
          "t = " + std::to_string(t) + " too small for the retained spectrum (tail bound " +
              std::to_string(e.truncation_bound) + "); increase k");
  for (Index k = 0; k < sd.count(); ++k)
    e.value += std::exp(-sd.eigenvalues[k] * t) * sd.eigenfields(i, k) * sd.eigenfields(j, k);
  return e;
}

// Column p(t, ., j) = P_t(delta_j / mu_j).
inline Vec kernel_column(const HeatSemigroup& engine, double t, Index j) {
  const auto& m = engine.model();
  Vec d = Vec::Zero(m.size());
  d[j] = 1.0 / m.mu[j];
  return engine.apply(d, t);
}

inline double trace(const SpectralData& sd, double t) {
  return (-sd.eigenvalues.array() * t).exp().sum();
}

inline double trace_from_kernel(const DiscretizedModel& m, const SpectralData& sd, double t) {
  double s = 0.0;
  for (Index i = 0; i < m.size(); ++i) {
    double p = 0.0;
    for (Index k = 0; k < sd.count(); ++k) p += std::exp(-sd.eigenvalues[k] * t) * sd.eigenfields(i, k) * sd.eigenfields(i, k);
    s += p * m.mu[i];
  }
  return s;
}

struct Cluster {
  Index begin = 0;
  Index end = 0;  // exclusive
  double value = 0.0;
  Index size() const { return end - begin; }
};

// Maximal runs of eigenvalues equal within rel_tol. A gap between rel_tol and
// 100 rel_tol is ambiguous and reported as an error.
inline std::vector<Cluster> eigenvalue_clusters(const SpectralData& sd, double rel_tol = 1e-6) {
  std::vector<Cluster> out;
  const Vec& l = sd.eigenvalues;
  const double floor = 1e-8 * std::max(1.0, l.cwiseAbs().maxCoeff());
  Index b = 0;
  for (Index k = 1; k <= l.size(); ++k) {
    bool split = true;
    if (k < l.size()) {
      double gap = std::abs(l[k] - l[k - 1]);
      double ref = std::max(std::abs(l[k]), floor);
      if (gap <= rel_tol * ref || gap <= floor)
        split = false;
      else
        require(gap > 100 * rel_tol * ref, ErrorKind::invalid_argument,
                "eigenvalues " + std::to_string(l[k - 1]) + " and " + std::to_string(l[k]) +
                    " are ill-separated at the clustering tolerance");
    }
    if (split) {
      out.push_back({b, k, l.segment(b, k - b).mean()});
      b = k;
    }
  }
  // the last cluster may be cut by truncation; callers decide whether to use it
  return out;
}

inline double reproducing_kernel(const SpectralData& sd, const Cluster& c, Index i, Index j) {
  double s = 0.0;
  for (Index k = c.begin; k < c.end; ++k) s += sd.eigenfields(i, k) * sd.eigenfields(j, k);
  return s;
}

enum class Norm { l2, sup };

inline double equilibrium_error(const DiscretizedModel& m, const HeatSemigroup& engine, const ScalarField& f, double t,
                                Norm norm = Norm::l2) {
  check_belongs(m, f);
  const double mass = m.total_measure();
  require(std::isfinite(mass) && mass > 0, ErrorKind::not_applicable, "equilibrium needs finite total measure");
  double mean = m.integrate(f.values()) / mass;
  Vec d = engine.apply(f.values(), t) - Vec::Constant(m.size(), mean);
  return norm == Norm::l2 ? std::sqrt(m.inner(d, d)) : d.cwiseAbs().maxCoeff();
}

// Least-squares slope of y against x.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorKind::invalid_argument, "slope fit needs two points");
  double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (size_t k = 0; k < x.size(); ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
  }
  return sxy / sxx;
}

// ------------------------------------------------------------ Neumann restriction

inline bool subset_connected(const DiscretizedModel& m, const std::vector<char>& in) {
  Index start = -1, count = 0;
  for (Index i = 0; i < m.size(); ++i)
    if (in[i]) {
      ++count;
      if (start < 0) start = i;
    }
  if (count == 0) return false;
  std::vector<char> seen(static_cast<size_t>(m.size()), 0);
  std::vector<Index> stack = {start};
  seen[start] = 1;
  Index reached = 1;
  while (!stack.empty()) {
    Index i = stack.back();
    stack.pop_back();
    for (const auto& nb : m.adjacency[i])
      if (in[nb.node] && !seen[nb.node]) {
        seen[nb.node] = 1;
        ++reached;
        stack.push_back(nb.node);
      }
  }
  return reached == count;
}

// Sub-model on `subset` keeping only internal edges (reflecting closure).
inline DiscretizedModel neumann_restrict(const DiscretizedModel& m, const std::vector<Index>& subset) {
  std::vector<char> in(static_cast<size_t>(m.size()), 0);
  for (Index i : subset) {
    require(i >= 0 && i < m.size(), ErrorKind::invalid_argument, "subset index out of range");
    in[i] = 1;
  }
  require(subset_connected(m, in), ErrorKind::disconnected, "subset is not connected");
  if (static_cast<Index>(subset.size()) == m.size()) return m;
  std::vector<Index> local(static_cast<size_t>(m.size()), -1);
  std::vector<Index> order;
  for (Index i = 0; i < m.size(); ++i)
    if (in[i]) {
      local[i] = static_cast<Index>(order.size());
      order.push_back(i);
    }
  const Index n = static_cast<Index>(order.size());
  Mat nodes(n, m.chart_dim);
  Vec mu(n);
  std::vector<char> boundary(static_cast<size_t>(n)), trusted(static_cast<size_t>(n));
  for (Index a = 0; a < n; ++a) {
    nodes.row(a) = m.nodes.row(order[a]);
    mu[a] = m.mu[order[a]];
    boundary[a] = m.boundary[order[a]];
    trusted[a] = m.trusted[order[a]];
  }
  std::vector<Edge> edges;
  for (const auto& e : m.edges) {
    if (in[e.i] && in[e.j])
      edges.push_back({local[e.i], local[e.j], e.c, e.length});
    else if (in[e.i])
      boundary[local[e.i]] = 1;
    else if (in[e.j])
      boundary[local[e.j]] = 1;
  }
  std::uint64_t h = 1469598103934665603ull;
  for (Index i : order) h = fnv1a(&i, sizeof i, h);
  std::ostringstream id;
  id << m.id << "|sub" << std::hex << h;
  return make_model(id.str(), nodes, mu, edges, boundary, trusted, m.mesh_h, m.mesh_order);
}

// ------------------------------------------------------------ binary cache

inline constexpr char kCacheMagic[8] = {'H', 'L', 'S', 'P', 'E', 'C', '0', '1'};
inline constexpr std::uint32_t kCacheVersion = 1;

struct CacheHeader {
  char magic[8];
  std::uint32_t version;
  std::uint32_t report_schema;
  std::uint64_t model_hash;
  std::uint64_t nodes;
  std::uint64_t count;
  double residual;
};

inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(os), ErrorKind::io, "cannot write " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(os), ErrorKind::io, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline void save_spectral_cache(const std::filesystem::path& path, const SpectralData& sd) {
  CacheHeader h{};
  std::copy(std::begin(kCacheMagic), std::end(kCacheMagic), h.magic);
  h.version = kCacheVersion;
  h.report_schema = kReportSchemaVersion;
  h.model_hash = sd.model_hash;
  h.nodes = static_cast<std::uint64_t>(sd.eigenfields.rows());
  h.count = static_cast<std::uint64_t>(sd.count());
  h.residual = sd.residual;
  std::string bytes(reinterpret_cast<const char*>(&h), sizeof h);
  bytes.append(reinterpret_cast<const char*>(sd.eigenvalues.data()), sizeof(double) * h.count);
  bytes.append(reinterpret_cast<const char*>(sd.eigenfields.data()), sizeof(double) * h.count * h.nodes);
  write_file_atomic(path, bytes);
}

// Returns nothing when the file is absent, from another version, or for
// another operator; callers then recompute.
inline std::optional<SpectralData> load_spectral_cache(const std::filesystem::path& path, const DiscretizedModel& m,
                                                       Index min_count = 1) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return std::nullopt;
  CacheHeader h{};
  is.read(reinterpret_cast<char*>(&h), sizeof h);
  if (!is || !std::equal(std::begin(kCacheMagic), std::end(kCacheMagic), h.magic)) return std::nullopt;
  if (h.version != kCacheVersion || h.report_schema != static_cast<std::uint32_t>(kReportSchemaVersion))
    return std::nullopt;
  if (h.model_hash != model_hash(m) || h.nodes != static_cast<std::uint64_t>(m.size())) return std::nullopt;
  if (static_cast<Index>(h.count) < min_count) return std::nullopt;
  SpectralData sd;
  sd.model_id = m.id;
  sd.model_hash = h.model_hash;
  sd.residual = h.residual;
  sd.eigenvalues.resize(static_cast<Index>(h.count));
  sd.eigenfields.resize(static_cast<Index>(h.nodes), static_cast<Index>(h.count));
  is.read(reinterpret_cast<char*>(sd.eigenvalues.data()), static_cast<std::streamsize>(sizeof(double) * h.count));
  is.read(reinterpret_cast<char*>(sd.eigenfields.data()),
          static_cast<std::streamsize>(sizeof(double) * h.count * h.nodes));
  if (!is) return std::nullopt;
  return sd;
}

}  // namespace heatlab
