#pragma once

#include "heatlab/fields.hpp"

#include <atomic>
#include <mutex>
#include <thread>

namespace heatlab {

// ------------------------------------------------------------ kernel laws

struct KernelLawOptions {
  std::vector<double> t_grid{0.5, 1.0};
  int nodes = 12;              // sampled nodes; pairs are all ordered pairs among them
  double trace_t = 1.0;
  double cross_t = 0.1;        // raised until the spectral tail is negligible
  double cross_tail = 1e-6;    // tail bound allowed in the cross-oracle run, relative to sup |f|
  std::uint64_t seed = 0;
  Tolerance tol{1e-8, 0.0, 0};
  Tolerance cross_tol{1e-4, 0.0, 0};
};

// Symmetry and Chapman-Kolmogorov on the spectral path, trace by two routes,
// and spectral vs Crank-Nicolson on a random field.
inline MarginReport check_kernel_laws(const Lab& lab, const KernelLawOptions& opt = {}) {
  const auto& m = lab.model();
  require(lab.spectral != nullptr, ErrorKind::not_applicable, "kernel laws need spectral data");
  const SpectralSemigroup spec(m, *lab.spectral);
  Rng rng(opt.seed);
  std::uniform_int_distribution<Index> pick(0, m.size() - 1);
  std::vector<Index> nodes;
  for (int k = 0; k < opt.nodes; ++k) nodes.push_back(pick(rng));

  // the parent carries the symmetry samples
  MarginReport sym("kernel_laws", m.id), ck("chapman_kolmogorov", m.id);
  double tail_max = 0.0;
  for (double t : opt.t_grid) {
    std::vector<Vec> col, col2;
    for (Index j : nodes) {
      col.push_back(kernel_column(spec, t, j));
      col2.push_back(kernel_column(spec, 2.0 * t, j));
    }
    for (size_t a = 0; a < nodes.size(); ++a)
      for (size_t b = 0; b < nodes.size(); ++b) {
        Index i = nodes[a], j = nodes[b];
        tail_max = std::max(tail_max, kernel_tail_bound(m, *lab.spectral, t, i, j));
        if (a < b) sym.add({{"t", t}, {"i", double(i)}, {"j", double(j)}}, std::abs(col[b][i] - col[a][j]), 0.0);
        double lhs = m.inner(col[a], col[b]);  // sum_z p(t,i,z) p(t,z,j) mu_z
        ck.add({{"t", t}, {"s", t}, {"i", double(i)}, {"j", double(j)}}, std::abs(lhs - col2[b][i]), 0.0);
      }
  }
  sym.finalize(opt.tol, m.mesh_h, 1.0);
  ck.finalize(opt.tol, m.mesh_h, 1.0);
  sym.metadata["max_tail_bound"] = json_number(tail_max);
  MarginReport rep = std::move(sym);
  rep.parts.push_back(std::move(ck));

  MarginReport tr("trace", m.id);
  double a = trace(*lab.spectral, opt.trace_t), b = trace_from_kernel(m, *lab.spectral, opt.trace_t);
  tr.add({{"t", opt.trace_t}}, std::abs(a - b), 0.0);
  tr.finalize(opt.tol, m.mesh_h, 1.0);
  tr.metadata["trace"] = a;
  tr.metadata["kernel_trace"] = b;
  rep.parts.push_back(std::move(tr));

  MarginReport cross("spectral_vs_stepper", m.id);
  Vec f = random_values(m.size(), rng);
  f /= f.cwiseAbs().maxCoeff();
  double t = opt.cross_t;
  while (spec.tail_bound(f, t) > opt.cross_tail && t < 64.0) t *= 2.0;
  CrankNicolsonSemigroup cn(m);
  double diff = (spec.apply(f, t) - cn.apply(f, t)).cwiseAbs().maxCoeff();
  cross.add({{"t", t}}, diff, 0.0);
  cross.finalize(opt.cross_tol, m.mesh_h, 1.0);
  cross.metadata["tail_bound"] = spec.tail_bound(f, t);
  cross.metadata["requested_t"] = opt.cross_t;
  cross.metadata["steps"] = cn.last_steps();
  rep.parts.push_back(std::move(cross));
  return rep;
}

// ------------------------------------------------------------ spectrum

struct SpectrumOptions {
  Index count = 0;             // 0: model default
  std::optional<double> rel;   // fixed relative tolerance; unset: mesh tolerance
  Tolerance tol{1e-9, 1.0, 2};
};

inline Index default_spectrum_count(const Lab& lab) {
  switch (lab.built->spec.kind) {
    case ModelKind::sphere: return 9;
    case ModelKind::torus: return 5;
    default: return 2;
  }
}

// First eigenvalues against the closed-form spectrum, plus multiplicities:
// the number of discrete eigenvalues inside each band equals the exact count.
inline MarginReport check_spectrum(const Lab& lab, const SpectrumOptions& opt = {}) {
  const auto& m = lab.model();
  require(lab.spectral != nullptr, ErrorKind::not_applicable, "spectrum check needs spectral data");
  require(static_cast<bool>(lab.oracle().exact_spectrum), ErrorKind::not_applicable, "no closed-form spectrum");
  const auto& sd = *lab.spectral;
  Index k = opt.count > 0 ? opt.count : default_spectrum_count(lab);
  require(k <= sd.count(), ErrorKind::invalid_argument, "more eigenvalues requested than retained");
  auto exact = lab.oracle().exact_spectrum(static_cast<int>(sd.count()));
  Tolerance tol = opt.rel ? Tolerance{opt.tol.abs, *opt.rel, 0} : opt.tol;
  const double band_rel = tol.rel_at(m.mesh_h);

  MarginReport rep("spectrum", m.id);
  double top = 0.0;
  for (Index i = 0; i < k; ++i) {
    double err = std::abs(sd.eigenvalues[i] - exact[i]);
    // relative margin: |lambda - exact| <= abs + rel * exact
    rep.add({{"k", double(i)}, {"exact", exact[i]}, {"discrete", sd.eigenvalues[i]}}, err - band_rel * exact[i], 0.0);
    top = std::max(top, exact[i]);
  }
  rep.finalize(Tolerance{tol.abs, 0.0, 0}, m.mesh_h, top);
  rep.metadata["relative_tolerance"] = band_rel;

  MarginReport mult("multiplicity", m.id);
  for (Index i = 1; i < k; ++i) {
    if (exact[i] == exact[i - 1]) continue;
    double v = exact[i];
    double band = tol.abs + band_rel * v;
    Index want = 0, got = 0;
    for (double e : exact) want += std::abs(e - v) <= 1e-12 * std::max(1.0, v);
    for (Index j = 0; j < sd.count(); ++j) got += std::abs(sd.eigenvalues[j] - v) <= band;
    // the band can only be judged if the retained spectrum reaches past it
    if (sd.eigenvalues[sd.count() - 1] <= v + band && sd.count() < m.size()) continue;
    mult.add({{"value", v}, {"expected", double(want)}}, std::abs(double(got - want)), 0.0);
  }
  mult.finalize(Tolerance{0.0, 0.0, 0}, m.mesh_h, 1.0);
  rep.parts.push_back(std::move(mult));
  return rep;
}

// ------------------------------------------------------------ distances

struct DistanceOptions {
  int pairs = 50;
  std::uint64_t seed = 0;
  DualOptions dual;
  int threads = 0;                      // 0: hardware concurrency
  std::vector<double> vertical{0.25, 0.5, 1.0};  // Heisenberg: targets (0, 0, z)
  int controls = 64;
  double vertical_rel = 0.02;
  Tolerance tol{1e-9, 1.0, 1};          // dual <= graph + h: an adjacent pair reaches sqrt(2) h
};

namespace detail {

template <class F>
void parallel_for(int count, int threads, F&& fn) {
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (int i; (i = next++) < count;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// Largest edge-connected piece containing `seed`.
inline std::vector<Index> component_of(const DiscretizedModel& m, Index seed) {
  std::vector<char> s(static_cast<size_t>(m.size()), 0);
  s[seed] = 1;
  Vec d = distance_to_set(m, s);
  std::vector<Index> out;
  for (Index i = 0; i < m.size(); ++i)
    if (std::isfinite(d[i])) out.push_back(i);
  return out;
}

}  // namespace detail

// dual <= graph on random pairs (inside the centre's component when the edge
// graph is not connected); on Heisenberg also the subunit optimizer against
// the closed form 2 sqrt(pi |z|) and the vertical-form hypothesis.
inline MarginReport check_distances(const Lab& lab, const DistanceOptions& opt = {}) {
  const auto& m0 = lab.model();
  auto comp = detail::component_of(m0, centre_node(*lab.built));
  DiscretizedModel sub;
  const DiscretizedModel* mp = &m0;
  if (static_cast<Index>(comp.size()) < m0.size()) {
    sub = neumann_restrict(m0, comp);
    mp = &sub;
  }
  const auto& m = *mp;
  Rng rng(opt.seed);
  std::uniform_int_distribution<Index> pick(0, m.size() - 1);
  std::vector<std::pair<Index, Index>> pairs;
  while (static_cast<int>(pairs.size()) < opt.pairs) {
    Index x = pick(rng), y = pick(rng);
    if (x != y) pairs.emplace_back(x, y);
  }
  std::vector<double> dual(pairs.size()), graph(pairs.size()), exact(pairs.size());
  detail::parallel_for(static_cast<int>(pairs.size()), opt.threads, [&](int k) {
    auto [x, y] = pairs[static_cast<size_t>(k)];
    dual[k] = dual_distance(m, x, y, opt.dual).bound;
    std::vector<char> s(static_cast<size_t>(m.size()), 0);
    s[y] = 1;
    graph[k] = distance_to_set(m, s)[x];
    exact[k] = lab.oracle().exact_distance ? lab.oracle().exact_distance(m.nodes.row(x), m.nodes.row(y))
                                           : std::numeric_limits<double>::quiet_NaN();
  });

  MarginReport rep("distance_sandwich", m0.id);
  double worst_rel = 0.0;
  for (size_t k = 0; k < pairs.size(); ++k) {
    rep.add({{"x", double(pairs[k].first)}, {"y", double(pairs[k].second)}, {"exact", exact[k]}}, dual[k], graph[k]);
    if (std::isfinite(exact[k])) worst_rel = std::max(worst_rel, graph[k] / exact[k]);
  }
  rep.finalize(opt.tol, m.mesh_h, 1.0);
  rep.metadata["component_nodes"] = m.size();
  rep.metadata["graph_over_exact_max"] = worst_rel;
  rep.metadata["dual_iterations"] = opt.dual.max_iter;

  if (lab.built->spec.kind == ModelKind::heisenberg) {
    MarginReport vert("subunit_vertical", m0.id);
    for (double z : opt.vertical) {
      auto r = subunit_distance_heisenberg({0, 0, 0}, {0, 0, z}, opt.controls);
      double ref = 2.0 * std::sqrt(std::numbers::pi * std::abs(z));
      vert.add({{"z", z}, {"length", r.length}, {"miss", r.miss}}, std::abs(r.length - ref), opt.vertical_rel * ref);
    }
    vert.finalize(Tolerance{1e-12, 0.0, 0}, m0.mesh_h, 1.0);
    rep.parts.push_back(std::move(vert));
  }
  return rep;
}

}  // namespace heatlab
