#pragma once

#include "heatlab/metric.hpp"
#include "heatlab/semigroup.hpp"

namespace heatlab {

// A built model with its (optional) spectral data and a heat engine. Shared
// pointers keep addresses stable, engines hold references into the model.
struct Lab {
  std::shared_ptr<const BuiltModel> built;
  std::shared_ptr<const SpectralData> spectral;
  std::shared_ptr<const HybridSemigroup> engine;

  const DiscretizedModel& model() const { return built->model; }
  const GeometryOracle& oracle() const { return built->oracle; }
  const std::string& id() const { return built->model.id; }
  bool has_vform() const { return built->vform.has_value() && !built->vform->edges.empty(); }
  const VerticalForm& vform() const {
    require(has_vform(), ErrorKind::not_applicable, "model has no vertical structure");
    return *built->vform;
  }
  Vec heat(const Vec& f, double t) const { return engine->apply(f, t); }
  Vec kernel(double t, Index j) const { return kernel_column(*engine, t, j); }
  double rho() const { return oracle().ricci_lower; }
  double dim() const { return oracle().dim; }
};

struct LabOptions {
  Index modes = -1;  // -1: model default, 0: stepper only
  std::uint64_t seed = 0;
  CrankNicolsonOptions cn;
  std::shared_ptr<const SpectralData> spectral;  // pre-computed (cache)
};

inline Index default_modes(const BuiltModel& b) {
  const auto& m = b.model;
  if (m.size() <= 400) return m.size();
  switch (b.spec.kind) {
    case ModelKind::sphere:
    case ModelKind::torus: return std::min<Index>(150, m.size());
    default: return 0;
  }
}

inline Lab make_lab(BuiltModel b, const LabOptions& opt = {}) {
  Lab lab;
  lab.built = std::make_shared<const BuiltModel>(std::move(b));
  const auto& m = lab.built->model;
  if (opt.spectral) {
    require(opt.spectral->model_id == m.id && opt.spectral->model_hash == model_hash(m), ErrorKind::dimension_mismatch,
            "spectral data belongs to another model");
    lab.spectral = opt.spectral;
  } else {
    Index k = opt.modes < 0 ? default_modes(*lab.built) : opt.modes;
    if (k > 0) lab.spectral = std::make_shared<const SpectralData>(spectral_decompose(m, k, {opt.seed}));
  }
  lab.engine = std::make_shared<const HybridSemigroup>(m, lab.spectral.get(), opt.cn);
  return lab;
}

inline Lab make_lab(const ModelSpec& spec, const LabOptions& opt = {}) { return make_lab(build_model(spec), opt); }

// Nodes where pointwise second-order quantities at time t are trusted: deep
// interior and at least 3 sqrt(t) from the truncation boundary.
inline std::vector<char> heat_mask(const DiscretizedModel& m, double t, double factor = 3.0) {
  return safe_interior(m, factor * std::sqrt(std::max(t, 0.0)), 2);
}

// Deterministic subsample of a mask (at most `count` nodes, evenly strided).
inline std::vector<Index> strided(const std::vector<char>& mask, Index count) {
  auto idx = mask_indices(mask);
  if (count <= 0 || static_cast<Index>(idx.size()) <= count) return idx;
  std::vector<Index> out;
  double step = static_cast<double>(idx.size()) / static_cast<double>(count);
  for (Index k = 0; k < count; ++k) out.push_back(idx[static_cast<size_t>(k * step)]);
  return out;
}

// Chart point of the model centre: the origin for flat and group charts, the
// equator for the embedded sphere.
inline Index centre_node(const BuiltModel& b) {
  const auto& m = b.model;
  Eigen::RowVectorXd p = Eigen::RowVectorXd::Zero(m.nodes.cols());
  if (b.spec.kind == ModelKind::sphere) p[0] = 1.0;
  if (b.spec.kind == ModelKind::torus) p.setConstant(0.5 * b.spec.option("period", 2.0 * std::numbers::pi));
  return nearest_node(m, p);
}

inline double distance_between(const Lab& lab, Index i, Index j) {
  const auto& m = lab.model();
  if (lab.oracle().exact_distance) return lab.oracle().exact_distance(m.nodes.row(i), m.nodes.row(j));
  return graph_distance(m, i).values[j];
}

}  // namespace heatlab
