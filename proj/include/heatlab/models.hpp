#pragma once

#include "heatlab/forms.hpp"
#include "heatlab/heisenberg_geometry.hpp"

#include <array>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>

namespace heatlab {

enum class ModelKind { euclidean, torus, sphere, heisenberg, hyperbolic };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::euclidean: return "euclidean";
    case ModelKind::torus: return "torus";
    case ModelKind::sphere: return "sphere";
    case ModelKind::heisenberg: return "heisenberg";
    case ModelKind::hyperbolic: return "hyperbolic";
  }
  return "unknown";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "euclidean") return ModelKind::euclidean;
  if (s == "torus") return ModelKind::torus;
  if (s == "sphere") return ModelKind::sphere;
  if (s == "heisenberg") return ModelKind::heisenberg;
  if (s == "hyperbolic") return ModelKind::hyperbolic;
  throw Error(ErrorKind::config, "unknown model kind '" + s + "'");
}

struct ModelSpec {
  std::string name;  // optional; defaults to a descriptive id
  ModelKind kind = ModelKind::euclidean;
  int dim = 2;
  int resolution = 32;
  double extent = 1.0;
  std::map<std::string, std::string> options;

  double option(const std::string& key, double fallback) const {
    auto it = options.find(key);
    if (it == options.end()) return fallback;
    try {
      size_t pos = 0;
      double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorKind::config, "option '" + key + "' is not a number: '" + it->second + "'");
    }
  }
  std::string option(const std::string& key, const std::string& fallback) const {
    auto it = options.find(key);
    return it == options.end() ? fallback : it->second;
  }

  std::string id() const {
    if (!name.empty()) return name;
    std::ostringstream os;
    os << to_string(kind) << dim << "-r" << resolution;
    if (kind == ModelKind::euclidean || kind == ModelKind::heisenberg) os << "-e" << extent;
    for (const auto& [k, v] : options) os << '-' << k << '=' << v;
    return os.str();
  }

  void validate() const {
    require(resolution >= 8, ErrorKind::config, "model '" + id() + "': resolution must be at least 8");
    if (kind == ModelKind::euclidean || kind == ModelKind::heisenberg)
      require(extent > 0.0, ErrorKind::config, "model '" + id() + "': extent must be positive");
  }
};

using ChartPoint = Eigen::RowVectorXd;

struct GeometryOracle {
  int dim = 1;
  double ricci_lower = 0.0;
  double homogeneous_dim = 1.0;
  std::optional<CDParameters> cd_params;
  std::function<double(const ChartPoint&, const ChartPoint&)> exact_distance;
  std::function<double(const ChartPoint&, double)> exact_ball_volume;
  std::function<double(double, const ChartPoint&, const ChartPoint&)> exact_kernel;
  std::function<std::vector<double>(int)> exact_spectrum;
  std::optional<double> total_measure;
  std::optional<double> diameter;

  double curvature_defect() const { return std::max(0.0, -ricci_lower); }
};

struct BuiltModel {
  ModelSpec spec;
  DiscretizedModel model;
  GeometryOracle oracle;
  std::optional<VerticalForm> vform;
};

inline double exact_heat_kernel(const GeometryOracle& o, double t, const ChartPoint& x, const ChartPoint& y) {
  require(static_cast<bool>(o.exact_kernel), ErrorKind::not_applicable,
          "oracle has no closed-form kernel; use the discrete kernel");
  require(t > 0.0, ErrorKind::invalid_argument, "kernel time must be positive");
  return o.exact_kernel(t, x, y);
}

// ------------------------------------------------------------ closed forms

inline double unit_ball_volume(int n) {
  const double pi = std::numbers::pi;
  return std::pow(pi, 0.5 * n) / std::tgamma(0.5 * n + 1.0);
}

inline double gaussian_kernel(double t, double d2, int n) {
  return std::pow(4.0 * std::numbers::pi * t, -0.5 * n) * std::exp(-d2 / (4.0 * t));
}

// Legendre P_0..P_{L-1} at x by the three-term recurrence.
inline std::vector<double> legendre_table(int L, double x) {
  std::vector<double> p(static_cast<size_t>(std::max(L, 2)));
  p[0] = 1.0;
  p[1] = x;
  for (int l = 1; l + 1 < L; ++l) p[l + 1] = ((2.0 * l + 1.0) * x * p[l] - l * p[l - 1]) / (l + 1.0);
  return p;
}

// Number of terms so that exp(-L(L+1)t)(2L+1)^2 < 1e-12.
inline int zonal_truncation(double t) {
  int L = 1;
  while (std::exp(-L * (L + 1.0) * t) * (2.0 * L + 1) * (2.0 * L + 1) >= 1e-12) ++L;
  return L;
}

struct ZonalValue {
  double value = 0.0;
  double tail_bound = 0.0;
  int terms = 0;
};

inline ZonalValue sphere_zonal_kernel(double t, double cos_angle) {
  const double four_pi = 4.0 * std::numbers::pi;
  int L = zonal_truncation(t);
  auto P = legendre_table(L, std::clamp(cos_angle, -1.0, 1.0));
  ZonalValue z;
  for (int l = 0; l < L; ++l) z.value += std::exp(-l * (l + 1.0) * t) * (2.0 * l + 1.0) * P[l] / four_pi;
  // |P_l| <= 1; sum of the omitted terms, bounded geometrically
  double tail = 0.0;
  for (int l = L; l < L + 2000; ++l) {
    double term = std::exp(-l * (l + 1.0) * t) * (2.0 * l + 1.0) / four_pi;
    tail += term;
    if (term < 1e-30) break;
  }
  z.tail_bound = tail;
  z.terms = L;
  return z;
}

// Image sum of the 1-d periodic heat kernel.
inline double periodic_kernel_1d(double t, double delta, double period) {
  double s = 0.0;
  for (int m = 0; m < 100000; ++m) {
    double a = gaussian_kernel(t, (delta + m * period) * (delta + m * period), 1);
    double b = m == 0 ? 0.0 : gaussian_kernel(t, (delta - m * period) * (delta - m * period), 1);
    s += a + b;
    if (m > 0 && a + b < 1e-18 * s) break;
  }
  return s;
}

inline double periodic_delta(double d, double period) {
  d = std::fmod(std::abs(d), period);
  return std::min(d, period - d);
}

inline double torus2_ball_area(double r, double period) {
  const double pi = std::numbers::pi;
  double half = 0.5 * period;
  if (r <= half) return pi * r * r;
  if (r >= half * std::sqrt(2.0)) return period * period;
  double seg = r * r * std::acos(half / r) - half * std::sqrt(r * r - half * half);
  return pi * r * r - 4.0 * seg;
}

// ------------------------------------------------------------ builders

namespace detail {

inline std::vector<int> grid_strides(int dim, int n) {
  std::vector<int> s(static_cast<size_t>(dim), 1);
  for (int a = 1; a < dim; ++a) s[a] = s[a - 1] * n;
  return s;
}

}  // namespace detail

// Cell-centered grid on [-a, a]^n, zero-flux closure at the box faces.
inline BuiltModel build_euclidean(const ModelSpec& spec) {
  const int n = spec.dim;
  require(n >= 1 && n <= 3, ErrorKind::unsupported, "euclidean model supports dim 1..3");
  const int N = spec.resolution;
  const double a = spec.extent;
  const double h = 2.0 * a / N;
  Index total = 1;
  for (int k = 0; k < n; ++k) total *= N;
  auto stride = detail::grid_strides(n, N);
  Mat nodes(total, n);
  std::vector<char> boundary(static_cast<size_t>(total), 0);
  std::vector<Edge> edges;
  for (Index id = 0; id < total; ++id) {
    Index rem = id;
    for (int ax = 0; ax < n; ++ax) {
      int k = static_cast<int>(rem % N);
      rem /= N;
      nodes(id, ax) = -a + (k + 0.5) * h;
      if (k == 0 || k == N - 1) boundary[id] = 1;
      if (k + 1 < N) edges.push_back({id, id + stride[ax], std::pow(h, n - 2), h});
    }
  }
  Vec mu = Vec::Constant(total, std::pow(h, n));
  BuiltModel b;
  b.spec = spec;
  b.model = make_model(spec.id(), nodes, mu, edges, boundary, {}, h, 2);
  auto& o = b.oracle;
  o.dim = n;
  o.ricci_lower = 0.0;
  o.homogeneous_dim = n;
  o.exact_distance = [](const ChartPoint& x, const ChartPoint& y) { return (x - y).norm(); };
  o.exact_ball_volume = [n](const ChartPoint&, double r) { return unit_ball_volume(n) * std::pow(r, n); };
  o.exact_kernel = [n](double t, const ChartPoint& x, const ChartPoint& y) {
    return gaussian_kernel(t, (x - y).squaredNorm(), n);
  };
  // Continuum Neumann spectrum of the truncated box itself.
  o.exact_spectrum = [n, a](int k) {
    const double w = std::numbers::pi / (2.0 * a);
    std::vector<double> ev;
    int kmax = static_cast<int>(std::ceil(std::pow(2.0 * k, 1.0 / n))) + 2;
    std::vector<int> idx(static_cast<size_t>(n), 0);
    std::function<void(int, double)> rec = [&](int ax, double acc) {
      if (ax == n) {
        ev.push_back(acc);
        return;
      }
      for (int m = 0; m <= kmax; ++m) rec(ax + 1, acc + (w * m) * (w * m));
    };
    rec(0, 0.0);
    std::sort(ev.begin(), ev.end());
    ev.resize(std::min<size_t>(ev.size(), static_cast<size_t>(k)));
    return ev;
  };
  return b;
}

// Periodic grid of side `period` (default 2 pi).
inline BuiltModel build_torus(const ModelSpec& spec) {
  const int n = spec.dim;
  require(n == 1 || n == 2, ErrorKind::unsupported, "torus model supports dim 1 and 2");
  const int N = spec.resolution;
  const double P = spec.option("period", 2.0 * std::numbers::pi);
  require(P > 0, ErrorKind::config, "torus period must be positive");
  const double h = P / N;
  Index total = n == 1 ? N : static_cast<Index>(N) * N;
  auto stride = detail::grid_strides(n, N);
  Mat nodes(total, n);
  std::vector<Edge> edges;
  for (Index id = 0; id < total; ++id) {
    Index rem = id;
    for (int ax = 0; ax < n; ++ax) {
      int k = static_cast<int>(rem % N);
      rem /= N;
      nodes(id, ax) = k * h;
      Index nb = id + (k + 1 < N ? stride[ax] : -static_cast<Index>(N - 1) * stride[ax]);
      edges.push_back({id, nb, std::pow(h, n - 2), h});
    }
  }
  Vec mu = Vec::Constant(total, std::pow(h, n));
  BuiltModel b;
  b.spec = spec;
  b.model = make_model(spec.id(), nodes, mu, edges, {}, {}, h, 2);
  auto& o = b.oracle;
  o.dim = n;
  o.ricci_lower = 0.0;
  o.homogeneous_dim = n;
  o.total_measure = std::pow(P, n);
  o.diameter = std::sqrt(static_cast<double>(n)) * 0.5 * P;
  o.exact_distance = [P](const ChartPoint& x, const ChartPoint& y) {
    double s = 0.0;
    for (Index a = 0; a < x.size(); ++a) {
      double d = periodic_delta(x[a] - y[a], P);
      s += d * d;
    }
    return std::sqrt(s);
  };
  o.exact_ball_volume = [n, P](const ChartPoint&, double r) {
    return n == 1 ? std::min(2.0 * r, P) : torus2_ball_area(r, P);
  };
  o.exact_kernel = [P](double t, const ChartPoint& x, const ChartPoint& y) {
    double v = 1.0;
    for (Index a = 0; a < x.size(); ++a) v *= periodic_kernel_1d(t, periodic_delta(x[a] - y[a], P), P);
    return v;
  };
  o.exact_spectrum = [n, P](int k) {
    const double w = 2.0 * std::numbers::pi / P;
    int kmax = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(k)))) + 2;
    std::vector<double> ev;
    if (n == 1) {
      for (int m = -kmax; m <= kmax; ++m) ev.push_back(w * w * m * m);
    } else {
      for (int m1 = -kmax; m1 <= kmax; ++m1)
        for (int m2 = -kmax; m2 <= kmax; ++m2) ev.push_back(w * w * (m1 * m1 + m2 * m2));
    }
    std::sort(ev.begin(), ev.end());
    ev.resize(std::min<size_t>(ev.size(), static_cast<size_t>(k)));
    return ev;
  };
  return b;
}

// Finite-volume latitude-longitude grid: `resolution` rings, twice as many
// meridians. Polar caps are flagged untrusted for pointwise second-order
// forms (the ring cells degenerate there); integrals use every node.
inline DiscretizedModel build_sphere_latlong(const ModelSpec& spec) {
  const int nt = spec.resolution;
  const int np = 2 * nt;
  const double pi = std::numbers::pi;
  const double dth = pi / nt, dph = 2.0 * pi / np;
  const double cap = spec.option("polar_cutoff", 0.35);
  const Index total = static_cast<Index>(nt) * np;
  Mat nodes(total, 3);
  Vec mu(total);
  std::vector<char> trusted(static_cast<size_t>(total));
  std::vector<Edge> edges;
  auto idx = [np](int i, int j) { return static_cast<Index>(i) * np + ((j % np) + np) % np; };
  for (int i = 0; i < nt; ++i) {
    double th = (i + 0.5) * dth;
    double band = std::cos(th - 0.5 * dth) - std::cos(th + 0.5 * dth);
    for (int j = 0; j < np; ++j) {
      double ph = j * dph;
      Index id = idx(i, j);
      nodes.row(id) << std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th);
      mu[id] = band * dph;
      trusted[id] = std::min(th, pi - th) >= cap;
      if (i + 1 < nt) edges.push_back({id, idx(i + 1, j), std::sin((i + 1) * dth) * dph / dth, dth});
      edges.push_back({id, idx(i, j + 1), band / (std::sin(th) * std::sin(th) * dph), std::sin(th) * dph});
    }
  }
  return make_model(spec.id(), nodes, mu, edges, {}, trusted, dth, 2);
}

// Geodesic icosahedral mesh of frequency `resolution`, cotangent weights and
// barycentric lumped areas.
inline DiscretizedModel build_sphere_icosahedral(const ModelSpec& spec) {
  const int nu = spec.resolution;
  const double g = 0.5 * (1.0 + std::sqrt(5.0));
  std::vector<Eigen::Vector3d> base = {{-1, g, 0}, {1, g, 0},  {-1, -g, 0}, {1, -g, 0}, {0, -1, g},  {0, 1, g},
                                       {0, -1, -g}, {0, 1, -g}, {g, 0, -1},  {g, 0, 1},  {-g, 0, -1}, {-g, 0, 1}};
  const int faces[20][3] = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},  {5, 11, 4},
                            {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6},  {3, 6, 8},
                            {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  std::map<std::array<long long, 3>, Index> lookup;
  std::vector<Eigen::Vector3d> pts;
  auto vertex = [&](const Eigen::Vector3d& p) {
    Eigen::Vector3d q = p.normalized();
    std::array<long long, 3> key = {std::llround(q.x() * 1e9), std::llround(q.y() * 1e9), std::llround(q.z() * 1e9)};
    auto it = lookup.find(key);
    if (it != lookup.end()) return it->second;
    Index id = static_cast<Index>(pts.size());
    pts.push_back(q);
    lookup.emplace(key, id);
    return id;
  };
  std::vector<std::array<Index, 3>> tris;
  for (const auto& f : faces) {
    const Eigen::Vector3d &A = base[f[0]], &B = base[f[1]], &C = base[f[2]];
    auto at = [&](int i, int j) {
      int k = nu - i - j;
      return vertex((i * A + j * B + k * C) / nu);
    };
    for (int i = 0; i < nu; ++i)
      for (int j = 0; i + j < nu; ++j) {
        tris.push_back({at(i, j), at(i + 1, j), at(i, j + 1)});
        if (i + j + 2 <= nu) tris.push_back({at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)});
      }
  }
  const Index n = static_cast<Index>(pts.size());
  Vec mu = Vec::Zero(n);
  std::map<std::pair<Index, Index>, double> w;
  for (const auto& t : tris) {
    for (int c = 0; c < 3; ++c) {
      Index a = t[c], b = t[(c + 1) % 3], o = t[(c + 2) % 3];
      Eigen::Vector3d u = pts[a] - pts[o], v = pts[b] - pts[o];
      double cot = u.dot(v) / u.cross(v).norm();
      w[{std::min(a, b), std::max(a, b)}] += 0.5 * cot;
    }
    double area = 0.5 * (pts[t[1]] - pts[t[0]]).cross(pts[t[2]] - pts[t[0]]).norm();
    for (Index v : t) mu[v] += area / 3.0;
  }
  std::vector<Edge> edges;
  double hmax = 0.0;
  for (const auto& [key, c] : w) {
    require(c > 0.0, ErrorKind::unsupported, "icosahedral mesh produced a non-positive cotangent weight");
    double len = std::acos(std::clamp(pts[key.first].dot(pts[key.second]), -1.0, 1.0));
    hmax = std::max(hmax, len);
    edges.push_back({key.first, key.second, c, len});
  }
  Mat nodes(n, 3);
  for (Index i = 0; i < n; ++i) nodes.row(i) = pts[i].transpose();
  return make_model(spec.id(), nodes, mu, edges, {}, {}, hmax, 1);
}

inline BuiltModel build_sphere(const ModelSpec& spec) {
  require(spec.dim == 2, ErrorKind::unsupported, "sphere model is built for dim 2 only");
  std::string mesh = spec.option("mesh", std::string("latlong"));
  BuiltModel b;
  b.spec = spec;
  if (mesh == "latlong")
    b.model = build_sphere_latlong(spec);
  else if (mesh == "icosahedral")
    b.model = build_sphere_icosahedral(spec);
  else
    throw Error(ErrorKind::config, "unknown sphere mesh '" + mesh + "'");
  auto& o = b.oracle;
  const double pi = std::numbers::pi;
  o.dim = 2;
  o.ricci_lower = 1.0;
  o.homogeneous_dim = 2;
  o.total_measure = 4.0 * pi;
  o.diameter = pi;
  auto angle = [](const ChartPoint& x, const ChartPoint& y) {
    return std::acos(std::clamp(x.dot(y) / (x.norm() * y.norm()), -1.0, 1.0));
  };
  o.exact_distance = angle;
  o.exact_ball_volume = [pi](const ChartPoint&, double r) { return 2.0 * pi * (1.0 - std::cos(std::min(r, pi))); };
  o.exact_kernel = [](double t, const ChartPoint& x, const ChartPoint& y) {
    return sphere_zonal_kernel(t, x.dot(y) / (x.norm() * y.norm())).value;
  };
  o.exact_spectrum = [](int k) {
    std::vector<double> ev;
    for (int l = 0; static_cast<int>(ev.size()) < k; ++l)
      for (int m = 0; m < 2 * l + 1 && static_cast<int>(ev.size()) < k; ++m) ev.push_back(l * (l + 1.0));
    return ev;
  };
  return b;
}

// Lattice {(i h, j h, k h^2/2)} in the box |x|,|y| <= extent, |z| <= z_extent.
// Horizontal neighbours are right translations by (+-h,0,0), (0,+-h,0), so the
// discrete operator is left invariant; edges leaving the box are dropped.
inline BuiltModel build_heisenberg(const ModelSpec& spec) {
  require(spec.dim == 3, ErrorKind::unsupported, "heisenberg model is the 3-dimensional group");
  require(spec.resolution % 2 == 0, ErrorKind::config, "heisenberg resolution must be even");
  const int m = spec.resolution / 2;
  const double a = spec.extent;
  const double h = a / m;
  const double delta = 0.5 * h * h;
  const double zext = spec.option("z_extent", a * a / 4.0);
  const int K = static_cast<int>(std::ceil(zext / delta - 1e-9));
  const int nx = 2 * m + 1, nz = 2 * K + 1;
  const Index total = static_cast<Index>(nx) * nx * nz;
  auto inside = [&](int i, int j, int k) { return std::abs(i) <= m && std::abs(j) <= m && std::abs(k) <= K; };
  auto idx = [&](int i, int j, int k) {
    return (static_cast<Index>(i + m) * nx + (j + m)) * nz + (k + K);
  };
  Mat nodes(total, 3);
  const double vol = h * h * delta;
  Vec mu = Vec::Constant(total, vol);
  std::vector<char> boundary(static_cast<size_t>(total), 0);
  std::vector<Edge> edges, zedges;
  for (int i = -m; i <= m; ++i)
    for (int j = -m; j <= m; ++j)
      for (int k = -K; k <= K; ++k) {
        Index id = idx(i, j, k);
        nodes.row(id) << i * h, j * h, k * delta;
        const int nb[4][3] = {{i + 1, j, k - j}, {i - 1, j, k + j}, {i, j + 1, k + i}, {i, j - 1, k - i}};
        for (const auto& q : nb) {
          if (!inside(q[0], q[1], q[2])) {
            boundary[id] = 1;
            continue;
          }
          Index o = idx(q[0], q[1], q[2]);
          if (id < o) edges.push_back({id, o, delta, h});
        }
        if (k + 1 <= K) zedges.push_back({id, idx(i, j, k + 1), vol / (delta * delta), delta});
        if (k == K || k == -K) boundary[id] = 1;
      }
  BuiltModel b;
  b.spec = spec;
  b.model = make_model(spec.id(), nodes, mu, edges, boundary, {}, h, 2);
  b.vform = VerticalForm{b.model.id, std::move(zedges)};
  auto& o = b.oracle;
  o.dim = 3;
  o.ricci_lower = std::numeric_limits<double>::quiet_NaN();
  o.homogeneous_dim = 4;
  o.cd_params = CDParameters{0.0, 0.5, 1.0, 2.0};
  o.exact_distance = [](const ChartPoint& x, const ChartPoint& y) {
    return heisenberg::cc_distance({x[0], x[1], x[2]}, {y[0], y[1], y[2]});
  };
  return b;
}

inline BuiltModel build_model(const ModelSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case ModelKind::euclidean: return build_euclidean(spec);
    case ModelKind::torus: return build_torus(spec);
    case ModelKind::sphere: return build_sphere(spec);
    case ModelKind::heisenberg: return build_heisenberg(spec);
    case ModelKind::hyperbolic:
      throw Error(ErrorKind::unsupported, "hyperbolic tier is not part of this build");
  }
  throw Error(ErrorKind::unsupported, "unknown model kind");
}

}  // namespace heatlab
