#pragma once

#include <array>
#include <cmath>
#include <numbers>

namespace heatlab::heisenberg {

using Point = std::array<double, 3>;

// (x, y, z) . (x', y', z') = (x + x', y + y', z + z' + (x y' - y x') / 2)
inline Point multiply(const Point& a, const Point& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2] + 0.5 * (a[0] * b[1] - a[1] * b[0])};
}

inline Point inverse(const Point& a) { return {-a[0], -a[1], -a[2]}; }

// a^{-1} b : the target seen from a, by left invariance.
inline Point relative(const Point& a, const Point& b) { return multiply(inverse(a), b); }

struct Arc {
  double length = 0.0;   // travel time at unit speed
  double heading = 0.0;  // initial heading
  double turn = 0.0;     // total signed turning angle (curvature * length)
};

// Minimizing horizontal curve from the origin to p among circular arcs of
// constant curvature (straight lines included). Chord c, lifted area z:
//   z / c^2 = (phi - sin phi) / (8 sin^2(phi/2)),  T = c (phi/2) / sin(phi/2)
inline Arc arc_to(const Point& p) {
  const double pi = std::numbers::pi;
  double c = std::hypot(p[0], p[1]);
  double z = p[2];
  Arc a;
  if (z == 0.0) {
    a.length = c;
    a.heading = c > 0 ? std::atan2(p[1], p[0]) : 0.0;
    return a;
  }
  double s = z > 0 ? 1.0 : -1.0;
  double az = std::abs(z);
  double phi;
  if (c == 0.0) {
    phi = 2 * pi;
    a.length = 2.0 * std::sqrt(pi * az);
    a.heading = 0.0;
  } else {
    double target = az / (c * c);
    auto g = [](double ph) {
      double h = std::sin(0.5 * ph);
      return (ph - std::sin(ph)) / (8.0 * h * h);
    };
    double lo = 0.0, hi = 2 * pi;
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (lo + hi);
      if (mid <= 0.0 || g(mid) < target)
        lo = mid;
      else
        hi = mid;
      if (hi - lo < 1e-15) break;
    }
    phi = 0.5 * (lo + hi);
    a.length = c * (0.5 * phi) / std::sin(0.5 * phi);
    a.heading = std::atan2(p[1], p[0]) - s * 0.5 * phi;
  }
  a.turn = s * phi;
  return a;
}

// Carnot-Caratheodory distance through the arc family.
inline double cc_distance(const Point& a, const Point& b) { return arc_to(relative(a, b)).length; }

// Exact flow of one unit-speed straight segment with heading th over time tau.
inline Point flow_segment(const Point& p, double th, double tau) {
  double u = std::cos(th), v = std::sin(th);
  return {p[0] + u * tau, p[1] + v * tau, p[2] + 0.5 * (p[0] * v - p[1] * u) * tau};
}

}  // namespace heatlab::heisenberg
