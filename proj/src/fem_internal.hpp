#pragma once

// Shared element-level machinery for the P1 and Taylor-Hood assemblies:
// barycentric quadrature rules and per-triangle geometry.

#include <array>
#include <cmath>

#include "homog/common.hpp"
#include "homog/mesh.hpp"

namespace homog::fem {

struct TriQuad {
  int n = 0;
  std::array<std::array<double, 3>, 7> bary{};
  std::array<double, 7> w{};  // weights sum to 1 (multiply by triangle area)
};

// Edge-midpoint rule, exact for quadratics.
inline const TriQuad& quad_mid3() {
  static const TriQuad q = [] {
    TriQuad t;
    t.n = 3;
    t.bary[0] = {0.5, 0.5, 0.0};
    t.bary[1] = {0.0, 0.5, 0.5};
    t.bary[2] = {0.5, 0.0, 0.5};
    t.w = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0, 0, 0, 0};
    return t;
  }();
  return q;
}

// Seven-point rule, exact for quintics.
inline const TriQuad& quad_deg5() {
  static const TriQuad q = [] {
    TriQuad t;
    t.n = 7;
    const double s15 = std::sqrt(15.0);
    const double a1 = (6.0 - s15) / 21.0, w1 = (155.0 - s15) / 1200.0;
    const double a2 = (6.0 + s15) / 21.0, w2 = (155.0 + s15) / 1200.0;
    t.bary[0] = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    t.w[0] = 9.0 / 40.0;
    t.bary[1] = {a1, a1, 1.0 - 2.0 * a1};
    t.bary[2] = {a1, 1.0 - 2.0 * a1, a1};
    t.bary[3] = {1.0 - 2.0 * a1, a1, a1};
    t.w[1] = t.w[2] = t.w[3] = w1;
    t.bary[4] = {a2, a2, 1.0 - 2.0 * a2};
    t.bary[5] = {a2, 1.0 - 2.0 * a2, a2};
    t.bary[6] = {1.0 - 2.0 * a2, a2, a2};
    t.w[4] = t.w[5] = t.w[6] = w2;
    return t;
  }();
  return q;
}

struct TriGeom {
  std::array<Vec2, 3> p;
  std::array<Vec2, 3> grad;  // gradients of the barycentric coordinates
  double area = 0.0;

  TriGeom(const mesh::Mesh& m, int t) {
    for (int k = 0; k < 3; ++k) p[k] = m.vertices[m.triangles[t][k]];
    double det = (p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y);
    area = 0.5 * det;
    grad[0] = {(p[1].y - p[2].y) / det, (p[2].x - p[1].x) / det};
    grad[1] = {(p[2].y - p[0].y) / det, (p[0].x - p[2].x) / det};
    grad[2] = {(p[0].y - p[1].y) / det, (p[1].x - p[0].x) / det};
  }

  Vec2 point(const std::array<double, 3>& b) const {
    return {b[0] * p[0].x + b[1] * p[1].x + b[2] * p[2].x,
            b[0] * p[0].y + b[1] * p[1].y + b[2] * p[2].y};
  }
};

}  // namespace homog::fem
