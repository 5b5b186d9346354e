#include "homog/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace homog::mesh {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Boundary tables with exact dihedral symmetry: cos/sin/tan are evaluated on
// one octant only and mirrored, so opposite side traces of a cell agree
// bitwise and square corners / tangency points are hit exactly.
struct BoundaryTables {
  std::vector<Vec2> dir;     // unit directions, counterclockwise from +x
  std::vector<Vec2> square;  // boundary of [-1,1]^2 along each direction
};

BoundaryTables make_tables(int n) {
  const int n8 = n / 8;
  // The square ring is parameterized by perimeter arclength (uniform spacing
  // per octant) so refining n scales every boundary edge exactly.
  std::vector<double> c(n8 + 1), s(n8 + 1), t(n8 + 1);
  for (int j = 0; j <= n8; ++j) {
    double th = 2.0 * kPi * j / n;
    c[j] = std::cos(th);
    s[j] = std::sin(th);
    t[j] = static_cast<double>(j) / n8;
  }
  c[0] = 1.0;
  s[0] = 0.0;
  c[n8] = s[n8] = std::sqrt(0.5);
  BoundaryTables tb;
  tb.dir.assign(n, Vec2{});
  tb.square.assign(n, Vec2{});
  auto put = [&](int j, double dx, double dy, double qx, double qy) {
    int jj = ((j % n) + n) % n;
    tb.dir[jj] = {dx, dy};
    tb.square[jj] = {qx, qy};
  };
  for (int j = 0; j <= n8; ++j) {
    put(j, c[j], s[j], 1.0, t[j]);
    put(n / 4 - j, s[j], c[j], t[j], 1.0);
    put(n / 4 + j, -s[j], c[j], -t[j], 1.0);
    put(n / 2 - j, -c[j], s[j], -1.0, t[j]);
    put(n / 2 + j, -c[j], -s[j], -1.0, -t[j]);
    put(3 * n / 4 - j, -s[j], -c[j], -t[j], -1.0);
    put(3 * n / 4 + j, s[j], -c[j], t[j], -1.0);
    put(n - j, c[j], -s[j], 1.0, -t[j]);
  }
  return tb;
}

int segment_count(double radius, double target_h, int refine_level) {
  double h = std::max(target_h, 1e-9);
  int n = 8 * static_cast<int>(std::ceil(2.0 * kPi * radius / (8.0 * h)));
  // 88 segments keep the inscribed-polygon area defect below 0.1%.
  n = std::clamp(n, 88, 8192);
  return n << refine_level;
}

struct Builder {
  Mesh m;

  int add_vertex(const Vec2& p) {
    m.vertices.push_back(p);
    return static_cast<int>(m.vertices.size()) - 1;
  }
  void tri(int a, int b, int c, Subdomain sd) {
    if (a == b || b == c || a == c) return;  // collapsed by a tangency merge
    m.triangles.push_back({a, b, c});
    m.subdomain.push_back(sd);
  }
  void band(const std::vector<int>& inner, const std::vector<int>& outer, Subdomain sd) {
    int n = static_cast<int>(inner.size());
    for (int j = 0; j < n; ++j) {
      int j2 = (j + 1) % n;
      tri(inner[j], outer[j], outer[j2], sd);
      tri(inner[j], outer[j2], inner[j2], sd);
    }
  }
  void fan(int center, const std::vector<int>& ring, Subdomain sd) {
    int n = static_cast<int>(ring.size());
    for (int j = 0; j < n; ++j) tri(center, ring[j], ring[(j + 1) % n], sd);
  }
  // Adds a ring of points, reusing the previous ring's vertex where the two
  // coincide (tangency); tolerance is relative to the local coordinate size.
  std::vector<int> ring(const std::vector<Vec2>& pts, const std::vector<int>* prev) {
    std::vector<int> idx(pts.size());
    for (size_t j = 0; j < pts.size(); ++j) {
      if (prev) {
        const Vec2& q = m.vertices[(*prev)[j]];
        double tol =
            1e-12 * std::max({std::fabs(q.x), std::fabs(q.y), std::fabs(pts[j].x),
                              std::fabs(pts[j].y), 1e-300});
        if (std::fabs(pts[j].x - q.x) <= tol && std::fabs(pts[j].y - q.y) <= tol) {
          idx[j] = (*prev)[j];
          continue;
        }
      }
      idx[j] = add_vertex(pts[j]);
    }
    return idx;
  }
};

std::vector<Vec2> circle_points(const BoundaryTables& tb, double r) {
  std::vector<Vec2> pts(tb.dir.size());
  for (size_t j = 0; j < pts.size(); ++j) pts[j] = tb.dir[j] * r;
  return pts;
}

// Ring radii from r0 (exclusive) to R (inclusive): geometric with the given
// growth factor, with ring width additionally capped by target_h.
std::vector<double> annulus_radii(double r0, double R, const GradingSpec& g, int refine_level) {
  if (!(R > r0) || !(r0 > 0.0)) throw ArgumentError("annulus radii must satisfy 0 < r0 < R");
  if (!(g.ratio > 1.0)) throw GradingError("ring growth ratio must exceed 1");
  if (!(g.target_h > 0.0)) throw ArgumentError("target_h must be positive");
  if (g.layers > 0 && g.layers * std::log(g.ratio) < std::log(R / r0) - 1e-12)
    throw GradingError("declared layers cannot span the annulus");
  double scale = 1.0 / static_cast<double>(1 << refine_level);
  double ratio = std::pow(g.ratio, scale);
  double cap = std::max(g.target_h * scale, 1e-14 * R);
  std::vector<double> radii;
  double r = r0;
  while (true) {
    double next = std::min(r * ratio, r + cap);
    if (next >= R - 0.5 * std::min(R * (ratio - 1.0), cap)) break;
    radii.push_back(next);
    r = next;
    if (radii.size() > 4000000) throw GradingError("ring schedule does not terminate");
  }
  radii.push_back(R);
  return radii;
}

std::vector<double> uniform_radii(double r0, double r1, int count) {
  std::vector<double> radii(count);
  for (int k = 1; k <= count; ++k) radii[k - 1] = r0 + (r1 - r0) * k / count;
  radii[count - 1] = r1;
  return radii;
}

BoundaryTag side_tag_of_index(int j, int n) {
  // Edge (j, j+1) of the outermost square ring.
  int n8 = n / 8;
  if (j >= 7 * n8 || j < n8) return BoundaryTag::SideRight;
  if (j < 3 * n8) return BoundaryTag::SideTop;
  if (j < 5 * n8) return BoundaryTag::SideLeft;
  return BoundaryTag::SideBottom;
}

// Core disk (center fan plus uniform rings) up to radius `rc`; returns the
// outermost ring indices.
std::vector<int> build_core(Builder& b, const BoundaryTables& tb, double rc, double target_h,
                            int refine_level, Subdomain sd) {
  int m_c = std::max(2, static_cast<int>(std::ceil(rc / std::max(target_h, 1e-9))))
            << refine_level;
  int center = b.add_vertex({0.0, 0.0});
  std::vector<int> prev;
  auto radii = uniform_radii(0.0, rc, m_c);
  for (size_t k = 0; k < radii.size(); ++k) {
    std::vector<int> cur = b.ring(circle_points(tb, radii[k]), prev.empty() ? nullptr : &prev);
    if (prev.empty())
      b.fan(center, cur, sd);
    else
      b.band(prev, cur, sd);
    prev = std::move(cur);
  }
  return prev;
}

// Annular bands from the ring at radius r0 (indices `start`) out to R.
std::vector<int> build_annulus(Builder& b, const BoundaryTables& tb, std::vector<int> start,
                               double r0, double R, const GradingSpec& g, int refine_level,
                               Subdomain sd) {
  for (double r : annulus_radii(r0, R, g, refine_level)) {
    std::vector<int> cur = b.ring(circle_points(tb, r), &start);
    b.band(start, cur, sd);
    start = std::move(cur);
  }
  return start;
}

// Morph bands from the circle ring at radius R (indices `start`) to the
// square of half-width hw; returns the square-boundary ring.
std::vector<int> build_exterior(Builder& b, const BoundaryTables& tb, std::vector<int> start,
                                double R, double hw) {
  int n = static_cast<int>(tb.dir.size());
  double h_ang = 2.0 * kPi * hw / n;
  double gap_mid = hw - R, gap_corner = hw * std::sqrt(2.0) - R;
  int m_x = std::max(2, static_cast<int>(std::ceil(0.5 * (gap_mid + gap_corner) / h_ang)));
  for (int k = 1; k <= m_x; ++k) {
    double s = static_cast<double>(k) / m_x;
    std::vector<Vec2> pts(n);
    for (int j = 0; j < n; ++j) pts[j] = tb.dir[j] * ((1.0 - s) * R) + tb.square[j] * (s * hw);
    std::vector<int> cur = b.ring(pts, &start);
    b.band(start, cur, Subdomain::Exterior);
    start = std::move(cur);
  }
  return start;
}

void add_circle_boundary(Builder& b, const std::vector<int>& ring, BoundaryTag tag) {
  int n = static_cast<int>(ring.size());
  for (int j = 0; j < n; ++j) b.m.boundary_edges.push_back({ring[j], ring[(j + 1) % n], tag});
}

Mesh build_square_cell(const closed_form::AnnulusSpec& annulus, double half_width,
                       const GradingSpec& grading, int refine_level) {
  annulus.validate();
  if (!(half_width > 0.0)) throw ArgumentError("half_width must be positive");
  if (annulus.R > half_width * (1.0 + 1e-12))
    throw ArgumentError("outer circle radius exceeds the cell half-width");
  double R = std::min(annulus.R, half_width);
  int n = segment_count(std::max(R, 0.5 * half_width), grading.target_h, refine_level);
  BoundaryTables tb = make_tables(n);

  Builder b;
  std::vector<int> ring = build_core(b, tb, annulus.r_eps, grading.target_h / (1 << refine_level),
                                     0, Subdomain::DiskCore);
  ring = build_annulus(b, tb, std::move(ring), annulus.r_eps, R, grading, refine_level,
                       Subdomain::Annulus);
  ring = build_exterior(b, tb, std::move(ring), R, half_width);

  for (int j = 0; j < n; ++j)
    b.m.boundary_edges.push_back({ring[j], ring[(j + 1) % n], side_tag_of_index(j, n)});

  // Periodic pairs by mirrored indices; the mirrored tables make the paired
  // coordinates agree bitwise. Each slave has exactly one master; corner
  // identification resolves through chains (top-right -> top-left ->
  // bottom-left), so corner masters are themselves paired.
  int n8 = n / 8;
  for (int j = -n8; j <= n8; ++j) {  // x = +hw pairs to x = -hw
    int jj = ((j % n) + n) % n;
    int mm = ((n / 2 - j) % n + n) % n;
    b.m.periodic_pairs.emplace_back(ring[jj], ring[mm]);
  }
  for (int j = n8 + 1; j <= 3 * n8; ++j) {  // y = +hw pairs to y = -hw
    b.m.periodic_pairs.emplace_back(ring[j], ring[(n - j) % n]);
  }

  b.m.tagged_circles.push_back({{0.0, 0.0}, annulus.r_eps});
  b.m.tagged_circles.push_back({{0.0, 0.0}, R});
  return std::move(b.m);
}

struct BitKey {
  std::uint64_t x = 0, y = 0;
  bool operator==(const BitKey& o) const { return x == o.x && y == o.y; }
};
struct BitKeyHash {
  std::size_t operator()(const BitKey& k) const {
    std::uint64_t h = k.x * 0x9e3779b97f4a7c15ULL ^ (k.y + 0x7f4a7c15u);
    h ^= h >> 29;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 32;
    return static_cast<std::size_t>(h);
  }
};
BitKey bit_key(const Vec2& p) {
  BitKey k;
  std::memcpy(&k.x, &p.x, sizeof(double));
  std::memcpy(&k.y, &p.y, sizeof(double));
  return k;
}

}  // namespace

Mesh structured_square(int n, Vec2 lower, Vec2 upper, bool periodic) {
  if (n < 2) throw ArgumentError("structured_square requires n >= 2");
  if (!(upper.x > lower.x) || !(upper.y > lower.y))
    throw ArgumentError("structured_square box is degenerate");
  Mesh m;
  double hx = (upper.x - lower.x) / n, hy = (upper.y - lower.y) / n;
  std::vector<double> X(n + 1), Y(n + 1);
  for (int i = 0; i <= n; ++i) X[i] = (i == n) ? upper.x : lower.x + i * hx;
  for (int j = 0; j <= n; ++j) Y[j] = (j == n) ? upper.y : lower.y + j * hy;
  auto id = [n](int i, int j) { return j * (n + 1) + i; };
  m.vertices.reserve((n + 1) * (n + 1));
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i) m.vertices.push_back({X[i], Y[j]});
  m.triangles.reserve(2 * n * n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      m.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      m.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  m.subdomain.assign(m.triangles.size(), Subdomain::Exterior);
  for (int i = 0; i < n; ++i) {
    m.boundary_edges.push_back({id(i, 0), id(i + 1, 0), BoundaryTag::SideBottom});
    m.boundary_edges.push_back({id(i + 1, n), id(i, n), BoundaryTag::SideTop});
    m.boundary_edges.push_back({id(0, i + 1), id(0, i), BoundaryTag::SideLeft});
    m.boundary_edges.push_back({id(n, i), id(n, i + 1), BoundaryTag::SideRight});
  }
  if (periodic) {
    for (int j = 0; j <= n; ++j) m.periodic_pairs.emplace_back(id(n, j), id(0, j));
    for (int i = 0; i < n; ++i) m.periodic_pairs.emplace_back(id(i, n), id(i, 0));
  }
  return m;
}

Mesh disk_cell(double R, const GradingSpec& grading, double inner, int refine_level) {
  if (!(R > 0.0)) throw ArgumentError("disk radius must be positive");
  if (inner != 0.0 && !(inner > 0.0 && inner < R))
    throw ArgumentError("inner circle must satisfy 0 < inner < R");
  int n = segment_count(R, grading.target_h, refine_level);
  BoundaryTables tb = make_tables(n);
  Builder b;
  std::vector<int> ring;
  if (inner > 0.0) {
    ring = build_core(b, tb, inner, grading.target_h / (1 << refine_level), 0,
                      Subdomain::DiskCore);
    ring = build_annulus(b, tb, std::move(ring), inner, R, grading, refine_level,
                         Subdomain::Annulus);
    b.m.tagged_circles.push_back({{0.0, 0.0}, inner});
  } else {
    ring = build_core(b, tb, R, grading.target_h, refine_level, Subdomain::DiskCore);
  }
  add_circle_boundary(b, ring, BoundaryTag::Outer);
  b.m.tagged_circles.push_back({{0.0, 0.0}, R});
  return std::move(b.m);
}

Mesh annulus_cell(double R, double inner, const GradingSpec& grading, int refine_level) {
  if (!(inner > 0.0 && inner < R)) throw ArgumentError("annulus requires 0 < inner < R");
  int n = segment_count(R, grading.target_h, refine_level);
  BoundaryTables tb = make_tables(n);
  Builder b;
  std::vector<int> hole = b.ring(circle_points(tb, inner), nullptr);
  add_circle_boundary(b, hole, BoundaryTag::InnerCircle);
  std::vector<int> ring =
      build_annulus(b, tb, hole, inner, R, grading, refine_level, Subdomain::Annulus);
  add_circle_boundary(b, ring, BoundaryTag::Outer);
  b.m.tagged_circles.push_back({{0.0, 0.0}, inner});
  b.m.tagged_circles.push_back({{0.0, 0.0}, R});
  return std::move(b.m);
}

Mesh periodic_cell(const closed_form::AnnulusSpec& annulus, double half_width,
                   const GradingSpec& grading, int refine_level) {
  return build_square_cell(annulus, half_width, grading, refine_level);
}

Mesh perforated_lattice(Vec2 lower, Vec2 upper, double pitch,
                        const closed_form::AnnulusSpec& annulus, const GradingSpec& grading,
                        int refine_level) {
  double W = upper.x - lower.x, H = upper.y - lower.y;
  if (!(pitch > 0.0) || !(W > 0.0) || !(H > 0.0))
    throw ArgumentError("lattice domain or pitch is degenerate");
  int nx = static_cast<int>(std::llround(W / pitch));
  int ny = static_cast<int>(std::llround(H / pitch));
  if (nx < 1 || ny < 1 || std::fabs(nx * pitch - W) > 1e-12 * std::max(1.0, W) ||
      std::fabs(ny * pitch - H) > 1e-12 * std::max(1.0, H))
    throw ArgumentError("pitch must divide the domain sides to 1e-12");

  closed_form::AnnulusSpec cell_annulus{annulus.R * pitch, annulus.r_eps * pitch};
  if (cell_annulus.r_eps < 1e-7 * pitch)
    throw ResolutionError("inner radius below 1e-7 of the pitch is unmeshable");
  GradingSpec cell_grading = grading;
  cell_grading.target_h = grading.target_h * pitch;
  double hw = 0.5 * pitch;
  auto proto =
      std::make_shared<Mesh>(build_square_cell(cell_annulus, hw, cell_grading, refine_level));

  // Canonical lattice-line coordinates: both cells adjacent to a line compute
  // the same bit pattern for vertices on it, so deduplication is exact.
  std::vector<double> X(nx + 1), Y(ny + 1);
  for (int i = 0; i <= nx; ++i) X[i] = (i == nx) ? upper.x : lower.x + i * pitch;
  for (int j = 0; j <= ny; ++j) Y[j] = (j == ny) ? upper.y : lower.y + j * pitch;

  Mesh m;
  LatticeInfo info;
  info.nx = nx;
  info.ny = ny;
  info.pitch = pitch;
  info.origin = lower;
  info.cell = proto;
  info.cell_vertices.assign(nx * ny, {});
  const std::size_t nlv = proto->vertices.size();
  const std::size_t nlt = proto->triangles.size();
  m.vertices.reserve(nlv * nx * ny);
  m.triangles.reserve(nlt * nx * ny);
  std::unordered_map<BitKey, int, BitKeyHash> shared;

  for (int cy = 0; cy < ny; ++cy) {
    for (int cx = 0; cx < nx; ++cx) {
      int cid = cy * nx + cx;
      double cx0 = 0.5 * (X[cx] + X[cx + 1]);
      double cy0 = 0.5 * (Y[cy] + Y[cy + 1]);
      std::vector<int>& vmap = info.cell_vertices[cid];
      vmap.resize(nlv);
      for (std::size_t lv = 0; lv < nlv; ++lv) {
        const Vec2& lp = proto->vertices[lv];
        bool on_x = lp.x == hw || lp.x == -hw;
        bool on_y = lp.y == hw || lp.y == -hw;
        Vec2 gp{on_x ? (lp.x > 0 ? X[cx + 1] : X[cx]) : cx0 + lp.x,
                on_y ? (lp.y > 0 ? Y[cy + 1] : Y[cy]) : cy0 + lp.y};
        if (on_x || on_y) {
          auto [it, inserted] = shared.try_emplace(bit_key(gp), -1);
          if (inserted) {
            m.vertices.push_back(gp);
            it->second = static_cast<int>(m.vertices.size()) - 1;
          }
          vmap[lv] = it->second;
        } else {
          m.vertices.push_back(gp);
          vmap[lv] = static_cast<int>(m.vertices.size()) - 1;
        }
      }
      for (std::size_t lt = 0; lt < nlt; ++lt) {
        const auto& t = proto->triangles[lt];
        m.triangles.push_back({vmap[t[0]], vmap[t[1]], vmap[t[2]]});
        m.subdomain.push_back(proto->subdomain[lt]);
        info.tri_cell.push_back(cid);
        info.tri_cell_local.push_back(static_cast<int>(lt));
      }
      for (const BoundaryEdge& e : proto->boundary_edges) {
        bool keep = (e.tag == BoundaryTag::SideLeft && cx == 0) ||
                    (e.tag == BoundaryTag::SideRight && cx == nx - 1) ||
                    (e.tag == BoundaryTag::SideBottom && cy == 0) ||
                    (e.tag == BoundaryTag::SideTop && cy == ny - 1);
        if (keep) m.boundary_edges.push_back({vmap[e.a], vmap[e.b], e.tag});
      }
      m.tagged_circles.push_back({{cx0, cy0}, cell_annulus.r_eps});
      m.tagged_circles.push_back({{cx0, cy0}, cell_annulus.R});
    }
  }
  m.lattice = std::move(info);
  return m;
}

double Mesh::total_area() const {
  double a = 0.0;
  for (std::size_t t = 0; t < triangles.size(); ++t) a += signed_area(static_cast<int>(t));
  return a;
}

double Mesh::area_of(Subdomain s) const {
  double a = 0.0;
  for (std::size_t t = 0; t < triangles.size(); ++t)
    if (subdomain[t] == s) a += signed_area(static_cast<int>(t));
  return a;
}

double Mesh::h_min() const {
  double h = std::numeric_limits<double>::max();
  for (const auto& t : triangles)
    for (int e = 0; e < 3; ++e)
      h = std::min(h, (vertices[t[e]] - vertices[t[(e + 1) % 3]]).norm());
  return h;
}

double Mesh::h_max() const {
  double h = 0.0;
  for (const auto& t : triangles)
    for (int e = 0; e < 3; ++e)
      h = std::max(h, (vertices[t[e]] - vertices[t[(e + 1) % 3]]).norm());
  return h;
}

std::vector<int> Mesh::boundary_vertex_tag() const {
  std::vector<int> tag(vertices.size(), -1);
  for (const BoundaryEdge& e : boundary_edges) {
    if (tag[e.a] < 0) tag[e.a] = static_cast<int>(e.tag);
    if (tag[e.b] < 0) tag[e.b] = static_cast<int>(e.tag);
  }
  return tag;
}

std::vector<int> Mesh::periodic_master_map() const {
  std::vector<int> parent(vertices.size());
  std::iota(parent.begin(), parent.end(), 0);
  for (const auto& [slave, master] : periodic_pairs) parent[slave] = master;
  std::vector<int> root(vertices.size());
  for (std::size_t v = 0; v < vertices.size(); ++v) {
    int r = static_cast<int>(v);
    for (int guard = 0; parent[r] != r; ++guard) {
      r = parent[r];
      if (guard > 1000) throw PairingError("periodic pair chain does not terminate");
    }
    root[v] = r;
  }
  return root;
}

void Mesh::validate() const {
  const int nv = static_cast<int>(vertices.size());
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    for (int e = 0; e < 3; ++e) {
      int v = triangles[t][e];
      if (v < 0 || v >= nv) throw DomainError("triangle vertex index out of range");
    }
    if (!(signed_area(static_cast<int>(t)) > 0.0))
      throw DomainError("triangle " + std::to_string(t) + " has non-positive area");
  }

  // Edge-manifoldness and consistent orientation: every directed edge occurs
  // at most once, every undirected edge once (boundary) or twice (interior).
  std::unordered_map<std::uint64_t, int> edge_count;
  edge_count.reserve(3 * triangles.size());
  auto ukey = [nv](int a, int b) {
    return static_cast<std::uint64_t>(std::min(a, b)) * nv + std::max(a, b);
  };
  auto dkey = [nv](int a, int b) {
    return static_cast<std::uint64_t>(a) * nv + b;
  };
  std::unordered_map<std::uint64_t, int> directed;
  directed.reserve(3 * triangles.size());
  for (const auto& t : triangles)
    for (int e = 0; e < 3; ++e) {
      int a = t[e], b = t[(e + 1) % 3];
      if (++directed[dkey(a, b)] > 1) throw DomainError("inconsistent triangle orientation");
      ++edge_count[ukey(a, b)];
    }
  std::size_t n_boundary = 0;
  for (const auto& [k, c] : edge_count) {
    if (c > 2) throw DomainError("edge shared by more than two triangles");
    if (c == 1) ++n_boundary;
  }
  for (const BoundaryEdge& e : boundary_edges) {
    auto it = edge_count.find(ukey(e.a, e.b));
    if (it == edge_count.end() || it->second != 1)
      throw DomainError("tagged boundary edge is not a boundary edge of the triangulation");
  }
  if (boundary_edges.size() != n_boundary)
    throw DomainError("boundary tags cover " + std::to_string(boundary_edges.size()) +
                      " of " + std::to_string(n_boundary) + " boundary edges");

  if (!periodic_pairs.empty()) {
    double minx = vertices[0].x, maxx = minx, miny = vertices[0].y, maxy = miny;
    for (const Vec2& p : vertices) {
      minx = std::min(minx, p.x);
      maxx = std::max(maxx, p.x);
      miny = std::min(miny, p.y);
      maxy = std::max(maxy, p.y);
    }
    double W = maxx - minx, H = maxy - miny;
    double tol = 1e-12 * std::max({W, H, 1.0});
    for (const auto& [s, mast] : periodic_pairs) {
      Vec2 d = vertices[s] - vertices[mast];
      bool x_pair = std::fabs(std::fabs(d.x) - W) <= tol && std::fabs(d.y) <= tol;
      bool y_pair = std::fabs(std::fabs(d.y) - H) <= tol && std::fabs(d.x) <= tol;
      if (!x_pair && !y_pair)
        throw PairingError("periodic pair offset is not a period vector");
    }
  }

  for (const TaggedCircle& c : tagged_circles) {
    double lo = c.radius * (1.0 - 1e-9), hi = c.radius * (1.0 + 1e-9);
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      bool in = false, out = false;
      for (int e = 0; e < 3; ++e) {
        double r = (vertices[triangles[t][e]] - c.center).norm();
        if (r < lo) in = true;
        if (r > hi) out = true;
      }
      if (in && out) throw DomainError("triangle straddles a tagged circle");
    }
  }

  if (lattice) {
    const LatticeInfo& L = *lattice;
    if (L.tri_cell.size() != triangles.size() || !L.cell)
      throw DomainError("lattice metadata inconsistent with triangles");
    double tol = 1e-12 * std::max(1.0, L.pitch * std::max(L.nx, L.ny));
    for (int cid = 0; cid < L.nx * L.ny; ++cid) {
      int cx = cid % L.nx, cy = cid / L.nx;
      Vec2 center{L.origin.x + (cx + 0.5) * L.pitch, L.origin.y + (cy + 0.5) * L.pitch};
      const auto& vmap = L.cell_vertices[cid];
      if (vmap.size() != L.cell->vertices.size())
        throw DomainError("lattice cell vertex map has wrong size");
      for (std::size_t lv = 0; lv < vmap.size(); ++lv) {
        Vec2 expect = center + L.cell->vertices[lv];
        if ((vertices[vmap[lv]] - expect).norm() > tol)
          throw DomainError("lattice cell vertex map is not a translation");
      }
    }
  }
}

void Mesh::dump_text(std::string path) const {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot open mesh dump file " + path);
  out.precision(17);
  out << "vertices " << vertices.size() << " triangles " << triangles.size() << "\n";
  for (const Vec2& p : vertices) out << p.x << " " << p.y << "\n";
  static const char* names[] = {"DISK_CORE", "ANNULUS", "EXTERIOR"};
  for (std::size_t t = 0; t < triangles.size(); ++t)
    out << triangles[t][0] << " " << triangles[t][1] << " " << triangles[t][2] << " "
        << names[static_cast<int>(subdomain[t])] << "\n";
}

void Mesh::write_vtk(std::string path, const std::vector<double>& point_data,
                     const std::string& data_name) const {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot open VTK file " + path);
  out.precision(12);
  out << "# vtk DataFile Version 3.0\nhomog mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << vertices.size() << " double\n";
  for (const Vec2& p : vertices) out << p.x << " " << p.y << " 0\n";
  out << "CELLS " << triangles.size() << " " << 4 * triangles.size() << "\n";
  for (const auto& t : triangles) out << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
  out << "CELL_TYPES " << triangles.size() << "\n";
  for (std::size_t t = 0; t < triangles.size(); ++t) out << "5\n";
  out << "CELL_DATA " << triangles.size() << "\nSCALARS subdomain int 1\nLOOKUP_TABLE default\n";
  for (Subdomain s : subdomain) out << static_cast<int>(s) << "\n";
  if (!point_data.empty()) {
    if (point_data.size() % vertices.size() != 0)
      throw ArgumentError("point data size is not a multiple of the vertex count");
    std::size_t comps = point_data.size() / vertices.size();
    out << "POINT_DATA " << vertices.size() << "\n";
    if (comps == 1) {
      out << "SCALARS " << data_name << " double 1\nLOOKUP_TABLE default\n";
      for (double v : point_data) out << v << "\n";
    } else if (comps == 2) {
      out << "VECTORS " << data_name << " double\n";
      for (std::size_t v = 0; v < vertices.size(); ++v)
        out << point_data[2 * v] << " " << point_data[2 * v + 1] << " 0\n";
    } else {
      throw ArgumentError("point data must have 1 or 2 components");
    }
  }
}

PointLocator::PointLocator(const Mesh& mesh) : mesh_(mesh) {
  if (mesh.vertices.empty() || mesh.triangles.empty())
    throw ArgumentError("cannot build a locator over an empty mesh");
  lo_ = hi_ = mesh.vertices[0];
  for (const Vec2& p : mesh.vertices) {
    lo_.x = std::min(lo_.x, p.x);
    lo_.y = std::min(lo_.y, p.y);
    hi_.x = std::max(hi_.x, p.x);
    hi_.y = std::max(hi_.y, p.y);
  }
  int n = static_cast<int>(std::ceil(std::sqrt(mesh.triangles.size() / 8.0)));
  nx_ = ny_ = std::clamp(n, 1, 512);
  hx_ = (hi_.x - lo_.x) / nx_;
  hy_ = (hi_.y - lo_.y) / ny_;
  if (hx_ <= 0.0 || hy_ <= 0.0) throw ArgumentError("degenerate mesh bounding box");
  bins_.resize(static_cast<std::size_t>(nx_) * ny_);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    Vec2 a = mesh.vertices[tri[0]], b = mesh.vertices[tri[1]], c = mesh.vertices[tri[2]];
    double x0 = std::min({a.x, b.x, c.x}), x1 = std::max({a.x, b.x, c.x});
    double y0 = std::min({a.y, b.y, c.y}), y1 = std::max({a.y, b.y, c.y});
    int i0 = std::clamp(static_cast<int>((x0 - lo_.x) / hx_), 0, nx_ - 1);
    int i1 = std::clamp(static_cast<int>((x1 - lo_.x) / hx_), 0, nx_ - 1);
    int j0 = std::clamp(static_cast<int>((y0 - lo_.y) / hy_), 0, ny_ - 1);
    int j1 = std::clamp(static_cast<int>((y1 - lo_.y) / hy_), 0, ny_ - 1);
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i)
        bins_[static_cast<std::size_t>(j) * nx_ + i].push_back(static_cast<int>(t));
  }
}

int PointLocator::locate(const Vec2& p, std::array<double, 3>* bary) const {
  if (p.x < lo_.x - 1e-12 || p.x > hi_.x + 1e-12 || p.y < lo_.y - 1e-12 || p.y > hi_.y + 1e-12)
    return -1;
  int i = std::clamp(static_cast<int>((p.x - lo_.x) / hx_), 0, nx_ - 1);
  int j = std::clamp(static_cast<int>((p.y - lo_.y) / hy_), 0, ny_ - 1);
  for (int t : bins_[static_cast<std::size_t>(j) * nx_ + i]) {
    const auto& tri = mesh_.triangles[t];
    Vec2 a = mesh_.vertices[tri[0]], b = mesh_.vertices[tri[1]], c = mesh_.vertices[tri[2]];
    double det = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    double l1 = ((b.x - p.x) * (c.y - p.y) - (c.x - p.x) * (b.y - p.y)) / det;
    double l2 = ((c.x - p.x) * (a.y - p.y) - (a.x - p.x) * (c.y - p.y)) / det;
    double l3 = 1.0 - l1 - l2;
    if (l1 >= -1e-10 && l2 >= -1e-10 && l3 >= -1e-10) {
      if (bary) *bary = {l1, l2, l3};
      return t;
    }
  }
  return -1;
}

}  // namespace homog::mesh
