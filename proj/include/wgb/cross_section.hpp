/**
 * @file cross_section.hpp
 * @brief Dirichlet ground state of the cross-section and the twist constant C(S).
 *
 * The section is rasterized on a uniform lattice. Interior nodes carry
 * unknowns; an arm from an interior node that leaves the section is cut at
 * the boundary, and the boundary distance along that arm enters the
 * stencil (Gibou-type symmetric correction). On lattice-aligned boundaries
 * this reduces to the plain 5-point stencil.
 */
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <queue>
#include <sstream>
#include <variant>
#include <vector>

#include "wgb/errors.hpp"
#include "wgb/numerics/sparse.hpp"

namespace wgb {

struct Disk {
  double radius = 1.0;
};

/// Axis-aligned rectangle centered at 0.
struct Rectangle {
  double width = 1.0;
  double height = 1.0;
};

struct Polygon {
  std::vector<Eigen::Vector2d> vertices;
};

using SectionShape = std::variant<Disk, Rectangle, Polygon>;

/// Lattice directions of the four stencil arms: +y1, -y1, +y2, -y2.
inline constexpr std::array<std::array<int, 2>, 4> kArms{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};

namespace detail {

/// Point-in-shape test and ray distance to the boundary for one shape.
struct ShapeGeometry {
  SectionShape shape;

  double scale() const {
    return std::visit(
        [](const auto& s) -> double {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, Disk>) {
            return s.radius;
          } else if constexpr (std::is_same_v<T, Rectangle>) {
            return std::max(s.width, s.height);
          } else {
            double m = 0.0;
            for (const auto& v : s.vertices) m = std::max(m, v.norm());
            return std::max(m, 1e-300);
          }
        },
        shape);
  }

  /// Strictly inside, with an absolute tolerance tol.
  bool inside(const Eigen::Vector2d& p, double tol) const {
    return std::visit(
        [&](const auto& s) -> bool {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, Disk>) {
            return p.norm() < s.radius - tol;
          } else if constexpr (std::is_same_v<T, Rectangle>) {
            return std::abs(p.x()) < 0.5 * s.width - tol && std::abs(p.y()) < 0.5 * s.height - tol;
          } else {
            return polygon_contains(s, p) && polygon_edge_distance(s, p) > tol;
          }
        },
        shape);
  }

  /// Distance from p along the unit direction d to the first boundary crossing.
  double ray_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& d) const {
    return std::visit(
        [&](const auto& s) -> double {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, Disk>) {
            const double b = p.dot(d);
            const double c = p.squaredNorm() - s.radius * s.radius;
            return -b + std::sqrt(std::max(0.0, b * b - c));
          } else if constexpr (std::is_same_v<T, Rectangle>) {
            double t = INFINITY;
            if (d.x() > 0) t = std::min(t, (0.5 * s.width - p.x()) / d.x());
            if (d.x() < 0) t = std::min(t, (-0.5 * s.width - p.x()) / d.x());
            if (d.y() > 0) t = std::min(t, (0.5 * s.height - p.y()) / d.y());
            if (d.y() < 0) t = std::min(t, (-0.5 * s.height - p.y()) / d.y());
            return t;
          } else {
            double t = INFINITY;
            const std::size_t n = s.vertices.size();
            for (std::size_t i = 0; i < n; ++i) {
              const Eigen::Vector2d a = s.vertices[i];
              const Eigen::Vector2d e = s.vertices[(i + 1) % n] - a;
              const double den = d.x() * e.y() - d.y() * e.x();
              if (std::abs(den) < 1e-300) continue;
              const Eigen::Vector2d w = a - p;
              const double tr = (w.x() * e.y() - w.y() * e.x()) / den;
              const double u = (w.x() * d.y() - w.y() * d.x()) / den;
              if (tr > 0.0 && u >= 0.0 && u <= 1.0) t = std::min(t, tr);
            }
            return t;
          }
        },
        shape);
  }

  static bool polygon_contains(const Polygon& poly, const Eigen::Vector2d& p) {
    bool in = false;
    const std::size_t n = poly.vertices.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const auto& a = poly.vertices[i];
      const auto& b = poly.vertices[j];
      if ((a.y() > p.y()) != (b.y() > p.y())) {
        const double x = (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x();
        if (p.x() < x) in = !in;
      }
    }
    return in;
  }

  static double polygon_edge_distance(const Polygon& poly, const Eigen::Vector2d& p) {
    double best = INFINITY;
    const std::size_t n = poly.vertices.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Vector2d a = poly.vertices[i];
      const Eigen::Vector2d e = poly.vertices[(i + 1) % n] - a;
      const double t = std::clamp((p - a).dot(e) / e.squaredNorm(), 0.0, 1.0);
      best = std::min(best, (a + t * e - p).norm());
    }
    return best;
  }
};

inline double polygon_signed_area(const Polygon& poly) {
  double a = 0.0;
  const std::size_t n = poly.vertices.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = poly.vertices[i];
    const auto& q = poly.vertices[(i + 1) % n];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

inline Eigen::Vector2d polygon_centroid(const Polygon& poly) {
  const double area = polygon_signed_area(poly);
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  const std::size_t n = poly.vertices.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = poly.vertices[i];
    const auto& q = poly.vertices[(i + 1) % n];
    c += (p + q) * (p.x() * q.y() - q.x() * p.y());
  }
  return c / (6.0 * area);
}

}  // namespace detail

/**
 * Rasterized cross-section.
 *
 * Lattice node (i, j) sits at y = corner + h (i, j), in coordinates relative
 * to the section origin (the point where the reference curve pierces S).
 * For each interior node the mask stores the four arm neighbours (or -1)
 * and the arm lengths: h for interior neighbours, the boundary distance
 * (clamped to [1e-3 h, h]) for cut arms.
 */
class SectionMask {
 public:
  struct Node {
    int i = 0;
    int j = 0;
    std::array<int, 4> neighbor{-1, -1, -1, -1};
    std::array<double, 4> arm{0.0, 0.0, 0.0, 0.0};
  };

  SectionMask(double h, int n1, int n2, Eigen::Vector2d corner, std::vector<Node> nodes)
      : h_(h), n1_(n1), n2_(n2), corner_(std::move(corner)), nodes_(std::move(nodes)) {
    index_.assign(static_cast<std::size_t>(n1_) * static_cast<std::size_t>(n2_), -1);
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
      index_[flat(nodes_[k].i, nodes_[k].j)] = static_cast<int>(k);
    }
    check();
  }

  double h() const noexcept { return h_; }
  int n1() const noexcept { return n1_; }
  int n2() const noexcept { return n2_; }
  const Eigen::Vector2d& corner() const noexcept { return corner_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }

  /// Node id at lattice (i, j), or -1 if exterior or outside the lattice.
  int id(int i, int j) const {
    if (i < 0 || j < 0 || i >= n1_ || j >= n2_) return -1;
    return index_[flat(i, j)];
  }

  Eigen::Vector2d lattice_point(double i, double j) const {
    return corner_ + h_ * Eigen::Vector2d(i, j);
  }

  Eigen::Vector2d position(std::size_t k) const {
    return lattice_point(nodes_[k].i, nodes_[k].j);
  }

  /// max |y| over interior nodes plus one lattice spacing (covers cut arms).
  double radius() const {
    double r = 0.0;
    for (std::size_t k = 0; k < nodes_.size(); ++k) r = std::max(r, position(k).norm());
    return r + h_;
  }

  /// Exact lattice rotation y -> (-y2, y1).
  SectionMask rotated90() const {
    const Eigen::Vector2d c(-(corner_.y() + (n2_ - 1) * h_), corner_.x());
    // Old arm a maps to new arm map[a]: +y1 -> +y2, -y1 -> -y2, +y2 -> -y1, -y2 -> +y1.
    constexpr std::array<int, 4> map{2, 3, 1, 0};
    std::vector<std::pair<std::pair<int, int>, std::size_t>> order;
    order.reserve(nodes_.size());
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
      order.push_back({{n2_ - 1 - nodes_[k].j, nodes_[k].i}, k});
    }
    std::sort(order.begin(), order.end());
    std::vector<int> new_id(nodes_.size());
    for (std::size_t q = 0; q < order.size(); ++q) new_id[order[q].second] = static_cast<int>(q);
    std::vector<Node> out(nodes_.size());
    for (std::size_t q = 0; q < order.size(); ++q) {
      const Node& old = nodes_[order[q].second];
      Node& nn = out[q];
      nn.i = order[q].first.first;
      nn.j = order[q].first.second;
      for (int a = 0; a < 4; ++a) {
        const int b = map[static_cast<std::size_t>(a)];
        nn.neighbor[static_cast<std::size_t>(b)] =
            old.neighbor[static_cast<std::size_t>(a)] < 0
                ? -1
                : new_id[static_cast<std::size_t>(old.neighbor[static_cast<std::size_t>(a)])];
        nn.arm[static_cast<std::size_t>(b)] = old.arm[static_cast<std::size_t>(a)];
      }
    }
    return SectionMask(h_, n2_, n1_, c, std::move(out));
  }

 private:
  std::size_t flat(int i, int j) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(n2_) + static_cast<std::size_t>(j);
  }

  void check() const {
    if (nodes_.size() < 200) {
      throw ValidationError("SectionMask: only " + std::to_string(nodes_.size()) +
                            " interior nodes (at least 200 required); decrease h");
    }
    std::vector<char> seen(nodes_.size(), 0);
    std::queue<int> todo;
    todo.push(0);
    seen[0] = 1;
    std::size_t count = 1;
    while (!todo.empty()) {
      const int k = todo.front();
      todo.pop();
      for (int nb : nodes_[static_cast<std::size_t>(k)].neighbor) {
        if (nb >= 0 && !seen[static_cast<std::size_t>(nb)]) {
          seen[static_cast<std::size_t>(nb)] = 1;
          ++count;
          todo.push(nb);
        }
      }
    }
    if (count != nodes_.size()) {
      throw ValidationError("SectionMask: rasterized section is disconnected at this h");
    }
  }

  double h_;
  int n1_;
  int n2_;
  Eigen::Vector2d corner_;
  std::vector<Node> nodes_;
  std::vector<int> index_;
};

/**
 * Lattice rasterization of a disk, rectangle or polygon.
 *
 * The lattice is anchored at the lower-left corner of the bounding box, so
 * rectangle sides fall on lattice lines. `origin` is given in shape
 * coordinates (disk and rectangle are centered at 0, polygons use their
 * vertex coordinates); it defaults to the centroid. Interior nodes are
 * those strictly inside the shape.
 */
inline SectionMask rasterize_section(const SectionShape& shape, double h,
                                     std::optional<Eigen::Vector2d> origin = std::nullopt) {
  if (!(h > 0.0) || !std::isfinite(h)) throw ValidationError("rasterize_section: h must be > 0");
  Eigen::Vector2d lo, hi, centroid;
  if (const auto* d = std::get_if<Disk>(&shape)) {
    if (!(d->radius > 0.0)) throw ValidationError("rasterize_section: disk radius must be > 0");
    lo = Eigen::Vector2d::Constant(-d->radius);
    hi = Eigen::Vector2d::Constant(d->radius);
    centroid.setZero();
  } else if (const auto* r = std::get_if<Rectangle>(&shape)) {
    if (!(r->width > 0.0) || !(r->height > 0.0)) {
      throw ValidationError("rasterize_section: rectangle sides must be > 0");
    }
    lo = Eigen::Vector2d(-0.5 * r->width, -0.5 * r->height);
    hi = -lo;
    centroid.setZero();
  } else {
    const auto& poly = std::get<Polygon>(shape);
    if (poly.vertices.size() < 3) {
      throw ValidationError("rasterize_section: polygon needs at least 3 vertices, got " +
                            std::to_string(poly.vertices.size()));
    }
    lo = hi = poly.vertices.front();
    for (const auto& v : poly.vertices) {
      if (!v.allFinite()) throw ValidationError("rasterize_section: non-finite vertex");
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    const double extent = (hi - lo).maxCoeff();
    if (std::abs(detail::polygon_signed_area(poly)) <= 1e-12 * extent * extent) {
      throw ValidationError("rasterize_section: polygon has zero area");
    }
    centroid = detail::polygon_centroid(poly);
  }
  const Eigen::Vector2d o = origin.value_or(centroid);
  if (!o.allFinite()) throw ValidationError("rasterize_section: non-finite origin");

  const detail::ShapeGeometry geom{shape};
  const double tol = 1e-9 * h;
  const int n1 = static_cast<int>(std::floor((hi.x() - lo.x()) / h + 1e-9)) + 1;
  const int n2 = static_cast<int>(std::floor((hi.y() - lo.y()) / h + 1e-9)) + 1;
  if (static_cast<double>(n1) * static_cast<double>(n2) > 5e7) {
    throw ValidationError("rasterize_section: lattice too large; increase h");
  }
  auto at = [&](int i, int j) { return Eigen::Vector2d(lo.x() + i * h, lo.y() + j * h); };

  std::vector<int> index(static_cast<std::size_t>(n1) * static_cast<std::size_t>(n2), -1);
  std::vector<SectionMask::Node> nodes;
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) {
      if (geom.inside(at(i, j), tol)) {
        index[static_cast<std::size_t>(i) * n2 + j] = static_cast<int>(nodes.size());
        SectionMask::Node nd;
        nd.i = i;
        nd.j = j;
        nodes.push_back(nd);
      }
    }
  }
  if (nodes.size() < 200) {
    throw ValidationError("rasterize_section: only " + std::to_string(nodes.size()) +
                          " interior nodes (at least 200 required); decrease h");
  }
  for (auto& nd : nodes) {
    for (std::size_t a = 0; a < 4; ++a) {
      const int ii = nd.i + kArms[a][0];
      const int jj = nd.j + kArms[a][1];
      const int nb = (ii >= 0 && jj >= 0 && ii < n1 && jj < n2)
                         ? index[static_cast<std::size_t>(ii) * n2 + jj]
                         : -1;
      nd.neighbor[a] = nb;
      if (nb >= 0) {
        nd.arm[a] = h;
      } else {
        const Eigen::Vector2d dir(kArms[a][0], kArms[a][1]);
        const double dist = geom.ray_distance(at(nd.i, nd.j), dir);
        nd.arm[a] = std::clamp(dist, 1e-3 * h, h);
      }
    }
  }
  return SectionMask(h, n1, n2, lo - o, std::move(nodes));
}

using SparseReal = numerics::SparseMat<double>;

/**
 * Dirichlet Laplacian on the mask. Interior edges carry 1/h^2; a cut arm of
 * length delta adds 1/(h delta) to the diagonal. Symmetric positive definite.
 */
inline SparseReal dirichlet_laplacian(const SectionMask& mask) {
  const double h = mask.h();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(mask.size() * 5);
  for (std::size_t k = 0; k < mask.size(); ++k) {
    const auto& nd = mask.nodes()[k];
    double diag = 0.0;
    for (std::size_t a = 0; a < 4; ++a) {
      if (nd.neighbor[a] >= 0) {
        t.emplace_back(static_cast<int>(k), nd.neighbor[a], -1.0 / (h * h));
        diag += 1.0 / (h * h);
      } else {
        diag += 1.0 / (h * nd.arm[a]);
      }
    }
    t.emplace_back(static_cast<int>(k), static_cast<int>(k), diag);
  }
  SparseReal lap(static_cast<int>(mask.size()), static_cast<int>(mask.size()));
  lap.setFromTriplets(t.begin(), t.end());
  return lap;
}

/**
 * Centered-difference gradient (G1, G2). Across a cut arm the missing
 * neighbour is replaced by the linear extrapolation through the boundary
 * zero, u_ghost = u (1 - h / delta); for aligned boundaries this is 0.
 */
inline std::pair<SparseReal, SparseReal> gradient_operators(const SectionMask& mask) {
  const double h = mask.h();
  std::array<std::vector<Eigen::Triplet<double>>, 2> t;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    const auto& nd = mask.nodes()[k];
    for (std::size_t a = 0; a < 4; ++a) {
      const std::size_t axis = a / 2;
      const double sign = (a % 2 == 0) ? 1.0 : -1.0;
      if (nd.neighbor[a] >= 0) {
        t[axis].emplace_back(static_cast<int>(k), nd.neighbor[a], sign / (2.0 * h));
      } else {
        t[axis].emplace_back(static_cast<int>(k), static_cast<int>(k),
                             sign * (1.0 - h / nd.arm[a]) / (2.0 * h));
      }
    }
  }
  const int n = static_cast<int>(mask.size());
  SparseReal g1(n, n), g2(n, n);
  g1.setFromTriplets(t[0].begin(), t[0].end());
  g2.setFromTriplets(t[1].begin(), t[1].end());
  return {g1, g2};
}

/// Angular derivative Phi = y1 G2 - y2 G1, i.e. <grad u, R y> with R y = (-y2, y1).
inline SparseReal angular_operator(const SectionMask& mask) {
  const auto [g1, g2] = gradient_operators(mask);
  Eigen::VectorXd y1(static_cast<Eigen::Index>(mask.size())), y2(y1.size());
  for (std::size_t k = 0; k < mask.size(); ++k) {
    const auto p = mask.position(k);
    y1(static_cast<Eigen::Index>(k)) = p.x();
    y2(static_cast<Eigen::Index>(k)) = p.y();
  }
  SparseReal phi = SparseReal(y1.asDiagonal() * g2) - SparseReal(y2.asDiagonal() * g1);
  phi.makeCompressed();
  return phi;
}

/// Ground state data of the section. Immutable after construction.
struct SectionSpectrum {
  SectionMask mask;
  double lambda0 = 0.0;
  double lambda1 = 0.0;
  Eigen::VectorXd u0;      ///< sum u0^2 h^2 = 1, u0 >= 0
  Eigen::VectorXd grad1;   ///< d u0 / d y1 at interior nodes
  Eigen::VectorXd grad2;   ///< d u0 / d y2 at interior nodes
  double twist_constant = 0.0;
  std::vector<double> residuals;
};

/**
 * C(S) = int_S <grad u0, R y>^2 dy.
 *
 * Cell-centered rule: on every lattice cell with at least one interior
 * corner, the gradient is taken from the four corner values (zero at
 * exterior corners) and (y1 d2u - y2 d1u)^2 is evaluated at the cell
 * center, weight h^2. Second order on aligned boundaries.
 */
inline double twist_coupling_constant(const SectionMask& mask, const Eigen::VectorXd& u0) {
  if (u0.size() != static_cast<Eigen::Index>(mask.size())) {
    throw ValidationError("twist_coupling_constant: u0 size does not match the mask");
  }
  const double h = mask.h();
  auto val = [&](int i, int j) {
    const int k = mask.id(i, j);
    return k < 0 ? 0.0 : u0(k);
  };
  double total = 0.0;
  for (int i = -1; i < mask.n1(); ++i) {
    for (int j = -1; j < mask.n2(); ++j) {
      if (mask.id(i, j) < 0 && mask.id(i + 1, j) < 0 && mask.id(i, j + 1) < 0 &&
          mask.id(i + 1, j + 1) < 0) {
        continue;
      }
      const double a = val(i, j), b = val(i + 1, j), c = val(i, j + 1), d = val(i + 1, j + 1);
      const double d1 = ((b - a) + (d - c)) / (2.0 * h);
      const double d2 = ((c - a) + (d - b)) / (2.0 * h);
      const Eigen::Vector2d y = mask.lattice_point(i + 0.5, j + 0.5);
      const double f = y.x() * d2 - y.y() * d1;
      total += f * f;
    }
  }
  return total * h * h;
}

inline double twist_coupling_constant(const SectionSpectrum& spec) {
  return twist_coupling_constant(spec.mask, spec.u0);
}

/**
 * Two lowest Dirichlet eigenvalues of -Delta on the mask, the normalized
 * nonnegative ground state, its gradient and C(S).
 */
inline SectionSpectrum solve_section(const SectionMask& mask,
                                     const numerics::SparseEigenOptions& opt = {}) {
  const SparseReal lap = dirichlet_laplacian(mask);
  const numerics::SparseHermitianPencil<double> pencil(
      lap, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(mask.size())));
  const auto r = numerics::eig_pencil_smallest(pencil, 2, 0.0, opt);
  SectionSpectrum out{mask};
  out.lambda0 = r.values[0];
  out.lambda1 = r.values[1];
  out.residuals = r.residuals;
  if (!(out.lambda1 - out.lambda0 > 1e-10 * out.lambda1)) {
    throw SolverError("solve_section: ground state is not simple on this grid", r.residuals);
  }
  const double h = mask.h();
  Eigen::VectorXd u = r.vectors.col(0);
  u /= std::sqrt(u.squaredNorm() * h * h);
  // Sign fix at the interior node nearest the origin.
  std::size_t nearest = 0;
  for (std::size_t k = 1; k < mask.size(); ++k) {
    if (mask.position(k).norm() < mask.position(nearest).norm()) nearest = k;
  }
  if (u(static_cast<Eigen::Index>(nearest)) < 0.0) u = -u;
  // The discrete ground state has one sign; clear roundoff-level negatives.
  u = u.cwiseMax(0.0);
  u /= std::sqrt(u.squaredNorm() * h * h);
  out.u0 = u;
  const auto [g1, g2] = gradient_operators(mask);
  out.grad1 = g1 * u;
  out.grad2 = g2 * u;
  out.twist_constant = twist_coupling_constant(mask, u);
  return out;
}

}  // namespace wgb
