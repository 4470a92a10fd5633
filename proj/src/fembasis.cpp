#include "pfc/fembasis.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pfc {

QuadRule1D gauss_legendre(int n) {
  if (n < 1 || n > 32)
    throw std::invalid_argument("gauss_legendre: n must be in [1,32]");
  QuadRule1D rule;
  rule.n = n;
  rule.points.resize(n);
  rule.weights.resize(n);
  // Newton iteration on P_n over [-1,1], then map to [0,1].
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= n; ++j) {
        double p2 = ((2 * j - 1) * x * p1 - (j - 1) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      pp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    double w = 2.0 / ((1.0 - x * x) * pp * pp);
    rule.points[i] = 0.5 * (1.0 - x);  // note: cos ordering descends in x
    rule.points[n - 1 - i] = 0.5 * (1.0 + x);
    rule.weights[i] = 0.5 * w;
    rule.weights[n - 1 - i] = 0.5 * w;
  }
  if (n % 2 == 1) {
    rule.points[n / 2] = 0.5;
    // weight already set by the loop above for the middle index
  }
  return rule;
}

namespace {

// 1D Lagrange basis on given nodes, values and first two derivatives at x.
void lagrange_eval(const std::vector<double>& nodes, double x, double* val,
                   double* der, double* der2) {
  const int n = static_cast<int>(nodes.size());
  for (int i = 0; i < n; ++i) {
    double v = 1.0, d = 0.0, d2 = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double inv = 1.0 / (nodes[i] - nodes[j]);
      const double t = (x - nodes[j]) * inv;
      d2 = d2 * t + 2.0 * d * inv;
      d = d * t + v * inv;
      v *= t;
    }
    if (val) val[i] = v;
    if (der) der[i] = d;
    if (der2) der2[i] = d2;
  }
}

}  // namespace

RefElement RefElement::build(int k, int nq) {
  if (k < 1) throw std::invalid_argument("RefElement: degree must be >= 1");
  if (nq < k + 1)
    throw std::invalid_argument("RefElement: nq must be at least k+1");
  RefElement el;
  el.k_ = k;
  el.ns_ = (k + 1) * (k + 1);
  el.rule_ = gauss_legendre(nq);
  el.nodes1d_.resize(k + 1);
  for (int i = 0; i <= k; ++i) el.nodes1d_[i] = static_cast<double>(i) / k;

  const int np = k + 1;
  const int nqv = nq * nq;
  std::vector<double> v1(np), d1(np), v2(np), d2(np);

  el.vol_w_.resize(nqv);
  el.vol_value_.resize(nqv, el.ns_);
  el.vol_gxi_.resize(nqv, el.ns_);
  el.vol_geta_.resize(nqv, el.ns_);
  for (int qy = 0; qy < nq; ++qy) {
    lagrange_eval(el.nodes1d_, el.rule_.points[qy], v2.data(), d2.data(),
                  nullptr);
    for (int qx = 0; qx < nq; ++qx) {
      lagrange_eval(el.nodes1d_, el.rule_.points[qx], v1.data(), d1.data(),
                    nullptr);
      const int q = qy * nq + qx;
      el.vol_w_[q] = el.rule_.weights[qx] * el.rule_.weights[qy];
      for (int jy = 0; jy <= k; ++jy)
        for (int ix = 0; ix <= k; ++ix) {
          const int a = jy * np + ix;
          el.vol_value_(q, a) = v1[ix] * v2[jy];
          el.vol_gxi_(q, a) = d1[ix] * v2[jy];
          el.vol_geta_(q, a) = v1[ix] * d2[jy];
        }
    }
  }

  el.facet_1d_.resize(nq, np);
  for (int q = 0; q < nq; ++q) {
    lagrange_eval(el.nodes1d_, el.rule_.points[q], v1.data(), nullptr, nullptr);
    for (int m = 0; m <= k; ++m) el.facet_1d_(q, m) = v1[m];
  }

  // Facet traces: value of every volume basis function at the facet
  // quadrature points, facet parametrized by the in-face coordinate.
  std::vector<double> at0(np), at1(np);
  lagrange_eval(el.nodes1d_, 0.0, at0.data(), nullptr, nullptr);
  lagrange_eval(el.nodes1d_, 1.0, at1.data(), nullptr, nullptr);
  for (int f = 0; f < 4; ++f) el.facet_value_[f].resize(nq, el.ns_);
  for (int q = 0; q < nq; ++q) {
    lagrange_eval(el.nodes1d_, el.rule_.points[q], v1.data(), nullptr, nullptr);
    for (int jy = 0; jy <= k; ++jy)
      for (int ix = 0; ix <= k; ++ix) {
        const int a = jy * np + ix;
        el.facet_value_[0](q, a) = at0[ix] * v1[jy];  // x=0, param y
        el.facet_value_[1](q, a) = at1[ix] * v1[jy];  // x=1, param y
        el.facet_value_[2](q, a) = v1[ix] * at0[jy];  // y=0, param x
        el.facet_value_[3](q, a) = v1[ix] * at1[jy];  // y=1, param x
      }
  }

  el.node_d2xi_.resize(el.ns_, el.ns_);
  el.node_d2eta_.resize(el.ns_, el.ns_);
  std::vector<double> vv1(np), dd1(np), vv2(np), dd2(np);
  for (int ny = 0; ny <= k; ++ny) {
    lagrange_eval(el.nodes1d_, el.nodes1d_[ny], v2.data(), nullptr, dd2.data());
    for (int nx = 0; nx <= k; ++nx) {
      lagrange_eval(el.nodes1d_, el.nodes1d_[nx], v1.data(), nullptr,
                    dd1.data());
      const int node = ny * np + nx;
      for (int jy = 0; jy <= k; ++jy)
        for (int ix = 0; ix <= k; ++ix) {
          const int a = jy * np + ix;
          el.node_d2xi_(node, a) = dd1[ix] * v2[jy];
          el.node_d2eta_(node, a) = v1[ix] * dd2[jy];
        }
    }
  }
  return el;
}

void RefElement::eval_basis_1d(double x, double* values) const {
  lagrange_eval(nodes1d_, x, values, nullptr, nullptr);
}

void RefElement::eval_basis(double x, double y, double* values) const {
  const int np = k_ + 1;
  std::vector<double> vx(np), vy(np);
  lagrange_eval(nodes1d_, x, vx.data(), nullptr, nullptr);
  lagrange_eval(nodes1d_, y, vy.data(), nullptr, nullptr);
  for (int jy = 0; jy <= k_; ++jy)
    for (int ix = 0; ix <= k_; ++ix) values[jy * np + ix] = vx[ix] * vy[jy];
}

DofMap DofMap::build(const CartesianMesh& mesh, int k, SpaceKind kind) {
  if (k < 1) throw std::invalid_argument("DofMap: degree must be >= 1");
  DofMap dm;
  dm.kind_ = kind;
  dm.k_ = k;
  dm.ns_ = (k + 1) * (k + 1);
  dm.num_vertices_ = mesh.num_vertices();
  dm.mesh_ = &mesh;
  const std::int64_t ne = mesh.num_elements();
  const std::int64_t nf = mesh.num_faces();
  switch (kind) {
    case SpaceKind::ElementScalar:
      dm.total_ = ne * dm.ns_;
      break;
    case SpaceKind::ElementVector:
      dm.total_ = 2 * ne * dm.ns_;
      break;
    case SpaceKind::SkeletonHDG:
      dm.total_ = nf * (k + 1);
      break;
    case SpaceKind::SkeletonEDG:
      dm.total_ = mesh.num_vertices() + static_cast<std::int64_t>(k - 1) * nf;
      break;
  }
  return dm;
}

std::int64_t DofMap::skeleton_dof(int face, int m) const {
  if (kind_ == SpaceKind::SkeletonHDG)
    return static_cast<std::int64_t>(face) * (k_ + 1) + m;
  if (kind_ != SpaceKind::SkeletonEDG)
    throw std::logic_error("skeleton_dof on an element space");
  const Face& f = mesh_->face(face);
  if (m == 0) return f.vertex[0];
  if (m == k_) return f.vertex[1];
  return num_vertices_ + static_cast<std::int64_t>(face) * (k_ - 1) + (m - 1);
}

std::int64_t count_dofs_table3(DofMethod method, std::int64_t nx,
                               std::int64_t ny, int k, bool periodic) {
  if (nx < 1 || ny < 1)
    throw std::invalid_argument("count_dofs_table3: mesh extents must be positive");
  if (k < 1) throw std::invalid_argument("count_dofs_table3: k must be >= 1");
  if ((method == DofMethod::C0IPDG || method == DofMethod::LDG) && k != 1)
    throw std::invalid_argument(
        "count_dofs_table3: only k=1 is published for C0IPDG/LDG");
  const std::int64_t F = 2 * nx * ny;  // triangles
  std::int64_t V, E;
  if (periodic) {
    V = nx * ny;
    E = 3 * F / 2;
  } else {
    V = (nx + 1) * (ny + 1);
    E = V + F - 1;
  }
  switch (method) {
    case DofMethod::C0IPDG:
      return V + (V + E);  // continuous P1 plus continuous P2
    case DofMethod::LDG: {
      const std::int64_t dim_pk = static_cast<std::int64_t>(k + 1) * (k + 2) / 2;
      return 4 * dim_pk * F;
    }
    case DofMethod::HDG:
      return 3 * (k + 1) * E;
    case DofMethod::EDG:
      return 3 * (V + static_cast<std::int64_t>(k - 1) * E);
  }
  throw std::invalid_argument("count_dofs_table3: unknown method");
}

}  // namespace pfc
