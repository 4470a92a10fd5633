#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "pfc/mesh.hpp"

namespace pfc {

/// Gauss-Legendre rule on [0,1]; exact for polynomials of degree 2n-1.
struct QuadRule1D {
  int n = 0;
  std::vector<double> points;
  std::vector<double> weights;
};

QuadRule1D gauss_legendre(int n);

/// Tensor-product nodal (Lagrange) element of degree k on the reference
/// square [0,1]^2, with equispaced nodes and tabulated quadrature data.
///
/// Node a = jy*(k+1) + ix sits at (ix/k, jy/k). Volume quadrature points
/// are the tensor grid of the 1D rule (x fastest). Reference facets are
/// 0=left (x=0), 1=right (x=1), 2=bottom (y=0), 3=top (y=1); each facet
/// is parametrized by the remaining coordinate increasing in [0,1], which
/// matches the global parametrization of Cartesian mesh faces so no
/// orientation flips are needed anywhere.
class RefElement {
public:
  static RefElement build(int k, int nq);

  int degree() const { return k_; }
  int num_nodes() const { return ns_; }          // (k+1)^2
  int nodes_per_side() const { return k_ + 1; }
  int nq1d() const { return rule_.n; }
  int num_vol_points() const { return rule_.n * rule_.n; }

  const QuadRule1D& rule1d() const { return rule_; }
  /// Tensor weight of volume point q (product of the two 1D weights).
  double vol_weight(int q) const { return vol_w_[q]; }
  /// Reference coordinates of volume point q.
  double vol_x(int q) const { return rule_.points[q % rule_.n]; }
  double vol_y(int q) const { return rule_.points[q / rule_.n]; }

  // Tabulated basis data; rows = quadrature points, cols = basis functions.
  const Eigen::MatrixXd& vol_value() const { return vol_value_; }
  const Eigen::MatrixXd& vol_grad_xi() const { return vol_gxi_; }
  const Eigen::MatrixXd& vol_grad_eta() const { return vol_geta_; }
  const Eigen::MatrixXd& facet_value(int f) const { return facet_value_[f]; }
  /// 1D facet basis (k+1 functions) at the facet quadrature points.
  const Eigen::MatrixXd& facet_basis_1d() const { return facet_1d_; }

  /// Second reference derivatives of all basis functions at node a
  /// (used for element-wise Laplacians of fields already in the space).
  const Eigen::MatrixXd& node_d2xi() const { return node_d2xi_; }
  const Eigen::MatrixXd& node_d2eta() const { return node_d2eta_; }

  double node_x(int a) const { return nodes1d_[a % (k_ + 1)]; }
  double node_y(int a) const { return nodes1d_[a / (k_ + 1)]; }

  /// Runtime evaluation of the 1D nodal basis at an arbitrary point.
  void eval_basis_1d(double x, double* values) const;
  /// Runtime evaluation of all 2D basis functions at (x,y) in [0,1]^2.
  void eval_basis(double x, double y, double* values) const;

private:
  int k_ = 0, ns_ = 0;
  QuadRule1D rule_;
  std::vector<double> nodes1d_;
  std::vector<double> vol_w_;
  Eigen::MatrixXd vol_value_, vol_gxi_, vol_geta_;
  Eigen::MatrixXd facet_value_[4];
  Eigen::MatrixXd facet_1d_;
  Eigen::MatrixXd node_d2xi_, node_d2eta_;
};

enum class SpaceKind { ElementScalar, ElementVector, SkeletonEDG, SkeletonHDG };

/// Deterministic global numbering for the four discrete spaces.
///
/// ElementScalar: e*(k+1)^2 + a.
/// ElementVector: e*2*(k+1)^2 + comp*(k+1)^2 + a (component-major per element).
/// SkeletonHDG:   face*(k+1) + m (face-private).
/// SkeletonEDG:   vertex dofs first (canonical vertex order), then k-1
///                interior dofs per face in face order; facet node m=0 maps
///                to the face's first vertex, m=k to its second.
class DofMap {
public:
  static DofMap build(const CartesianMesh& mesh, int k, SpaceKind kind);

  SpaceKind kind() const { return kind_; }
  int degree() const { return k_; }
  std::int64_t total() const { return total_; }

  std::int64_t element_dof(int e, int a) const {
    return static_cast<std::int64_t>(e) * ns_ + a;
  }
  std::int64_t element_vec_dof(int e, int comp, int a) const {
    return (static_cast<std::int64_t>(e) * 2 + comp) * ns_ + a;
  }
  std::int64_t skeleton_dof(int face, int m) const;

private:
  SpaceKind kind_;
  int k_ = 0, ns_ = 0;
  std::int64_t total_ = 0;
  int num_vertices_ = 0;
  const CartesianMesh* mesh_ = nullptr;  // for EDG vertex lookups
};

enum class DofMethod { C0IPDG, LDG, HDG, EDG };

/// Globally coupled degree-of-freedom counts on the triangulated mesh
/// (each quad split into two triangles), closed form. Periodic counting
/// identifies boundary vertices/edges.
std::int64_t count_dofs_table3(DofMethod method, std::int64_t nx,
                               std::int64_t ny, int k, bool periodic);

}  // namespace pfc
