#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

#include "pfc/fembasis.hpp"
#include "pfc/linalg.hpp"
#include "pfc/mesh.hpp"

namespace pfc {

/// Nonlinearity f(phi) = phi^3 + (1-eps) phi and its derivative.
double f_eval(double phi, double eps);
double f_prime(double phi, double eps);

struct Mobility {
  enum class Kind { Constant, Degenerate };
  Kind kind = Kind::Constant;
  double m = 1.0;  // Constant value; ignored for Degenerate

  static Mobility constant(double m) { return {Kind::Constant, m}; }
  static Mobility degenerate() { return {Kind::Degenerate, 0.0}; }
};

/// Constant(m) -> m; Degenerate -> max(1 - phi^2, 0).
double mobility_eval(const Mobility& mob, double phi);

enum class Coupling { EDG, HDG };

/// Treatment of the expansive quadratic term (the 2*psi contribution to
/// the chemical potential) in the first-order convex splitting:
///   Secant  - average of the new and previous psi fields (psi^n+psi^{n-1});
///             the quadratic concave energy part telescopes exactly, so the
///             scheme is unconditionally energy stable with a smaller
///             first-order error constant. Default.
///   FullLag - previous-step field only (2 psi^{n-1}).
enum class Splitting { Secant, FullLag };

struct PfcParams {
  double eps = 0.5;
  double tau1 = 10.0, tau2 = 10.0, tau3 = 10.0, tau4 = 20.0;
  double dt = 1e-2;
  Mobility mobility{};
  Coupling coupling = Coupling::EDG;
  Splitting splitting = Splitting::Secant;
  int degree = 1;
  bool allow_unstable_taus = false;

  /// Throws unless eps < 1, dt > 0 and (when allow_unstable_taus is
  /// unset) tau1 > 0, tau3 > 0, tau2 = tau1, tau4 = 2 tau1.
  void validate() const;
};

/// Coefficient vectors of all discrete fields at one time level.
/// Element scalars are e*(k+1)^2 + node; element vectors add a
/// component-major offset; skeleton vectors hold one entry per skeleton
/// dof of the coupling's facet space.
struct State {
  Eigen::VectorXd phi, psi, mu;       // element scalars
  Eigen::VectorXd r, q, p, s;         // element vectors
  Eigen::VectorXd phibar, psibar, mubar;  // skeleton traces
  double t = 0.0;
  int step = 0;

  bool all_finite() const;
  double max_abs_phi() const { return phi.size() ? phi.cwiseAbs().maxCoeff() : 0.0; }
};

struct EnergyRecord {
  int step = 0;
  double time = 0.0;
  double energy = 0.0;
  double scaled_energy = 0.0;  // energy / |Omega|
  double mass = 0.0;
  double dissipation = 0.0;    // ||M(phi^{n-1})^{1/2} p^n||^2
  int newton_iters = 0;
};

/// Manufactured source g(x, y, t); evaluated at t^n in the time equation.
using SourceFn = std::function<double(double, double, double)>;

/// Skeleton system of one Newton step plus the per-element data needed to
/// recover the interior update.
struct CondensedSystem {
  linalg::CsrMatrix a;   // 3 * (skeleton dofs per field) square
  Eigen::VectorXd b;
  // Recovery payloads, one flavor per assembly path.
  bool fast_path = false;
  Eigen::VectorXd z;                                   // A_II^{-1} R_I per element
  Eigen::MatrixXd w1;                                  // fast path: n_s x n_s blocks side by side
  std::vector<Eigen::PartialPivLU<Eigen::MatrixXd>> lu;  // dense path
  bool ready = false;
};

/// Element-local Newton system of the condensed formulation (s eliminated):
/// interior unknowns [phi psi mu rx ry qx qy px py] (9 (k+1)^2) against the
/// element's 12 facet trace blocks (4 faces x {phibar, psibar, mubar}).
struct LocalSystem {
  Eigen::MatrixXd a_ii, a_is, a_si, a_ss;
  Eigen::VectorXd r_i, r_s;
};

struct CondensedElement {
  Eigen::MatrixXd schur;     // a_ss - a_si a_ii^{-1} a_is
  Eigen::VectorXd rhs;       // -r_s + a_si a_ii^{-1} r_i
  Eigen::PartialPivLU<Eigen::MatrixXd> interior_lu;
};

/// Static condensation of one element system. Throws on a singular
/// interior block, reporting the element id.
CondensedElement condense(const LocalSystem& sys, int element_id);

/// Interior Newton update from the skeleton update of the same iteration.
Eigen::VectorXd recover_interior(const CondensedElement& ce,
                                 const LocalSystem& sys,
                                 const Eigen::VectorXd& dskel);

/// Everything needed to assemble and solve the fully discrete system on
/// one mesh: reference element (nq = 2k+1), dof maps, shared element
/// matrices, skeleton sparsity, and the per-step caches. Immutable mesh;
/// one instance drives one run.
class Discretization {
public:
  Discretization(const CartesianMesh& mesh, const PfcParams& params);
  ~Discretization();
  Discretization(Discretization&&) noexcept;

  const CartesianMesh& mesh() const { return mesh_; }
  const RefElement& ref() const { return ref_; }
  const PfcParams& params() const { return params_; }
  const DofMap& scalar_map() const { return scalar_map_; }
  const DofMap& vector_map() const { return vector_map_; }
  const DofMap& skeleton_map() const { return skeleton_map_; }

  int interior_size() const;              // 9 (k+1)^2
  int local_skeleton_size() const;        // 12 (k+1)
  std::int64_t skeleton_system_size() const;  // 3 * skeleton dofs per field

  /// Global index of (face, field, facet node) in the interleaved
  /// skeleton system (3*dof + field with field 0=phibar,1=psibar,2=mubar).
  std::int64_t skeleton_global(int face, int field, int m) const;

  State make_state() const;

  /// Change the time step; rebuilds the dt-dependent shared blocks.
  void set_dt(double dt);

  /// Per-time-step caches: mobility projection from phi^{n-1}, explicit
  /// data terms, and the source at t^n = prev.t + dt.
  void begin_step(const State& prev, const SourceFn* source);
  std::int64_t clamped_quad_points() const { return clamped_; }

  /// Residual of the current guess over all (interior + skeleton)
  /// equations. Also retained internally for the subsequent condensation.
  double residual_norm(const State& guess, const State& prev);

  /// Residual vectors of the last residual_norm call: per-element interior
  /// blocks and the accumulated skeleton equations.
  const Eigen::VectorXd& last_interior_residual() const;
  const Eigen::VectorXd& last_skeleton_residual() const;

  /// Schur-complement skeleton system of the current Newton iterate.
  /// residual_norm must have been called for the same guess.
  CondensedSystem& assemble_condensed(const State& guess, const State& prev);

  /// Interior updates for all elements given the skeleton update.
  void recover(const CondensedSystem& cs, const Eigen::VectorXd& dskel,
               Eigen::VectorXd& dinterior) const;

  void apply_update(State& state, const Eigen::VectorXd& dskel,
                    const Eigen::VectorXd& dinterior) const;

  /// Element-wise s = Pi(M(phi_prev) p), the eliminated algebraic field.
  void reconstruct_s(State& state, const State& prev) const;

  /// Direct solver for the condensed skeleton system; its symbolic
  /// analysis is reused across Newton iterations and time steps.
  linalg::SparseLu& skeleton_solver();

  // Element-local operations (the production assembly in dense form).
  LocalSystem local_system(int e, const State& guess, const State& prev,
                           const SourceFn* source) const;
  Eigen::VectorXd local_residual(int e, const State& guess, const State& prev,
                                 const SourceFn* source) const;
  Eigen::MatrixXd local_jacobian(int e, const State& guess,
                                 const State& prev) const;

  // Diagnostics.
  double compute_energy(const State& state) const;
  double compute_mass(const State& state) const;
  double dissipation(const State& state, const State& prev) const;
  EnergyRecord energy_record(const State& state, const State& prev,
                             int newton_iters) const;

  /// Projections used by initial data handling: element-wise L2 projection
  /// of an analytic field (over-integrated with nq+2 points per direction)
  /// and the facet-space L2 projection of an analytic trace.
  Eigen::VectorXd project_scalar(const std::function<double(double, double)>& f) const;
  Eigen::VectorXd project_skeleton(const std::function<double(double, double)>& f) const;
  /// Skeleton projection of the two-sided trace average of an element field.
  Eigen::VectorXd project_skeleton_from_field(const Eigen::VectorXd& field) const;

  /// L2 norm of (exact - field) with nq+2 points per direction.
  double l2_error_scalar(const Eigen::VectorXd& field,
                         const std::function<double(double, double)>& exact) const;

  /// Evaluate an element-scalar field at an arbitrary domain point
  /// (nearest element clamped). Used by raster output.
  double eval_scalar(const Eigen::VectorXd& field, double x, double y) const;

private:
  struct Impl;
  const CartesianMesh& mesh_;
  PfcParams params_;
  RefElement ref_;
  DofMap scalar_map_, vector_map_, skeleton_map_;
  std::unique_ptr<Impl> impl_;
  std::int64_t clamped_ = 0;
};

}  // namespace pfc
