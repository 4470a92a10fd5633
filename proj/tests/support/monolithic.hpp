#pragma once

// Independent monolithic assembly of the fully discrete system, used as
// the oracle for the condensed production path. All ten fields (including
// the algebraic s) are kept as unknowns and every integral is evaluated by
// direct quadrature loops; nothing is shared with the production assembly
// beyond the mesh, the tabulated reference element and the dof maps.

#include <Eigen/Dense>

#include "pfc/assembly.hpp"

namespace pfc::testsupport {

struct MonolithicSystem {
  Eigen::MatrixXd jac;
  Eigen::VectorXd res;
  std::ptrdiff_t n_interior = 0;  // 11 (k+1)^2 per element
  std::ptrdiff_t n_total = 0;
};

MonolithicSystem assemble_monolithic(const Discretization& disc,
                                     const State& guess, const State& prev,
                                     const SourceFn* source);

/// One undamped Newton update of all ten fields via a dense solve.
State monolithic_newton_update(const Discretization& disc, const State& guess,
                               const State& prev, const SourceFn* source);

/// Overwrite state.s with the oracle's own element-wise L2 projection of
/// M(prev.phi) p.
void set_consistent_s(const Discretization& disc, const State& prev,
                      State& state);

/// Map the monolithic residual onto the s-eliminated layout of the
/// production assembly: the 9 interior blocks per element followed by the
/// global skeleton residual (interleaved 3*dof+field).
Eigen::VectorXd reduced_residual(const Discretization& disc,
                                 const MonolithicSystem& sys);

}  // namespace pfc::testsupport
