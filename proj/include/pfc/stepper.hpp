#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "pfc/assembly.hpp"

namespace pfc {

struct NewtonConfig {
  double abs_tol = 1e-8;  // Euclidean norm of the assembled residual vector
  int max_iters = 30;
  void validate() const;
};

struct StepStats {
  int newton_iters = 0;
  std::vector<double> residual_history;
  std::int64_t clamped_quad_points = 0;
  double wallclock_s = 0.0;
  bool converged = false;
};

struct NewtonFailure : std::runtime_error {
  NewtonFailure(const std::string& what, StepStats stats_, State best_)
      : std::runtime_error(what), stats(std::move(stats_)), best(std::move(best_)) {}
  StepStats stats;
  State best;
};

enum class Psi0Rule { Analytic, LaplacianOfPhi0, Zero };

using Field2D = std::function<double(double, double)>;

/// L2 projection of the initial data. psi0 is required only for the
/// Analytic rule; LaplacianOfPhi0 takes the element-wise Laplacian of the
/// projected phi. Skeleton traces are facet L2 projections serving as the
/// first Newton guess; remaining fields start at zero.
State project_initial(const Field2D& phi0, Psi0Rule rule, const Field2D* psi0,
                      Discretization& disc);

/// One implicit step: Newton iteration on the condensed skeleton system
/// with element-wise recovery, undamped, warm-started from prev.
/// Throws NewtonFailure when max_iters is exceeded or the linear solve
/// breaks down.
std::pair<State, StepStats> newton_solve(const State& prev,
                                         Discretization& disc,
                                         const NewtonConfig& config,
                                         const SourceFn* source);

struct AdvanceResult {
  State state;
  std::vector<EnergyRecord> records;
};

using StepHook = std::function<void(const State&, const EnergyRecord&,
                                    const StepStats&)>;

/// nsteps uniform steps of length params.dt from state0, recording the
/// energy diagnostics after each accepted step.
AdvanceResult advance(const State& state0, Discretization& disc,
                      const NewtonConfig& config, int nsteps,
                      const SourceFn* source = nullptr,
                      const StepHook* hook = nullptr);

/// ||exact(.,t) - phi_h|| with over-integration.
double l2_error(const State& state,
                const std::function<double(double, double, double)>& exact,
                double t, const Discretization& disc);

}  // namespace pfc
