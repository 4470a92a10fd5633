#include "pfc/stepper.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace pfc {

void NewtonConfig::validate() const {
  if (!(abs_tol > 0)) throw std::invalid_argument("NewtonConfig: abs_tol must be > 0");
  if (max_iters < 1) throw std::invalid_argument("NewtonConfig: max_iters must be >= 1");
}

State project_initial(const Field2D& phi0, Psi0Rule rule, const Field2D* psi0,
                      Discretization& disc) {
  State st = disc.make_state();
  st.t = 0.0;
  st.step = 0;
  st.phi = disc.project_scalar(phi0);

  const RefElement& ref = disc.ref();
  const int ns = ref.num_nodes();
  switch (rule) {
    case Psi0Rule::Analytic:
      if (!psi0)
        throw std::invalid_argument("project_initial: Analytic rule needs psi0");
      st.psi = disc.project_scalar(*psi0);
      break;
    case Psi0Rule::LaplacianOfPhi0: {
      // Element-wise Laplacian of the projected phi lies in the same
      // space, so nodal interpolation is exact.
      const double ihx2 = 1.0 / (disc.mesh().hx() * disc.mesh().hx());
      const double ihy2 = 1.0 / (disc.mesh().hy() * disc.mesh().hy());
      for (int e = 0; e < disc.mesh().num_elements(); ++e) {
        const auto coeffs = st.phi.segment(static_cast<std::ptrdiff_t>(e) * ns, ns);
        st.psi.segment(static_cast<std::ptrdiff_t>(e) * ns, ns) =
            ihx2 * (ref.node_d2xi() * coeffs) +
            ihy2 * (ref.node_d2eta() * coeffs);
      }
      break;
    }
    case Psi0Rule::Zero:
      break;
  }

  st.phibar = disc.project_skeleton(phi0);
  if (rule == Psi0Rule::Analytic)
    st.psibar = disc.project_skeleton(*psi0);
  else if (rule == Psi0Rule::LaplacianOfPhi0)
    st.psibar = disc.project_skeleton_from_field(st.psi);
  return st;
}

std::pair<State, StepStats> newton_solve(const State& prev,
                                         Discretization& disc,
                                         const NewtonConfig& config,
                                         const SourceFn* source) {
  config.validate();
  const auto t_start = std::chrono::steady_clock::now();
  StepStats stats;
  State state = prev;
  state.t = prev.t + disc.params().dt;
  state.step = prev.step + 1;

  disc.begin_step(prev, source);
  stats.clamped_quad_points = disc.clamped_quad_points();
  linalg::SparseLu& solver = disc.skeleton_solver();

  Eigen::VectorXd dskel, dinterior;
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         t_start)
        .count();
  };
  for (int it = 0; it <= config.max_iters; ++it) {
    const double rnorm = disc.residual_norm(state, prev);
    stats.residual_history.push_back(rnorm);
    if (!std::isfinite(rnorm)) {
      stats.wallclock_s = elapsed();
      throw NewtonFailure("newton_solve: non-finite residual at step " +
                              std::to_string(state.step),
                          stats, state);
    }
    if (rnorm <= config.abs_tol) {
      stats.newton_iters = it;
      stats.converged = true;
      disc.reconstruct_s(state, prev);
      stats.wallclock_s = elapsed();
      return {std::move(state), std::move(stats)};
    }
    if (it == config.max_iters) break;
    CondensedSystem& cs = disc.assemble_condensed(state, prev);
    dskel = solver.solve_system(cs.a, cs.b);
    disc.recover(cs, dskel, dinterior);
    disc.apply_update(state, dskel, dinterior);
  }
  stats.newton_iters = config.max_iters;
  stats.wallclock_s = elapsed();
  throw NewtonFailure("newton_solve: no convergence in " +
                          std::to_string(config.max_iters) +
                          " iterations at step " + std::to_string(state.step) +
                          " (residual " +
                          std::to_string(stats.residual_history.back()) + ")",
                      stats, state);
}

AdvanceResult advance(const State& state0, Discretization& disc,
                      const NewtonConfig& config, int nsteps,
                      const SourceFn* source, const StepHook* hook) {
  if (nsteps < 1) throw std::invalid_argument("advance: nsteps must be >= 1");
  AdvanceResult out;
  out.state = state0;
  out.records.reserve(nsteps);
  for (int n = 0; n < nsteps; ++n) {
    std::pair<State, StepStats> step;
    try {
      step = newton_solve(out.state, disc, config, source);
    } catch (const NewtonFailure& f) {
      throw std::runtime_error(std::string(f.what()) + " (advance aborted)");
    }
    // Dissipation needs M(phi^{n-1}), so record before replacing the state.
    EnergyRecord rec = disc.energy_record(step.first, out.state,
                                          step.second.newton_iters);
    out.state = std::move(step.first);
    out.records.push_back(rec);
    if (hook) (*hook)(out.state, out.records.back(), step.second);
  }
  return out;
}

double l2_error(const State& state,
                const std::function<double(double, double, double)>& exact,
                double t, const Discretization& disc) {
  return disc.l2_error_scalar(
      state.phi, [&](double x, double y) { return exact(x, y, t); });
}

}  // namespace pfc
