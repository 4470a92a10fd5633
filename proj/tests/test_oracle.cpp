#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "pfc/assembly.hpp"
#include "pfc/stepper.hpp"
#include "support/monolithic.hpp"

using namespace pfc;

namespace {

State random_state(const Discretization& disc, unsigned seed,
                   double scale = 0.5) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> unif(-scale, scale);
  State st = disc.make_state();
  auto fill = [&](Eigen::VectorXd& v) {
    for (std::ptrdiff_t i = 0; i < v.size(); ++i) v[i] = unif(gen);
  };
  fill(st.phi);
  fill(st.psi);
  fill(st.mu);
  fill(st.r);
  fill(st.q);
  fill(st.p);
  fill(st.phibar);
  fill(st.psibar);
  fill(st.mubar);
  st.t = 0.35;
  return st;
}

PfcParams make_params(Coupling coupling, Mobility mob, int k = 1) {
  PfcParams p;
  p.eps = 0.5;
  p.dt = 0.01;
  p.mobility = mob;
  p.coupling = coupling;
  p.degree = k;
  return p;
}

// Production Newton step via condensation + recovery.
State condensed_newton_update(Discretization& disc, const State& guess,
                              const State& prev, const SourceFn* source) {
  disc.begin_step(prev, source);
  disc.residual_norm(guess, prev);
  CondensedSystem& cs = disc.assemble_condensed(guess, prev);
  linalg::SparseLu solver;
  solver.factorize(cs.a);
  Eigen::VectorXd dskel = solver.solve(cs.b);
  Eigen::VectorXd dint;
  disc.recover(cs, dskel, dint);
  State out = guess;
  disc.apply_update(out, dskel, dint);
  disc.reconstruct_s(out, prev);
  return out;
}

void check_states_close(const State& a, const State& b, double tol) {
  CHECK((a.phi - b.phi).lpNorm<Eigen::Infinity>() < tol);
  CHECK((a.psi - b.psi).lpNorm<Eigen::Infinity>() < tol);
  CHECK((a.mu - b.mu).lpNorm<Eigen::Infinity>() < tol);
  CHECK((a.r - b.r).lpNorm<Eigen::Infinity>() < tol);
  CHECK((a.q - b.q).lpNorm<Eigen::Infinity>() < tol);
  CHECK((a.p - b.p).lpNorm<Eigen::Infinity>() < tol);
  CHECK((a.s - b.s).lpNorm<Eigen::Infinity>() < tol);
  CHECK((a.phibar - b.phibar).lpNorm<Eigen::Infinity>() < tol);
  CHECK((a.psibar - b.psibar).lpNorm<Eigen::Infinity>() < tol);
  CHECK((a.mubar - b.mubar).lpNorm<Eigen::Infinity>() < tol);
}

}  // namespace

TEST_CASE("production residual equals the monolithic weak-form evaluator") {
  auto mesh = CartesianMesh::build(0, 1, 0, 1, 2, 2, false, false);
  int seed = 60;
  for (Coupling c : {Coupling::EDG, Coupling::HDG})
    for (Mobility mob : {Mobility::constant(1.0), Mobility::degenerate()}) {
      Discretization disc(mesh, make_params(c, mob));
      State guess = random_state(disc, ++seed);
      State prev = random_state(disc, ++seed);
      guess.t = prev.t + disc.params().dt;  // a genuine step configuration
      // The monolithic system carries s as an unknown; make it consistent
      // with its algebraic definition so the reduced rows match.
      testsupport::set_consistent_s(disc, prev, guess);

      SourceFn src = [](double x, double y, double t) {
        return std::sin(1.3 * x) * std::cos(0.7 * y) * (1.0 + t);
      };
      testsupport::MonolithicSystem sys =
          testsupport::assemble_monolithic(disc, guess, prev, &src);
      Eigen::VectorXd reduced = testsupport::reduced_residual(disc, sys);

      disc.begin_step(prev, &src);
      disc.residual_norm(guess, prev);
      const int nI = disc.interior_size();
      const Eigen::VectorXd& ri = disc.last_interior_residual();
      const Eigen::VectorXd& rs = disc.last_skeleton_residual();
      Eigen::VectorXd prod(ri.size() + rs.size());
      prod << ri, rs;
      REQUIRE(prod.size() == reduced.size());
      CHECK((prod - reduced).lpNorm<Eigen::Infinity>() < 1e-12);

      // Also the per-element local residuals for the interior rows.
      for (int e = 0; e < mesh.num_elements(); ++e) {
        Eigen::VectorXd loc = disc.local_residual(e, guess, prev, &src);
        CHECK((loc.head(nI) -
               reduced.segment(static_cast<std::ptrdiff_t>(e) * nI, nI))
                  .lpNorm<Eigen::Infinity>() < 1e-12);
      }
    }
}

TEST_CASE("condensed newton step equals the monolithic newton step") {
  int seed = 80;
  for (int n : {2, 3}) {
    auto mesh = CartesianMesh::build(0, 1, 0, 1, n, n, n == 3, n == 3);
    for (Coupling c : {Coupling::EDG, Coupling::HDG})
      for (Mobility mob : {Mobility::constant(1.0), Mobility::degenerate()}) {
        Discretization disc(mesh, make_params(c, mob));
        State guess = random_state(disc, ++seed);
        State prev = random_state(disc, ++seed);
        guess.t = prev.t + disc.params().dt;
        SourceFn src = [](double x, double y, double t) {
          return 0.2 * std::cos(x + 2 * y + t);
        };
        State prod = condensed_newton_update(disc, guess, prev, &src);
        State mono =
            testsupport::monolithic_newton_update(disc, guess, prev, &src);
        check_states_close(prod, mono, 1e-10);
      }
  }
}

TEST_CASE("recovered interior updates match the monolithic solve blocks") {
  auto mesh = CartesianMesh::build(0, 1, 0, 1, 2, 2, false, false);
  Discretization disc(mesh, make_params(Coupling::EDG, Mobility::constant(1.0)));
  State guess = random_state(disc, 101);
  State prev = random_state(disc, 102);
  guess.t = prev.t + disc.params().dt;

  State prod = condensed_newton_update(disc, guess, prev, nullptr);
  State mono = testsupport::monolithic_newton_update(disc, guess, prev, nullptr);
  CHECK((prod.phi - mono.phi).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK((prod.p - mono.p).lpNorm<Eigen::Infinity>() < 1e-10);

  // Zero skeleton update + zero residual => zero interior update.
  disc.begin_step(prev, nullptr);
  disc.residual_norm(guess, prev);
  CondensedSystem& cs = disc.assemble_condensed(guess, prev);
  Eigen::VectorXd zero_skel = Eigen::VectorXd::Zero(disc.skeleton_system_size());
  Eigen::VectorXd dint;
  // Hand the recovery a zero interior residual by re-assembling around an
  // exact solution: use the converged state after a few newton steps.
  (void)cs;
  State converged = guess;
  for (int it = 0; it < 12; ++it)
    converged = condensed_newton_update(disc, converged, prev, nullptr);
  disc.begin_step(prev, nullptr);
  const double rn = disc.residual_norm(converged, prev);
  REQUIRE(rn < 1e-9);
  CondensedSystem& cs2 = disc.assemble_condensed(converged, prev);
  disc.recover(cs2, zero_skel, dint);
  CHECK(dint.lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("local jacobian equals the monolithic jacobian blocks") {
  // Cross-check the production local_jacobian entries against the
  // monolithic jacobian for the matching rows/cols on one element.
  auto mesh = CartesianMesh::build(0, 1, 0, 1, 1, 1, false, false);
  for (Mobility mob : {Mobility::constant(1.0), Mobility::degenerate()}) {
    Discretization disc(mesh, make_params(Coupling::HDG, mob));
    State guess = random_state(disc, 111);
    State prev = random_state(disc, 112);
    testsupport::MonolithicSystem sys =
        testsupport::assemble_monolithic(disc, guess, prev, nullptr);
    Eigen::MatrixXd loc = disc.local_jacobian(0, guess, prev);

    const int ns = disc.ref().num_nodes();
    // Monolithic layout per element: [phi psi mu rx ry qx qy px py sx sy].
    // The production layout drops s; its (12g)/(12j) p-columns absorb the
    // projected mobility weight, so compare the s-free blocks only.
    auto mono_col = [&](int b) { return b * ns; };
    // (12b) row block vs monolithic PSI rows, phi column.
    Eigen::MatrixXd mono_psi_phi =
        sys.jac.block(mono_col(1), mono_col(0), ns, ns);
    CHECK((loc.block(ns, 0, ns, ns) - mono_psi_phi).lpNorm<Eigen::Infinity>() <
          1e-12);
    // (12d) row block, phi column (state-dependent f' part).
    Eigen::MatrixXd mono_mu_phi = sys.jac.block(mono_col(2), mono_col(0), ns, ns);
    CHECK((loc.block(2 * ns, 0, ns, ns) - mono_mu_phi).lpNorm<Eigen::Infinity>() <
          1e-12);
  }
}
