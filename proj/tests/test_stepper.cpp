#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pfc/scenarios.hpp"
#include "pfc/stepper.hpp"

using namespace pfc;

namespace {

PfcParams base_params(int k = 1) {
  PfcParams p;
  p.eps = 0.5;
  p.dt = 0.05;
  p.degree = k;
  return p;
}

}  // namespace

TEST_CASE("projection of constants is exact") {
  auto mesh = CartesianMesh::build(0, 2, 0, 3, 3, 2, false, false);
  Discretization disc(mesh, base_params());
  const double c = 0.37;
  State st = project_initial([=](double, double) { return c; },
                             Psi0Rule::Zero, nullptr, disc);
  CHECK((st.phi.array() - c).abs().maxCoeff() < 1e-14);
  CHECK(disc.compute_mass(st) == doctest::Approx(c * 6.0).epsilon(1e-13));
  CHECK((st.phibar.array() - c).abs().maxCoeff() < 1e-12);
}

TEST_CASE("analytic psi0 rule projects the given laplacian") {
  auto mesh = CartesianMesh::build(0, 2 * M_PI, 0, 2 * M_PI, 12, 12, true, true);
  Discretization disc(mesh, base_params());
  Field2D phi0 = [](double x, double y) { return std::sin(x) * std::sin(y); };
  Field2D psi0 = [](double x, double y) { return -2.0 * std::sin(x) * std::sin(y); };
  State st = project_initial(phi0, Psi0Rule::Analytic, &psi0, disc);
  CHECK((st.psi + 2.0 * st.phi).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("projection error decreases at order k+1") {
  Field2D phi0 = [](double x, double y) { return std::sin(x) * std::sin(y); };
  double errs[2];
  int idx = 0;
  for (int n : {16, 32}) {
    auto mesh = CartesianMesh::build(0, 2 * M_PI, 0, 2 * M_PI, n, n, true, true);
    Discretization disc(mesh, base_params());
    State st = project_initial(phi0, Psi0Rule::Zero, nullptr, disc);
    errs[idx++] = disc.l2_error_scalar(st.phi, phi0);
  }
  const double ratio = errs[0] / errs[1];
  CHECK(ratio > 3.5);
  CHECK(ratio < 4.5);
}

TEST_CASE("laplacian-of-phi0 rule is zero for bilinear elements") {
  auto mesh = CartesianMesh::build(0, 1, 0, 1, 4, 4, false, false);
  Discretization disc(mesh, base_params(1));
  State st = project_initial([](double x, double y) { return x * x + y; },
                             Psi0Rule::LaplacianOfPhi0, nullptr, disc);
  // k=1: element-wise laplacian of a bilinear is identically zero.
  CHECK(st.psi.lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("laplacian-of-phi0 rule is exact for biquadratics") {
  auto mesh = CartesianMesh::build(0, 1, 0, 1, 3, 3, false, false);
  Discretization disc(mesh, base_params(2));
  State st = project_initial([](double x, double y) { return x * x + 0.5 * y * y; },
                             Psi0Rule::LaplacianOfPhi0, nullptr, disc);
  CHECK((st.psi.array() - 3.0).abs().maxCoeff() < 1e-10);
}

TEST_CASE("constant steady state is a fixed point") {
  auto mesh = CartesianMesh::build(0, 1, 0, 1, 3, 3, true, true);
  PfcParams params = base_params();
  params.dt = 0.7;  // any dt
  Discretization disc(mesh, params);
  const double c = 0.4;
  State st = disc.make_state();
  st.phi.setConstant(c);
  st.phibar.setConstant(c);
  st.mu.setConstant(f_eval(c, params.eps));
  st.mubar.setConstant(f_eval(c, params.eps));

  NewtonConfig cfg;
  auto [next, stats] = newton_solve(st, disc, cfg, nullptr);
  CHECK(stats.newton_iters <= 1);
  CHECK((next.phi.array() - c).abs().maxCoeff() < 1e-10);

  AdvanceResult res = advance(st, disc, cfg, 5, nullptr);
  CHECK((res.state.phi.array() - c).abs().maxCoeff() < 1e-10);
  for (const EnergyRecord& r : res.records)
    CHECK(r.mass == doctest::Approx(c).epsilon(1e-10));
}

TEST_CASE("newton residual history and tolerance") {
  auto mesh = CartesianMesh::build(0, 2 * M_PI, 0, 2 * M_PI, 8, 8, true, true);
  PfcParams params = base_params();
  params.dt = 0.1;
  Discretization disc(mesh, params);
  MmsCase mms;
  Field2D phi0 = [&](double x, double y) { return mms.exact(x, y, 0.0); };
  Field2D psi0 = [&](double x, double y) { return mms.exact_psi(x, y, 0.0); };
  State st = project_initial(phi0, Psi0Rule::Analytic, &psi0, disc);
  SourceFn src = [&](double x, double y, double t) { return mms.source(x, y, t); };
  NewtonConfig cfg;
  auto [next, stats] = newton_solve(st, disc, cfg, &src);
  CHECK(stats.converged);
  CHECK(stats.residual_history.back() <= cfg.abs_tol);
  CHECK(stats.newton_iters <= 6);
  CHECK(stats.residual_history.size() ==
        static_cast<std::size_t>(stats.newton_iters) + 1);
}

TEST_CASE("newton failure carries diagnostics") {
  auto mesh = CartesianMesh::build(0, 2 * M_PI, 0, 2 * M_PI, 4, 4, true, true);
  PfcParams params = base_params();
  params.dt = 0.1;
  Discretization disc(mesh, params);
  State st = disc.make_state();
  st.phi.setConstant(0.3);
  st.phibar.setConstant(0.3);
  NewtonConfig cfg;
  cfg.max_iters = 1;
  cfg.abs_tol = 1e-14;
  bool threw = false;
  try {
    newton_solve(st, disc, cfg, nullptr);
  } catch (const NewtonFailure& f) {
    threw = true;
    CHECK(f.stats.residual_history.size() == 2);
    CHECK(f.best.all_finite());
  }
  CHECK(threw);
}

TEST_CASE("l2_error basics") {
  auto mesh = CartesianMesh::build(0, 2 * M_PI, 0, 2 * M_PI, 6, 6, true, true);
  Discretization disc(mesh, base_params());
  State st = disc.make_state();
  // Zero field against sin x sin y: ||sin sin|| = pi on (0,2pi)^2.
  const double err = l2_error(

      st, [](double x, double y, double) { return std::sin(x) * std::sin(y); },
      0.0, disc);
  CHECK(err == doctest::Approx(M_PI).epsilon(1e-12));

  // Injecting a field of the discrete space gives zero error.
  State st2 = project_initial([](double x, double y) { return 0.25 * x - 0.125 * y; },
                              Psi0Rule::Zero, nullptr, disc);
  const double err2 = l2_error(
      st2, [](double x, double y, double) { return 0.25 * x - 0.125 * y; }, 0.0,
      disc);
  CHECK(err2 < 1e-13);
}

TEST_CASE("energy decays along a small benchmark-style run") {
  auto mesh = CartesianMesh::build(0, 32, 0, 32, 16, 16, false, false);
  PfcParams params;
  params.eps = 0.025;
  params.dt = 0.1;
  params.degree = 1;
  Discretization disc(mesh, params);
  State st = project_initial([](double x, double y) { return ic_benchmark32(x, y); },
                             Psi0Rule::LaplacianOfPhi0, nullptr, disc);
  NewtonConfig cfg;
  AdvanceResult res = advance(st, disc, cfg, 10, nullptr);
  double mass0 = disc.compute_mass(st);
  double e_prev = disc.compute_energy(st);
  int n = 0;
  for (const EnergyRecord& r : res.records) {
    ++n;
    CHECK(r.energy + params.dt * r.dissipation <=
          e_prev + 1e-7 * (1 + std::abs(e_prev)));
    CHECK(std::abs(r.mass - mass0) <= n * 1e-7 * (1 + std::abs(mass0)));
    e_prev = r.energy;
  }
}

TEST_CASE("set_dt rebuilds and the truncated last step lands on T") {
  auto mesh = CartesianMesh::build(0, 2 * M_PI, 0, 2 * M_PI, 8, 8, true, true);
  PfcParams params = base_params();
  params.dt = 0.3;
  Discretization disc(mesh, params);
  MmsCase mms;
  Field2D phi0 = [&](double x, double y) { return mms.exact(x, y, 0.0); };
  Field2D psi0 = [&](double x, double y) { return mms.exact_psi(x, y, 0.0); };
  State st = project_initial(phi0, Psi0Rule::Analytic, &psi0, disc);
  SourceFn src = [&](double x, double y, double t) { return mms.source(x, y, t); };
  NewtonConfig cfg;
  AdvanceResult r1 = advance(st, disc, cfg, 3, &src);
  disc.set_dt(0.1);
  AdvanceResult r2 = advance(r1.state, disc, cfg, 1, &src);
  CHECK(r2.state.t == doctest::Approx(1.0).epsilon(1e-12));
}
