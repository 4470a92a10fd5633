#include "pfc/scenarios.hpp"

#include <cmath>
#include <stdexcept>

namespace pfc {

double MmsCase::exact(double x, double y, double t) const {
  return std::exp(-2.0 * t) * std::sin(x) * std::sin(y);
}

double MmsCase::exact_psi(double x, double y, double t) const {
  return -2.0 * exact(x, y, t);
}

double MmsCase::source(double x, double y, double t) const {
  // For this solution the two Laplacian terms of mu cancel (lap phi =
  // -2 phi, lap^2 phi = 4 phi), so mu = phi^3 + (1-eps) phi and
  //   lap mu = -6 phi^3 - 2 (1-eps) phi + 6 phi |grad phi|^2.
  const double et = std::exp(-2.0 * t);
  const double phi = et * std::sin(x) * std::sin(y);
  const double px = et * std::cos(x) * std::sin(y);
  const double py = et * std::sin(x) * std::cos(y);
  const double grad2 = px * px + py * py;
  const double lap_mu =
      -6.0 * phi * phi * phi - 2.0 * (1.0 - eps) * phi + 6.0 * phi * grad2;
  const double phi_t = -2.0 * phi;
  if (mobility.kind == Mobility::Kind::Constant)
    return phi_t - mobility.m * lap_mu;
  // grad M . grad mu with M = 1 - phi^2.
  const double gradm_gradmu = -2.0 * phi * (3.0 * phi * phi + 1.0 - eps) * grad2;
  return phi_t - (1.0 - phi * phi) * lap_mu - gradm_gradmu;
}

MonocrystalParams MonocrystalParams::make_default() {
  MonocrystalParams p;
  p.eps = 0.325;
  p.domain_x = 36.0 * M_PI / std::sqrt(3.0);
  p.domain_y = 24.0 * M_PI;
  p.phi_a = std::sqrt(p.eps) / 2.0;
  p.amplitude =
      0.8 * (p.phi_a + std::sqrt(15.0 * p.eps - 36.0 * p.phi_a * p.phi_a) / 3.0);
  p.q = std::sqrt(3.0) / 2.0;
  p.d0 = p.domain_x / 6.0;
  p.x0c = p.domain_x / 2.0;
  p.y0c = p.domain_y / 2.0;
  return p;
}

double ic_monocrystal(double x, double y, const MonocrystalParams& p) {
  const double dx = x - p.x0c, dy = y - p.y0c;
  const double dist = std::sqrt(dx * dx + dy * dy);
  if (dist > p.d0) return p.phi_a;
  const double u = dist / p.d0;
  const double w = (1.0 - u * u) * (1.0 - u * u);
  const double crystal = std::cos(p.q * y / std::sqrt(3.0)) * std::cos(p.q * x) -
                         0.5 * std::cos(2.0 * p.q * y / std::sqrt(3.0));
  return p.phi_a + w * p.amplitude * crystal;
}

double ic_benchmark32(double x, double y) {
  const double c1 = std::cos(2.0 * M_PI * (x - 12.0) / 32.0);
  const double s1 = std::sin(2.0 * M_PI * (y - 1.0) / 32.0);
  const double c2 = std::cos(M_PI * (x + 10.0) / 32.0);
  const double c3 = std::cos(M_PI * (y + 3.0) / 32.0);
  const double s2 = std::sin(4.0 * M_PI * x / 32.0);
  const double s3 = std::sin(4.0 * M_PI * (y - 6.0) / 32.0);
  return 0.07 - 0.02 * c1 * s1 + 0.02 * c2 * c2 * c3 * c3 -
         0.01 * s2 * s2 * s3 * s3;
}

namespace {

struct Grain {
  double cx, cy, alpha;
  double xlo, xhi, ylo, yhi;
};

const Grain kGrains[3] = {
    {32.5, 32.5, M_PI / 4.0, 25, 40, 25, 40},
    {67.5, 67.5, 0.0, 60, 75, 60, 75},
    {92.5, 32.5, -M_PI / 4.0, 85, 100, 25, 40},
};

}  // namespace

double ic_polycrystal(double x, double y, const PolycrystalParams& p) {
  for (const Grain& g : kGrains) {
    if (x < g.xlo || x > g.xhi || y < g.ylo || y > g.yhi) continue;
    const double dx = x - g.cx, dy = y - g.cy;
    const double ca = std::cos(g.alpha), sa = std::sin(g.alpha);
    const double xl = ca * dx + sa * dy;
    const double yl = -sa * dx + ca * dy;
    const double t1 = std::cos(p.q * yl / std::sqrt(3.0)) * std::cos(p.q * xl);
    const double t2 = 0.5 * std::cos(2.0 * p.q * yl / std::sqrt(3.0));
    if (p.literal_c) return p.phibar + p.c * t1 - t2;
    return p.phibar + p.c * (t1 - t2);
  }
  return p.phibar;
}

std::uint64_t Rng64::next() {
  s_ += 0x9E3779B97f4A7C15ULL;
  std::uint64_t z = s_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng64::uniform01() {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

Eigen::VectorXd random_nodal_field(const Discretization& disc,
                                   const RandomIcParams& p) {
  Rng64 rng(p.seed);
  Eigen::VectorXd out(disc.scalar_map().total());
  for (std::ptrdiff_t i = 0; i < out.size(); ++i)
    out[i] = p.mean + p.amplitude * (2.0 * rng.uniform01() - 1.0);
  return out;
}

State state_from_phi_coeffs(const Eigen::VectorXd& phi, Psi0Rule rule,
                            Discretization& disc) {
  State st = disc.make_state();
  st.phi = phi;
  if (rule == Psi0Rule::LaplacianOfPhi0) {
    const RefElement& ref = disc.ref();
    const int ns = ref.num_nodes();
    const double ihx2 = 1.0 / (disc.mesh().hx() * disc.mesh().hx());
    const double ihy2 = 1.0 / (disc.mesh().hy() * disc.mesh().hy());
    for (int e = 0; e < disc.mesh().num_elements(); ++e) {
      const auto coeffs = st.phi.segment(static_cast<std::ptrdiff_t>(e) * ns, ns);
      st.psi.segment(static_cast<std::ptrdiff_t>(e) * ns, ns) =
          ihx2 * (ref.node_d2xi() * coeffs) + ihy2 * (ref.node_d2eta() * coeffs);
    }
    st.psibar = disc.project_skeleton_from_field(st.psi);
  } else if (rule == Psi0Rule::Analytic) {
    throw std::invalid_argument("state_from_phi_coeffs: no analytic psi here");
  }
  st.phibar = disc.project_skeleton_from_field(st.phi);
  return st;
}

std::vector<ConvergenceRow> run_convergence(const std::vector<int>& levels,
                                            double ratio, Mobility mobility,
                                            double eps, int degree,
                                            Coupling coupling,
                                            const NewtonConfig& newton) {
  if (levels.empty())
    throw std::invalid_argument("run_convergence: empty level list");
  for (std::size_t i = 1; i < levels.size(); ++i)
    if (levels[i] <= levels[i - 1])
      throw std::invalid_argument("run_convergence: levels must ascend");

  MmsCase mms;
  mms.mobility = mobility;
  mms.eps = eps;
  const double T = 1.0;
  std::vector<ConvergenceRow> rows;
  for (int n : levels) {
    CartesianMesh mesh =
        CartesianMesh::build(0.0, 2.0 * M_PI, 0.0, 2.0 * M_PI, n, n, true, true);
    PfcParams params;
    params.eps = eps;
    params.dt = ratio * mesh.hx();
    params.mobility = mobility;
    params.coupling = coupling;
    params.degree = degree;
    Discretization disc(mesh, params);

    const Field2D phi0 = [&](double x, double y) { return mms.exact(x, y, 0.0); };
    const Field2D psi0 = [&](double x, double y) {
      return mms.exact_psi(x, y, 0.0);
    };
    State state = project_initial(phi0, Psi0Rule::Analytic, &psi0, disc);
    SourceFn source = [&mms](double x, double y, double t) {
      return mms.source(x, y, t);
    };

    const int nfull = static_cast<int>(std::floor(T / params.dt + 1e-12));
    const double rem = T - nfull * params.dt;
    if (nfull > 0) {
      AdvanceResult res = advance(state, disc, newton, nfull, &source);
      state = std::move(res.state);
    }
    if (rem > 1e-12) {
      disc.set_dt(rem);
      AdvanceResult res = advance(state, disc, newton, 1, &source);
      state = std::move(res.state);
    }

    ConvergenceRow row;
    row.n = n;
    row.h = mesh.hx();
    row.dt = ratio * mesh.hx();
    row.error = l2_error(
        state,
        [&](double x, double y, double t) { return mms.exact(x, y, t); }, T,
        disc);
    row.dofs = disc.skeleton_system_size();
    row.rate = rows.empty() ? 0.0
                            : std::log2(rows.back().error / row.error) /
                                  std::log2(static_cast<double>(n) /
                                            rows.back().n);
    rows.push_back(row);
  }
  return rows;
}

void tau_study_params(int config_index, double& tau1, double& tau2,
                      double& tau3, double& tau4) {
  switch (config_index) {
    case 0: tau1 = 10; tau2 = 10; tau3 = 10; tau4 = 20; return;
    case 1: tau1 = 1; tau2 = 1; tau3 = -10; tau4 = -30; return;
    case 2: tau1 = 1; tau2 = 1; tau3 = 1; tau4 = 3000; return;
    case 3: tau1 = 10; tau2 = 10; tau3 = 10; tau4 = 3000; return;
    default:
      throw std::invalid_argument("tau_study_params: config must be 0..3");
  }
}

TauStudyResult run_tau_study(int config_index, int nsteps,
                             std::uint64_t seed) {
  CartesianMesh mesh =
      CartesianMesh::build(0.0, 2.0 * M_PI, 0.0, 2.0 * M_PI, 24, 24, true, true);
  PfcParams params;
  params.eps = 0.5;
  params.dt = 1.0;
  params.degree = 1;
  params.coupling = Coupling::EDG;
  params.allow_unstable_taus = config_index != 0;
  tau_study_params(config_index, params.tau1, params.tau2, params.tau3,
                   params.tau4);
  Discretization disc(mesh, params);

  RandomIcParams icp;
  icp.seed = seed;
  State state = state_from_phi_coeffs(random_nodal_field(disc, icp),
                                      Psi0Rule::Zero, disc);

  TauStudyResult result;
  NewtonConfig newton;
  double e_prev = disc.compute_energy(state);
  for (int n = 1; n <= nsteps; ++n) {
    std::pair<State, StepStats> step;
    try {
      step = newton_solve(state, disc, newton, nullptr);
    } catch (const NewtonFailure&) {
      result.verdict = TauStudyResult::Verdict::NewtonDivergedAtStep;
      result.event_step = n;
      return result;
    } catch (const std::runtime_error&) {
      result.verdict = TauStudyResult::Verdict::NewtonDivergedAtStep;
      result.event_step = n;
      return result;
    }
    EnergyRecord rec = disc.energy_record(step.first, state,
                                          step.second.newton_iters);
    state = std::move(step.first);
    result.records.push_back(rec);
    if (result.verdict == TauStudyResult::Verdict::Monotone &&
        rec.energy > e_prev + 1e-8 * (1.0 + std::abs(e_prev))) {
      result.verdict = TauStudyResult::Verdict::IncreasedAtStep;
      result.event_step = n;
    }
    e_prev = rec.energy;
  }
  return result;
}

}  // namespace pfc
