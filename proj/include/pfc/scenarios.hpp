#pragma once

#include <cstdint>
#include <vector>

#include "pfc/assembly.hpp"
#include "pfc/stepper.hpp"

namespace pfc {

/// Manufactured solution phi(x,y,t) = e^{-2t} sin(x) sin(y) on (0,2pi)^2
/// with the source that makes it solve the model for the given mobility.
struct MmsCase {
  Mobility mobility = Mobility::constant(1.0);
  double eps = 0.5;

  double exact(double x, double y, double t) const;
  double exact_psi(double x, double y, double t) const;  // laplacian of exact
  double source(double x, double y, double t) const;
};

struct MonocrystalParams {
  double eps = 0.325;
  double domain_x = 0.0, domain_y = 0.0;  // filled by make_default
  double phi_a = 0.0;                     // sqrt(eps)/2
  double amplitude = 0.0;                 // A = 4/5 (phi_a + sqrt(15 eps - 36 phi_a^2)/3)
  double q = 0.0;                         // sqrt(3)/2
  double d0 = 0.0;                        // domain_x / 6
  double x0c = 0.0, y0c = 0.0;            // seed center (domain center)

  static MonocrystalParams make_default();
};
double ic_monocrystal(double x, double y, const MonocrystalParams& p);

/// Benchmark initial density on (0,32)^2.
double ic_benchmark32(double x, double y);

struct PolycrystalParams {
  double phibar = 0.285;
  double c = 0.446;
  double q = 0.66;
  /// Literal reading of the printed formula: C multiplies only the first
  /// cosine product instead of the whole crystalline term.
  bool literal_c = false;
};
double ic_polycrystal(double x, double y, const PolycrystalParams& p);

/// Deterministic 64-bit generator (splitmix64), bit-reproducible.
class Rng64 {
public:
  explicit Rng64(std::uint64_t seed) : s_(seed) {}
  std::uint64_t next();
  /// Uniform in [0,1), 53 mantissa bits.
  double uniform01();

private:
  std::uint64_t s_;
};

struct RandomIcParams {
  double mean = 0.7;
  double amplitude = 0.7;
  std::uint64_t seed = 20230925;
};

/// i.i.d. uniform samples mean + amplitude*(2u-1) assigned to the element
/// nodal dofs in dof order.
Eigen::VectorXd random_nodal_field(const Discretization& disc,
                                   const RandomIcParams& p);

/// State from prescribed phi coefficients: psi per rule, skeleton traces
/// from the facet projection of the field, everything else zero.
State state_from_phi_coeffs(const Eigen::VectorXd& phi, Psi0Rule rule,
                            Discretization& disc);

struct ConvergenceRow {
  int n = 0;
  double h = 0, dt = 0, error = 0, rate = 0;
  std::int64_t dofs = 0;  // globally coupled skeleton unknowns
};

/// Manufactured-solution refinement study on (0,2pi)^2 periodic meshes,
/// integrating to T=1 with the last step truncated to land exactly on T.
std::vector<ConvergenceRow> run_convergence(const std::vector<int>& levels,
                                            double ratio, Mobility mobility,
                                            double eps, int degree,
                                            Coupling coupling,
                                            const NewtonConfig& newton = {});

struct TauStudyResult {
  enum class Verdict { Monotone, IncreasedAtStep, NewtonDivergedAtStep };
  Verdict verdict = Verdict::Monotone;
  int event_step = -1;
  std::vector<EnergyRecord> records;
};

/// Stabilization-parameter study: 24x24 quads on (0,2pi)^2, eps=0.5,
/// dt=1, bilinear elements, seeded uniform random initial density.
/// Config 0 is the compliant tau set; 1..3 are the violating sets.
TauStudyResult run_tau_study(int config_index, int nsteps = 200,
                             std::uint64_t seed = 20230925);

/// The four tau sets of the study, index 0..3.
void tau_study_params(int config_index, double& tau1, double& tau2,
                      double& tau3, double& tau4);

}  // namespace pfc
