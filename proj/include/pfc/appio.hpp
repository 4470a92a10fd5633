#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pfc/assembly.hpp"
#include "pfc/scenarios.hpp"
#include "pfc/stepper.hpp"

namespace pfc {

struct MeshConfig {
  int nx = 0, ny = 0;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool periodic_x = false, periodic_y = false;
};

struct OutputConfig {
  std::string csv;              // energy CSV path; empty = none
  int snapshot_every = 0;       // steps between snapshots; 0 = none
  bool vtk = false, ppm = false;
  int raster_width = 256, raster_height = 256;
  double vmin = -1.0, vmax = 1.0;
  std::string prefix = "out";   // snapshot file prefix
};

/// Fully resolved run description. Scenario defaults fill every field so
/// a one-line config reproduces the corresponding experiment.
struct RunConfig {
  std::string scenario;  // mms|monocrystal|benchmark32|polycrystal|phase_transition|taustudy
  MeshConfig mesh;
  int degree = 1;
  double dt = 0.0;
  std::optional<double> t_final;
  std::optional<int> nsteps;
  double eps = 0.5;
  double tau1 = 10, tau2 = 10, tau3 = 10, tau4 = 20;
  bool allow_unstable_taus = false;
  Mobility mobility = Mobility::constant(1.0);
  Coupling coupling = Coupling::EDG;
  Splitting splitting = Splitting::Secant;
  NewtonConfig newton;
  OutputConfig output;
  std::uint64_t seed = 20230925;
  // Scenario-specific knobs.
  int mms_n = 48;
  double mms_ratio = 0.95;
  double mean = 0.7, amplitude = 0.7;  // random initial density
  bool literal_c = false;              // polycrystal parenthesization
  int tau_config = 0;

  PfcParams pfc_params() const;
  int resolved_nsteps() const;
};

/// Parse a JSON configuration document; unknown keys, type mismatches and
/// tau-rule violations are reported with the field path.
RunConfig parse_config(const std::string& text);
std::string serialize_config(const RunConfig& cfg);

void write_energy_csv(const std::vector<EnergyRecord>& records,
                      const std::string& path);
std::string energy_csv_string(const std::vector<EnergyRecord>& records);

/// Legacy ASCII VTK unstructured grid; per-element nodal points (dg
/// duplication across element boundaries) and k^2 bilinear sub-quads,
/// point data phi, psi, mu.
void write_vtk(const State& state, const Discretization& disc,
               const std::string& path);

/// Binary P6 raster of phi; pixel centers map to domain points, values
/// clamp to [vmin, vmax] and index a 256-entry monotone colormap
/// (dark blue-violet to yellow, increasing luminance). Row 0 is the top
/// of the domain.
void write_ppm(const State& state, const Discretization& disc,
               const std::string& path, int width, int height, double vmin,
               double vmax);
const std::array<std::array<unsigned char, 3>, 256>& colormap256();

/// Table of globally coupled dof counts for the four methods over the
/// eight published meshes, as CSV.
std::string table3_csv();

/// Execute a parsed run; returns the energy records. Writes the CSV and
/// snapshots requested by cfg.output.
std::vector<EnergyRecord> run_simulation(const RunConfig& cfg, std::ostream& log);

int cli_main(int argc, char** argv);

}  // namespace pfc
