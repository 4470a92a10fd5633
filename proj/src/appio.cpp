#include "pfc/appio.hpp"

#include <array>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

namespace pfc {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::invalid_argument(path + ": " + what);
}

void expect_keys(const json& obj, const std::string& path,
                 const std::set<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) fail(path + "." + it.key(), "unknown key");
}

double get_double(const json& obj, const std::string& path) {
  if (!obj.is_number()) fail(path, "expected a number");
  return obj.get<double>();
}

int get_int(const json& obj, const std::string& path) {
  if (!obj.is_number_integer()) fail(path, "expected an integer");
  return obj.get<int>();
}

bool get_bool(const json& obj, const std::string& path) {
  if (!obj.is_boolean()) fail(path, "expected a boolean");
  return obj.get<bool>();
}

std::string get_string(const json& obj, const std::string& path) {
  if (!obj.is_string()) fail(path, "expected a string");
  return obj.get<std::string>();
}

void apply_scenario_defaults(RunConfig& cfg) {
  auto set_mesh = [&](int nx, int ny, double x0, double x1, double y0,
                      double y1, bool px, bool py) {
    cfg.mesh = {nx, ny, x0, x1, y0, y1, px, py};
  };
  if (cfg.scenario == "mms") {
    const double h = 2.0 * M_PI / cfg.mms_n;
    set_mesh(cfg.mms_n, cfg.mms_n, 0, 2.0 * M_PI, 0, 2.0 * M_PI, true, true);
    cfg.eps = 0.5;
    cfg.degree = 1;
    cfg.dt = cfg.mms_ratio * h;
    cfg.t_final = 1.0;
    cfg.nsteps.reset();
    cfg.output.vmin = -1.0;
    cfg.output.vmax = 1.0;
  } else if (cfg.scenario == "monocrystal") {
    const double lx = 36.0 * M_PI / std::sqrt(3.0);
    set_mesh(460, 532, 0, lx, 0, 24.0 * M_PI, true, true);
    cfg.eps = 0.325;
    cfg.degree = 1;
    cfg.dt = 0.01;
    cfg.t_final = 80.0;
    cfg.nsteps.reset();
    cfg.output.vmin = -0.67;
    cfg.output.vmax = 0.72;
  } else if (cfg.scenario == "benchmark32") {
    set_mesh(256, 256, 0, 32, 0, 32, false, false);
    cfg.eps = 0.025;
    cfg.degree = 1;
    cfg.dt = 0.005;
    cfg.t_final = 10.0;
    cfg.nsteps.reset();
    cfg.output.vmin = 0.04;
    cfg.output.vmax = 0.096;
  } else if (cfg.scenario == "polycrystal") {
    set_mesh(402, 402, 0, 201, 0, 201, false, false);
    cfg.eps = 0.25;
    cfg.degree = 1;
    cfg.dt = 1.0;
    cfg.t_final = 4000.0;
    cfg.nsteps.reset();
    cfg.output.vmin = -0.47;
    cfg.output.vmax = 0.63;
  } else if (cfg.scenario == "phase_transition") {
    set_mesh(256, 256, 0, 128, 0, 128, true, true);
    cfg.eps = 0.025;
    cfg.degree = 2;
    cfg.dt = 0.01;  // the text's value; the figure caption prints 0.1
    cfg.t_final = 1300.0;
    cfg.nsteps.reset();
    cfg.output.vmin = -0.2;
    cfg.output.vmax = 0.23;
  } else if (cfg.scenario == "taustudy") {
    set_mesh(24, 24, 0, 2.0 * M_PI, 0, 2.0 * M_PI, true, true);
    cfg.eps = 0.5;
    cfg.degree = 1;
    cfg.dt = 1.0;
    cfg.nsteps = 200;
    cfg.t_final.reset();
  } else {
    fail("$.scenario",
         "unknown scenario '" + cfg.scenario +
             "' (expected mms|monocrystal|benchmark32|polycrystal|"
             "phase_transition|taustudy)");
  }
}

}  // namespace

PfcParams RunConfig::pfc_params() const {
  PfcParams p;
  p.eps = eps;
  p.tau1 = tau1;
  p.tau2 = tau2;
  p.tau3 = tau3;
  p.tau4 = tau4;
  p.dt = dt;
  p.mobility = mobility;
  p.coupling = coupling;
  p.splitting = splitting;
  p.degree = degree;
  p.allow_unstable_taus = allow_unstable_taus;
  return p;
}

int RunConfig::resolved_nsteps() const {
  if (nsteps) return *nsteps;
  if (t_final) return static_cast<int>(std::ceil(*t_final / dt - 1e-12));
  throw std::invalid_argument("RunConfig: neither nsteps nor t_final set");
}

RunConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: JSON parse error: ") +
                                e.what());
  }
  if (!doc.is_object()) fail("$", "expected a JSON object");
  if (!doc.contains("scenario"))
    fail("$", "missing required key 'scenario' (one of mms|monocrystal|"
              "benchmark32|polycrystal|phase_transition|taustudy)");

  expect_keys(doc, "$",
              {"scenario", "N", "ratio", "mesh", "degree", "dt", "t_final",
               "nsteps", "eps", "taus", "mobility", "coupling", "newton",
               "output", "seed", "mean", "amplitude", "literal_c",
               "tau_config", "splitting"});

  RunConfig cfg;
  cfg.scenario = get_string(doc["scenario"], "$.scenario");
  if (doc.contains("N")) cfg.mms_n = get_int(doc["N"], "$.N");
  if (doc.contains("ratio")) cfg.mms_ratio = get_double(doc["ratio"], "$.ratio");
  if (cfg.mms_n < 1) fail("$.N", "must be positive");
  if (!(cfg.mms_ratio > 0)) fail("$.ratio", "must be positive");
  apply_scenario_defaults(cfg);

  if (doc.contains("mesh")) {
    const json& m = doc["mesh"];
    if (!m.is_object()) fail("$.mesh", "expected an object");
    expect_keys(m, "$.mesh",
                {"nx", "ny", "x0", "x1", "y0", "y1", "periodic_x", "periodic_y"});
    if (m.contains("nx")) cfg.mesh.nx = get_int(m["nx"], "$.mesh.nx");
    if (m.contains("ny")) cfg.mesh.ny = get_int(m["ny"], "$.mesh.ny");
    if (m.contains("x0")) cfg.mesh.x0 = get_double(m["x0"], "$.mesh.x0");
    if (m.contains("x1")) cfg.mesh.x1 = get_double(m["x1"], "$.mesh.x1");
    if (m.contains("y0")) cfg.mesh.y0 = get_double(m["y0"], "$.mesh.y0");
    if (m.contains("y1")) cfg.mesh.y1 = get_double(m["y1"], "$.mesh.y1");
    if (m.contains("periodic_x"))
      cfg.mesh.periodic_x = get_bool(m["periodic_x"], "$.mesh.periodic_x");
    if (m.contains("periodic_y"))
      cfg.mesh.periodic_y = get_bool(m["periodic_y"], "$.mesh.periodic_y");
  }
  if (doc.contains("degree")) cfg.degree = get_int(doc["degree"], "$.degree");
  if (doc.contains("dt")) cfg.dt = get_double(doc["dt"], "$.dt");
  if (doc.contains("t_final")) {
    cfg.t_final = get_double(doc["t_final"], "$.t_final");
    cfg.nsteps.reset();
  }
  if (doc.contains("nsteps")) {
    cfg.nsteps = get_int(doc["nsteps"], "$.nsteps");
    cfg.t_final.reset();
  }
  if (doc.contains("eps")) cfg.eps = get_double(doc["eps"], "$.eps");
  if (doc.contains("taus")) {
    const json& t = doc["taus"];
    if (!t.is_object()) fail("$.taus", "expected an object");
    expect_keys(t, "$.taus", {"tau1", "tau2", "tau3", "tau4", "allow_unstable"});
    if (t.contains("tau1")) cfg.tau1 = get_double(t["tau1"], "$.taus.tau1");
    if (t.contains("tau2")) cfg.tau2 = get_double(t["tau2"], "$.taus.tau2");
    if (t.contains("tau3")) cfg.tau3 = get_double(t["tau3"], "$.taus.tau3");
    if (t.contains("tau4")) cfg.tau4 = get_double(t["tau4"], "$.taus.tau4");
    if (t.contains("allow_unstable"))
      cfg.allow_unstable_taus = get_bool(t["allow_unstable"], "$.taus.allow_unstable");
  }
  if (doc.contains("mobility")) {
    const json& m = doc["mobility"];
    if (!m.is_object()) fail("$.mobility", "expected an object");
    expect_keys(m, "$.mobility", {"model", "m"});
    std::string model = m.contains("model")
                            ? get_string(m["model"], "$.mobility.model")
                            : "constant";
    if (model == "constant") {
      cfg.mobility = Mobility::constant(
          m.contains("m") ? get_double(m["m"], "$.mobility.m") : 1.0);
    } else if (model == "degenerate") {
      cfg.mobility = Mobility::degenerate();
    } else {
      fail("$.mobility.model", "expected 'constant' or 'degenerate'");
    }
  }
  if (doc.contains("splitting")) {
    std::string sp = get_string(doc["splitting"], "$.splitting");
    if (sp == "secant")
      cfg.splitting = Splitting::Secant;
    else if (sp == "full_lag")
      cfg.splitting = Splitting::FullLag;
    else
      fail("$.splitting", "expected 'secant' or 'full_lag'");
  }
  if (doc.contains("coupling")) {
    std::string c = get_string(doc["coupling"], "$.coupling");
    if (c == "edg")
      cfg.coupling = Coupling::EDG;
    else if (c == "hdg")
      cfg.coupling = Coupling::HDG;
    else
      fail("$.coupling", "expected 'edg' or 'hdg'");
  }
  if (doc.contains("newton")) {
    const json& n = doc["newton"];
    if (!n.is_object()) fail("$.newton", "expected an object");
    expect_keys(n, "$.newton", {"tol", "max_iters"});
    if (n.contains("tol")) cfg.newton.abs_tol = get_double(n["tol"], "$.newton.tol");
    if (n.contains("max_iters"))
      cfg.newton.max_iters = get_int(n["max_iters"], "$.newton.max_iters");
  }
  if (doc.contains("output")) {
    const json& o = doc["output"];
    if (!o.is_object()) fail("$.output", "expected an object");
    expect_keys(o, "$.output",
                {"csv", "snapshot_every", "formats", "raster", "prefix"});
    if (o.contains("csv")) cfg.output.csv = get_string(o["csv"], "$.output.csv");
    if (o.contains("snapshot_every"))
      cfg.output.snapshot_every = get_int(o["snapshot_every"], "$.output.snapshot_every");
    if (o.contains("prefix"))
      cfg.output.prefix = get_string(o["prefix"], "$.output.prefix");
    if (o.contains("formats")) {
      const json& f = o["formats"];
      if (!f.is_array()) fail("$.output.formats", "expected an array");
      cfg.output.vtk = cfg.output.ppm = false;
      for (const auto& x : f) {
        std::string s = get_string(x, "$.output.formats[]");
        if (s == "vtk")
          cfg.output.vtk = true;
        else if (s == "ppm")
          cfg.output.ppm = true;
        else
          fail("$.output.formats[]", "expected 'vtk' or 'ppm'");
      }
    }
    if (o.contains("raster")) {
      const json& r = o["raster"];
      if (!r.is_object()) fail("$.output.raster", "expected an object");
      expect_keys(r, "$.output.raster", {"width", "height", "vmin", "vmax"});
      if (r.contains("width"))
        cfg.output.raster_width = get_int(r["width"], "$.output.raster.width");
      if (r.contains("height"))
        cfg.output.raster_height = get_int(r["height"], "$.output.raster.height");
      if (r.contains("vmin"))
        cfg.output.vmin = get_double(r["vmin"], "$.output.raster.vmin");
      if (r.contains("vmax"))
        cfg.output.vmax = get_double(r["vmax"], "$.output.raster.vmax");
    }
  }
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned() && !doc["seed"].is_number_integer())
      fail("$.seed", "expected an integer");
    cfg.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("mean")) cfg.mean = get_double(doc["mean"], "$.mean");
  if (doc.contains("amplitude"))
    cfg.amplitude = get_double(doc["amplitude"], "$.amplitude");
  if (doc.contains("literal_c"))
    cfg.literal_c = get_bool(doc["literal_c"], "$.literal_c");
  if (doc.contains("tau_config")) {
    cfg.tau_config = get_int(doc["tau_config"], "$.tau_config");
    if (cfg.tau_config < 0 || cfg.tau_config > 3)
      fail("$.tau_config", "expected 0..3");
    if (cfg.tau_config != 0) cfg.allow_unstable_taus = true;
    tau_study_params(cfg.tau_config, cfg.tau1, cfg.tau2, cfg.tau3, cfg.tau4);
  }

  if (cfg.mesh.nx < 1) fail("$.mesh.nx", "must be positive");
  if (cfg.mesh.ny < 1) fail("$.mesh.ny", "must be positive");
  if (!(cfg.dt > 0)) fail("$.dt", "must be positive");
  if (cfg.output.raster_width < 1 || cfg.output.raster_height < 1)
    fail("$.output.raster", "raster size must be >= 1");
  if (!(cfg.output.vmax > cfg.output.vmin))
    fail("$.output.raster", "vmax must exceed vmin");
  try {
    cfg.pfc_params().validate();
    cfg.newton.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("$.taus: ") + e.what());
  }
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  json doc;
  doc["scenario"] = cfg.scenario;
  if (cfg.scenario == "mms") {
    doc["N"] = cfg.mms_n;
    doc["ratio"] = cfg.mms_ratio;
  }
  doc["mesh"] = {{"nx", cfg.mesh.nx},
                 {"ny", cfg.mesh.ny},
                 {"x0", cfg.mesh.x0},
                 {"x1", cfg.mesh.x1},
                 {"y0", cfg.mesh.y0},
                 {"y1", cfg.mesh.y1},
                 {"periodic_x", cfg.mesh.periodic_x},
                 {"periodic_y", cfg.mesh.periodic_y}};
  doc["degree"] = cfg.degree;
  doc["dt"] = cfg.dt;
  if (cfg.t_final) doc["t_final"] = *cfg.t_final;
  if (cfg.nsteps) doc["nsteps"] = *cfg.nsteps;
  doc["eps"] = cfg.eps;
  doc["taus"] = {{"tau1", cfg.tau1},
                 {"tau2", cfg.tau2},
                 {"tau3", cfg.tau3},
                 {"tau4", cfg.tau4},
                 {"allow_unstable", cfg.allow_unstable_taus}};
  doc["mobility"] =
      cfg.mobility.kind == Mobility::Kind::Constant
          ? json{{"model", "constant"}, {"m", cfg.mobility.m}}
          : json{{"model", "degenerate"}};
  doc["coupling"] = cfg.coupling == Coupling::EDG ? "edg" : "hdg";
  doc["splitting"] = cfg.splitting == Splitting::Secant ? "secant" : "full_lag";
  doc["newton"] = {{"tol", cfg.newton.abs_tol},
                   {"max_iters", cfg.newton.max_iters}};
  json formats = json::array();
  if (cfg.output.vtk) formats.push_back("vtk");
  if (cfg.output.ppm) formats.push_back("ppm");
  doc["output"] = {{"csv", cfg.output.csv},
                   {"snapshot_every", cfg.output.snapshot_every},
                   {"formats", formats},
                   {"raster",
                    {{"width", cfg.output.raster_width},
                     {"height", cfg.output.raster_height},
                     {"vmin", cfg.output.vmin},
                     {"vmax", cfg.output.vmax}}},
                   {"prefix", cfg.output.prefix}};
  doc["seed"] = cfg.seed;
  if (cfg.scenario == "phase_transition" || cfg.scenario == "taustudy") {
    doc["mean"] = cfg.mean;
    doc["amplitude"] = cfg.amplitude;
  }
  if (cfg.scenario == "polycrystal") doc["literal_c"] = cfg.literal_c;
  if (cfg.scenario == "taustudy") doc["tau_config"] = cfg.tau_config;
  return doc.dump(2);
}

std::string energy_csv_string(const std::vector<EnergyRecord>& records) {
  std::string out = "step,time,energy,scaled_energy,mass,dissipation,newton_iters\n";
  char buf[256];
  for (const EnergyRecord& r : records) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                  r.step, r.time, r.energy, r.scaled_energy, r.mass,
                  r.dissipation, r.newton_iters);
    out += buf;
  }
  return out;
}

void write_energy_csv(const std::vector<EnergyRecord>& records,
                      const std::string& path) {
  if (records.empty())
    throw std::invalid_argument("write_energy_csv: no records");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_energy_csv: cannot open " + path);
  f << energy_csv_string(records);
  if (!f) throw std::runtime_error("write_energy_csv: write failed: " + path);
}

void write_vtk(const State& state, const Discretization& disc,
               const std::string& path) {
  const CartesianMesh& mesh = disc.mesh();
  const RefElement& ref = disc.ref();
  const int k = ref.degree();
  const int np = k + 1;
  const int ns = ref.num_nodes();
  const int ne = mesh.num_elements();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_vtk: cannot open " + path);
  char buf[128];
  f << "# vtk DataFile Version 3.0\n"
    << "pfc snapshot\n"
    << "ASCII\n"
    << "DATASET UNSTRUCTURED_GRID\n";
  f << "POINTS " << static_cast<long long>(ne) * ns << " double\n";
  for (int e = 0; e < ne; ++e) {
    const ElementGeometry g = mesh.element_geometry(e);
    for (int a = 0; a < ns; ++a) {
      std::snprintf(buf, sizeof buf, "%.17g %.17g 0\n",
                    g.x0 + g.hx * ref.node_x(a), g.y0 + g.hy * ref.node_y(a));
      f << buf;
    }
  }
  const long long ncells = static_cast<long long>(ne) * k * k;
  f << "CELLS " << ncells << " " << 5 * ncells << "\n";
  for (int e = 0; e < ne; ++e) {
    const long long base = static_cast<long long>(e) * ns;
    for (int jy = 0; jy < k; ++jy)
      for (int ix = 0; ix < k; ++ix) {
        const long long a = base + jy * np + ix;
        f << "4 " << a << " " << a + 1 << " " << a + 1 + np << " " << a + np
          << "\n";
      }
  }
  f << "CELL_TYPES " << ncells << "\n";
  for (long long c = 0; c < ncells; ++c) f << "9\n";
  f << "POINT_DATA " << static_cast<long long>(ne) * ns << "\n";
  auto scalars = [&](const char* name, const Eigen::VectorXd& v) {
    f << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (std::ptrdiff_t i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g\n", v[i]);
      f << buf;
    }
  };
  scalars("phi", state.phi);
  scalars("psi", state.psi);
  scalars("mu", state.mu);
  if (!f) throw std::runtime_error("write_vtk: write failed: " + path);
}

const std::array<std::array<unsigned char, 3>, 256>& colormap256() {
  static const auto table = [] {
    // Anchors of a monotone-luminance map (viridis-like), linearly
    // interpolated to 256 entries.
    const int anchors[9][3] = {{68, 1, 84},    {71, 44, 122},  {59, 81, 139},
                               {44, 113, 142}, {33, 144, 141}, {39, 173, 129},
                               {92, 200, 99},  {170, 220, 50}, {253, 231, 37}};
    std::array<std::array<unsigned char, 3>, 256> t{};
    for (int i = 0; i < 256; ++i) {
      const double u = i / 255.0 * 8.0;
      const int a = std::min(static_cast<int>(u), 7);
      const double w = u - a;
      for (int c = 0; c < 3; ++c)
        t[i][c] = static_cast<unsigned char>(
            std::lround((1.0 - w) * anchors[a][c] + w * anchors[a + 1][c]));
    }
    return t;
  }();
  return table;
}

void write_ppm(const State& state, const Discretization& disc,
               const std::string& path, int width, int height, double vmin,
               double vmax) {
  if (width < 1 || height < 1)
    throw std::invalid_argument("write_ppm: raster size must be >= 1");
  if (!(vmax > vmin))
    throw std::invalid_argument("write_ppm: vmax must exceed vmin");
  const CartesianMesh& mesh = disc.mesh();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
  f << "P6\n" << width << " " << height << "\n255\n";
  const auto& cmap = colormap256();
  std::string row(static_cast<std::size_t>(width) * 3, '\0');
  for (int rI = 0; rI < height; ++rI) {
    const double y = mesh.y1() - (rI + 0.5) / height * (mesh.y1() - mesh.y0());
    for (int c = 0; c < width; ++c) {
      const double x =
          mesh.x0() + (c + 0.5) / width * (mesh.x1() - mesh.x0());
      const double v = disc.eval_scalar(state.phi, x, y);
      double u = (v - vmin) / (vmax - vmin);
      u = std::clamp(u, 0.0, 1.0);
      const int idx = static_cast<int>(std::lround(u * 255.0));
      row[3 * c + 0] = static_cast<char>(cmap[idx][0]);
      row[3 * c + 1] = static_cast<char>(cmap[idx][1]);
      row[3 * c + 2] = static_cast<char>(cmap[idx][2]);
    }
    f.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw std::runtime_error("write_ppm: write failed: " + path);
}

std::string table3_csv() {
  struct Row {
    const char* label;
    int nx, ny;
    bool periodic;
  };
  const Row rows[8] = {
      {"Sec. 5.1 1st level", 48, 48, true},
      {"Sec. 5.1 2nd level", 96, 96, true},
      {"Sec. 5.1 3rd level", 192, 192, true},
      {"Sec. 5.1 4th level", 384, 384, true},
      {"Sec. 5.1 5th level", 768, 768, true},
      {"Sec. 5.2", 460, 532, true},
      {"Sec. 5.3", 256, 256, false},
      {"Sec. 5.4", 402, 402, true},
  };
  std::string out = "mesh,c0ipdg,ldg,hdg,edg\n";
  for (const Row& r : rows) {
    out += r.label;
    for (DofMethod m :
         {DofMethod::C0IPDG, DofMethod::LDG, DofMethod::HDG, DofMethod::EDG})
      out += "," + std::to_string(count_dofs_table3(m, r.nx, r.ny, 1, r.periodic));
    out += "\n";
  }
  return out;
}

namespace {

void write_snapshots(const RunConfig& cfg, const State& state,
                     const Discretization& disc, int step) {
  char suffix[32];
  std::snprintf(suffix, sizeof suffix, "_%06d", step);
  if (cfg.output.vtk)
    write_vtk(state, disc, cfg.output.prefix + suffix + ".vtk");
  if (cfg.output.ppm)
    write_ppm(state, disc, cfg.output.prefix + suffix + ".ppm",
              cfg.output.raster_width, cfg.output.raster_height,
              cfg.output.vmin, cfg.output.vmax);
}

}  // namespace

std::vector<EnergyRecord> run_simulation(const RunConfig& cfg,
                                         std::ostream& log) {
  if (cfg.scenario == "taustudy") {
    TauStudyResult res =
        run_tau_study(cfg.tau_config, cfg.resolved_nsteps(), cfg.seed);
    switch (res.verdict) {
      case TauStudyResult::Verdict::Monotone:
        log << "taustudy config " << cfg.tau_config << ": monotone\n";
        break;
      case TauStudyResult::Verdict::IncreasedAtStep:
        log << "taustudy config " << cfg.tau_config << ": increased-at-step-"
            << res.event_step << "\n";
        break;
      case TauStudyResult::Verdict::NewtonDivergedAtStep:
        log << "taustudy config " << cfg.tau_config
            << ": newton-diverged-at-step-" << res.event_step << "\n";
        break;
    }
    if (!cfg.output.csv.empty() && !res.records.empty())
      write_energy_csv(res.records, cfg.output.csv);
    return res.records;
  }

  CartesianMesh mesh = CartesianMesh::build(
      cfg.mesh.x0, cfg.mesh.x1, cfg.mesh.y0, cfg.mesh.y1, cfg.mesh.nx,
      cfg.mesh.ny, cfg.mesh.periodic_x, cfg.mesh.periodic_y);
  Discretization disc(mesh, cfg.pfc_params());

  State state;
  SourceFn source;
  const SourceFn* source_ptr = nullptr;
  MmsCase mms;
  if (cfg.scenario == "mms") {
    mms.eps = cfg.eps;
    mms.mobility = cfg.mobility;
    const Field2D phi0 = [&](double x, double y) { return mms.exact(x, y, 0.0); };
    const Field2D psi0 = [&](double x, double y) { return mms.exact_psi(x, y, 0.0); };
    state = project_initial(phi0, Psi0Rule::Analytic, &psi0, disc);
    source = [&mms](double x, double y, double t) { return mms.source(x, y, t); };
    source_ptr = &source;
  } else if (cfg.scenario == "monocrystal") {
    MonocrystalParams p = MonocrystalParams::make_default();
    p.eps = cfg.eps;
    p.phi_a = std::sqrt(p.eps) / 2.0;
    p.amplitude = 0.8 * (p.phi_a + std::sqrt(15.0 * p.eps - 36.0 * p.phi_a * p.phi_a) / 3.0);
    p.domain_x = cfg.mesh.x1 - cfg.mesh.x0;
    p.domain_y = cfg.mesh.y1 - cfg.mesh.y0;
    p.d0 = p.domain_x / 6.0;
    p.x0c = cfg.mesh.x0 + p.domain_x / 2.0;
    p.y0c = cfg.mesh.y0 + p.domain_y / 2.0;
    state = project_initial([&](double x, double y) { return ic_monocrystal(x, y, p); },
                            Psi0Rule::LaplacianOfPhi0, nullptr, disc);
  } else if (cfg.scenario == "benchmark32") {
    state = project_initial([](double x, double y) { return ic_benchmark32(x, y); },
                            Psi0Rule::LaplacianOfPhi0, nullptr, disc);
  } else if (cfg.scenario == "polycrystal") {
    PolycrystalParams p;
    p.literal_c = cfg.literal_c;
    state = project_initial([&](double x, double y) { return ic_polycrystal(x, y, p); },
                            Psi0Rule::LaplacianOfPhi0, nullptr, disc);
  } else if (cfg.scenario == "phase_transition") {
    RandomIcParams p;
    p.mean = cfg.mean;
    p.amplitude = cfg.amplitude;
    p.seed = cfg.seed;
    state = state_from_phi_coeffs(random_nodal_field(disc, p), Psi0Rule::Zero,
                                  disc);
  } else {
    throw std::invalid_argument("run_simulation: unknown scenario " + cfg.scenario);
  }

  std::vector<EnergyRecord> records;
  StepHook hook = [&](const State& st, const EnergyRecord& rec,
                      const StepStats&) {
    records.push_back(rec);
    if (cfg.output.snapshot_every > 0 &&
        st.step % cfg.output.snapshot_every == 0)
      write_snapshots(cfg, st, disc, st.step);
  };

  int nfull = cfg.resolved_nsteps();
  double rem = 0.0;
  if (cfg.t_final) {
    nfull = static_cast<int>(std::floor(*cfg.t_final / cfg.dt + 1e-12));
    rem = *cfg.t_final - nfull * cfg.dt;
    if (rem <= 1e-12) rem = 0.0;
  }
  if (nfull > 0) {
    AdvanceResult res = advance(state, disc, cfg.newton, nfull, source_ptr, &hook);
    state = std::move(res.state);
  }
  if (rem > 0.0) {
    disc.set_dt(rem);
    AdvanceResult res = advance(state, disc, cfg.newton, 1, source_ptr, &hook);
    state = std::move(res.state);
  }
  // hook captured `records` by reference; AdvanceResult records are the same.

  if (!cfg.output.csv.empty() && !records.empty())
    write_energy_csv(records, cfg.output.csv);
  if (cfg.output.vtk) write_vtk(state, disc, cfg.output.prefix + "_final.vtk");
  log << "run " << cfg.scenario << ": " << records.size() << " steps, final t="
      << state.t << "\n";
  return records;
}

int cli_main(int argc, char** argv) {
  CLI::App app{"HDG/EDG solver for the phase field crystal equation"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run a simulation from a JSON config");
  std::string config_path;
  run->add_option("config", config_path, "configuration file")->required();

  auto* mms = app.add_subcommand("mms", "manufactured-solution convergence table");
  std::string levels_str = "48,96";
  double ratio = 0.95;
  std::string mobility_str = "constant";
  std::string coupling_str = "edg";
  int degree = 1;
  double eps = 0.5;
  mms->add_option("--levels", levels_str, "comma-separated mesh sizes");
  mms->add_option("--ratio", ratio, "dt/h ratio");
  mms->add_option("--mobility", mobility_str, "constant|degenerate");
  mms->add_option("--coupling", coupling_str, "edg|hdg");
  mms->add_option("--degree", degree, "polynomial degree");
  mms->add_option("--eps", eps, "undercooling parameter");

  auto* dofs = app.add_subcommand("dofs", "degree-of-freedom tables");
  bool table3 = false;
  dofs->add_flag("--table3", table3, "print the published comparison table");

  auto* tau = app.add_subcommand("taustudy", "stabilization-parameter study");
  int tau_config = 0;
  int tau_steps = 200;
  std::string tau_csv;
  tau->add_option("--config", tau_config, "tau set 0..3")->required();
  tau->add_option("--steps", tau_steps, "number of steps");
  tau->add_option("--csv", tau_csv, "energy CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (run->parsed()) {
      std::ifstream f(config_path);
      if (!f) throw std::runtime_error("cannot open config " + config_path);
      std::stringstream ss;
      ss << f.rdbuf();
      RunConfig cfg = parse_config(ss.str());
      run_simulation(cfg, std::cout);
      return 0;
    }
    if (mms->parsed()) {
      std::vector<int> levels;
      std::stringstream ss(levels_str);
      std::string tok;
      while (std::getline(ss, tok, ',')) levels.push_back(std::stoi(tok));
      Mobility mob = mobility_str == "degenerate" ? Mobility::degenerate()
                                                  : Mobility::constant(1.0);
      if (mobility_str != "degenerate" && mobility_str != "constant")
        throw std::invalid_argument("--mobility must be constant|degenerate");
      Coupling cpl;
      if (coupling_str == "edg")
        cpl = Coupling::EDG;
      else if (coupling_str == "hdg")
        cpl = Coupling::HDG;
      else
        throw std::invalid_argument("--coupling must be edg|hdg");
      auto rows = run_convergence(levels, ratio, mob, eps, degree, cpl);
      std::printf("N,h,dt,error,rate,dofs\n");
      for (const auto& r : rows)
        std::printf("%d,%.17g,%.17g,%.6e,%.3f,%" PRId64 "\n", r.n, r.h, r.dt,
                    r.error, r.rate, r.dofs);
      return 0;
    }
    if (dofs->parsed()) {
      if (!table3) throw std::invalid_argument("dofs: nothing to print (try --table3)");
      std::fputs(table3_csv().c_str(), stdout);
      return 0;
    }
    if (tau->parsed()) {
      TauStudyResult res = run_tau_study(tau_config, tau_steps);
      switch (res.verdict) {
        case TauStudyResult::Verdict::Monotone:
          std::printf("config %d: monotone over %d steps\n", tau_config, tau_steps);
          break;
        case TauStudyResult::Verdict::IncreasedAtStep:
          std::printf("config %d: increased-at-step-%d\n", tau_config, res.event_step);
          break;
        case TauStudyResult::Verdict::NewtonDivergedAtStep:
          std::printf("config %d: newton-diverged-at-step-%d\n", tau_config, res.event_step);
          break;
      }
      if (!tau_csv.empty() && !res.records.empty())
        write_energy_csv(res.records, tau_csv);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace pfc
