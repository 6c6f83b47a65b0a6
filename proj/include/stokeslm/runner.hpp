#ifndef STOKESLM_RUNNER_HPP
#define STOKESLM_RUNNER_HPP

#include "stokeslm/diagnostics.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace stokeslm {

struct InterfaceSpec {
  enum class Shape { circle, ellipse };
  Shape shape = Shape::circle;
  Vec2 center = Vec2(0, 0);
  double rx = 0.5, ry = 0.5;
  int k = 64;

  InterfacePolygon build() const {
    if (k < 8) throw ConfigError("interface needs k_gamma >= 8");
    std::vector<Vec2> v(k);
    for (int i = 0; i < k; ++i) {
      const double phi = 2.0 * M_PI * i / k;
      v[i] = center + Vec2(rx * std::cos(phi), ry * std::sin(phi));
    }
    return InterfacePolygon(std::move(v));
  }
};

struct RunConfig {
  std::string experiment = "custom";
  DomainSpec domain;
  InterfaceSpec interface;
  SchemeConfig scheme;
  double mesh_h = 0.05;
  double t_end = 0.1;
  int snapshot_every = 0;
  std::string outdir = "out";
  double source_alpha = 0.2;  // strength of the radial source data alpha x/|x|^2

  int n_steps() const {
    const int m = static_cast<int>(std::lround(t_end / scheme.dt));
    if (m < 1 || std::abs(m * scheme.dt - t_end) > 1e-9 * t_end)
      throw ConfigError("dt must divide t_end into a whole number of steps");
    return m;
  }

  void validate() const {
    scheme.validate();
    if (!(mesh_h > 0) || !(t_end > 0)) throw ConfigError("mesh_h and t_end must be positive");
    if (interface.k < 8) throw ConfigError("interface needs k_gamma >= 8");
    n_steps();
  }
};

struct SweepConfig {
  RunConfig base;
  std::vector<double> dt_list;
  std::vector<int> k_list;
  double h_over_k = 1.0;
  enum class Reference { exact, finest };
  Reference reference = Reference::exact;

  void validate() const {
    if (dt_list.empty() || k_list.empty()) throw ConfigError("sweep lists must be nonempty");
    for (size_t i = 1; i < dt_list.size(); ++i)
      if (!(dt_list[i] < dt_list[i - 1])) throw ConfigError("dt_list must be strictly decreasing");
    for (size_t i = 1; i < k_list.size(); ++i)
      if (!(k_list[i] > k_list[i - 1])) throw ConfigError("k_list must be strictly increasing");
  }
};

// Snap a target mesh size to the admissible grid: h must divide the outer edges within
// 1% and keep the hole corners on grid points.
inline double snap_mesh_size(const DomainSpec& dom, double target) {
  if (dom.hole) {
    const double w = dom.hole->width();
    const int m = std::max(1, static_cast<int>(std::lround(w / target)));
    return w / m;
  }
  const double w = dom.outer.width();
  const int m = std::max(1, static_cast<int>(std::lround(w / target)));
  return w / m;
}

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// configuration text format: nested key-value sections
// ---------------------------------------------------------------------------

class ConfigFile {
public:
  explicit ConfigFile(const std::string& text) {
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError("malformed section header at line " + std::to_string(lineno));
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError("expected key = value at line " + std::to_string(lineno));
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty() || value.empty())
        throw ConfigError("empty key or value at line " + std::to_string(lineno));
      entries_[section.empty() ? key : section + "." + key] = value;
    }
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::string get_string(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("missing config key: " + key);
    used_.insert(key);
    return it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) {
    return has(key) ? get_string(key) : fallback;
  }

  double get_number(const std::string& key) {
    const std::string s = get_string(key);
    try {
      size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("invalid numeric value for key " + key + ": " + s);
    }
  }

  double get_number(const std::string& key, double fallback) {
    return has(key) ? get_number(key) : fallback;
  }

  int get_int(const std::string& key) {
    const double v = get_number(key);
    const int i = static_cast<int>(std::lround(v));
    if (std::abs(v - i) > 1e-12) throw ConfigError("expected an integer for key " + key);
    return i;
  }

  int get_int(const std::string& key, int fallback) { return has(key) ? get_int(key) : fallback; }

  std::vector<double> get_number_list(const std::string& key) {
    std::istringstream in(get_string(key));
    std::vector<double> out;
    double v;
    while (in >> v) out.push_back(v);
    if (out.empty()) throw ConfigError("empty list for key " + key);
    return out;
  }

  void reject_unknown() const {
    for (const auto& [key, value] : entries_)
      if (!used_.count(key)) throw ConfigError("unknown config key: " + key);
  }

private:
  std::map<std::string, std::string> entries_;
  std::set<std::string> used_;
};

inline void apply_preset(RunConfig& cfg, const std::string& name) {
  cfg.experiment = name;
  if (name == "retracting_ellipse") {
    cfg.domain = {Rect{0, 0, 1, 1}, std::nullopt};
    cfg.interface = {InterfaceSpec::Shape::ellipse, Vec2(0.5, 0.5), 0.4, 0.1, 40};
    cfg.scheme.scheme = SchemeKind::euler;
    cfg.scheme.multipliers = MultiplierMode::both;
    cfg.scheme.dt = 0.1 / 128;
    cfg.scheme.phys.mu_minus = cfg.scheme.phys.mu_plus = 2.0;
    cfg.scheme.phys.gamma = 5.0;
    cfg.mesh_h = 1.0 / 32;
    cfg.t_end = 0.1;
  } else if (name == "expanding_bubble") {
    cfg.domain = {Rect{-1, -1, 1, 1}, Rect{-0.2, -0.2, 0.2, 0.2}};
    cfg.interface = {InterfaceSpec::Shape::circle, Vec2(0, 0), 0.5, 0.5, 80};
    cfg.scheme.scheme = SchemeKind::euler;
    cfg.scheme.multipliers = MultiplierMode::volume_only;
    cfg.scheme.dt = 0.1 / 128;
    cfg.scheme.phys.mu_minus = 2.0;
    cfg.scheme.phys.mu_plus = 5.0;
    cfg.scheme.phys.gamma = 0.1;
    cfg.source_alpha = 0.2;
    cfg.mesh_h = 0.05;
    cfg.t_end = 0.1;
    const double alpha = 0.2;
    cfg.scheme.phys.force.kind = ForceSpec::Kind::analytic;
    cfg.scheme.phys.force.g = [alpha](const Vec2& x, double) { return Vec2(alpha * x / x.squaredNorm()); };
    cfg.scheme.phys.boundary.u_d = cfg.scheme.phys.force.g;
    cfg.scheme.phys.boundary.volume_flux = true;
  } else if (name == "rising_bubble") {
    cfg.domain = {Rect{0, 0, 1, 2}, std::nullopt};
    cfg.interface = {InterfaceSpec::Shape::ellipse, Vec2(0.5, 0.5), 0.3, 0.2, 120};
    cfg.scheme.scheme = SchemeKind::euler;
    cfg.scheme.multipliers = MultiplierMode::both;
    cfg.scheme.dt = 4e-3;
    cfg.scheme.phys.mu_minus = cfg.scheme.phys.mu_plus = 2.0;
    cfg.scheme.phys.gamma = 0.1;
    cfg.scheme.phys.rho_minus = 0.1;
    cfg.scheme.phys.rho_plus = 100.0;
    cfg.scheme.phys.force.kind = ForceSpec::Kind::density_gravity;
    cfg.scheme.phys.force.f = Vec2(0, -0.981);
    cfg.mesh_h = 0.04;
    cfg.t_end = 1.0;
  } else {
    throw ConfigError("unknown preset: " + name);
  }
}

struct ParsedConfig {
  RunConfig run;
  std::optional<SweepConfig> sweep;
};

inline ParsedConfig parse_config(const std::string& text) {
  ConfigFile f(text);
  RunConfig cfg;
  if (f.has("preset")) apply_preset(cfg, f.get_string("preset"));

  if (f.has("domain.x0") || cfg.experiment == "custom") {
    cfg.domain.outer = {f.get_number("domain.x0"), f.get_number("domain.y0"), f.get_number("domain.x1"),
                        f.get_number("domain.y1")};
  }
  if (f.has("domain.hole_x0")) {
    cfg.domain.hole = Rect{f.get_number("domain.hole_x0"), f.get_number("domain.hole_y0"),
                           f.get_number("domain.hole_x1"), f.get_number("domain.hole_y1")};
  }

  if (f.has("interface.shape")) {
    const std::string shape = f.get_string("interface.shape");
    if (shape == "circle")
      cfg.interface.shape = InterfaceSpec::Shape::circle;
    else if (shape == "ellipse")
      cfg.interface.shape = InterfaceSpec::Shape::ellipse;
    else
      throw ConfigError("invalid value for key interface.shape: " + shape);
  }
  cfg.interface.center.x() = f.get_number("interface.center_x", cfg.interface.center.x());
  cfg.interface.center.y() = f.get_number("interface.center_y", cfg.interface.center.y());
  if (cfg.interface.shape == InterfaceSpec::Shape::circle) {
    cfg.interface.rx = cfg.interface.ry = f.get_number("interface.radius", cfg.interface.rx);
  } else {
    cfg.interface.rx = f.get_number("interface.semi_axis_x", cfg.interface.rx);
    cfg.interface.ry = f.get_number("interface.semi_axis_y", cfg.interface.ry);
  }
  cfg.interface.k = f.get_int("interface.k_gamma", cfg.interface.k);

  if (f.has("scheme.scheme")) {
    const std::string s = f.get_string("scheme.scheme");
    if (s == "bgn")
      cfg.scheme.scheme = SchemeKind::bgn;
    else if (s == "euler")
      cfg.scheme.scheme = SchemeKind::euler;
    else if (s == "cn")
      cfg.scheme.scheme = SchemeKind::cn;
    else if (s == "bdf2")
      cfg.scheme.scheme = SchemeKind::bdf2;
    else
      throw ConfigError("invalid value for key scheme.scheme: " + s);
  }
  if (cfg.scheme.scheme == SchemeKind::bgn) cfg.scheme.multipliers = MultiplierMode::none;
  if (f.has("scheme.multipliers")) {
    const std::string s = f.get_string("scheme.multipliers");
    if (s == "both")
      cfg.scheme.multipliers = MultiplierMode::both;
    else if (s == "energy_only")
      cfg.scheme.multipliers = MultiplierMode::energy_only;
    else if (s == "volume_only")
      cfg.scheme.multipliers = MultiplierMode::volume_only;
    else if (s == "none")
      cfg.scheme.multipliers = MultiplierMode::none;
    else
      throw ConfigError("invalid value for key scheme.multipliers: " + s);
  }
  if (f.has("scheme.predictor")) {
    const std::string s = f.get_string("scheme.predictor");
    if (s == "bgn")
      cfg.scheme.predictor = PredictorKind::bgn;
    else if (s == "euler")
      cfg.scheme.predictor = PredictorKind::euler;
    else
      throw ConfigError("invalid value for key scheme.predictor: " + s);
  }
  cfg.scheme.dt = f.get_number("scheme.dt", cfg.scheme.dt);
  cfg.scheme.newton_tol = f.get_number("scheme.newton_tol", cfg.scheme.newton_tol);
  cfg.scheme.max_newton_iters = f.get_int("scheme.max_newton_iters", cfg.scheme.max_newton_iters);
  if (f.has("scheme.singular_fallback")) {
    const std::string s = f.get_string("scheme.singular_fallback");
    if (s == "volume_only")
      cfg.scheme.fallback = SingularFallback::volume_only;
    else if (s == "error")
      cfg.scheme.fallback = SingularFallback::error;
    else
      throw ConfigError("invalid value for key scheme.singular_fallback: " + s);
  }
  if (f.has("scheme.bdf2_startup")) {
    const std::string s = f.get_string("scheme.bdf2_startup");
    if (s == "euler")
      cfg.scheme.bdf2_euler_startup = true;
    else if (s == "cn")
      cfg.scheme.bdf2_euler_startup = false;
    else
      throw ConfigError("invalid value for key scheme.bdf2_startup: " + s);
  }

  cfg.scheme.phys.mu_minus = f.get_number("physics.mu_minus", cfg.scheme.phys.mu_minus);
  cfg.scheme.phys.mu_plus = f.get_number("physics.mu_plus", cfg.scheme.phys.mu_plus);
  cfg.scheme.phys.gamma = f.get_number("physics.gamma", cfg.scheme.phys.gamma);
  cfg.scheme.phys.rho_minus = f.get_number("physics.rho_minus", cfg.scheme.phys.rho_minus);
  cfg.scheme.phys.rho_plus = f.get_number("physics.rho_plus", cfg.scheme.phys.rho_plus);
  cfg.source_alpha = f.get_number("physics.alpha", cfg.source_alpha);
  if (f.has("physics.force")) {
    const std::string s = f.get_string("physics.force");
    if (s == "none") {
      cfg.scheme.phys.force = ForceSpec{};
    } else if (s == "gravity") {
      cfg.scheme.phys.force.kind = ForceSpec::Kind::density_gravity;
      cfg.scheme.phys.force.f =
          Vec2(f.get_number("physics.gravity_x", 0.0), f.get_number("physics.gravity_y", -0.981));
    } else if (s == "radial_source") {
      const double alpha = cfg.source_alpha;
      cfg.scheme.phys.force.kind = ForceSpec::Kind::analytic;
      cfg.scheme.phys.force.g = [alpha](const Vec2& x, double) { return Vec2(alpha * x / x.squaredNorm()); };
    } else {
      throw ConfigError("invalid value for key physics.force: " + s);
    }
  }
  if (f.has("physics.boundary")) {
    const std::string s = f.get_string("physics.boundary");
    if (s == "homogeneous") {
      cfg.scheme.phys.boundary = BoundarySpec{};
    } else if (s == "radial_source") {
      const double alpha = cfg.source_alpha;
      cfg.scheme.phys.boundary.u_d = [alpha](const Vec2& x, double) {
        return Vec2(alpha * x / x.squaredNorm());
      };
      cfg.scheme.phys.boundary.volume_flux = true;
    } else {
      throw ConfigError("invalid value for key physics.boundary: " + s);
    }
  }

  cfg.mesh_h = f.get_number("run.mesh_h", cfg.mesh_h);
  cfg.t_end = f.get_number("run.t_end", cfg.t_end);
  cfg.snapshot_every = f.get_int("run.snapshot_every", cfg.snapshot_every);
  cfg.outdir = f.get_string("run.outdir", cfg.outdir);

  ParsedConfig out{cfg, std::nullopt};
  if (f.has("sweep.dt_list") || f.has("sweep.k_list")) {
    SweepConfig sw;
    sw.base = cfg;
    sw.dt_list = f.get_number_list("sweep.dt_list");
    const auto ks = f.get_number_list("sweep.k_list");
    for (double k : ks) sw.k_list.push_back(static_cast<int>(std::lround(k)));
    sw.h_over_k = f.get_number("sweep.h_over_k", 1.0);
    const std::string ref = f.get_string("sweep.reference", "exact");
    if (ref == "exact")
      sw.reference = SweepConfig::Reference::exact;
    else if (ref == "finest")
      sw.reference = SweepConfig::Reference::finest;
    else
      throw ConfigError("invalid value for key sweep.reference: " + ref);
    sw.validate();
    out.sweep = sw;
  }
  f.reject_unknown();
  cfg.validate();
  out.run = cfg;
  return out;
}

// ---------------------------------------------------------------------------
// run orchestration
// ---------------------------------------------------------------------------

struct StepRecord {
  double t = 0, energy = 0, volume = 0;
  double lambda_e = 0, lambda_v = 0;
  double residual_e = 0, residual_v = 0;
  int newton_iters = 0, predictor_iters = 0;
  bool fallback_used = false;
  double equidistribution = 1.0;
  double com_y = 0;
};

struct RunResult {
  std::vector<StepRecord> records;  // records[0] is the initial level
  DiscreteState final_state{0.0, InterfacePolygon({Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)})};
  double v0 = 0, e0 = 0;
  int total_newton_iters = 0;
  int fallback_count = 0;
};

using StepObserver = std::function<void(const DiscreteState&, const StepReport&)>;

struct RunOptions {
  bool write_files = true;
  bool debug_newton = false;
  bool dump_matrices = false;
  StepObserver observer;
};

inline RunResult run_simulation(const RunConfig& cfg_in, const RunOptions& opts = {}) {
  RunConfig cfg = cfg_in;
  cfg.validate();
  cfg.scheme.debug_newton = cfg.scheme.debug_newton || opts.debug_newton;
  const BulkMesh mesh = BulkMesh::build_structured(cfg.domain, cfg.mesh_h);
  const Simulation sim(mesh, cfg.scheme);
  const InterfacePolygon gamma0 = cfg.interface.build();

  namespace fs = std::filesystem;
  if (opts.write_files) fs::create_directories(cfg.outdir);

  RunResult result;
  DiscreteState state = sim.initialize(gamma0);
  result.v0 = state.volume;
  result.e0 = state.energy;

  auto record_of = [&](const DiscreteState& s, const StepReport* rep) {
    StepRecord r;
    r.t = s.t;
    r.energy = s.energy;
    r.volume = s.volume;
    r.lambda_e = s.lambda_e;
    r.lambda_v = s.lambda_v;
    if (rep) {
      r.residual_e = rep->residual_e;
      r.residual_v = rep->residual_v;
      r.newton_iters = rep->newton_iters;
      r.predictor_iters = rep->predictor_iters;
      r.fallback_used = rep->fallback_used;
    }
    r.equidistribution = equidistribution_ratio(s.gamma);
    r.com_y = region_centroid(s.gamma, cfg.domain.hole).y();
    return r;
  };
  result.records.push_back(record_of(state, nullptr));

  std::ofstream timeseries;
  if (opts.write_files) {
    timeseries.open(cfg.outdir + "/timeseries.csv");
    timeseries << "t,E,V,lambda_E,lambda_V,residual_E,residual_V,newton_iters,"
                  "equidistribution_ratio,com_y\n";
    const auto& r = result.records.back();
    timeseries << detail::fmt17(r.t) << "," << detail::fmt17(r.energy) << "," << detail::fmt17(r.volume)
               << ",0,0,0,0,0," << detail::fmt17(r.equidistribution) << "," << detail::fmt17(r.com_y)
               << "\n";

    const ElementClassification cls = classify_elements(mesh, gamma0);
    const std::vector<double> mu =
        coefficient_field(cls, cfg.scheme.phys.mu_minus, cfg.scheme.phys.mu_plus);
    write_vtk(cfg.outdir + "/mesh.vtk", mesh, &cls, &mu, "viscosity");
    write_polygon(cfg.outdir + "/polygon_000000.txt", gamma0);
    if (opts.dump_matrices) {
      const Simulation::Assembled ctx = sim.assemble_on(gamma0, 0.0);
      write_matrix_market(cfg.outdir + "/matrix_A.mtx", ctx.blocks.A);
      write_matrix_market(cfg.outdir + "/matrix_B.mtx", ctx.blocks.B);
      write_matrix_market(cfg.outdir + "/matrix_C.mtx", ctx.blocks.C);
    }
  }

  const int n_steps = cfg.n_steps();
  std::optional<DiscreteState> prev;  // the m-1 level for BDF2

  // BDF2 startup: the second level comes from one Crank-Nicolson step by default
  // (or one Euler step when configured)
  std::unique_ptr<Simulation> startup;
  if (cfg.scheme.scheme == SchemeKind::bdf2) {
    SchemeConfig sc = cfg.scheme;
    sc.scheme = cfg.scheme.bdf2_euler_startup ? SchemeKind::euler : SchemeKind::cn;
    startup = std::make_unique<Simulation>(mesh, sc);
  }

  double max_res_e = 0, max_res_v = 0;
  for (int m = 0; m < n_steps; ++m) {
    const bool is_startup = (cfg.scheme.scheme == SchemeKind::bdf2 && m == 0);
    const Simulation& stepper = is_startup ? *startup : sim;
    auto [next, rep] = stepper.step(state, prev ? &*prev : nullptr);
    result.total_newton_iters += rep.newton_iters + rep.predictor_iters;
    result.fallback_count += rep.fallback_used ? 1 : 0;
    max_res_e = std::max(max_res_e, std::abs(rep.residual_e));
    max_res_v = std::max(max_res_v, std::abs(rep.residual_v));
    if (opts.observer) opts.observer(next, rep);
    result.records.push_back(record_of(next, &rep));
    if (opts.write_files) {
      const auto& r = result.records.back();
      timeseries << detail::fmt17(r.t) << "," << detail::fmt17(r.energy) << ","
                 << detail::fmt17(r.volume) << "," << detail::fmt17(r.lambda_e) << ","
                 << detail::fmt17(r.lambda_v) << "," << detail::fmt17(r.residual_e) << ","
                 << detail::fmt17(r.residual_v) << "," << r.newton_iters << ","
                 << detail::fmt17(r.equidistribution) << "," << detail::fmt17(r.com_y) << "\n";
      if (cfg.snapshot_every > 0 && (m + 1) % cfg.snapshot_every == 0) {
        char name[64];
        std::snprintf(name, sizeof name, "/polygon_%06d.txt", m + 1);
        write_polygon(cfg.outdir + name, next.gamma);
      }
    }
    prev = std::move(state);
    state = std::move(next);
  }

  if (opts.write_files) {
    write_polygon(cfg.outdir + "/polygon_final.txt", state.gamma);
    std::ofstream summary(cfg.outdir + "/summary.txt");
    summary << "experiment = " << cfg.experiment << "\n";
    summary << "steps = " << n_steps << "\n";
    summary << "E_final = " << detail::fmt17(state.energy) << "\n";
    summary << "V_final = " << detail::fmt17(state.volume) << "\n";
    summary << "volume_drift = " << detail::fmt17(std::abs(state.volume - result.v0)) << "\n";
    summary << "max_residual_E = " << detail::fmt17(max_res_e) << "\n";
    summary << "max_residual_V = " << detail::fmt17(max_res_v) << "\n";
    summary << "total_newton_iters = " << result.total_newton_iters << "\n";
    summary << "fallback_count = " << result.fallback_count << "\n";
  }

  result.final_state = std::move(state);
  return result;
}

// ---------------------------------------------------------------------------
// sweeps
// ---------------------------------------------------------------------------

struct SweepCell {
  int k = 0;
  double h = 0, dt = 0;
  ErrorReport errors;
  bool ok = false;
  std::string status = "ok";
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::string errors_csv, eoc_csv;
};

namespace detail {

inline RunConfig cell_config(const SweepConfig& sw, int k, double dt) {
  RunConfig cfg = sw.base;
  cfg.interface.k = k;
  cfg.mesh_h = snap_mesh_size(cfg.domain, sw.h_over_k / k);
  cfg.scheme.dt = dt;
  return cfg;
}

inline SweepCell run_exact_cell(const SweepConfig& sw, int k, double dt) {
  SweepCell cell;
  cell.k = k;
  cell.dt = dt;
  const RunConfig cfg = cell_config(sw, k, dt);
  cell.h = cfg.mesh_h;
  try {
    ExpandingBubbleExact exact;
    exact.r0 = cfg.interface.rx;
    exact.alpha = cfg.source_alpha;
    exact.gamma = cfg.scheme.phys.gamma;
    exact.mu_plus = cfg.scheme.phys.mu_plus;
    exact.mu_minus = cfg.scheme.phys.mu_minus;
    exact.outer = cfg.domain.outer;
    if (cfg.domain.hole) exact.hole = *cfg.domain.hole;

    const BulkMesh mesh = BulkMesh::build_structured(cfg.domain, cfg.mesh_h);
    const Simulation sim(mesh, cfg.scheme);
    ExactErrorAccumulator acc(exact, sim);
    RunOptions opts;
    opts.write_files = false;
    opts.observer = [&](const DiscreteState& s, const StepReport&) { acc.add_step(s, dt); };
    RunConfig c2 = cfg;
    run_simulation(c2, opts);
    cell.errors = acc.report();
    cell.ok = true;
  } catch (const std::exception& e) {
    cell.status = e.what();
  }
  return cell;
}

inline SweepCell run_reference_cell(const SweepConfig& sw, int k, double dt,
                                    const std::vector<InterfacePolygon>& ref_polys, double ref_dt) {
  SweepCell cell;
  cell.k = k;
  cell.dt = dt;
  const RunConfig cfg = cell_config(sw, k, dt);
  cell.h = cfg.mesh_h;
  try {
    const double ratio = dt / ref_dt;
    const long stride = std::lround(ratio);
    if (std::abs(ratio - stride) > 1e-9) throw ConfigError("sweep time grids do not nest");
    ReferenceErrorAccumulator acc;
    RunOptions opts;
    opts.write_files = false;
    int m = 0;
    opts.observer = [&](const DiscreteState& s, const StepReport&) {
      ++m;
      const size_t ref_index = static_cast<size_t>(m * stride);
      if (ref_index >= ref_polys.size()) throw ConfigError("sweep time grids do not match");
      acc.add_step(s, ref_polys[ref_index], dt);
    };
    RunConfig c2 = cfg;
    run_simulation(c2, opts);
    cell.errors = acc.report();
    cell.ok = true;
  } catch (const std::exception& e) {
    cell.status = e.what();
  }
  return cell;
}

}  // namespace detail

// Runs the (dt, K) matrix, computes errors against the exact solution or the finest
// run, and emits the error and EOC tables. Cells are independent and run on a small
// thread pool; results are gathered in deterministic order.
inline SweepResult sweep(const SweepConfig& sw, int n_threads = 2) {
  sw.validate();
  SweepResult result;

  std::vector<InterfacePolygon> ref_polys;
  double ref_dt = 0;
  if (sw.reference == SweepConfig::Reference::finest) {
    const int k_ref = sw.k_list.back();
    ref_dt = sw.dt_list.back();
    const RunConfig cfg = detail::cell_config(sw, k_ref, ref_dt);
    RunOptions opts;
    opts.write_files = false;
    ref_polys.push_back(cfg.interface.build());
    opts.observer = [&](const DiscreteState& s, const StepReport&) { ref_polys.push_back(s.gamma); };
    RunConfig c2 = cfg;
    run_simulation(c2, opts);
  }

  struct Task {
    int k;
    double dt;
  };
  std::vector<Task> tasks;
  for (int k : sw.k_list)
    for (double dt : sw.dt_list) tasks.push_back({k, dt});
  result.cells.resize(tasks.size());

  std::mutex next_mutex;
  size_t next = 0;
  auto worker = [&] {
    for (;;) {
      size_t mine;
      {
        std::lock_guard<std::mutex> lock(next_mutex);
        if (next >= tasks.size()) return;
        mine = next++;
      }
      const Task& t = tasks[mine];
      result.cells[mine] = (sw.reference == SweepConfig::Reference::exact)
                               ? detail::run_exact_cell(sw, t.k, t.dt)
                               : detail::run_reference_cell(sw, t.k, t.dt, ref_polys, ref_dt);
    }
  };
  std::vector<std::thread> pool;
  const int nt = std::max(1, std::min<int>(n_threads, static_cast<int>(tasks.size())));
  for (int i = 0; i < nt; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  std::ostringstream errors_csv;
  errors_csv << "h,K_gamma,dt,e_X,e_u,e_p,e_lambda_V,e_lambda_E,status\n";
  for (const SweepCell& c : result.cells) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const ErrorReport e = c.ok ? c.errors : ErrorReport{nan, nan, nan, nan, nan};
    errors_csv << detail::fmt17(c.h) << "," << c.k << "," << detail::fmt17(c.dt) << ","
               << detail::fmt17(e.e_x) << "," << detail::fmt17(e.e_u) << "," << detail::fmt17(e.e_p)
               << "," << detail::fmt17(e.e_lambda_v) << "," << detail::fmt17(e.e_lambda_e) << ","
               << (c.ok ? "ok" : c.status) << "\n";
  }
  result.errors_csv = errors_csv.str();

  auto cell_at = [&](int k, double dt) -> const SweepCell& {
    for (const SweepCell& c : result.cells)
      if (c.k == k && c.dt == dt) return c;
    throw ConfigError("sweep cell lookup failed");
  };
  std::ostringstream eoc_csv;
  eoc_csv << "kind,fixed,quantity,step_coarse,step_fine,slope\n";
  auto emit = [&](const char* kind, double fixed, const char* quantity, double s0, double s1,
                  double e0, double e1) {
    double slope = std::numeric_limits<double>::quiet_NaN();
    if (e0 > 0 && e1 > 0) slope = std::log(e0 / e1) / std::log(s0 / s1);
    eoc_csv << kind << "," << detail::fmt17(fixed) << "," << quantity << "," << detail::fmt17(s0)
            << "," << detail::fmt17(s1) << "," << detail::fmt17(slope) << "\n";
  };
  if (sw.dt_list.size() >= 2)
    for (int k : sw.k_list)
      for (size_t i = 0; i + 1 < sw.dt_list.size(); ++i) {
        const SweepCell &a = cell_at(k, sw.dt_list[i]), &b = cell_at(k, sw.dt_list[i + 1]);
        if (!a.ok || !b.ok) continue;
        emit("temporal", k, "e_X", a.dt, b.dt, a.errors.e_x, b.errors.e_x);
        emit("temporal", k, "e_u", a.dt, b.dt, a.errors.e_u, b.errors.e_u);
        emit("temporal", k, "e_p", a.dt, b.dt, a.errors.e_p, b.errors.e_p);
        emit("temporal", k, "e_lambda_V", a.dt, b.dt, a.errors.e_lambda_v, b.errors.e_lambda_v);
      }
  if (sw.k_list.size() >= 2)
    for (double dt : sw.dt_list)
      for (size_t i = 0; i + 1 < sw.k_list.size(); ++i) {
        const SweepCell &a = cell_at(sw.k_list[i], dt), &b = cell_at(sw.k_list[i + 1], dt);
        if (!a.ok || !b.ok) continue;
        emit("spatial", dt, "e_X", a.h, b.h, a.errors.e_x, b.errors.e_x);
        emit("spatial", dt, "e_u", a.h, b.h, a.errors.e_u, b.errors.e_u);
        emit("spatial", dt, "e_p", a.h, b.h, a.errors.e_p, b.errors.e_p);
        emit("spatial", dt, "e_lambda_V", a.h, b.h, a.errors.e_lambda_v, b.errors.e_lambda_v);
      }
  result.eoc_csv = eoc_csv.str();
  return result;
}

inline void write_sweep_files(const SweepResult& result, const std::string& outdir) {
  std::filesystem::create_directories(outdir);
  std::ofstream(outdir + "/errors.csv") << result.errors_csv;
  std::ofstream(outdir + "/eoc.csv") << result.eoc_csv;
}

}  // namespace stokeslm

#endif
