// hydrocal: steady-state simulation and roughness calibration of pipe networks.
//
// Exit codes: 0 ok, 1 domain violation, 2 usage or parse error, 3 solver
// failure, 4 infeasible calibration.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hydrocal/hydrocal.hpp"

namespace {

using namespace hydrocal;

enum Exit : int { kOk = 0, kDomain = 1, kUsage = 2, kSolver = 3, kInfeasible = 4 };

/// HYDROCAL_LOG: "quiet" (errors only), "info" (default) or "debug".
enum class LogLevel { quiet, info, debug };

LogLevel log_level() {
  const char* env = std::getenv("HYDROCAL_LOG");
  if (!env) return LogLevel::info;
  const std::string v = env;
  if (v == "quiet" || v == "0" || v == "error") return LogLevel::quiet;
  if (v == "debug" || v == "2") return LogLevel::debug;
  return LogLevel::info;
}

struct Log {
  LogLevel level = log_level();
  void info(const std::string& s) const {
    if (level != LogLevel::quiet) std::cerr << s << '\n';
  }
  void debug(const std::string& s) const {
    if (level == LogLevel::debug) std::cerr << s << '\n';
  }
  void warn(const std::string& s) const {
    if (level != LogLevel::quiet) std::cerr << "warning: " << s << '\n';
  }
  static void error(const std::string& s) { std::cerr << "error: " << s << '\n'; }
};

/// Error raised by the CLI itself, carrying its exit code.
struct Failure {
  int code;
  std::string message;
};

io::NetworkFile load_network(const std::string& path) {
  try {
    return io::read_network(path);
  } catch (const NetworkError& e) {
    throw Failure{kDomain, path + ": " + e.what()};
  }
}

void require_valid_network(const Network& net) {
  const auto violations = validate_network(net);
  if (violations.empty()) return;
  std::string msg = "network is not admissible:";
  for (const Violation& v : violations) msg += "\n  [" + v.code + "] " + v.message;
  throw Failure{kDomain, msg};
}

SensorConfig make_sensors(const Network& net, const std::vector<std::string>& ids) {
  try {
    return SensorConfig(net, ids);
  } catch (const NetworkError& e) {
    throw Failure{kUsage, std::string("sensor configuration: ") + e.what()};
  }
}

NormKind parse_norm(const std::string& s) {
  if (s == "l1" || s == "L1") return NormKind::l1;
  if (s == "l2" || s == "L2") return NormKind::l2;
  if (s == "linf" || s == "Linf" || s == "LINF") return NormKind::linf;
  throw Failure{kUsage, "unknown norm '" + s + "' (expected l1, l2 or linf)"};
}

/// Calibration problem from a network file and a measurement file.
struct LoadedProblem {
  io::NetworkFile netfile;
  io::MeasurementFile meas;
  std::optional<CalibrationProblem> problem;
};

LoadedProblem load_problem(const std::string& net_path, const std::string& meas_path, bool piezometric) {
  LoadedProblem lp;
  lp.netfile = load_network(net_path);
  require_valid_network(lp.netfile.network);
  lp.meas = io::read_measurements(meas_path, lp.netfile.network, lp.netfile.sensors);
  if (piezometric) lp.meas.convention = io::HeadConvention::piezometric;
  SensorConfig sensors = make_sensors(lp.netfile.network, lp.meas.sensors);
  lp.problem.emplace(lp.netfile.network, std::move(sensors), io::pressure_sets(lp.meas, lp.netfile.network));
  return lp;
}

// ---------------------------------------------------------------- validate

int cmd_validate(const std::string& net_path, const Log& log) {
  const io::NetworkFile nf = load_network(net_path);
  bool ok = true;
  for (const Violation& v : validate_network(nf.network)) {
    std::cerr << net_path << ": [" << v.code << "] " << v.message << '\n';
    ok = false;
  }
  if (!nf.sensors.empty()) {
    try {
      const SensorConfig sc(nf.network, nf.sensors);
      log.info("sensors: " + std::to_string(sc.n_measured()) + " of " + std::to_string(nf.network.n_inner()) +
               " inner nodes; at least " +
               std::to_string(min_measurement_sets(nf.network.n_pipes(), sc.n_measured())) +
               " measurement sets are needed for calibration");
    } catch (const NetworkError& e) {
      std::cerr << net_path << ": [sensors] " << e.what() << '\n';
      ok = false;
    }
  }
  if (ok)
    log.info(net_path + ": ok (" + std::to_string(nf.network.n_inner()) + " inner nodes, " +
             std::to_string(nf.network.n_sources()) + " sources, " + std::to_string(nf.network.n_pipes()) +
             " pipes)");
  return ok ? kOk : kDomain;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const std::string& net_path, const std::string& loads_path, const std::string& out_path,
                 double sigma, std::uint64_t seed, const Log& log) {
  const io::NetworkFile nf = load_network(net_path);
  require_valid_network(nf.network);
  if (!nf.network.all_roughness_set()) throw Failure{kUsage, "simulation needs a roughness on every pipe"};
  if (nf.sensors.empty()) throw Failure{kUsage, net_path + ": no 'sensors' list to record"};
  if (!(sigma >= 0.0)) throw Failure{kDomain, "--noise must be non-negative"};
  const SensorConfig sensors = make_sensors(nf.network, nf.sensors);
  const auto loads = io::read_loads(loads_path, nf.network);

  GeneratedMeasurements gen;
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < loads.size(); ++i) {
    // One set at a time so a failure can name the offending load.
    try {
      GeneratedMeasurements one =
          generate_measurement_sets(nf.network, {loads[i]}, sensors, NoiseOptions{sigma, rng.next()});
      for (const RegimeFlag& f : check_turbulence(one.solutions.front(), nf.network))
        gen.warnings.push_back("load " + std::to_string(i + 1) + ": pipe " + f.pipe_id +
                               " is not turbulent (Re = " + io::fixed(f.reynolds, 0) + ")");
      gen.sets.push_back(std::move(one.sets.front()));
      gen.solutions.push_back(std::move(one.solutions.front()));
    } catch (const NumericError& e) {
      throw Failure{kSolver, "load set " + std::to_string(i + 1) + ": " + e.what()};
    }
  }

  io::MeasurementFile mf;
  mf.convention = io::HeadConvention::pressure;
  mf.sensors = nf.sensors;
  mf.sets = gen.sets;
  io::write_text(out_path, io::dump(io::measurements_to_json(mf, nf.network)));

  for (std::size_t i = 0; i < gen.solutions.size(); ++i) {
    const Vector& re = gen.solutions[i].reynolds;
    Eigen::Index lo = 0;
    re.cwiseAbs().minCoeff(&lo);
    std::cout << "set " << (i + 1) << ": min Re " << io::fixed(std::abs(re(lo)), 0) << " (pipe "
              << nf.network.pipe(static_cast<std::size_t>(lo)).id << "), max Re "
              << io::fixed(re.cwiseAbs().maxCoeff(), 0) << ", " << gen.solutions[i].iterations
              << " Newton iterations\n";
    log.debug("  pressure heads: " + [&] {
      std::string s;
      for (Eigen::Index k = 0; k < gen.solutions[i].pressure_heads.size(); ++k)
        s += nf.network.inner_node(static_cast<std::size_t>(k)).id + "=" +
             io::fixed(gen.solutions[i].pressure_heads(k), 4) + " ";
      return s;
    }());
  }
  for (const std::string& w : gen.warnings) log.warn(w);
  log.info("wrote " + std::to_string(gen.sets.size()) + " measurement sets to " + out_path);
  return kOk;
}

// ---------------------------------------------------------------- calibrate

struct CalibrateArgs {
  std::string net, meas, out, trace;
  std::uint64_t seed = 1;
  int max_outer = 7;
  std::string norm = "l1";
  bool piezometric = false;
  std::optional<double> eps_f, eps_x;
  std::optional<int> max_iter;
};

int cmd_calibrate(const CalibrateArgs& a, const Log& log) {
  LoadedProblem lp = load_problem(a.net, a.meas, a.piezometric);
  const CalibrationProblem& pb = *lp.problem;

  const std::size_t needed = min_measurement_sets(pb.layout().n_pipes, pb.sensors().n_measured());
  if (pb.layout().n_sets < needed)
    throw Failure{kDomain, "calibration needs at least " + std::to_string(needed) + " measurement sets (" +
                               std::to_string(pb.layout().n_pipes) + " pipes / " +
                               std::to_string(pb.sensors().n_measured()) + " sensors, rounded up); got " +
                               std::to_string(pb.layout().n_sets)};
  if (a.max_outer < 1) throw Failure{kUsage, "--max-outer must be at least 1"};

  CalibrationOptions opts;
  opts.seed = a.seed;
  opts.max_outer = a.max_outer;
  opts.newton.norm = parse_norm(a.norm);
  if (a.eps_f) opts.newton.eps_f = *a.eps_f;
  if (a.eps_x) opts.newton.eps_x = *a.eps_x;
  if (a.max_iter) opts.newton.max_iterations = *a.max_iter;

  CalibrationResult res;
  try {
    res = multistart_calibrate(pb, opts);
  } catch (const NumericError& e) {
    throw Failure{kSolver, e.what()};
  }

  for (const OuterRecord& r : res.trace) {
    std::string line = "launch " + std::to_string(r.outer_iteration) + ": ";
    if (!r.failure.empty())
      line += "failed (" + r.failure + ")";
    else
      line += "v = " + io::full(r.merit) + " after " + std::to_string(r.newton_iterations) + " iterations" +
              (r.within_bounds ? "" : ", heads out of range") + (r.buffered ? ", buffered" : "");
    log.debug(line);
  }
  for (const std::string& w : res.warnings) log.warn(w);
  for (const RegimeFlag& f : res.non_turbulent)
    log.warn("pipe " + f.pipe_id + " is not turbulent at the result (Re = " + io::fixed(f.reynolds, 0) + ")");

  io::write_text(a.out, io::dump(io::result_to_json(pb, res)));
  std::string trace_path = a.trace;
  if (trace_path.empty()) {
    std::filesystem::path p(a.out);
    p.replace_extension(".trace.csv");
    trace_path = p.string();
  }
  io::write_text(trace_path, io::trace_csv(pb, res));

  std::cout << "roughness [mm]:";
  for (std::size_t p = 0; p < pb.layout().n_pipes; ++p)
    std::cout << ' ' << pb.network().pipe(p).id << '=' << io::fixed(res.x(static_cast<Eigen::Index>(p)) * 1e3, 4);
  std::cout << "\nmerit (" << to_string(res.norm) << "): " << io::full(res.merit) << " m^3/s"
            << (res.converged ? ", converged" : "") << '\n';

  if (res.trace.size() > 0 &&
      std::all_of(res.trace.begin(), res.trace.end(), [](const OuterRecord& r) { return !r.failure.empty(); })) {
    Log::error("every Newton launch failed; see " + a.out);
    return kSolver;
  }
  if (!res.feasible) {
    Log::error("no candidate with unmeasured heads inside the physical range; best candidate written to " + a.out);
    return kInfeasible;
  }
  return kOk;
}

// ---------------------------------------------------------------- scan

/// NAME=lo:hi:n, NAME being a coordinate label such as eps:P7 or h:5:3.
ScanAxis parse_axis(const CalibrationProblem& pb, const std::string& text) {
  const auto eq = text.rfind('=');
  if (eq == std::string::npos) throw Failure{kUsage, "axis '" + text + "': expected NAME=lo:hi:n"};
  const std::string name = text.substr(0, eq);
  const std::string range = text.substr(eq + 1);
  ScanAxis ax;
  try {
    ax.coordinate = pb.coordinate(name);
  } catch (const DimensionError&) {
    std::string known;
    for (const auto& l : pb.labels()) known += " " + l;
    throw Failure{kUsage, "unknown axis '" + name + "'; known coordinates:" + known};
  }
  const auto c1 = range.find(':');
  const auto c2 = c1 == std::string::npos ? c1 : range.find(':', c1 + 1);
  if (c2 == std::string::npos) throw Failure{kUsage, "axis '" + text + "': expected NAME=lo:hi:n"};
  try {
    std::size_t used = 0;
    ax.lo = std::stod(range.substr(0, c1), &used);
    ax.hi = std::stod(range.substr(c1 + 1, c2 - c1 - 1));
    const long n = std::stol(range.substr(c2 + 1));
    if (n < 1) throw std::invalid_argument("n");
    ax.steps = static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw Failure{kUsage, "axis '" + text + "': bad range, expected lo:hi:n with n >= 1"};
  }
  return ax;
}

int cmd_scan(const std::string& net_path, const std::string& meas_path, const std::string& axis_a,
             const std::string& axis_b, const std::string& base_path, const std::string& out_path,
             bool piezometric, const Log& log) {
  LoadedProblem lp = load_problem(net_path, meas_path, piezometric);
  const CalibrationProblem& pb = *lp.problem;
  const ScanAxis a = parse_axis(pb, axis_a);
  std::optional<ScanAxis> b;
  if (!axis_b.empty()) b = parse_axis(pb, axis_b);

  Vector base;
  if (!base_path.empty()) {
    base = io::decision_from_json(pb, io::parse_json(io::read_text(base_path), base_path));
  } else if (lp.netfile.network.all_roughness_set()) {
    Vector eps(static_cast<Eigen::Index>(pb.layout().n_pipes));
    for (std::size_t p = 0; p < pb.layout().n_pipes; ++p)
      eps(static_cast<Eigen::Index>(p)) = *lp.netfile.network.pipe(p).roughness;
    try {
      base = fit_unmeasured_heads(pb, eps);
    } catch (const NumericError& e) {
      throw Failure{kSolver, std::string("fitting unmeasured heads for the scan base: ") + e.what()};
    }
  } else {
    base = initial_guess(pb).x;
  }

  ScanResult s;
  try {
    s = scan_merit(pb, base, a, b);
  } catch (const DimensionError& e) {
    throw Failure{kUsage, e.what()};
  }
  for (const std::string& w : s.warnings) log.warn(w);
  io::write_text(out_path, io::scan_csv(s));
  log.info("wrote " + std::to_string(s.points.size()) + " grid points to " + out_path);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hydrocal: pipe-network steady state and roughness calibration"};
  app.require_subcommand(1);
  const Log log;

  std::string net, loads, meas, out;
  auto* validate = app.add_subcommand("validate", "check a network file");
  validate->add_option("network", net, "network JSON")->required();

  double sigma = 0.0;
  std::uint64_t sim_seed = 0;
  auto* simulate = app.add_subcommand("simulate", "solve loading conditions and record sensor readings");
  simulate->add_option("network", net, "network JSON with roughness and sensors")->required();
  simulate->add_option("loads", loads, "loads JSON")->required();
  simulate->add_option("-o,--output", out, "measurement JSON to write")->required();
  simulate->add_option("--noise", sigma, "standard deviation of Gaussian sensor noise [m]");
  simulate->add_option("--seed", sim_seed, "noise seed");

  CalibrateArgs ca;
  double eps_f = 0.0, eps_x = 0.0;
  int max_iter = 0;
  auto* calibrate = app.add_subcommand("calibrate", "estimate pipe roughness from measurement sets");
  calibrate->add_option("network", ca.net, "network JSON")->required();
  calibrate->add_option("measurements", ca.meas, "measurement JSON")->required();
  calibrate->add_option("-o,--output", ca.out, "result JSON to write")->required();
  calibrate->add_option("--trace", ca.trace, "trace CSV (default: <output>.trace.csv)");
  calibrate->add_option("--seed", ca.seed, "random seed for restarts");
  calibrate->add_option("--max-outer", ca.max_outer, "Newton launches");
  calibrate->add_option("--norm", ca.norm, "merit norm: l1, l2 or linf");
  calibrate->add_flag("--piezometric", ca.piezometric, "sensed heads in the file include elevation");
  auto* o_eps_f = calibrate->add_option("--eps-f", eps_f, "Newton merit-change tolerance");
  auto* o_eps_x = calibrate->add_option("--eps-x", eps_x, "Newton step-length tolerance");
  auto* o_max_iter = calibrate->add_option("--max-iter", max_iter, "Newton iteration cap");

  std::string axis_a, axis_b, base;
  bool scan_piezo = false;
  auto* scan = app.add_subcommand("scan", "merit values over a one- or two-dimensional grid");
  scan->add_option("network", net, "network JSON")->required();
  scan->add_option("measurements", meas, "measurement JSON")->required();
  scan->add_option("--axis-a", axis_a, "NAME=lo:hi:n, NAME like eps:P7 or h:5:3")->required();
  scan->add_option("--axis-b", axis_b, "second axis, same format");
  scan->add_option("--base", base, "result JSON giving the fixed coordinates");
  scan->add_option("-o,--output", out, "CSV to write")->required();
  scan->add_flag("--piezometric", scan_piezo, "sensed heads in the file include elevation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*validate) return cmd_validate(net, log);
    if (*simulate) return cmd_simulate(net, loads, out, sigma, sim_seed, log);
    if (*calibrate) {
      if (*o_eps_f) ca.eps_f = eps_f;
      if (*o_eps_x) ca.eps_x = eps_x;
      if (*o_max_iter) ca.max_iter = max_iter;
      return cmd_calibrate(ca, log);
    }
    if (*scan) return cmd_scan(net, meas, axis_a, axis_b, base, out, scan_piezo, log);
  } catch (const Failure& f) {
    Log::error(f.message);
    return f.code;
  } catch (const ParseError& e) {
    Log::error(e.what());
    return kUsage;
  } catch (const DimensionError& e) {
    Log::error(e.what());
    return kUsage;
  } catch (const NetworkError& e) {
    Log::error(e.what());
    return kDomain;
  } catch (const DomainError& e) {
    Log::error(e.what());
    return kDomain;
  } catch (const NumericError& e) {
    Log::error(e.what());
    return kSolver;
  } catch (const Error& e) {
    Log::error(e.what());
    return kSolver;
  }
  return kUsage;
}
