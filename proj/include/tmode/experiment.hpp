// Config-driven pipelines behind the tmode CLI: decompose, iterate, measure, all.

#pragma once

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "tmode/amplifier.hpp"
#include "tmode/error.hpp"
#include "tmode/io.hpp"
#include "tmode/iteration.hpp"
#include "tmode/jsf.hpp"
#include "tmode/quantum.hpp"
#include "tmode/schmidt.hpp"

#ifndef TMODE_DEFAULT_PRESET_DIR
#define TMODE_DEFAULT_PRESET_DIR "presets"
#endif

namespace tmode {

inline constexpr const char* kConfigSchema = "tmode-config/1";
inline constexpr const char* kVersion = "0.1.0";

struct GridConfig {
  double omega_min = -8.0;
  double omega_max = 8.0;
  std::size_t n_points = 256;
  FrequencyGrid grid() const { return {omega_min, omega_max, n_points}; }
};

struct KernelConfig {
  std::string model = "gaussian";  // gaussian | nli
  GridConfig signal_grid;
  GridConfig idler_grid;
  PumpSpec pump;
  double correlation_angle_deg = 45.0;
  double sigma_m = 0.2;
  NliSpec nli;
  double pump_fwhm_nm = 0.28;
  std::optional<std::array<Band, 2>> cwdm;  // signal band, idler band
};

struct SeedConfig {
  std::optional<double> center;
  std::optional<double> width;
};

struct MeasurementConfig {
  std::vector<double> gains;        // G_k directly
  std::vector<double> power_gains;  // or cosh^2 G_k
  double efficiency_signal = 1.0;
  double efficiency_idler = 1.0;
  double lo_overlap = 1.0;
  std::size_t samples = 0;  // per quadrature; 0 = analytic only
  std::uint64_t rng_seed = 1;
  std::vector<double> measured_dB;
  std::optional<double> correction_efficiency;
  std::optional<std::array<double, 2>> infer_efficiency_from;  // (measured dB, corrected dB)
};

struct ExperimentConfig {
  std::string name = "experiment";
  KernelConfig kernel;
  double G = 2.5;
  std::vector<double> G_sweep;
  std::size_t modes = 3;
  IterationConfig iteration;
  SeedConfig seed;
  MeasurementConfig measurement;
  std::string output_dir = "out";

  std::vector<double> sweep() const { return G_sweep.empty() ? std::vector<double>{G} : G_sweep; }
};

// ---------------------------------------------------------------------------
// Parsing

namespace config_detail {

using json = nlohmann::json;

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw config_error(where + ": expected a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw config_error(where + ": unknown key '" + key + "'");
    }
  }
}

template <class T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

template <class T>
void read(const json& obj, const char* key, std::optional<T>& out) {
  if (obj.contains(key) && !obj.at(key).is_null()) out = obj.at(key).get<T>();
}

inline GridConfig parse_grid(const json& j, const std::string& where) {
  check_keys(j, {"omega_min", "omega_max", "n_points"}, where);
  GridConfig g;
  read(j, "omega_min", g.omega_min);
  read(j, "omega_max", g.omega_max);
  read(j, "n_points", g.n_points);
  return g;
}

inline Band parse_band(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) throw config_error(where + ": expected [lo, hi]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline KernelConfig parse_kernel(const json& j) {
  check_keys(j, {"model", "signal_grid", "idler_grid", "pump", "gaussian", "nli", "cwdm"}, "kernel");
  KernelConfig k;
  read(j, "model", k.model);
  if (k.model != "gaussian" && k.model != "nli") throw config_error("kernel.model must be 'gaussian' or 'nli'");
  if (j.contains("signal_grid")) k.signal_grid = parse_grid(j["signal_grid"], "kernel.signal_grid");
  k.idler_grid = k.signal_grid;
  if (j.contains("idler_grid")) k.idler_grid = parse_grid(j["idler_grid"], "kernel.idler_grid");
  if (j.contains("pump")) {
    const auto& p = j["pump"];
    check_keys(p, {"center_detuning", "bandwidth_sigma_p", "chirp_coefficient"}, "kernel.pump");
    read(p, "center_detuning", k.pump.center_detuning);
    read(p, "bandwidth_sigma_p", k.pump.bandwidth_sigma_p);
    read(p, "chirp_coefficient", k.pump.chirp_coefficient);
  }
  if (j.contains("gaussian")) {
    const auto& g = j["gaussian"];
    check_keys(g, {"correlation_angle_deg", "sigma_m"}, "kernel.gaussian");
    read(g, "correlation_angle_deg", k.correlation_angle_deg);
    read(g, "sigma_m", k.sigma_m);
  }
  if (j.contains("nli")) {
    const auto& n = j["nli"];
    check_keys(n,
               {"dsf_length_m", "smf_length_m", "pump_wavelength_nm", "zero_dispersion_wavelength_nm",
                "dsf_dispersion_slope", "smf_dispersion", "smf_dispersion_slope", "pump_fwhm_nm"},
               "kernel.nli");
    read(n, "dsf_length_m", k.nli.dsf_length_m);
    read(n, "smf_length_m", k.nli.smf_length_m);
    read(n, "pump_wavelength_nm", k.nli.pump_wavelength_nm);
    read(n, "zero_dispersion_wavelength_nm", k.nli.zero_dispersion_wavelength_nm);
    read(n, "dsf_dispersion_slope", k.nli.dsf_dispersion_slope);
    read(n, "smf_dispersion", k.nli.smf_dispersion);
    read(n, "smf_dispersion_slope", k.nli.smf_dispersion_slope);
    read(n, "pump_fwhm_nm", k.pump_fwhm_nm);
  }
  k.nli.sigma_p_rad_per_ps = sigma_p_from_fwhm_nm(k.pump_fwhm_nm, k.nli.pump_wavelength_nm);
  if (j.contains("cwdm") && !j["cwdm"].is_null()) {
    const auto& c = j["cwdm"];
    check_keys(c, {"signal_band", "idler_band"}, "kernel.cwdm");
    k.cwdm = std::array<Band, 2>{parse_band(c.at("signal_band"), "kernel.cwdm.signal_band"),
                                 parse_band(c.at("idler_band"), "kernel.cwdm.idler_band")};
  }
  return k;
}

inline FeedbackMode parse_feedback(const std::string& s) {
  if (s == "full_complex") return FeedbackMode::full_complex;
  if (s == "intensity_only") return FeedbackMode::intensity_only;
  throw config_error("iteration.feedback_mode must be full_complex or intensity_only");
}

inline AttenuationPolicy parse_attenuation(const std::string& s) {
  if (s == "normalize") return AttenuationPolicy::normalize;
  if (s == "divide_by_cosh_G1") return AttenuationPolicy::divide_by_cosh_G1;
  throw config_error("iteration.attenuation_policy must be normalize or divide_by_cosh_G1");
}

inline void parse_iteration(const json& j, ExperimentConfig& c) {
  check_keys(j,
             {"max_iterations", "convergence_overlap", "feedback_mode", "zero_detection_threshold",
              "attenuation_policy", "seed", "noise_floor"},
             "iteration");
  auto& it = c.iteration;
  read(j, "max_iterations", it.max_iterations);
  read(j, "convergence_overlap", it.convergence_overlap);
  if (j.contains("feedback_mode")) it.feedback_mode = parse_feedback(j["feedback_mode"].get<std::string>());
  read(j, "zero_detection_threshold", it.zero_detection_threshold);
  if (j.contains("attenuation_policy")) it.attenuation_policy = parse_attenuation(j["attenuation_policy"].get<std::string>());
  read(j, "noise_floor", it.spectrometer.noise_floor);
  if (j.contains("seed")) {
    check_keys(j["seed"], {"center", "width"}, "iteration.seed");
    read(j["seed"], "center", c.seed.center);
    read(j["seed"], "width", c.seed.width);
  }
}

inline MeasurementConfig parse_measurement(const json& j) {
  check_keys(j,
             {"gains", "power_gains", "efficiency_signal", "efficiency_idler", "lo_overlap", "samples", "rng_seed",
              "measured_dB", "correction_efficiency", "infer_efficiency_from"},
             "measurement");
  MeasurementConfig m;
  read(j, "gains", m.gains);
  read(j, "power_gains", m.power_gains);
  read(j, "efficiency_signal", m.efficiency_signal);
  read(j, "efficiency_idler", m.efficiency_idler);
  read(j, "lo_overlap", m.lo_overlap);
  read(j, "samples", m.samples);
  read(j, "rng_seed", m.rng_seed);
  read(j, "measured_dB", m.measured_dB);
  read(j, "correction_efficiency", m.correction_efficiency);
  if (j.contains("infer_efficiency_from") && !j["infer_efficiency_from"].is_null()) {
    const auto v = j["infer_efficiency_from"].get<std::vector<double>>();
    if (v.size() != 2) throw config_error("measurement.infer_efficiency_from: expected [measured_dB, corrected_dB]");
    m.infer_efficiency_from = std::array<double, 2>{v[0], v[1]};
  }
  if (!m.gains.empty() && !m.power_gains.empty()) throw config_error("measurement: give gains or power_gains, not both");
  return m;
}

}  // namespace config_detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using namespace config_detail;
  try {
    check_keys(j, {"schema", "name", "kernel", "G", "G_sweep", "modes", "iteration", "measurement", "output_dir"}, "config");
    if (j.contains("schema") && j["schema"].get<std::string>() != kConfigSchema) {
      throw config_error(std::string("config: unsupported schema (expected ") + kConfigSchema + ")");
    }
    ExperimentConfig c;
    read(j, "name", c.name);
    if (j.contains("kernel")) c.kernel = parse_kernel(j["kernel"]);
    read(j, "G", c.G);
    read(j, "G_sweep", c.G_sweep);
    read(j, "modes", c.modes);
    if (j.contains("iteration")) parse_iteration(j["iteration"], c);
    if (j.contains("measurement")) c.measurement = parse_measurement(j["measurement"]);
    read(j, "output_dir", c.output_dir);

    if (c.modes < 1) throw config_error("modes must be >= 1");
    for (double g : c.sweep()) {
      if (!(g >= 0.0) || !std::isfinite(g)) throw config_error("G values must be finite and >= 0");
    }
    try {
      c.iteration.validate();
      (void)c.kernel.signal_grid.grid();
      (void)c.kernel.idler_grid.grid();
      validate(c.kernel.pump);
      if (c.kernel.model == "nli") validate(c.kernel.nli);
    } catch (const std::invalid_argument& e) {
      throw config_error(e.what());
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("config: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw config_error("cannot open config file " + p.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config " + p.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

/// Preset file for `name`: $TMODE_PRESET_DIR first, then the install default.
inline std::filesystem::path preset_path(const std::string& name) {
  std::vector<std::filesystem::path> dirs;
  if (const char* env = std::getenv("TMODE_PRESET_DIR")) dirs.emplace_back(env);
  dirs.emplace_back(TMODE_DEFAULT_PRESET_DIR);
  for (const auto& d : dirs) {
    const auto p = d / (name + ".json");
    if (std::filesystem::exists(p)) return p;
  }
  throw config_error("unknown preset '" + name + "' (looked in $TMODE_PRESET_DIR and " TMODE_DEFAULT_PRESET_DIR ")");
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  auto grid = [](const GridConfig& g) {
    return json{{"omega_min", g.omega_min}, {"omega_max", g.omega_max}, {"n_points", g.n_points}};
  };
  json kernel{{"model", c.kernel.model},
              {"signal_grid", grid(c.kernel.signal_grid)},
              {"idler_grid", grid(c.kernel.idler_grid)},
              {"pump",
               {{"center_detuning", c.kernel.pump.center_detuning},
                {"bandwidth_sigma_p", c.kernel.pump.bandwidth_sigma_p},
                {"chirp_coefficient", c.kernel.pump.chirp_coefficient}}},
              {"gaussian", {{"correlation_angle_deg", c.kernel.correlation_angle_deg}, {"sigma_m", c.kernel.sigma_m}}},
              {"nli",
               {{"dsf_length_m", c.kernel.nli.dsf_length_m},
                {"smf_length_m", c.kernel.nli.smf_length_m},
                {"pump_wavelength_nm", c.kernel.nli.pump_wavelength_nm},
                {"zero_dispersion_wavelength_nm", c.kernel.nli.zero_dispersion_wavelength_nm},
                {"dsf_dispersion_slope", c.kernel.nli.dsf_dispersion_slope},
                {"smf_dispersion", c.kernel.nli.smf_dispersion},
                {"smf_dispersion_slope", c.kernel.nli.smf_dispersion_slope},
                {"pump_fwhm_nm", c.kernel.pump_fwhm_nm}}},
              {"cwdm", nullptr}};
  if (c.kernel.cwdm) {
    const auto& b = *c.kernel.cwdm;
    kernel["cwdm"] = {{"signal_band", {b[0].lo, b[0].hi}}, {"idler_band", {b[1].lo, b[1].hi}}};
  }
  json seed = json::object();
  if (c.seed.center) seed["center"] = *c.seed.center;
  if (c.seed.width) seed["width"] = *c.seed.width;
  json iteration{{"max_iterations", c.iteration.max_iterations},
                 {"convergence_overlap", c.iteration.effective_convergence_overlap()},
                 {"feedback_mode", to_string(c.iteration.feedback_mode)},
                 {"zero_detection_threshold", c.iteration.zero_detection_threshold},
                 {"attenuation_policy", to_string(c.iteration.attenuation_policy)},
                 {"noise_floor", c.iteration.spectrometer.noise_floor},
                 {"seed", seed}};
  const auto& m = c.measurement;
  json measurement{{"gains", m.gains},
                   {"power_gains", m.power_gains},
                   {"efficiency_signal", m.efficiency_signal},
                   {"efficiency_idler", m.efficiency_idler},
                   {"lo_overlap", m.lo_overlap},
                   {"samples", m.samples},
                   {"rng_seed", m.rng_seed},
                   {"measured_dB", m.measured_dB},
                   {"correction_efficiency", m.correction_efficiency ? json(*m.correction_efficiency) : json(nullptr)},
                   {"infer_efficiency_from", m.infer_efficiency_from
                                                 ? json{(*m.infer_efficiency_from)[0], (*m.infer_efficiency_from)[1]}
                                                 : json(nullptr)}};
  return {{"schema", kConfigSchema},
          {"tmode_version", kVersion},
          {"name", c.name},
          {"kernel", kernel},
          {"G", c.G},
          {"G_sweep", c.G_sweep},
          {"modes", c.modes},
          {"iteration", iteration},
          {"measurement", measurement},
          {"output_dir", c.output_dir}};
}

// ---------------------------------------------------------------------------
// Pipelines

/// Kernel at strength G, with the CWDM window applied when configured.
inline JointSpectralKernel build_kernel(const KernelConfig& k, double G) {
  const FrequencyGrid sg = k.signal_grid.grid();
  const FrequencyGrid ig = k.idler_grid.grid();
  JointSpectralKernel kernel =
      k.model == "nli" ? build_nli_jsf(k.pump, k.nli, G, sg, ig)
                       : build_gaussian_jsf(k.pump, k.correlation_angle_deg * std::numbers::pi / 180.0, k.sigma_m, G, sg, ig);
  if (k.cwdm) kernel = restrict_to_island(kernel, (*k.cwdm)[0], (*k.cwdm)[1]);
  return kernel;
}

inline void write_resolved_config(const std::filesystem::path& dir, const ExperimentConfig& c) {
  auto os = io::open_out(dir / "resolved_config.json");
  os << to_json(c).dump(2) << '\n';
}

struct DecomposeSummary {
  std::size_t retained_modes = 0;
  std::vector<double> r;
  std::size_t islands_full = 0;      // before the CWDM window
  std::size_t islands_filtered = 0;  // after (equal to full without a window)
  double discarded_fraction = 0.0;
  std::size_t mode_files = 0;
};

inline DecomposeSummary run_decompose(const ExperimentConfig& c, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  write_resolved_config(out, c);
  KernelConfig unfiltered = c.kernel;
  unfiltered.cwdm.reset();
  const JointSpectralKernel full = build_kernel(unfiltered, c.G);
  const JointSpectralKernel kernel = build_kernel(c.kernel, c.G);
  const SchmidtDecomposition dec = decompose(kernel);

  DecomposeSummary s;
  s.retained_modes = dec.size();
  s.r = dec.r;
  s.islands_full = find_islands(full).count;
  s.islands_filtered = find_islands(kernel).count;
  s.discarded_fraction = kernel.discarded_fraction();
  s.mode_files = std::min(c.modes, dec.size());

  io::write_decomposition(out / "modes", dec, c.modes);
  {
    auto os = io::open_out(out / "kernel.json");
    os << io::kernel_metadata(kernel).dump(2) << '\n';
  }
  {
    auto os = io::open_out(out / "kernel.csv");
    io::write_kernel_csv(os, kernel);
  }
  {
    auto os = io::open_out(out / "jsf_intensity.csv");
    io::write_intensity_map_csv(os, kernel);
  }
  if (c.kernel.cwdm) {
    auto os = io::open_out(out / "jsf_intensity_unfiltered.csv");
    io::write_intensity_map_csv(os, full);
  }
  {
    const IslandMap fm = find_islands(full);
    nlohmann::json j{{"threshold_fraction_of_peak", 0.01},
                     {"islands_unfiltered", fm.count},
                     {"island_energy_fractions", fm.energy},
                     {"islands_after_window", s.islands_filtered},
                     {"window_discarded_fraction", s.discarded_fraction}};
    auto os = io::open_out(out / "islands.json");
    os << j.dump(2) << '\n';
  }
  return s;
}

struct SweepPointResult {
  double G = 0.0;
  std::vector<ModeExtractionResult> modes;
  std::vector<double> oracle_overlap;     // |<extracted, psi_k>|
  std::vector<double> oracle_power_gain;  // cosh^2(r_k G), 1 beyond the retained span
  std::vector<double> mode_numbers;       // r_k / r_1 from measured gains (NaN when unreliable)
};

struct IterateSummary {
  std::vector<SweepPointResult> points;
  bool leading_mode_failed = false;
};

inline SpectralField configured_seed(const ExperimentConfig& c, const SchmidtDecomposition& dec) {
  if (!c.seed.center && !c.seed.width) return default_seed(dec);
  const double center = c.seed.center.value_or(0.0);
  const double width = c.seed.width.value_or(1.0);
  if (!(width > 0.0)) throw config_error("iteration.seed.width must be > 0");
  return SpectralField::gaussian(dec.signal_grid, center, width).normalized();
}

inline SweepPointResult iterate_point(const ExperimentConfig& c, const SchmidtDecomposition& shape_dec, double G) {
  const SchmidtAmplifier amp(shape_dec.with_strength(G));
  const auto& dec = amp.decomposition();
  SweepPointResult p;
  p.G = G;
  p.modes = extract_all_modes(amp, c.modes, configured_seed(c, dec), c.iteration);
  for (std::size_t k = 0; k < p.modes.size(); ++k) {
    p.oracle_overlap.push_back(k < dec.size() && p.modes[k].status != ModeStatus::seed_exhausted
                                   ? std::abs(inner_product(dec.psi[k], p.modes[k].mode))
                                   : 0.0);
    p.oracle_power_gain.push_back(k < dec.size() ? dec.power_gain(k) : 1.0);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  p.mode_numbers.assign(p.modes.size(), nan);
  if (!p.modes.empty() && p.modes[0].reliable()) {
    const double g1 = gain_parameter_from_power_gain(p.modes[0].power_gain);
    for (std::size_t k = 0; k < p.modes.size(); ++k) {
      if (p.modes[k].reliable()) p.mode_numbers[k] = gain_parameter_from_power_gain(p.modes[k].power_gain) / g1;
    }
  }
  return p;
}

inline IterateSummary run_iterate(const ExperimentConfig& c, const std::filesystem::path& out, unsigned threads = 1) {
  std::filesystem::create_directories(out);
  write_resolved_config(out, c);
  const SchmidtDecomposition shape_dec = decompose(build_kernel(c.kernel, 1.0));
  const std::vector<double> sweep = c.sweep();

  IterateSummary summary;
  summary.points.resize(sweep.size());
  {
    std::vector<std::exception_ptr> errors(sweep.size());
    std::size_t next = 0;
    std::mutex m;
    auto worker = [&] {
      for (;;) {
        std::size_t i;
        {
          std::lock_guard lock(m);
          if (next >= sweep.size()) return;
          i = next++;
        }
        try {
          summary.points[i] = iterate_point(c, shape_dec, sweep[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(sweep.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  auto gain_table = io::open_out(out / "gain_table.csv");
  gain_table << "sweep_index,G,k,power_gain,oracle_power_gain,iterations,status,unstable\n";
  auto numbers = io::open_out(out / "mode_numbers.csv");
  numbers << "sweep_index,G,k,r_ratio,oracle_r_ratio\n";
  auto overlaps = io::open_out(out / "overlap_summary.csv");
  overlaps << "sweep_index,G,k,oracle_overlap,status\n";

  for (std::size_t i = 0; i < sweep.size(); ++i) {
    const auto& p = summary.points[i];
    char name[32];
    std::snprintf(name, sizeof name, "sweep_%02zu", i);
    const auto dir = out / name;
    std::filesystem::create_directories(dir);
    nlohmann::json modes = nlohmann::json::array();
    for (std::size_t k = 0; k < p.modes.size(); ++k) {
      const auto& r = p.modes[k];
      const std::string kk = std::to_string(k + 1);
      if (r.status != ModeStatus::seed_exhausted) io::write_field_csv(dir / ("mode_" + kk + ".csv"), r.mode);
      {
        auto os = io::open_out(dir / ("trace_" + kk + ".csv"));
        io::write_trace_csv(os, r);
      }
      const bool unstable = !r.reliable();
      const double oracle_ratio =
          k < shape_dec.size() ? shape_dec.r[k] / shape_dec.r[0] : 0.0;
      gain_table << i << ',' << io::num(p.G) << ',' << k + 1 << ',' << io::num(r.power_gain) << ','
                 << io::num(p.oracle_power_gain[k]) << ',' << r.iterations_used << ',' << to_string(r.status) << ','
                 << (unstable ? 1 : 0) << '\n';
      numbers << i << ',' << io::num(p.G) << ',' << k + 1 << ','
              << (std::isnan(p.mode_numbers[k]) ? std::string("nan") : io::num(p.mode_numbers[k])) << ','
              << io::num(oracle_ratio) << '\n';
      overlaps << i << ',' << io::num(p.G) << ',' << k + 1 << ',' << io::num(p.oracle_overlap[k]) << ','
               << to_string(r.status) << '\n';
      modes.push_back({{"k", k + 1},
                       {"status", to_string(r.status)},
                       {"unstable", unstable},
                       {"iterations", r.iterations_used},
                       {"power_gain", r.power_gain},
                       {"oracle_power_gain", p.oracle_power_gain[k]},
                       {"oracle_overlap", p.oracle_overlap[k]}});
    }
    auto os = io::open_out(dir / "summary.json");
    os << nlohmann::json{{"G", p.G}, {"feedback_mode", to_string(c.iteration.feedback_mode)}, {"modes", modes}}.dump(2)
       << '\n';
    if (p.modes.empty() || p.modes[0].status != ModeStatus::converged) summary.leading_mode_failed = true;
  }
  return summary;
}

struct MeasureSummary {
  QuadratureModel model;
  CovarianceReport analytic;
  std::optional<CovarianceReport> monte_carlo;
  std::vector<DuanResult> duan;
  std::optional<double> correction_efficiency;
  std::vector<double> corrected_dB;  // of measurement.measured_dB
};

inline QuadratureModel measurement_model(const ExperimentConfig& c, const std::vector<double>& fallback_gains) {
  const auto& m = c.measurement;
  std::vector<double> gains = m.gains;
  if (gains.empty() && !m.power_gains.empty()) {
    for (double p : m.power_gains) gains.push_back(gain_parameter_from_power_gain(p));
  }
  if (gains.empty()) gains = fallback_gains;
  if (gains.empty()) throw config_error("measurement: no gains, power_gains or kernel to take them from");
  auto model = QuadratureModel::uniform(gains, m.efficiency_signal, m.efficiency_idler, m.lo_overlap);
  return model;
}

inline MeasureSummary run_measure(const ExperimentConfig& c, const std::filesystem::path& out,
                                  const std::vector<double>& fallback_gains = {}) {
  std::filesystem::create_directories(out);
  write_resolved_config(out, c);
  MeasureSummary s;
  try {
    s.model = measurement_model(c, fallback_gains);
  } catch (const std::invalid_argument& e) {
    throw config_error(e.what());
  }
  const std::size_t K = std::min(c.modes, s.model.modes());
  s.analytic = build_covariance_matrix(s.model, K);
  {
    auto os = io::open_out(out / "covariance_analytic.json");
    os << io::to_json(s.analytic).dump(2) << '\n';
    auto tx = io::open_out(out / "covariance_analytic.txt");
    tx << "C^X\n" << render_table(s.analytic.C_X, s.analytic.labels) << "\nC^Y\n"
       << render_table(s.analytic.C_Y, s.analytic.labels);
  }
  if (c.measurement.samples > 0) {
    try {
      s.monte_carlo = build_covariance_matrix(s.model, K, CovarianceMethod::monte_carlo(c.measurement.samples, c.measurement.rng_seed));
    } catch (const std::invalid_argument& e) {
      throw config_error(e.what());
    }
    auto os = io::open_out(out / "covariance_monte_carlo.json");
    os << io::to_json(*s.monte_carlo).dump(2) << '\n';
    auto tx = io::open_out(out / "covariance_monte_carlo.txt");
    tx << "C^X\n" << render_table(s.monte_carlo->C_X, s.monte_carlo->labels) << "\nC^Y\n"
       << render_table(s.monte_carlo->C_Y, s.monte_carlo->labels);
  }

  auto duan = io::open_out(out / "duan.csv");
  duan << "k,I_k,dB,corrected_dB\n";
  for (std::size_t k = 1; k <= K; ++k) {
    const DuanResult d = duan_criterion(s.model, k);
    s.duan.push_back(d);
    const double eta = std::sqrt(s.model.effective_efficiency({Beam::signal, k}) *
                                 s.model.effective_efficiency({Beam::idler, k}));
    std::string corrected = "nan";
    if (eta > 0.0) {
      try {
        corrected = io::num(efficiency_correct(d.dB, eta));
      } catch (const numerical_error&) {
      }
    }
    duan << k << ',' << io::num(d.I) << ',' << io::num(d.dB) << ',' << corrected << '\n';
  }

  const auto& m = c.measurement;
  if (m.infer_efficiency_from) s.correction_efficiency = infer_efficiency((*m.infer_efficiency_from)[0], (*m.infer_efficiency_from)[1]);
  if (m.correction_efficiency) s.correction_efficiency = *m.correction_efficiency;
  if (!m.measured_dB.empty()) {
    if (!s.correction_efficiency) throw config_error("measurement.measured_dB needs correction_efficiency or infer_efficiency_from");
    auto os = io::open_out(out / "efficiency_correction.csv");
    os << "k,measured_dB,eta,corrected_dB,I_corrected\n";
    for (std::size_t k = 0; k < m.measured_dB.size(); ++k) {
      const double corr = efficiency_correct(m.measured_dB[k], *s.correction_efficiency);
      s.corrected_dB.push_back(corr);
      os << k + 1 << ',' << io::num(m.measured_dB[k]) << ',' << io::num(*s.correction_efficiency) << ',' << io::num(corr)
         << ',' << io::num(duan_from_db(corr)) << '\n';
    }
  }
  return s;
}

struct AllSummary {
  DecomposeSummary decompose;
  IterateSummary iterate;
  MeasureSummary measure;
};

/// decompose -> iterate -> measure on one kernel. Without explicit
/// measurement gains, the reliable extracted power gains of the first sweep
/// point feed the quantum model.
inline AllSummary run_all(const ExperimentConfig& c, const std::filesystem::path& out, unsigned threads = 1) {
  AllSummary s;
  write_resolved_config(out, c);
  s.decompose = run_decompose(c, out / "decompose");
  s.iterate = run_iterate(c, out / "iterate", threads);
  std::vector<double> gains;
  if (!s.iterate.points.empty()) {
    for (const auto& r : s.iterate.points.front().modes) {
      if (!r.reliable()) break;
      gains.push_back(gain_parameter_from_power_gain(r.power_gain));
    }
  }
  s.measure = run_measure(c, out / "measure", gains);
  return s;
}

}  // namespace tmode
