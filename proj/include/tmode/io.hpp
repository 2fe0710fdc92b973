#pragma once

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tmode/iteration.hpp"
#include "tmode/jsf.hpp"
#include "tmode/quantum.hpp"
#include "tmode/schmidt.hpp"
#include "tmode/spectral.hpp"

namespace tmode::io {

using json = nlohmann::json;

inline constexpr const char* kFieldSchema = "tmode-field/1";
inline constexpr const char* kKernelSchema = "tmode-kernel/1";
inline constexpr const char* kManifestSchema = "tmode-modes/1";
inline constexpr const char* kCovarianceSchema = "tmode-covariance/1";

/// Shortest text that round-trips a double.
inline std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot open " + p.string() + " for writing");
  return os;
}

// --- grids and fields --------------------------------------------------------

inline json to_json(const FrequencyGrid& g) {
  return {{"omega_min", g.omega_min()}, {"omega_max", g.omega_max()}, {"n_points", g.size()}};
}

inline FrequencyGrid grid_from_json(const json& j) {
  return {j.at("omega_min").get<double>(), j.at("omega_max").get<double>(), j.at("n_points").get<std::size_t>()};
}

inline json to_json(const SpectralField& f) {
  std::vector<double> re(f.size()), im(f.size());
  for (std::size_t j = 0; j < f.size(); ++j) {
    re[j] = f[j].real();
    im[j] = f[j].imag();
  }
  return {{"schema", kFieldSchema}, {"grid", to_json(f.grid())}, {"re", re}, {"im", im}};
}

inline SpectralField field_from_json(const json& j) {
  if (j.value("schema", std::string{}) != kFieldSchema) throw std::invalid_argument("field JSON: missing or wrong schema tag");
  const FrequencyGrid g = grid_from_json(j.at("grid"));
  const auto re = j.at("re").get<std::vector<double>>();
  const auto im = j.at("im").get<std::vector<double>>();
  if (re.size() != g.size() || im.size() != g.size()) throw std::invalid_argument("field JSON: length mismatch");
  ComplexVector a(static_cast<Eigen::Index>(g.size()));
  for (std::size_t k = 0; k < g.size(); ++k) a(static_cast<Eigen::Index>(k)) = {re[k], im[k]};
  return {g, std::move(a)};
}

inline void write_csv(std::ostream& os, const SpectralField& f) {
  os << "omega,re,im\n";
  for (std::size_t j = 0; j < f.size(); ++j) {
    os << num(f.grid().omega(j)) << ',' << num(f[j].real()) << ',' << num(f[j].imag()) << '\n';
  }
}

/// Reads omega,re,im rows; the grid is rebuilt from the first and last omega
/// and must be uniform.
inline SpectralField read_field_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("field CSV: empty input");
  if (line.rfind("omega", 0) != 0) throw std::invalid_argument("field CSV: expected header omega,re,im");
  std::vector<double> w, re, im;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string a, b, c;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c)) {
      throw std::invalid_argument("field CSV: malformed row: " + line);
    }
    w.push_back(std::stod(a));
    re.push_back(std::stod(b));
    im.push_back(std::stod(c));
  }
  if (w.size() < 2) throw std::invalid_argument("field CSV: need at least two rows");
  const FrequencyGrid g(w.front(), w.back(), w.size());
  for (std::size_t j = 0; j < w.size(); ++j) {
    if (std::abs(w[j] - g.omega(j)) > 1e-9 * std::max(1.0, std::abs(g.omega(j)))) {
      throw std::invalid_argument("field CSV: omega column is not a uniform grid");
    }
  }
  ComplexVector a(static_cast<Eigen::Index>(w.size()));
  for (std::size_t j = 0; j < w.size(); ++j) a(static_cast<Eigen::Index>(j)) = {re[j], im[j]};
  return {g, std::move(a)};
}

inline void write_field_csv(const std::filesystem::path& p, const SpectralField& f) {
  auto os = open_out(p);
  write_csv(os, f);
}

// --- kernels -------------------------------------------------------------------

inline json kernel_metadata(const JointSpectralKernel& k) {
  return {{"schema", kKernelSchema},
          {"signal_grid", to_json(k.signal_grid())},
          {"idler_grid", to_json(k.idler_grid())},
          {"strength_G", k.strength()},
          {"discarded_fraction", k.discarded_fraction()},
          {"values", "G * normalized shape, rows = signal index i, cols = idler index j"}};
}

/// i,j,re,im of F = G f.
inline void write_kernel_csv(std::ostream& os, const JointSpectralKernel& k) {
  const ComplexMatrix m = k.matrix();
  os << "i,j,re,im\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << i << ',' << j << ',' << num(m(i, j).real()) << ',' << num(m(i, j).imag()) << '\n';
  }
}

/// |f|^2 on a grid thinned to at most max_points per axis, for heat maps.
inline void write_intensity_map_csv(std::ostream& os, const JointSpectralKernel& k, std::size_t max_points = 128) {
  const auto& sg = k.signal_grid();
  const auto& ig = k.idler_grid();
  const std::size_t ss = std::max<std::size_t>(1, (sg.size() + max_points - 1) / max_points);
  const std::size_t si = std::max<std::size_t>(1, (ig.size() + max_points - 1) / max_points);
  os << "omega_signal,omega_idler,intensity\n";
  for (std::size_t i = 0; i < sg.size(); i += ss) {
    for (std::size_t j = 0; j < ig.size(); j += si) {
      os << num(sg.omega(i)) << ',' << num(ig.omega(j)) << ','
         << num(std::norm(k.shape()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)))) << '\n';
    }
  }
}

// --- decompositions ------------------------------------------------------------

inline json decomposition_manifest(const SchmidtDecomposition& d) {
  json modes = json::array();
  for (std::size_t k = 0; k < d.size(); ++k) {
    modes.push_back({{"k", k + 1},
                     {"r_k", d.r[k]},
                     {"G_k", d.gain(k)},
                     {"power_gain", d.power_gain(k)},
                     {"degenerate_with_next", static_cast<bool>(d.degenerate_with_next[k])},
                     {"psi_file", "psi_" + std::to_string(k + 1) + ".csv"},
                     {"phi_file", "phi_" + std::to_string(k + 1) + ".csv"}});
  }
  return {{"schema", kManifestSchema}, {"G", d.G}, {"retained_modes", d.size()}, {"modes", modes}};
}

/// psi_k.csv, phi_k.csv (first `count` modes) plus manifest.json.
inline void write_decomposition(const std::filesystem::path& dir, const SchmidtDecomposition& d, std::size_t count) {
  std::filesystem::create_directories(dir);
  const std::size_t n = std::min(count, d.size());
  for (std::size_t k = 0; k < n; ++k) {
    write_field_csv(dir / ("psi_" + std::to_string(k + 1) + ".csv"), d.psi[k]);
    write_field_csv(dir / ("phi_" + std::to_string(k + 1) + ".csv"), d.phi[k]);
  }
  json m = decomposition_manifest(d);
  if (m["modes"].size() > n) m["modes"].erase(m["modes"].begin() + static_cast<std::ptrdiff_t>(n), m["modes"].end());
  auto os = open_out(dir / "manifest.json");
  os << m.dump(2) << '\n';
}

// --- iteration traces ------------------------------------------------------------

inline void write_trace_csv(std::ostream& os, const ModeExtractionResult& r) {
  os << "step,overlap,gain_estimate\n";
  for (const auto& s : r.trace) os << s.step << ',' << num(s.overlap) << ',' << num(s.gain_estimate) << '\n';
}

// --- covariance ------------------------------------------------------------------

inline json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index a = 0; a < m.rows(); ++a) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index b = 0; b < m.cols(); ++b) r[static_cast<std::size_t>(b)] = m(a, b);
    rows.push_back(r);
  }
  return rows;
}

inline json to_json(const CovarianceReport& r) {
  std::vector<std::string> labels;
  for (const auto& l : r.labels) labels.push_back(l.name());
  return {{"schema", kCovarianceSchema},
          {"method", r.method},
          {"sample_count", r.sample_count},
          {"labels", labels},
          {"C_X", matrix_json(r.C_X)},
          {"C_Y", matrix_json(r.C_Y)},
          {"moments_X", matrix_json(r.moments_X)},
          {"moments_Y", matrix_json(r.moments_Y)},
          {"se_X", matrix_json(r.se_X)},
          {"se_Y", matrix_json(r.se_Y)}};
}

}  // namespace tmode::io
