/*
 * jsf.hpp: discretized joint spectral functions F(w1, w2) = G f(w1, w2).
 *
 * The kernel stores the normalized shape f, with sum |f|^2 dw1 dw2 = 1, and
 * the strength G separately so that G = 0 is representable and a pump power
 * sweep only rescales G.
 *
 * Two models:
 *   - double Gaussian: pump envelope in w1 + w2 (optionally chirped) times a
 *     Gaussian phase-matching band along a rotated axis;
 *   - nonlinear interferometer (two DSF stages around an SMF): single-stage
 *     sinc phase matching times cos(Phi/2) exp(i Phi/2), Phi = dbeta_smf L_smf,
 *     which carves the JSF into islands.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include "tmode/error.hpp"
#include "tmode/spectral.hpp"

namespace tmode {

class JointSpectralKernel {
 public:
  /// `raw` is rescaled to unit norm; throws on non-finite or all-zero input.
  JointSpectralKernel(FrequencyGrid signal_grid, FrequencyGrid idler_grid, ComplexMatrix raw, double strength,
                      double discarded_fraction = 0.0)
      : signal_(signal_grid), idler_(idler_grid), shape_(std::move(raw)), G_(strength), discarded_(discarded_fraction) {
    if (static_cast<std::size_t>(shape_.rows()) != signal_.size() ||
        static_cast<std::size_t>(shape_.cols()) != idler_.size()) {
      throw std::invalid_argument("JointSpectralKernel: matrix shape does not match grids");
    }
    if (!(strength >= 0.0) || !std::isfinite(strength)) {
      throw std::invalid_argument("JointSpectralKernel: strength G must be finite and >= 0");
    }
    if (!shape_.allFinite()) throw numerical_error("JointSpectralKernel: non-finite kernel entries");
    const double n2 = shape_.squaredNorm() * signal_.d_omega() * idler_.d_omega();
    if (!(n2 > 0.0)) throw numerical_error("JointSpectralKernel: kernel has no support (zero norm)");
    shape_ /= std::sqrt(n2);
  }

  const FrequencyGrid& signal_grid() const { return signal_; }
  const FrequencyGrid& idler_grid() const { return idler_; }
  const ComplexMatrix& shape() const { return shape_; }
  ComplexMatrix matrix() const { return G_ * shape_; }
  double strength() const { return G_; }
  double discarded_fraction() const { return discarded_; }

  double norm_squared() const { return shape_.squaredNorm() * signal_.d_omega() * idler_.d_omega(); }

  JointSpectralKernel with_strength(double G) const {
    JointSpectralKernel k = *this;
    if (!(G >= 0.0) || !std::isfinite(G)) throw std::invalid_argument("with_strength: G must be finite and >= 0");
    k.G_ = G;
    return k;
  }

  /// Signal and idler exchanged: f'(w2, w1) = f(w1, w2).
  JointSpectralKernel transposed() const {
    return {idler_, signal_, shape_.transpose(), G_, discarded_};
  }

 private:
  FrequencyGrid signal_;
  FrequencyGrid idler_;
  ComplexMatrix shape_;
  double G_;
  double discarded_;
};

struct PumpSpec {
  double center_detuning = 0.0;
  double bandwidth_sigma_p = 1.0;
  double chirp_coefficient = 0.0;  // phase exp(i c (w1+w2)^2 / (2 sigma_p^2))
};

inline cplx pump_envelope(const PumpSpec& pump, double sum_detuning) {
  const double s = (sum_detuning - pump.center_detuning) / pump.bandwidth_sigma_p;
  return std::exp(cplx(-0.25 * s * s, 0.5 * pump.chirp_coefficient * s * s));
}

inline void validate(const PumpSpec& pump) {
  if (!(pump.bandwidth_sigma_p > 0.0) || !std::isfinite(pump.bandwidth_sigma_p)) {
    throw std::invalid_argument("PumpSpec: bandwidth must be > 0");
  }
  if (!std::isfinite(pump.center_detuning) || !std::isfinite(pump.chirp_coefficient)) {
    throw std::invalid_argument("PumpSpec: non-finite parameter");
  }
}

/// F = G N exp(-(w1+w2)^2/4sp^2) exp(i c (w1+w2)^2/2sp^2) exp(-(w1 sin th - w2 cos th)^2 / 4sm^2).
inline JointSpectralKernel build_gaussian_jsf(const PumpSpec& pump, double correlation_angle, double sigma_m, double G,
                                              const FrequencyGrid& signal_grid, const FrequencyGrid& idler_grid) {
  validate(pump);
  if (!(sigma_m > 0.0)) throw std::invalid_argument("build_gaussian_jsf: phase-matching width must be > 0");
  if (!(G >= 0.0)) throw std::invalid_argument("build_gaussian_jsf: G must be >= 0");
  const double s = std::sin(correlation_angle);
  const double c = std::cos(correlation_angle);
  const auto ns = static_cast<Eigen::Index>(signal_grid.size());
  const auto ni = static_cast<Eigen::Index>(idler_grid.size());
  ComplexMatrix f(ns, ni);
  for (Eigen::Index a = 0; a < ns; ++a) {
    const double w1 = signal_grid.omega(static_cast<std::size_t>(a));
    for (Eigen::Index b = 0; b < ni; ++b) {
      const double w2 = idler_grid.omega(static_cast<std::size_t>(b));
      const double pm = (w1 * s - w2 * c) / sigma_m;
      f(a, b) = pump_envelope(pump, w1 + w2) * std::exp(-0.25 * pm * pm);
    }
  }
  return {signal_grid, idler_grid, std::move(f), G};
}

/// Correlation angle at which the unchirped double-Gaussian kernel factorizes:
/// sin(2 theta) = 2 sigma_m^2 / sigma_p^2 (requires sigma_m <= sigma_p / sqrt 2).
inline double separable_correlation_angle(double sigma_p, double sigma_m) {
  const double x = 2.0 * sigma_m * sigma_m / (sigma_p * sigma_p);
  if (x > 1.0) throw std::invalid_argument("separable_correlation_angle: no separable angle for these widths");
  return 0.5 * std::asin(x);
}

// ---------------------------------------------------------------------------
// Fiber nonlinear interferometer

/// Speed of light in nm/ps.
inline constexpr double kSpeedOfLightNmPerPs = 2.99792458e5;

/// Gaussian sigma_p (rad/ps) of a pump whose power spectrum has the given FWHM in nm.
inline double sigma_p_from_fwhm_nm(double fwhm_nm, double center_nm) {
  const double dw_fwhm = 2.0 * std::numbers::pi * kSpeedOfLightNmPerPs * fwhm_nm / (center_nm * center_nm);
  // |pump|^2 ~ exp(-w^2 / 2 sigma^2)
  return dw_fwhm / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
}

/// Angular detuning (rad/ps) of wavelength `nm` from `center_nm`.
inline double detuning_from_wavelength(double nm, double center_nm) {
  return 2.0 * std::numbers::pi * kSpeedOfLightNmPerPs * (1.0 / nm - 1.0 / center_nm);
}

struct NliSpec {
  double dsf_length_m = 150.0;
  double smf_length_m = 3.4;
  double pump_wavelength_nm = 1549.32;
  double zero_dispersion_wavelength_nm = 1548.5;
  double dsf_dispersion_slope = 0.075;  // ps / (nm^2 km)
  double smf_dispersion = 17.0;         // ps / (nm km)
  double smf_dispersion_slope = 0.0;    // ps / (nm^2 km)
  double sigma_p_rad_per_ps = sigma_p_from_fwhm_nm(0.28, 1549.32);  // physical size of one grid unit
};

struct Dispersion {
  double beta2 = 0.0;  // ps^2 / m
  double beta3 = 0.0;  // ps^3 / m

  /// FWM phase mismatch per metre for signal/idler detunings w1, w2 (rad/ps) from the pump:
  /// beta(wp+w1) + beta(wp+w2) - 2 beta(wp+(w1+w2)/2) to third order.
  double phase_mismatch(double w1, double w2) const {
    const double S = w1 + w2;
    const double D = w1 - w2;
    return beta2 * D * D / 4.0 + beta3 * S * D * D / 8.0;
  }
};

/// beta2, beta3 from D (ps/nm/km) and slope S (ps/nm^2/km) at wavelength nm.
inline Dispersion dispersion_from_D(double D_ps_nm_km, double slope_ps_nm2_km, double wavelength_nm) {
  const double k = wavelength_nm * wavelength_nm / (2.0 * std::numbers::pi * kSpeedOfLightNmPerPs);  // nm ps
  const double D = D_ps_nm_km * 1e-3;  // per metre
  const double S = slope_ps_nm2_km * 1e-3;
  return {-k * D, k * k * (S + 2.0 * D / wavelength_nm)};
}

inline Dispersion dsf_dispersion(const NliSpec& nli) {
  const double D = nli.dsf_dispersion_slope * (nli.pump_wavelength_nm - nli.zero_dispersion_wavelength_nm);
  return dispersion_from_D(D, nli.dsf_dispersion_slope, nli.pump_wavelength_nm);
}

inline Dispersion smf_dispersion(const NliSpec& nli) {
  return dispersion_from_D(nli.smf_dispersion, nli.smf_dispersion_slope, nli.pump_wavelength_nm);
}

/// Two-stage interference factor for accumulated SMF phase mismatch Phi (rad).
inline cplx nli_interference_factor(double phi) {
  return std::cos(0.5 * phi) * std::polar(1.0, 0.5 * phi);
}

/// Single-stage amplitude sinc(x/2) exp(i x/2), x = dk L.
inline cplx phase_matching(double dk_L) {
  const double h = 0.5 * dk_L;
  const double sinc = std::abs(h) < 1e-8 ? 1.0 - h * h / 6.0 : std::sin(h) / h;
  return sinc * std::polar(1.0, h);
}

inline void validate(const NliSpec& nli) {
  if (!(nli.dsf_length_m > 0.0)) throw std::invalid_argument("NliSpec: dsf_length must be > 0");
  if (!(nli.smf_length_m >= 0.0)) throw std::invalid_argument("NliSpec: smf_length must be >= 0");
  if (!(nli.sigma_p_rad_per_ps > 0.0)) throw std::invalid_argument("NliSpec: sigma_p must be > 0");
  if (!(nli.pump_wavelength_nm > 0.0)) throw std::invalid_argument("NliSpec: pump wavelength must be > 0");
}

/// Grids are in units of sigma_p (detuning from the pump); `nli.sigma_p_rad_per_ps`
/// converts them to physical frequency for the dispersion model.
inline JointSpectralKernel build_nli_jsf(const PumpSpec& pump, const NliSpec& nli, double G,
                                         const FrequencyGrid& signal_grid, const FrequencyGrid& idler_grid) {
  validate(pump);
  validate(nli);
  if (!(G >= 0.0)) throw std::invalid_argument("build_nli_jsf: G must be >= 0");
  const Dispersion dsf = dsf_dispersion(nli);
  const Dispersion smf = smf_dispersion(nli);
  const double scale = nli.sigma_p_rad_per_ps;
  const auto ns = static_cast<Eigen::Index>(signal_grid.size());
  const auto ni = static_cast<Eigen::Index>(idler_grid.size());
  ComplexMatrix f(ns, ni);
  for (Eigen::Index a = 0; a < ns; ++a) {
    const double w1 = signal_grid.omega(static_cast<std::size_t>(a));
    for (Eigen::Index b = 0; b < ni; ++b) {
      const double w2 = idler_grid.omega(static_cast<std::size_t>(b));
      const double dk = dsf.phase_mismatch(w1 * scale, w2 * scale) * nli.dsf_length_m;
      const double phi = smf.phase_mismatch(w1 * scale, w2 * scale) * nli.smf_length_m;
      if (!std::isfinite(dk) || !std::isfinite(phi)) throw numerical_error("build_nli_jsf: non-finite phase mismatch");
      f(a, b) = pump_envelope(pump, w1 + w2) * phase_matching(dk) * nli_interference_factor(phi);
    }
  }
  return {signal_grid, idler_grid, std::move(f), G};
}

// ---------------------------------------------------------------------------
// Islands and spectral filtering

struct Band {
  double lo;
  double hi;
};

struct IslandMap {
  std::size_t count = 0;
  Eigen::MatrixXi labels;            // 0 = below threshold, 1..count otherwise
  std::vector<std::size_t> sizes;    // pixels per island
  std::vector<double> energy;        // fraction of total |f|^2 per island
};

/// Connected (4-neighbour) regions where |f|^2 >= threshold * max |f|^2.
inline IslandMap find_islands(const JointSpectralKernel& kernel, double threshold = 0.01) {
  const ComplexMatrix& f = kernel.shape();
  const Eigen::MatrixXd inten = f.cwiseAbs2();
  const double cut = threshold * inten.maxCoeff();
  const double total = inten.sum();
  IslandMap m;
  m.labels = Eigen::MatrixXi::Zero(inten.rows(), inten.cols());
  std::vector<std::pair<Eigen::Index, Eigen::Index>> stack;
  for (Eigen::Index i0 = 0; i0 < inten.rows(); ++i0) {
    for (Eigen::Index j0 = 0; j0 < inten.cols(); ++j0) {
      if (inten(i0, j0) < cut || m.labels(i0, j0) != 0) continue;
      const int label = static_cast<int>(++m.count);
      std::size_t pixels = 0;
      double e = 0.0;
      stack.assign(1, {i0, j0});
      m.labels(i0, j0) = label;
      while (!stack.empty()) {
        const auto [i, j] = stack.back();
        stack.pop_back();
        ++pixels;
        e += inten(i, j);
        const std::pair<Eigen::Index, Eigen::Index> nbr[4] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
        for (const auto& [a, b] : nbr) {
          if (a < 0 || b < 0 || a >= inten.rows() || b >= inten.cols()) continue;
          if (m.labels(a, b) != 0 || inten(a, b) < cut) continue;
          m.labels(a, b) = label;
          stack.emplace_back(a, b);
        }
      }
      m.sizes.push_back(pixels);
      m.energy.push_back(e / total);
    }
  }
  return m;
}

/// Hard rectangular window (CWDM channels); the shape is renormalized and the
/// discarded energy fraction recorded on the result.
inline JointSpectralKernel restrict_to_island(const JointSpectralKernel& kernel, Band signal_band, Band idler_band) {
  if (!(signal_band.hi > signal_band.lo) || !(idler_band.hi > idler_band.lo)) {
    throw std::invalid_argument("restrict_to_island: empty band");
  }
  const auto& sg = kernel.signal_grid();
  const auto& ig = kernel.idler_grid();
  ComplexMatrix f = kernel.shape();
  for (Eigen::Index a = 0; a < f.rows(); ++a) {
    const double w1 = sg.omega(static_cast<std::size_t>(a));
    const bool in_s = w1 >= signal_band.lo && w1 <= signal_band.hi;
    for (Eigen::Index b = 0; b < f.cols(); ++b) {
      const double w2 = ig.omega(static_cast<std::size_t>(b));
      if (!in_s || w2 < idler_band.lo || w2 > idler_band.hi) f(a, b) = 0.0;
    }
  }
  const double kept = f.squaredNorm() * sg.d_omega() * ig.d_omega();
  if (!(kept > 1e-300)) throw numerical_error("restrict_to_island: band excludes all kernel support");
  const double discarded = std::clamp(1.0 - kept, 0.0, 1.0);
  return {sg, ig, std::move(f), kernel.strength(), discarded};
}

}  // namespace tmode
