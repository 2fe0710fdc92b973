#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "tmode/schmidt.hpp"
#include "tmode/spectral.hpp"

namespace tmode {

struct SeededOutput {
  SpectralField signal_out;
  SpectralField idler_out;
  double power_gain_total = 1.0;  // |signal_out|^2 / |seed|^2
};

/// Stimulated (coherent-seed) response, spontaneous emission neglected:
///   signal = sum_k xi_k cosh(G_k) psi_k + (seed outside the retained span)
///   idler  = sum_k conj(xi_k) sinh(G_k) phi_k
inline SeededOutput amplify_seed(const SchmidtDecomposition& dec, const SpectralField& seed) {
  require_same_grid(seed.grid(), dec.signal_grid, "amplify_seed");
  const double in = seed.norm_squared();
  if (!(in > 0.0)) throw std::invalid_argument("amplify_seed: zero-norm seed");

  SpectralField signal = seed;
  SpectralField idler(dec.idler_grid);
  for (std::size_t k = 0; k < dec.size(); ++k) {
    const cplx xi = inner_product(dec.psi[k], seed);
    const double g = dec.gain(k);
    signal.amplitudes() += (xi * (std::cosh(g) - 1.0)) * dec.psi[k].amplitudes();
    idler.amplitudes() += (std::conj(xi) * std::sinh(g)) * dec.phi[k].amplitudes();
  }
  const double out = signal.norm_squared();
  return {std::move(signal), std::move(idler), out / in};
}

/// Optical spectrum analyser: intensity only, optional flat noise floor,
/// detector response curve and boxcar rebinning.
struct SpectrometerModel {
  double noise_floor = 0.0;
  std::vector<double> response;  // empty = flat
  std::size_t rebin = 1;         // boxcar width in bins, 1 = native grid
};

inline std::vector<double> measure_spectrum(const SpectralField& field, const SpectrometerModel& osa = {}) {
  if (!(osa.noise_floor >= 0.0)) throw std::invalid_argument("measure_spectrum: negative noise floor");
  if (osa.rebin == 0) throw std::invalid_argument("measure_spectrum: rebin width must be >= 1");
  const std::size_t n = field.size();
  if (!osa.response.empty() && osa.response.size() != n) {
    throw std::invalid_argument("measure_spectrum: response curve length does not match grid");
  }
  std::vector<double> s(n);
  for (std::size_t j = 0; j < n; ++j) {
    s[j] = std::norm(field[j]) * (osa.response.empty() ? 1.0 : osa.response[j]);
  }
  if (osa.rebin > 1) {
    const auto half = static_cast<std::ptrdiff_t>(osa.rebin / 2);
    std::vector<double> smooth(n);
    for (std::size_t j = 0; j < n; ++j) {
      const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(j) - half);
      const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1,
                                               static_cast<std::ptrdiff_t>(j) - half +
                                                   static_cast<std::ptrdiff_t>(osa.rebin) - 1);
      double acc = 0.0;
      for (auto t = lo; t <= hi; ++t) acc += s[static_cast<std::size_t>(t)];
      smooth[j] = acc / static_cast<double>(hi - lo + 1);
    }
    s.swap(smooth);
  }
  for (double& v : s) v += osa.noise_floor;
  return s;
}

inline std::vector<double> measure_spectrum(const SpectralField& field, double noise_floor) {
  SpectrometerModel osa;
  osa.noise_floor = noise_floor;
  return measure_spectrum(field, osa);
}

/// Amplifier backed by an exact decomposition. Anything with the same three
/// members can stand in for it in the mode iteration.
class SchmidtAmplifier {
 public:
  explicit SchmidtAmplifier(SchmidtDecomposition dec) : dec_(std::move(dec)) {}

  SeededOutput amplify(const SpectralField& seed) const { return amplify_seed(dec_, seed); }
  const FrequencyGrid& signal_grid() const { return dec_.signal_grid; }
  double leading_gain() const { return dec_.size() > 0 ? dec_.gain(0) : 0.0; }
  const SchmidtDecomposition& decomposition() const { return dec_; }

 private:
  SchmidtDecomposition dec_;
};

}  // namespace tmode
