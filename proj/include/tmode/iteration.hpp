/*
 * iteration.hpp: eigen temporal modes by seeded feedback iteration.
 *
 * One step: project the seed out of the already-known modes, send it through
 * the amplifier, feed the output spectrum back as the next seed (complex, or
 * intensity-only with sign flips at spectral zeros), attenuate, repeat. After
 * N steps the seed is sum_k xi_k (cosh G_k / cosh G_1)^N psi_k, so the
 * largest-gain mode left in the deflated space survives.
 */

#pragma once

#include <cmath>
#include <concepts>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tmode/amplifier.hpp"
#include "tmode/spectral.hpp"

namespace tmode {

template <class A>
concept SeededAmplifier = requires(const A& amp, const SpectralField& seed) {
  { amp.amplify(seed) } -> std::convertible_to<SeededOutput>;
  { amp.signal_grid() } -> std::convertible_to<FrequencyGrid>;
  { amp.leading_gain() } -> std::convertible_to<double>;
};

enum class FeedbackMode { full_complex, intensity_only };
enum class AttenuationPolicy { normalize, divide_by_cosh_G1 };

inline const char* to_string(FeedbackMode m) {
  return m == FeedbackMode::full_complex ? "full_complex" : "intensity_only";
}
inline const char* to_string(AttenuationPolicy p) {
  return p == AttenuationPolicy::normalize ? "normalize" : "divide_by_cosh_G1";
}

struct IterationConfig {
  int max_iterations = 50;
  std::optional<double> convergence_overlap;  // default: 1 - 1e-9 (complex), 1 - 1e-6 (intensity)
  FeedbackMode feedback_mode = FeedbackMode::full_complex;
  double zero_detection_threshold = 0.05;  // fraction of peak amplitude
  AttenuationPolicy attenuation_policy = AttenuationPolicy::normalize;
  double degenerate_floor = 1e-6;  // seed remainder / seed norm below this is rejected
  double gain_floor = 1e-9;        // power gain - 1 below this: no usable gain
                                   // (raised to 100 (1 - convergence) sinh^2 G1, the leak from imperfect deflation)
  SpectrometerModel spectrometer;

  double effective_convergence_overlap() const {
    if (convergence_overlap) return *convergence_overlap;
    return feedback_mode == FeedbackMode::full_complex ? 1.0 - 1e-9 : 1.0 - 1e-6;
  }

  void validate() const {
    const double c = effective_convergence_overlap();
    if (!(c > 0.0 && c < 1.0)) throw std::invalid_argument("IterationConfig: convergence_overlap must be in (0, 1)");
    if (max_iterations < 1) throw std::invalid_argument("IterationConfig: max_iterations must be >= 1");
    if (!(zero_detection_threshold > 0.0)) throw std::invalid_argument("IterationConfig: zero threshold must be > 0");
    if (!(degenerate_floor > 0.0) || !(gain_floor > 0.0)) {
      throw std::invalid_argument("IterationConfig: floors must be > 0");
    }
  }
};

enum class ModeStatus {
  converged,
  not_converged,   // max_iterations reached
  no_gain,         // power gain indistinguishable from 1
  degenerate,      // gain equal to a neighbour's within 1e-6 relative
  seed_exhausted,  // nothing left of the seed after deflation
  after_failure,   // deflated against an earlier mode that did not converge
};

inline const char* to_string(ModeStatus s) {
  switch (s) {
    case ModeStatus::converged: return "converged";
    case ModeStatus::not_converged: return "not_converged";
    case ModeStatus::no_gain: return "no_gain";
    case ModeStatus::degenerate: return "degenerate";
    case ModeStatus::seed_exhausted: return "seed_exhausted";
    case ModeStatus::after_failure: return "after_failure";
  }
  return "unknown";
}

struct IterationStep {
  int step = 0;
  double overlap = 0.0;       // |<alpha_N, alpha_{N+1}>| of normalized iterates
  double gain_estimate = 0.0; // output / input energy at this step
};

struct ModeExtractionResult {
  std::size_t mode_index = 0;  // k, 1-based
  SpectralField mode;          // normalized
  int iterations_used = 0;
  std::vector<double> overlap_history;
  std::vector<IterationStep> trace;
  double power_gain = 1.0;
  bool converged = false;
  ModeStatus status = ModeStatus::not_converged;

  /// Converged with a gain clearly above unity and not degenerate.
  bool reliable() const { return status == ModeStatus::converged; }
};

/// Called after every step with the (attenuated) next seed.
using IterationObserver = std::function<void(int step, const SpectralField& iterate, double gain_estimate)>;

// ---------------------------------------------------------------------------
// Intensity-only feedback

struct SignReconstruction {
  std::vector<double> amplitude;        // signed sqrt of the spectrum
  std::vector<std::size_t> flip_at;     // first bin of each new sign segment
};

/// Real amplitude from an intensity spectrum, with a pi phase jump at every
/// spectral zero. Candidates are local minima of sqrt(spectrum) strictly inside
/// the support (first..last bin above threshold * peak). The amplitude slopes
/// on both flanks (bins j-2,j-1 and j+1,j+2) are extended to their
/// intersection; the minimum is a zero when that V-shaped extrapolation lies
/// below threshold * peak, and the flip starts at the first bin past the
/// intersection. Near the grid edges the sampled minimum itself is compared.
/// Flips closer than 2 bins are merged into one.
inline SignReconstruction reconstruct_signed_amplitude(const std::vector<double>& spectrum, double threshold) {
  const std::size_t n = spectrum.size();
  SignReconstruction out;
  out.amplitude.resize(n);
  for (std::size_t j = 0; j < n; ++j) out.amplitude[j] = std::sqrt(std::max(spectrum[j], 0.0));
  if (n < 3) return out;

  const auto& a = out.amplitude;
  const double peak = *std::max_element(a.begin(), a.end());
  if (!(peak > 0.0)) return out;
  const double cut = threshold * peak;
  std::size_t first = n, last = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (a[j] >= cut) {
      first = std::min(first, j);
      last = j;
    }
  }
  if (first >= last) return out;

  for (std::size_t j = first + 1; j < last; ++j) {
    if (!(a[j] <= a[j - 1] && a[j] <= a[j + 1])) continue;
    std::size_t start;
    if (j >= 2 && j + 2 < n) {
      const double sl = a[j - 1] - a[j - 2];
      const double sr = a[j + 2] - a[j + 1];
      if (!(sl < 0.0 && sr > 0.0)) continue;
      // a[j-1] + sl (x - (j-1)) = a[j+1] + sr (x - (j+1)), x relative to j
      const double x = (a[j + 1] - a[j - 1] - sr - sl) / (sl - sr);
      const double v = a[j - 1] + sl * (x + 1.0);
      if (!(v < cut) || x < -1.0 || x > 1.0) continue;
      start = static_cast<std::size_t>(static_cast<double>(j) + std::floor(x) + 1.0);
    } else {
      if (!(a[j] < cut)) continue;
      start = a[j - 1] < a[j + 1] ? j : j + 1;
    }
    if (!out.flip_at.empty() && start < out.flip_at.back() + 2) continue;
    out.flip_at.push_back(start);
  }
  double sign = 1.0;
  std::size_t next = 0;
  for (std::size_t j = 0; j < n; ++j) {
    while (next < out.flip_at.size() && out.flip_at[next] == j) {
      sign = -sign;
      ++next;
    }
    out.amplitude[j] *= sign;
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace detail {

inline SpectralField attenuate(const SpectralField& f, AttenuationPolicy policy, double leading_gain) {
  if (policy == AttenuationPolicy::normalize) return f.normalized();
  return f * cplx(1.0 / std::cosh(leading_gain), 0.0);
}

inline double normalized_overlap(const SpectralField& a, const SpectralField& b) {
  return std::abs(inner_product(a, b)) / (a.norm() * b.norm());
}

}  // namespace detail

/// Extract the k-th mode (1-based) given the k-1 modes already found.
template <SeededAmplifier Amp>
ModeExtractionResult extract_mode(const Amp& amp, std::size_t k, const std::vector<SpectralField>& known_modes,
                                  const SpectralField& seed, const IterationConfig& cfg,
                                  const IterationObserver& observer = {}) {
  cfg.validate();
  require_same_grid(seed.grid(), amp.signal_grid(), "extract_mode");
  if (orthonormality_defect(known_modes) > 1e-6) {
    throw std::invalid_argument("extract_mode: known modes are not orthonormal within 1e-6");
  }
  const double threshold = cfg.effective_convergence_overlap();
  const double g1 = amp.leading_gain();

  auto deflate = [&](const SpectralField& f) {
    SpectralField rem = f;
    for (const auto& q : known_modes) rem.amplitudes() -= inner_product(q, rem) * q.amplitudes();
    return rem;
  };

  SpectralField current = deflate(seed);
  if (current.norm() < cfg.degenerate_floor * seed.norm() || !(current.norm() > 0.0)) {
    throw std::invalid_argument("extract_mode: seed has no component orthogonal to the known modes");
  }
  if (cfg.attenuation_policy == AttenuationPolicy::normalize) current = current.normalized();

  ModeExtractionResult res{k, current.normalized(), 0, {}, {}, 1.0, false, ModeStatus::not_converged};
  for (int step = 1; step <= cfg.max_iterations; ++step) {
    const SeededOutput out = amp.amplify(current);
    SpectralField fed(current.grid());
    double gain = 0.0;
    if (cfg.feedback_mode == FeedbackMode::full_complex) {
      fed = out.signal_out;
      gain = out.power_gain_total;
    } else {
      const std::vector<double> spec = measure_spectrum(out.signal_out, cfg.spectrometer);
      const SignReconstruction rec = reconstruct_signed_amplitude(spec, cfg.zero_detection_threshold);
      ComplexVector v(static_cast<Eigen::Index>(spec.size()));
      double measured = 0.0;
      for (std::size_t j = 0; j < spec.size(); ++j) {
        v(static_cast<Eigen::Index>(j)) = rec.amplitude[j];
        measured += spec[j];
      }
      fed = SpectralField(current.grid(), std::move(v));
      gain = measured * current.grid().d_omega() / current.norm_squared();
    }
    fed = deflate(fed);
    if (!(fed.norm() > 0.0) || !fed.is_finite()) {
      throw numerical_error("extract_mode: feedback field vanished or became non-finite");
    }
    SpectralField next = detail::attenuate(fed, cfg.attenuation_policy, g1);
    const double ov = detail::normalized_overlap(current, next);

    res.overlap_history.push_back(ov);
    res.trace.push_back({step, ov, gain});
    res.iterations_used = step;
    res.power_gain = gain;
    if (observer) observer(step, next, gain);
    current = std::move(next);
    if (ov >= threshold) {
      res.converged = true;
      break;
    }
  }
  res.mode = current.normalized();
  if (!res.converged) {
    res.status = ModeStatus::not_converged;
  } else if (res.power_gain - 1.0 < std::max(cfg.gain_floor, 100.0 * (1.0 - threshold) * std::pow(std::sinh(g1), 2))) {
    res.status = ModeStatus::no_gain;
  } else {
    res.status = ModeStatus::converged;
  }
  return res;
}

/// Gaussian seed centred a quarter width off the signal marginal's mean and as
/// wide as the marginal, so that it overlaps even and odd modes alike.
inline SpectralField default_seed(const SchmidtDecomposition& dec) {
  const auto& g = dec.signal_grid;
  double m0 = 0.0, m1 = 0.0, m2 = 0.0;
  for (std::size_t k = 0; k < dec.size(); ++k) {
    const double w = dec.r[k] * dec.r[k];
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double p = w * std::norm(dec.psi[k][j]);
      m0 += p;
      m1 += p * g.omega(j);
      m2 += p * g.omega(j) * g.omega(j);
    }
  }
  const double mean = m1 / m0;
  const double rms = std::sqrt(std::max(m2 / m0 - mean * mean, 1e-12));
  return SpectralField::gaussian(g, mean + 0.25 * rms, rms).normalized();
}

/// arccosh(sqrt(gain)) = G_k.
inline double gain_parameter_from_power_gain(double power_gain) {
  if (!(power_gain >= 1.0)) throw std::invalid_argument("power gain below 1");
  return std::acosh(std::sqrt(power_gain));
}

/// Sequential extraction with an accumulating deflation basis. Failures are
/// recorded on the result rather than thrown.
template <SeededAmplifier Amp>
std::vector<ModeExtractionResult> extract_all_modes(const Amp& amp, std::size_t K, const SpectralField& seed,
                                                    const IterationConfig& cfg) {
  if (K < 1) throw std::invalid_argument("extract_all_modes: K must be >= 1");
  std::vector<ModeExtractionResult> results;
  std::vector<SpectralField> known;
  for (std::size_t k = 1; k <= K; ++k) {
    try {
      results.push_back(extract_mode(amp, k, known, seed, cfg));
    } catch (const std::invalid_argument&) {
      ModeExtractionResult r{k, SpectralField(amp.signal_grid()), 0, {}, {}, 1.0, false, ModeStatus::seed_exhausted};
      results.push_back(std::move(r));
      continue;
    }
    // keep the basis orthonormal to round-off for the next deflation
    SpectralField m = results.back().mode;
    for (const auto& q : known) m.amplitudes() -= inner_product(q, m) * q.amplitudes();
    known.push_back(m.normalized());
  }
  // a leftover of an unconverged mode stays in the seed and leaks its gain
  // into every later stage, which can then look stationary after one step
  bool failed = false;
  for (auto& r : results) {
    if (failed && r.status == ModeStatus::converged) r.status = ModeStatus::after_failure;
    if (r.status == ModeStatus::not_converged || r.status == ModeStatus::no_gain ||
        r.status == ModeStatus::seed_exhausted) {
      failed = true;
    }
  }
  for (std::size_t i = 0; i + 1 < results.size(); ++i) {
    auto& a = results[i];
    auto& b = results[i + 1];
    if (a.status != ModeStatus::converged || b.status != ModeStatus::converged) continue;
    const double ga = gain_parameter_from_power_gain(a.power_gain);
    const double gb = gain_parameter_from_power_gain(b.power_gain);
    if (std::abs(ga - gb) < 1e-6 * ga) {
      a.status = ModeStatus::degenerate;
      b.status = ModeStatus::degenerate;
    }
  }
  return results;
}

template <SeededAmplifier Amp>
std::vector<ModeExtractionResult> extract_all_modes(const Amp& amp, std::size_t K, const IterationConfig& cfg)
  requires requires(const Amp& a) { a.decomposition(); }
{
  return extract_all_modes(amp, K, default_seed(amp.decomposition()), cfg);
}

/// r_k / r_1 = arccosh(sqrt(gain_k)) / arccosh(sqrt(gain_1)).
inline std::vector<double> extract_mode_numbers(const std::vector<double>& power_gains) {
  if (power_gains.empty()) return {};
  std::vector<double> out;
  out.reserve(power_gains.size());
  for (double g : power_gains) {
    if (!(g > 1.0)) throw std::invalid_argument("extract_mode_numbers: power gain <= 1, pump too weak to resolve modes");
  }
  const double g1 = gain_parameter_from_power_gain(power_gains.front());
  out.push_back(1.0);
  for (std::size_t k = 1; k < power_gains.size(); ++k) out.push_back(gain_parameter_from_power_gain(power_gains[k]) / g1);
  return out;
}

inline std::vector<double> extract_mode_numbers(const std::vector<ModeExtractionResult>& results) {
  std::vector<double> gains;
  for (const auto& r : results) {
    if (!r.converged) throw std::invalid_argument("extract_mode_numbers: unconverged mode in input");
    gains.push_back(r.power_gain);
  }
  return extract_mode_numbers(gains);
}

}  // namespace tmode
