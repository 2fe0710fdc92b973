/*
 * quantum.hpp: Gaussian quadrature statistics of the unseeded amplifier output.
 *
 * Quadratures X = a + a^dag, Y = (a - a^dag)/i with vacuum variance 1, so the
 * Duan bound I_u = 1 + 1 = 2. Each signal/idler pair (s_k, i_k) is two-mode
 * squeezed with G_k; loss and LO mode mismatch act as an effective efficiency
 * e = eta * lo_overlap admixing vacuum:
 *
 *   <D^2 X_sk> = e_s (cosh 2G_k - 1) + 1
 *   <DX_sk DX_ik> = sqrt(e_s e_i) sinh 2G_k,   <DY_sk DY_ik> = -<DX_sk DX_ik>
 *
 * and every other cross-moment vanishes.
 */

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "tmode/random.hpp"
#include "tmode/spectral.hpp"

namespace tmode {

enum class Beam { signal, idler };
enum class Quadrature { X, Y };

struct ModeLabel {
  Beam beam = Beam::signal;
  std::size_t order = 1;  // k >= 1

  std::string name() const { return (beam == Beam::signal ? "s" : "i") + std::to_string(order); }
  bool operator==(const ModeLabel&) const = default;
};

/// {s1..sK, iK..i1}.
inline std::vector<ModeLabel> covariance_labels(std::size_t K) {
  std::vector<ModeLabel> out;
  for (std::size_t k = 1; k <= K; ++k) out.push_back({Beam::signal, k});
  for (std::size_t k = K; k >= 1; --k) out.push_back({Beam::idler, k});
  return out;
}

struct QuadratureModel {
  std::vector<double> gains;  // G_k
  std::vector<double> efficiency_signal;
  std::vector<double> efficiency_idler;
  std::vector<double> lo_overlap_signal;
  std::vector<double> lo_overlap_idler;

  static QuadratureModel uniform(std::vector<double> gains, double eta_signal = 1.0, double eta_idler = 1.0,
                                 double lo_overlap = 1.0) {
    const std::size_t K = gains.size();
    QuadratureModel m{std::move(gains), std::vector<double>(K, eta_signal), std::vector<double>(K, eta_idler),
                      std::vector<double>(K, lo_overlap), std::vector<double>(K, lo_overlap)};
    m.validate();
    return m;
  }

  /// G_k from measured power gains cosh^2 G_k.
  static QuadratureModel from_power_gains(const std::vector<double>& power_gains, double eta_signal = 1.0,
                                          double eta_idler = 1.0) {
    std::vector<double> g;
    for (double p : power_gains) {
      if (!(p >= 1.0)) throw std::invalid_argument("QuadratureModel: power gain below 1");
      g.push_back(std::acosh(std::sqrt(p)));
    }
    return uniform(std::move(g), eta_signal, eta_idler);
  }

  std::size_t modes() const { return gains.size(); }

  void validate() const {
    const std::size_t K = gains.size();
    auto unit = [](const std::vector<double>& v, std::size_t n, const char* what) {
      if (v.size() != n) throw std::invalid_argument(std::string("QuadratureModel: wrong length for ") + what);
      for (double x : v) {
        if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument(std::string("QuadratureModel: ") + what + " outside [0,1]");
      }
    };
    for (double g : gains) {
      if (!std::isfinite(g) || g < 0.0) throw std::invalid_argument("QuadratureModel: gains must be finite and >= 0");
    }
    unit(efficiency_signal, K, "efficiency_signal");
    unit(efficiency_idler, K, "efficiency_idler");
    unit(lo_overlap_signal, K, "lo_overlap_signal");
    unit(lo_overlap_idler, K, "lo_overlap_idler");
  }

  double effective_efficiency(const ModeLabel& m) const {
    const std::size_t k = index(m);
    return m.beam == Beam::signal ? efficiency_signal[k] * lo_overlap_signal[k]
                                  : efficiency_idler[k] * lo_overlap_idler[k];
  }

  std::size_t index(const ModeLabel& m) const {
    if (m.order < 1 || m.order > modes()) throw std::out_of_range("QuadratureModel: mode order " + std::to_string(m.order));
    return m.order - 1;
  }
};

struct Moments {
  double var_m = 1.0;
  double var_n = 1.0;
  double covar = 0.0;
};

inline double analytic_variance(const QuadratureModel& model, const ModeLabel& m) {
  const double g = model.gains[model.index(m)];
  return model.effective_efficiency(m) * (std::cosh(2.0 * g) - 1.0) + 1.0;
}

inline Moments analytic_moments(const QuadratureModel& model, const ModeLabel& m, const ModeLabel& n,
                                Quadrature q = Quadrature::X) {
  Moments out{analytic_variance(model, m), analytic_variance(model, n), 0.0};
  if (m == n) {
    out.covar = out.var_m;
  } else if (m.order == n.order && m.beam != n.beam) {
    const double g = model.gains[model.index(m)];
    const double c = std::sqrt(model.effective_efficiency(m) * model.effective_efficiency(n)) * std::sinh(2.0 * g);
    out.covar = q == Quadrature::X ? c : -c;
  }
  return out;
}

/// Raw second-moment matrix over `labels`.
inline Eigen::MatrixXd quadrature_covariance(const QuadratureModel& model, const std::vector<ModeLabel>& labels,
                                             Quadrature q) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      m(a, b) = analytic_moments(model, labels[static_cast<std::size_t>(a)], labels[static_cast<std::size_t>(b)], q).covar;
    }
  }
  return m;
}

/// Homodyne variance with an arbitrary normalized LO on one beam:
///   sum_{k,k'} Re(conj a_k a_k') <DO_k DO_k'> + (1 - sum |a_k|^2),
/// a_k = <mode_k, LO>. The last term is vacuum from LO content outside the basis.
inline double homodyne_variance(const QuadratureModel& model, Beam beam, const SpectralField& lo,
                                const std::vector<SpectralField>& mode_basis, Quadrature q = Quadrature::X) {
  if (std::abs(lo.norm_squared() - 1.0) > 1e-8) throw std::invalid_argument("homodyne_variance: LO is not normalized");
  if (mode_basis.size() > model.modes()) throw std::invalid_argument("homodyne_variance: more basis modes than model modes");
  if (orthonormality_defect(mode_basis) > 1e-8) throw std::invalid_argument("homodyne_variance: basis not orthonormal");
  std::vector<cplx> a;
  double captured = 0.0;
  for (const auto& m : mode_basis) {
    a.push_back(inner_product(m, lo));
    captured += std::norm(a.back());
  }
  double v = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t l = 0; l < a.size(); ++l) {
      const double cov = analytic_moments(model, {beam, k + 1}, {beam, l + 1}, q).covar;
      v += (std::conj(a[k]) * a[l]).real() * cov;
    }
  }
  return v + std::max(0.0, 1.0 - captured);
}

// ---------------------------------------------------------------------------

struct CovarianceReport {
  std::vector<ModeLabel> labels;
  Eigen::MatrixXd C_X, C_Y;           // normalized, unit diagonal
  Eigen::MatrixXd moments_X, moments_Y;  // raw second moments
  Eigen::MatrixXd se_X, se_Y;         // standard errors (zero for analytic)
  std::size_t sample_count = 0;       // per quadrature, 0 for analytic
  std::string method = "analytic";
};

struct CovarianceMethod {
  enum class Kind { analytic, monte_carlo } kind = Kind::analytic;
  std::size_t samples = 0;
  std::uint64_t rng_seed = 0;

  static CovarianceMethod analytic() { return {}; }
  static CovarianceMethod monte_carlo(std::size_t samples, std::uint64_t seed) {
    return {Kind::monte_carlo, samples, seed};
  }
};

namespace detail {

inline Eigen::MatrixXd normalize_covariance(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd c(m.rows(), m.cols());
  for (Eigen::Index a = 0; a < m.rows(); ++a) {
    for (Eigen::Index b = 0; b < m.cols(); ++b) c(a, b) = a == b ? 1.0 : m(a, b) / std::sqrt(m(a, a) * m(b, b));
  }
  return c;
}

/// Lower-triangular factor L with L L^T = m; eigen-decomposition fallback for
/// semidefinite input.
inline Eigen::MatrixXd sampling_factor(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

/// One homodyne measurement setting: the observed quantity is weights . x.
struct Setting {
  Eigen::VectorXd weights;
};

struct Accum {
  double sum = 0.0, sum2 = 0.0;
  std::size_t n = 0;
  void add(double y) {
    sum += y;
    sum2 += y * y;
    ++n;
  }
  double variance() const {
    const double mean = sum / static_cast<double>(n);
    return (sum2 - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1);
  }
};

/// Monte Carlo replay of the measurement protocol for one quadrature.
/// Settings: every single mode, signal-idler differences O_m - O_n, and for
/// same-beam pairs a superposed LO (psi_m + psi_n)/sqrt 2 giving
/// (O_m + O_n)/sqrt 2. Each setting draws its own independent shots.
inline void monte_carlo_quadrature(const Eigen::MatrixXd& moments, const std::vector<ModeLabel>& labels,
                                   std::size_t samples, std::uint64_t seed, std::uint64_t stream_base,
                                   Eigen::MatrixXd& C, Eigen::MatrixXd& se, Eigen::MatrixXd& raw) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  std::vector<Setting> settings;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> pair_of;  // (-1,-1) for singles
  for (Eigen::Index a = 0; a < n; ++a) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
    w(a) = 1.0;
    settings.push_back({w});
    pair_of.emplace_back(a, a);
  }
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = a + 1; b < n; ++b) {
      Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
      if (labels[static_cast<std::size_t>(a)].beam != labels[static_cast<std::size_t>(b)].beam) {
        w(a) = 1.0;
        w(b) = -1.0;
      } else {
        w(a) = w(b) = 1.0 / std::sqrt(2.0);
      }
      settings.push_back({w});
      pair_of.emplace_back(a, b);
    }
  }
  const std::size_t per_setting = samples / settings.size();
  if (per_setting < 4) throw std::invalid_argument("build_covariance_matrix: too few samples per measurement setting");
  const std::size_t batches = std::clamp<std::size_t>(per_setting / 50, 2, 20);

  const Eigen::MatrixXd L = sampling_factor(moments);
  // variances[s][b]: batch b of setting s; index batches == pooled
  std::vector<std::vector<double>> variances(settings.size(), std::vector<double>(batches + 1));
  Eigen::VectorXd z(n);
  for (std::size_t s = 0; s < settings.size(); ++s) {
    CounterStream rng(seed, stream_base + s);
    const Eigen::VectorXd proj = L.transpose() * settings[s].weights;  // y = w.(L z) = (L^T w).z
    std::vector<Accum> acc(batches);
    Accum all;
    for (std::size_t i = 0; i < per_setting; ++i) {
      for (Eigen::Index t = 0; t < n; ++t) z(t) = rng.normal();
      const double y = proj.dot(z);
      acc[std::min(i * batches / per_setting, batches - 1)].add(y);
      all.add(y);
    }
    for (std::size_t b = 0; b < batches; ++b) variances[s][b] = acc[b].variance();
    variances[s][batches] = all.variance();
  }

  auto assemble = [&](std::size_t b) {
    Eigen::MatrixXd m(n, n);
    for (std::size_t s = 0; s < settings.size(); ++s) {
      const auto [a, c] = pair_of[s];
      if (a == c) m(a, a) = variances[s][b];
    }
    for (std::size_t s = 0; s < settings.size(); ++s) {
      const auto [a, c] = pair_of[s];
      if (a == c) continue;
      const double v = variances[s][b];
      const double cov = labels[static_cast<std::size_t>(a)].beam != labels[static_cast<std::size_t>(c)].beam
                             ? 0.5 * (m(a, a) + m(c, c) - v)
                             : v - 0.5 * (m(a, a) + m(c, c));
      m(a, c) = m(c, a) = cov;
    }
    return m;
  };

  raw = assemble(batches);
  C = normalize_covariance(raw);
  Eigen::MatrixXd s1 = Eigen::MatrixXd::Zero(n, n), s2 = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t b = 0; b < batches; ++b) {
    const Eigen::MatrixXd cb = normalize_covariance(assemble(b));
    s1 += cb;
    s2 += cb.cwiseProduct(cb);
  }
  const double B = static_cast<double>(batches);
  const Eigen::MatrixXd mean = s1 / B;
  const Eigen::MatrixXd var = ((s2 - B * mean.cwiseProduct(mean)) / (B - 1.0)).cwiseMax(0.0);
  se = (var / B).cwiseSqrt();
}

}  // namespace detail

inline CovarianceReport build_covariance_matrix(const QuadratureModel& model, std::size_t K,
                                                const CovarianceMethod& method = CovarianceMethod::analytic()) {
  model.validate();
  if (K < 1) throw std::invalid_argument("build_covariance_matrix: K must be >= 1");
  if (K > model.modes()) throw std::invalid_argument("build_covariance_matrix: K exceeds model modes");
  CovarianceReport r;
  r.labels = covariance_labels(K);
  r.moments_X = quadrature_covariance(model, r.labels, Quadrature::X);
  r.moments_Y = quadrature_covariance(model, r.labels, Quadrature::Y);
  const auto n = static_cast<Eigen::Index>(r.labels.size());
  if (method.kind == CovarianceMethod::Kind::analytic) {
    r.C_X = detail::normalize_covariance(r.moments_X);
    r.C_Y = detail::normalize_covariance(r.moments_Y);
    r.se_X = r.se_Y = Eigen::MatrixXd::Zero(n, n);
    return r;
  }
  if (method.samples < 100) throw std::invalid_argument("build_covariance_matrix: Monte Carlo needs >= 100 samples");
  r.method = "monte_carlo";
  r.sample_count = method.samples;
  const Eigen::MatrixXd mx = r.moments_X, my = r.moments_Y;
  detail::monte_carlo_quadrature(mx, r.labels, method.samples, method.rng_seed, 0, r.C_X, r.se_X, r.moments_X);
  detail::monte_carlo_quadrature(my, r.labels, method.samples, method.rng_seed, 1u << 20, r.C_Y, r.se_Y, r.moments_Y);
  return r;
}

/// Layout of a printed covariance matrix: label header, two decimals.
inline std::string render_table(const Eigen::MatrixXd& C, const std::vector<ModeLabel>& labels) {
  std::ostringstream os;
  os << "      ";
  for (const auto& l : labels) os << "  " << l.name() << "  ";
  os << '\n';
  char buf[32];
  for (Eigen::Index a = 0; a < C.rows(); ++a) {
    os << labels[static_cast<std::size_t>(a)].name() << "  ";
    if (labels[static_cast<std::size_t>(a)].name().size() < 3) os << ' ';
    for (Eigen::Index b = 0; b < C.cols(); ++b) {
      std::snprintf(buf, sizeof buf, " %5.2f ", C(a, b));
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Entanglement bookkeeping

struct DuanResult {
  double I = 2.0;
  double dB = 0.0;  // 10 log10(I / 2)
};

/// I_k = <D^2(X_s - X_i)>/2 + <D^2(Y_s + Y_i)>/2 (vacuum references 2 each).
inline DuanResult duan_criterion(const QuadratureModel& model, std::size_t k) {
  const ModeLabel s{Beam::signal, k}, i{Beam::idler, k};
  const Moments x = analytic_moments(model, s, i, Quadrature::X);
  const Moments y = analytic_moments(model, s, i, Quadrature::Y);
  const double dx = x.var_m + x.var_n - 2.0 * x.covar;
  const double dy = y.var_m + y.var_n + 2.0 * y.covar;
  DuanResult r;
  r.I = 0.5 * dx + 0.5 * dy;
  r.dB = 10.0 * std::log10(r.I / 2.0);
  return r;
}

inline double duan_from_db(double dB) { return 2.0 * std::pow(10.0, dB / 10.0); }

/// Undo vacuum admixture V_obs = eta V_src + (1 - eta) on a normalized variance in dB.
inline double efficiency_correct(double measured_dB, double eta) {
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("efficiency_correct: eta must be in (0, 1]");
  const double v_obs = std::pow(10.0, measured_dB / 10.0);
  const double v_src = (v_obs - 1.0 + eta) / eta;
  if (!(v_src > 0.0)) throw numerical_error("efficiency_correct: efficiency too low for this measurement (V_src <= 0)");
  return 10.0 * std::log10(v_src);
}

/// eta such that efficiency_correct(measured_dB, eta) == corrected_dB.
inline double infer_efficiency(double measured_dB, double corrected_dB) {
  const double v_obs = std::pow(10.0, measured_dB / 10.0);
  const double v_src = std::pow(10.0, corrected_dB / 10.0);
  if (std::abs(1.0 - v_src) < 1e-15) throw numerical_error("infer_efficiency: corrected value at the vacuum level");
  const double eta = (1.0 - v_obs) / (1.0 - v_src);
  if (!(eta > 0.0 && eta <= 1.0 + 1e-12)) throw numerical_error("infer_efficiency: pair implies eta outside (0, 1]");
  return eta;
}

}  // namespace tmode
