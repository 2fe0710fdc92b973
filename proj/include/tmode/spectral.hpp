/*
 * spectral.hpp: frequency grids, complex spectral fields and temporal profiles.
 *
 * All frequencies are dimensionless, in units of the pump bandwidth sigma_p.
 * A field a(w) sampled on a uniform grid carries the continuum inner product
 *
 *   <a, b> = sum_j conj(a_j) b_j dw
 *
 * and its temporal profile is the Fourier synthesis
 *
 *   f(t) = integral dw a(w) exp(-i w t),
 *
 * sampled on N points with dt = 2 pi / (N dw), so that
 * sum_m |f_m|^2 dt / (2 pi) == sum_j |a_j|^2 dw exactly.
 */

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <sstream>
#include <vector>

#include "tmode/error.hpp"

namespace tmode {

using cplx = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;

class FrequencyGrid {
 public:
  FrequencyGrid(double omega_min, double omega_max, std::size_t n_points)
      : omega_min_(omega_min), omega_max_(omega_max), n_(n_points) {
    if (n_points < 2) throw std::invalid_argument("FrequencyGrid: n_points must be >= 2");
    if (!std::isfinite(omega_min) || !std::isfinite(omega_max) || !(omega_max > omega_min)) {
      throw std::invalid_argument("FrequencyGrid: require finite omega_min < omega_max");
    }
  }

  /// Grid centred on zero: [-half_width, half_width].
  static FrequencyGrid symmetric(double half_width, std::size_t n_points) {
    return {-half_width, half_width, n_points};
  }

  double omega_min() const { return omega_min_; }
  double omega_max() const { return omega_max_; }
  std::size_t size() const { return n_; }
  double d_omega() const { return (omega_max_ - omega_min_) / static_cast<double>(n_ - 1); }
  double omega(std::size_t j) const {
    return j + 1 == n_ ? omega_max_ : omega_min_ + static_cast<double>(j) * d_omega();
  }

  RealVector omegas() const {
    RealVector w(static_cast<Eigen::Index>(n_));
    for (std::size_t j = 0; j < n_; ++j) w(static_cast<Eigen::Index>(j)) = omega(j);
    return w;
  }

  /// Nearest grid index, clamped to the grid.
  std::size_t nearest_index(double w) const {
    const double x = std::round((w - omega_min_) / d_omega());
    if (x <= 0) return 0;
    if (x >= static_cast<double>(n_ - 1)) return n_ - 1;
    return static_cast<std::size_t>(x);
  }

  bool operator==(const FrequencyGrid&) const = default;

 private:
  double omega_min_;
  double omega_max_;
  std::size_t n_;
};

inline std::string describe(const FrequencyGrid& g) {
  std::ostringstream os;
  os << "[" << g.omega_min() << ", " << g.omega_max() << "] x " << g.size();
  return os.str();
}

inline void require_same_grid(const FrequencyGrid& a, const FrequencyGrid& b, const char* where) {
  if (!(a == b)) {
    throw grid_mismatch(std::string(where) + ": grid " + describe(a) + " vs " + describe(b));
  }
}

class SpectralField {
 public:
  explicit SpectralField(FrequencyGrid grid)
      : grid_(grid), amp_(ComplexVector::Zero(static_cast<Eigen::Index>(grid.size()))) {}

  SpectralField(FrequencyGrid grid, ComplexVector amplitudes) : grid_(grid), amp_(std::move(amplitudes)) {
    if (static_cast<std::size_t>(amp_.size()) != grid_.size()) {
      throw std::invalid_argument("SpectralField: amplitude length does not match grid");
    }
  }

  static SpectralField from_function(const FrequencyGrid& grid, const std::function<cplx(double)>& f) {
    ComplexVector a(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t j = 0; j < grid.size(); ++j) a(static_cast<Eigen::Index>(j)) = f(grid.omega(j));
    return {grid, std::move(a)};
  }

  /// exp(-(w - center)^2 / (2 width^2)), unnormalized.
  static SpectralField gaussian(const FrequencyGrid& grid, double center, double width) {
    return from_function(grid, [=](double w) {
      const double x = (w - center) / width;
      return cplx(std::exp(-0.5 * x * x), 0.0);
    });
  }

  const FrequencyGrid& grid() const { return grid_; }
  const ComplexVector& amplitudes() const { return amp_; }
  ComplexVector& amplitudes() { return amp_; }
  std::size_t size() const { return grid_.size(); }
  cplx operator[](std::size_t j) const { return amp_(static_cast<Eigen::Index>(j)); }

  double norm_squared() const { return amp_.squaredNorm() * grid_.d_omega(); }
  double norm() const { return std::sqrt(norm_squared()); }

  SpectralField normalized() const {
    const double n = norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw numerical_error("SpectralField::normalized: zero or non-finite norm");
    return {grid_, amp_ / n};
  }

  bool is_finite() const { return amp_.allFinite(); }

  SpectralField& operator+=(const SpectralField& o) {
    require_same_grid(grid_, o.grid_, "SpectralField::operator+=");
    amp_ += o.amp_;
    return *this;
  }
  SpectralField& operator-=(const SpectralField& o) {
    require_same_grid(grid_, o.grid_, "SpectralField::operator-=");
    amp_ -= o.amp_;
    return *this;
  }
  SpectralField& operator*=(cplx s) {
    amp_ *= s;
    return *this;
  }

  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(cplx s, SpectralField a) { return a *= s; }
  friend SpectralField operator*(SpectralField a, cplx s) { return a *= s; }

 private:
  FrequencyGrid grid_;
  ComplexVector amp_;
};

inline cplx inner_product(const SpectralField& a, const SpectralField& b) {
  require_same_grid(a.grid(), b.grid(), "inner_product");
  return a.amplitudes().dot(b.amplitudes()) * a.grid().d_omega();  // Eigen dot conjugates the left operand
}

/// Largest |<b_i, b_j> - delta_ij| over a set of fields.
inline double orthonormality_defect(std::span<const SpectralField> basis) {
  double worst = 0.0;
  for (std::size_t i = 0; i < basis.size(); ++i) {
    for (std::size_t j = i; j < basis.size(); ++j) {
      const cplx ip = inner_product(basis[i], basis[j]);
      worst = std::max(worst, std::abs(ip - cplx(i == j ? 1.0 : 0.0, 0.0)));
    }
  }
  return worst;
}

struct ProjectionResult {
  SpectralField remainder;
  std::vector<cplx> coefficients;  // xi_i = <basis_i, field>
  bool degenerate = false;         // remainder norm below floor * input norm
};

/// alpha' = alpha - sum_i <psi_i, alpha> psi_i over an orthonormal basis.
inline ProjectionResult gram_schmidt_project_out(const SpectralField& field, std::span<const SpectralField> basis,
                                                 double degenerate_floor = 1e-6) {
  const double in_norm = field.norm();
  if (!(in_norm > 0.0)) throw std::invalid_argument("gram_schmidt_project_out: zero-norm input field");
  for (const auto& b : basis) require_same_grid(field.grid(), b.grid(), "gram_schmidt_project_out");
  if (orthonormality_defect(basis) > 1e-8) {
    throw std::invalid_argument("gram_schmidt_project_out: basis is not orthonormal within 1e-8");
  }

  ProjectionResult out{field, {}, false};
  out.coefficients.reserve(basis.size());
  for (const auto& b : basis) {
    const cplx xi = inner_product(b, out.remainder);
    out.coefficients.push_back(xi);
    out.remainder.amplitudes() -= xi * b.amplitudes();
  }
  out.degenerate = out.remainder.norm() < degenerate_floor * in_norm;
  return out;
}

inline ProjectionResult gram_schmidt_project_out(const SpectralField& field, const std::vector<SpectralField>& basis,
                                                 double degenerate_floor = 1e-6) {
  return gram_schmidt_project_out(field, std::span<const SpectralField>(basis), degenerate_floor);
}

struct TemporalProfile {
  RealVector times;
  ComplexVector values;
  double d_tau = 0.0;

  /// sum |f|^2 dt / (2 pi); equals the spectral norm^2 (Parseval).
  double norm_squared() const { return values.squaredNorm() * d_tau / (2.0 * std::numbers::pi); }

  /// Index of t = 0 on the time grid.
  std::size_t zero_index() const { return static_cast<std::size_t>(times.size() / 2); }
};

/// Direct O(N^2) synthesis f(t_m) = sum_j a_j exp(-i w_j t_m) dw on t_m = m dt,
/// m = -N/2 .. N - 1 - N/2.
inline TemporalProfile to_temporal(const SpectralField& field) {
  const auto& g = field.grid();
  const auto n = static_cast<Eigen::Index>(g.size());
  const double dw = g.d_omega();
  const double dt = 2.0 * std::numbers::pi / (static_cast<double>(n) * dw);

  TemporalProfile p;
  p.d_tau = dt;
  p.times.resize(n);
  p.values.resize(n);
  const Eigen::Index m0 = n / 2;
  for (Eigen::Index m = 0; m < n; ++m) {
    const double t = static_cast<double>(m - m0) * dt;
    p.times(m) = t;
    cplx acc{0.0, 0.0};
    for (Eigen::Index j = 0; j < n; ++j) {
      acc += field.amplitudes()(j) * std::polar(1.0, -g.omega(static_cast<std::size_t>(j)) * t);
    }
    p.values(m) = acc * dw;
  }
  return p;
}

}  // namespace tmode
