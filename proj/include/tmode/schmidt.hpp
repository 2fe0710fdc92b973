#pragma once

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <vector>

#include "tmode/jsf.hpp"
#include "tmode/spectral.hpp"

namespace tmode {

/// F(w1, w2) = G sum_k r_k psi_k(w1) phi_k(w2), truncated to the retained modes.
struct SchmidtDecomposition {
  FrequencyGrid signal_grid;
  FrequencyGrid idler_grid;
  double G = 0.0;
  std::vector<double> r;              // retained mode numbers, descending
  std::vector<SpectralField> psi;     // signal modes
  std::vector<SpectralField> phi;     // idler modes
  std::vector<double> spectrum;       // every computed singular value (sum of squares = 1)
  std::vector<bool> degenerate_with_next;

  std::size_t size() const { return r.size(); }
  double gain(std::size_t k) const { return r.at(k) * G; }
  double power_gain(std::size_t k) const {
    const double c = std::cosh(gain(k));
    return c * c;
  }

  SchmidtDecomposition with_strength(double new_G) const {
    SchmidtDecomposition d = *this;
    d.G = new_G;
    return d;
  }

  /// G sum_k r_k psi_k phi_k^T on the grids.
  ComplexMatrix reconstruct() const {
    ComplexMatrix m = ComplexMatrix::Zero(static_cast<Eigen::Index>(signal_grid.size()),
                                          static_cast<Eigen::Index>(idler_grid.size()));
    for (std::size_t k = 0; k < size(); ++k) {
      m.noalias() += (G * r[k]) * psi[k].amplitudes() * phi[k].amplitudes().transpose();
    }
    return m;
  }
};

struct DecomposeOptions {
  std::size_t max_modes = 0;               // 0: min(n_s, n_i)
  double retained_energy = 1.0 - 1e-6;     // smallest K with sum_{k<=K} r_k^2 above this
  double degenerate_tolerance = 1e-10;
};

namespace detail {

inline std::size_t largest_component(const ComplexVector& v) {
  Eigen::Index idx = 0;
  v.cwiseAbs().maxCoeff(&idx);
  return static_cast<std::size_t>(idx);
}

}  // namespace detail

/// SVD of the quadrature-weighted kernel sqrt(dw1 dw2) f. Singular vectors are
/// rescaled by 1/sqrt(dw) so the modes are orthonormal in the continuum sense.
/// Phase convention: each psi_k has its largest-magnitude sample real positive;
/// phi_k carries the compensating rotation.
inline SchmidtDecomposition decompose(const JointSpectralKernel& kernel, const DecomposeOptions& opt = {}) {
  const auto& sg = kernel.signal_grid();
  const auto& ig = kernel.idler_grid();
  const std::size_t full = std::min(sg.size(), ig.size());
  const std::size_t max_modes = opt.max_modes == 0 ? full : opt.max_modes;
  if (max_modes > full) throw std::invalid_argument("decompose: max_modes exceeds min(n_s, n_i)");
  if (!kernel.shape().allFinite()) throw numerical_error("decompose: non-finite kernel entries");

  const double ws = std::sqrt(sg.d_omega());
  const double wi = std::sqrt(ig.d_omega());
  const ComplexMatrix weighted = kernel.shape() * (ws * wi);
  Eigen::BDCSVD<ComplexMatrix> svd(weighted, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const RealVector& s = svd.singularValues();
  if (!s.allFinite()) throw numerical_error("decompose: SVD produced non-finite singular values");

  SchmidtDecomposition d{sg, ig, kernel.strength(), {}, {}, {}, {}, {}};
  d.spectrum.assign(s.data(), s.data() + s.size());

  std::size_t keep = 0;
  double acc = 0.0;
  while (keep < max_modes) {
    acc += s(static_cast<Eigen::Index>(keep)) * s(static_cast<Eigen::Index>(keep));
    ++keep;
    if (acc > opt.retained_energy) break;
  }

  for (std::size_t k = 0; k < keep; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    ComplexVector u = svd.matrixU().col(kk) / ws;
    ComplexVector v = svd.matrixV().col(kk).conjugate() / wi;
    const cplx pivot = u(static_cast<Eigen::Index>(detail::largest_component(u)));
    const cplx rot = std::abs(pivot) > 0 ? std::conj(pivot) / std::abs(pivot) : cplx(1.0, 0.0);
    u *= rot;
    v *= std::conj(rot);
    d.r.push_back(s(kk));
    d.psi.emplace_back(sg, std::move(u));
    d.phi.emplace_back(ig, std::move(v));
  }
  d.degenerate_with_next.assign(keep, false);
  for (std::size_t k = 0; k + 1 < keep; ++k) {
    d.degenerate_with_next[k] = std::abs(d.r[k] - d.r[k + 1]) < opt.degenerate_tolerance;
  }
  return d;
}

inline SchmidtDecomposition decompose(const JointSpectralKernel& kernel, std::size_t max_modes) {
  DecomposeOptions opt;
  opt.max_modes = max_modes;
  return decompose(kernel, opt);
}

/// G_k = r_k G.
inline double gain_of_mode(const SchmidtDecomposition& dec, std::size_t k) {
  if (k >= dec.size()) throw std::out_of_range("gain_of_mode: mode index out of range");
  return dec.gain(k);
}

/// Continuum kernels of the Bogoliubov map restricted to the retained span:
///   C(w, w')   = sum_k cosh(G_k) psi_k(w) conj(psi_k(w'))
///   S(w1, w2)  = sum_k sinh(G_k) psi_k(w1) phi_k(w2)
/// Applying them to a field integrates over the input grid.
struct BogoliubovKernels {
  FrequencyGrid signal_grid;
  FrequencyGrid idler_grid;
  ComplexMatrix C;
  ComplexMatrix S;
  ComplexMatrix projector;  // sum_k psi_k psi_k^dagger (continuum kernel)

  SpectralField apply_signal(const SpectralField& a) const {
    require_same_grid(a.grid(), signal_grid, "BogoliubovKernels::apply_signal");
    return {signal_grid, C * a.amplitudes() * signal_grid.d_omega()};
  }

  /// Idler output generated by a signal input a: integral S(w1, w) conj(a(w1)) dw1.
  SpectralField apply_cross_conjugate(const SpectralField& a) const {
    require_same_grid(a.grid(), signal_grid, "BogoliubovKernels::apply_cross_conjugate");
    return {idler_grid, S.transpose() * a.amplitudes().conjugate() * signal_grid.d_omega()};
  }

  /// || C C^dag - S S^dag - P ||_F / ||P||_F in the unitary (sqrt-weighted) basis.
  double symplectic_residual() const {
    const double ds = signal_grid.d_omega();
    const double di = idler_grid.d_omega();
    const ComplexMatrix c = C * ds;
    const ComplexMatrix s = S * std::sqrt(ds * di);
    const ComplexMatrix p = projector * ds;
    const double pn = p.norm();
    return (c * c.adjoint() - s * s.adjoint() - p).norm() / (pn > 0 ? pn : 1.0);
  }
};

inline BogoliubovKernels bogoliubov_kernels(const SchmidtDecomposition& dec) {
  const auto ns = static_cast<Eigen::Index>(dec.signal_grid.size());
  const auto ni = static_cast<Eigen::Index>(dec.idler_grid.size());
  BogoliubovKernels b{dec.signal_grid, dec.idler_grid, ComplexMatrix::Zero(ns, ns), ComplexMatrix::Zero(ns, ni),
                      ComplexMatrix::Zero(ns, ns)};
  for (std::size_t k = 0; k < dec.size(); ++k) {
    const ComplexVector& u = dec.psi[k].amplitudes();
    const ComplexVector& v = dec.phi[k].amplitudes();
    const double g = dec.gain(k);
    b.C.noalias() += std::cosh(g) * u * u.adjoint();
    b.S.noalias() += std::sinh(g) * u * v.transpose();
    b.projector.noalias() += u * u.adjoint();
  }
  return b;
}

}  // namespace tmode
