#pragma once

#include <cmath>
#include <vector>

#include "qdiff/sde.hpp"

namespace qdiff {

template <typename Real>
struct BasicMeanEvolution {
  std::vector<Real> times;
  std::vector<BasicDensityMatrix<Real>> states;
};

using MeanEvolution = BasicMeanEvolution<double>;

/// Classical RK4 on dρ/dt = Σ_m (2L_mρL_m† − L_m†L_mρ − ρL_m†L_m).
/// Returns steps+1 states including ρ(0).
template <typename Real>
BasicMeanEvolution<Real> evolve_mean(const BasicDensityMatrix<Real>& rho0,
                                     const BasicLindbladSet<Real>& ls, Real t_final, long steps) {
  if (rho0.dim() != ls.dim()) throw InvalidArgument("evolve_mean: dimension mismatch");
  if (!(t_final > 0) || steps < 1) throw InvalidArgument("evolve_mean: need t_final > 0, steps >= 1");
  const Real h = t_final / Real(steps);
  BasicMeanEvolution<Real> out;
  out.times.reserve(std::size_t(steps) + 1);
  out.states.reserve(std::size_t(steps) + 1);
  CMatrix<Real> rho = rho0.matrix();
  out.times.push_back(0);
  out.states.push_back(rho0);
  for (long s = 1; s <= steps; ++s) {
    const CMatrix<Real> k1 = lindblad_drift(rho, ls);
    const CMatrix<Real> k2 = lindblad_drift((rho + Real(0.5) * h * k1).eval(), ls);
    const CMatrix<Real> k3 = lindblad_drift((rho + Real(0.5) * h * k2).eval(), ls);
    const CMatrix<Real> k4 = lindblad_drift((rho + h * k3).eval(), ls);
    rho += (h / Real(6)) * (k1 + Real(2) * k2 + Real(2) * k3 + k4);
    if (!all_finite(rho)) {
      throw StepFailure(StepFailure::Kind::NonFinite, "evolve_mean: non-finite state");
    }
    out.times.push_back(h * Real(s));
    out.states.push_back(BasicDensityMatrix<Real>::unchecked(rho));
  }
  return out;
}

/// Same generator integrated with explicit Euler at step dt: the exact mean
/// of the Euler–Maruyama engines, used to size their first-order bias.
template <typename Real>
CMatrix<Real> euler_mean(const BasicDensityMatrix<Real>& rho0, const BasicLindbladSet<Real>& ls,
                         Real dt, long steps) {
  CMatrix<Real> rho = rho0.matrix();
  for (long s = 0; s < steps; ++s) rho += dt * lindblad_drift(rho, ls);
  return rho;
}

/// ρ_mn(t) = ρ_mn(0) exp(−(l_m − l_n)² t) for a diagonal observable.
template <typename Real>
Complex<Real> closed_form_offdiagonal(Complex<Real> rho0_mn, Real l_m, Real l_n, Real t) {
  const Real gap = l_m - l_n;
  return rho0_mn * std::exp(-gap * gap * t);
}

}  // namespace qdiff
