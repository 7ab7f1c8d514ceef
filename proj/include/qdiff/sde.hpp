#pragma once

// Euler–Maruyama steppers for quantum state diffusion. All three engines
// consume the same NoiseIncrements so trajectories can be compared under
// shared noise.

#include <algorithm>
#include <cmath>
#include <string>

#include "qdiff/noise.hpp"
#include "qdiff/operators.hpp"

namespace qdiff {

/// Weight below which a linear-engine trajectory is declared dead.
inline constexpr double kWeightFloor = 1e-12;

enum class StepGuard { Ok, Warn };

/// Crude stability bound on dt·max‖L_m‖²: warn above 0.1, reject above 0.5.
template <typename Real>
StepGuard check_step_size(const BasicLindbladSet<Real>& ls, Real dt) {
  if (!(dt > 0)) throw InvalidArgument("dt must be positive");
  const Real load = dt * ls.max_norm_squared();
  if (load > Real(0.5)) {
    throw StepFailure(StepFailure::Kind::StepTooLarge,
                      "dt*max|L|^2 = " + std::to_string(load) + " exceeds 0.5");
  }
  return load > Real(0.1) ? StepGuard::Warn : StepGuard::Ok;
}

namespace detail {

template <typename Real>
void check_step_inputs(Index dim, const BasicLindbladSet<Real>& ls,
                       const BasicNoiseIncrements<Real>& dxi, Real dt) {
  if (ls.dim() != dim) throw InvalidArgument("state and Lindblad operators differ in dimension");
  if (dxi.size() != ls.size()) throw InvalidArgument("one noise increment per operator required");
  if (!(dt > 0)) throw InvalidArgument("dt must be positive");
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* engine) {
  if (!all_finite(m)) {
    throw StepFailure(StepFailure::Kind::NonFinite,
                      std::string(engine) + ": non-finite state (dt too large?)");
  }
}

}  // namespace detail

/// Diagnostics of one step: the size of the post-step repair and, for the
/// density engine, the smallest eigenvalue seen before clipping.
template <typename Real>
struct StepInfo {
  Real repair = 0;
  Real min_eigenvalue = 0;
};

struct StateVectorOptions {
  bool renormalize = true;
};

/// |dψ⟩ = Σ_m (2⟨L_m†⟩L_m − L_m†L_m − ⟨L_m†⟩⟨L_m⟩)|ψ⟩dt + Σ_m (L_m − ⟨L_m⟩)|ψ⟩dξ_m
/// with ⟨L⟩ = ⟨ψ|L|ψ⟩ taken from the input state.
template <typename Real>
BasicStateVector<Real> step_state_vector(const BasicStateVector<Real>& psi,
                                         const BasicLindbladSet<Real>& ls,
                                         const BasicNoiseIncrements<Real>& dxi, Real dt,
                                         StateVectorOptions opts = {},
                                         StepInfo<Real>* info = nullptr) {
  detail::check_step_inputs(psi.dim(), ls, dxi, dt);
  const auto& v = psi.amplitudes();
  if (opts.renormalize && std::abs(v.squaredNorm() - Real(1)) > kTolNorm) {
    throw InvalidArgument("state vector must be normalized");
  }
  CVector<Real> next = v;
  CVector<Real> lv(v.size());
  for (std::size_t m = 0; m < ls.size(); ++m) {
    lv.noalias() = ls[m] * v;
    const Complex<Real> ev = v.dot(lv);
    const Complex<Real> ev_dag = std::conj(ev);
    next += (Real(2) * ev_dag * dt + dxi[m]) * lv;
    next.noalias() -= dt * (ls.dagger_product(m) * v);
    next -= (ev_dag * ev * dt + ev * dxi[m]) * v;
  }
  detail::require_finite(next, "state-vector engine");
  if (opts.renormalize) {
    const Real n2 = next.squaredNorm();
    if (!(n2 > 0)) throw StepFailure(StepFailure::Kind::NonFinite, "state-vector engine: zero norm");
    if (info) info->repair = std::abs(n2 - Real(1));
    next /= std::sqrt(n2);
  }
  return BasicStateVector<Real>(std::move(next));
}

/// Negative-eigenvalue policy of the density engine. Eigenvalues in
/// [-clip, 0) are set to zero; below -reject the step fails. Values in
/// between are left in place.
struct DensityOptions {
  bool repair = true;
  double clip = kTolPsd;
  double reject = 0.25;
};

/// Drift Σ_m (2 L_m ρ L_m† − L_m†L_m ρ − ρ L_m†L_m).
template <typename Real, typename Derived>
CMatrix<Real> lindblad_drift(const Eigen::MatrixBase<Derived>& rho,
                             const BasicLindbladSet<Real>& ls) {
  CMatrix<Real> out = -(ls.k() * rho + rho * ls.k());
  for (std::size_t m = 0; m < ls.size(); ++m) {
    out.noalias() += Real(2) * ls[m] * rho * ls.adjoint(m);
  }
  return out;
}

namespace detail {

/// Re-symmetrize, renormalize the trace and apply the eigenvalue policy.
template <typename Real>
void repair_density(CMatrix<Real>& rho, const DensityOptions& opts, StepInfo<Real>* info) {
  const Real asym = hermitian_defect(rho);
  rho = (rho + rho.adjoint()).eval() * Real(0.5);
  const Real tr = rho.trace().real();
  if (!(tr > 0)) throw StepFailure(StepFailure::Kind::NonFinite, "density engine: non-positive trace");
  rho /= tr;
  if (info) info->repair = std::max(asym, std::abs(tr - Real(1)));

  Eigen::LLT<CMatrix<Real>> llt(rho);
  if (llt.info() == Eigen::Success) {
    if (info) info->min_eigenvalue = 0;
    return;
  }
  Eigen::SelfAdjointEigenSolver<CMatrix<Real>> es(rho);
  const Real lmin = es.eigenvalues().minCoeff();
  if (info) info->min_eigenvalue = lmin;
  if (lmin < -Real(opts.reject)) {
    throw StepFailure(StepFailure::Kind::NegativeEigenvalue,
                      "density engine: eigenvalue " + std::to_string(lmin) +
                          " below tolerance (dt too large)");
  }
  bool clipped = false;
  RVector<Real> ev = es.eigenvalues();
  for (Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < 0 && ev(i) >= -Real(opts.clip)) {
      ev(i) = 0;
      clipped = true;
    }
  }
  if (clipped) {
    rho = es.eigenvectors() * ev.template cast<Complex<Real>>().asDiagonal() *
          es.eigenvectors().adjoint();
    rho /= rho.trace().real();
  }
}

}  // namespace detail

/// dρ = Σ_m (2L_mρL_m† − L_m†L_mρ − ρL_m†L_m)dt
///    + Σ_m ((L_m − Tr(L_mρ))ρ dξ_m + ρ(L_m† − Tr(ρL_m†)) dξ_m*)
template <typename Real>
BasicDensityMatrix<Real> step_density_nonlinear(const BasicDensityMatrix<Real>& rho_in,
                                                const BasicLindbladSet<Real>& ls,
                                                const BasicNoiseIncrements<Real>& dxi, Real dt,
                                                DensityOptions opts = {},
                                                StepInfo<Real>* info = nullptr) {
  detail::check_step_inputs(rho_in.dim(), ls, dxi, dt);
  const auto& rho = rho_in.matrix();
  CMatrix<Real> next = rho;
  next.noalias() += dt * lindblad_drift(rho, ls);
  CMatrix<Real> noise(rho.rows(), rho.cols());
  for (std::size_t m = 0; m < ls.size(); ++m) {
    noise.noalias() = ls[m] * rho;
    const Complex<Real> ev = noise.trace();
    noise -= ev * rho;
    noise *= dxi[m];
    next += noise + noise.adjoint();
  }
  detail::require_finite(next, "density engine");
  if (opts.repair) detail::repair_density(next, opts, info);
  return BasicDensityMatrix<Real>::unchecked(std::move(next));
}

template <typename Real>
struct BasicLinearStep {
  BasicUnnormalizedState<Real> state;
  bool dead = false;
};

using LinearStep = BasicLinearStep<double>;

/// dR = Σ_m (L_m R dξ_m + R L_m† dξ_m* + (2L_m R L_m† − L_m†L_m R − R L_m†L_m)dt),
/// w ← Tr R. If the new weight falls below kWeightFloor the input state is
/// returned unchanged with `dead` set.
template <typename Real>
BasicLinearStep<Real> step_linear(const BasicUnnormalizedState<Real>& state,
                                  const BasicLindbladSet<Real>& ls,
                                  const BasicNoiseIncrements<Real>& dxi, Real dt) {
  detail::check_step_inputs(state.r.rows(), ls, dxi, dt);
  const auto& r = state.r;
  CMatrix<Real> next = r;
  next.noalias() += dt * lindblad_drift(r, ls);
  CMatrix<Real> noise(r.rows(), r.cols());
  for (std::size_t m = 0; m < ls.size(); ++m) {
    noise.noalias() = ls[m] * r;
    noise *= dxi[m];
    next += noise + noise.adjoint();
  }
  detail::require_finite(next, "linear engine");
  next = (next + next.adjoint()).eval() * Real(0.5);
  const Real w = next.trace().real();
  if (!(w >= Real(kWeightFloor))) return {state, true};
  return {{std::move(next), w}, false};
}

/// dM = Σ_m (L_m dξ_m − L_m†L_m dt) M. Validation path for R = Mρ⁽ⁱ⁾M†.
template <typename Real>
CMatrix<Real> step_propagator(const CMatrix<Real>& m_op, const BasicLindbladSet<Real>& ls,
                              const BasicNoiseIncrements<Real>& dxi, Real dt) {
  detail::check_step_inputs(m_op.rows(), ls, dxi, dt);
  CMatrix<Real> gen = -dt * ls.k();
  for (std::size_t m = 0; m < ls.size(); ++m) gen += dxi[m] * ls[m];
  CMatrix<Real> next = m_op;
  next.noalias() += gen * m_op;
  detail::require_finite(next, "propagator");
  return next;
}

/// ρ = R / w.
template <typename Real>
BasicDensityMatrix<Real> normalize(const BasicUnnormalizedState<Real>& s) {
  if (!(s.w > 0)) throw InvalidArgument("normalize: weight must be positive");
  return BasicDensityMatrix<Real>::unchecked(s.r / s.w);
}

/// dρ = (1/w) dR − (dw/w) ρ for consecutive linear-engine states.
template <typename Real>
CMatrix<Real> weighted_step_differential(const BasicUnnormalizedState<Real>& state,
                                         const BasicUnnormalizedState<Real>& next) {
  if (!(state.w > 0)) throw InvalidArgument("weighted differential: weight must be positive");
  if (next.r.rows() != state.r.rows()) throw InvalidArgument("weighted differential: dimension mismatch");
  const Real dw = next.w - state.w;
  return (next.r - state.r) / state.w - (dw / state.w) * (state.r / state.w);
}

}  // namespace qdiff
