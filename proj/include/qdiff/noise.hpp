#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "qdiff/types.hpp"

namespace qdiff {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Output is
/// a pure function of (key, counter).
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Block generate(Block ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      const std::uint64_t p0 = std::uint64_t(kMul0) * ctr[0];
      const std::uint64_t p1 = std::uint64_t(kMul1) * ctr[2];
      ctr = {std::uint32_t(p1 >> 32) ^ ctr[1] ^ key[0], std::uint32_t(p1),
             std::uint32_t(p0 >> 32) ^ ctr[3] ^ key[1], std::uint32_t(p0)};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// One complex increment dξ_m per Lindblad operator for a single step.
template <typename Real>
struct BasicNoiseIncrements {
  CVector<Real> values;
  Real dt = 0;

  std::size_t size() const { return std::size_t(values.size()); }
  Complex<Real> operator[](std::size_t m) const { return values(Index(m)); }
};

using NoiseIncrements = BasicNoiseIncrements<double>;

/// Replayable stream of increments for one trajectory. The sequence is
/// determined by (seed, trajectory_index); `counter` counts complex draws.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, std::uint64_t trajectory_index)
      : seed_(seed), trajectory_(trajectory_index) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t trajectory_index() const { return trajectory_; }
  std::uint64_t counter() const { return counter_; }

  /// Two independent standard normals from one Philox block (Box–Muller).
  std::array<double, 2> next_normal_pair() {
    const Philox4x32::Block out = Philox4x32::generate(
        {std::uint32_t(counter_), std::uint32_t(counter_ >> 32), std::uint32_t(trajectory_),
         std::uint32_t(trajectory_ >> 32)},
        {std::uint32_t(seed_), std::uint32_t(seed_ >> 32)});
    ++counter_;
    const std::uint64_t a = (std::uint64_t(out[0]) << 32) | out[1];
    const std::uint64_t b = (std::uint64_t(out[2]) << 32) | out[3];
    // (0, 1], so the log is finite
    const double u1 = (double(a >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = double(b >> 11) * 0x1.0p-53;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
  }

 private:
  std::uint64_t seed_;
  std::uint64_t trajectory_;
  std::uint64_t counter_ = 0;
};

/// dξ_m = a_m + i b_m with a_m, b_m ~ N(0, dt) independent, so that
/// E[dξ] = 0, E[dξ_m dξ_n] = 0 and E[dξ_m dξ_n*] = 2 δ_mn dt.
template <typename Real = double>
BasicNoiseIncrements<Real> sample_increments(NoiseStream& stream, std::size_t m_count, Real dt) {
  if (!(dt > 0)) throw InvalidArgument("sample_increments: dt must be positive");
  if (m_count == 0) throw InvalidArgument("sample_increments: m_count must be >= 1");
  if (m_count > std::size_t(kMaxDim)) throw InvalidArgument("sample_increments: too many operators");
  BasicNoiseIncrements<Real> out;
  out.dt = dt;
  out.values.resize(Index(m_count));
  const Real scale = std::sqrt(dt);
  for (std::size_t m = 0; m < m_count; ++m) {
    const auto [a, b] = stream.next_normal_pair();
    out.values(Index(m)) = Complex<Real>(Real(a) * scale, Real(b) * scale);
  }
  return out;
}

/// Increments with caller-chosen values, used to force a noise realization.
template <typename Real = double>
BasicNoiseIncrements<Real> fixed_increments(std::initializer_list<Complex<Real>> values, Real dt) {
  BasicNoiseIncrements<Real> out;
  out.dt = dt;
  out.values.resize(Index(values.size()));
  Index i = 0;
  for (const auto& v : values) out.values(i++) = v;
  return out;
}

}  // namespace qdiff
