// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <span>

namespace ergo {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Derives an independent stream seed from a master seed and a path of
/// indices (chain index, step index, ...).  Pure function of its inputs,
/// so parallel workers can recreate any substream without shared state.
inline std::uint64_t substream_seed(std::uint64_t master,
                                    std::initializer_list<std::uint64_t> path) {
  std::uint64_t state = master;
  detail::splitmix64(state);
  for (std::uint64_t p : path) {
    state ^= p + 0x9e3779b97f4a7c15ULL;
    detail::splitmix64(state);
  }
  return detail::splitmix64(state);
}

/**
 * Deterministic random stream (xoshiro256++, state expanded from the
 * seed by splitmix64).  Uniform and normal variates are produced from
 * the raw engine output with fixed arithmetic (no reliance on
 * implementation-defined std distributions), so a seed pins every bit
 * of the output.  32 bytes of state keeps large arrays of per-chain
 * streams cheap.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : state_) word = detail::splitmix64(x);
  }

  std::uint64_t raw() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform draw in [0, 1).
  double uniform() {
    return static_cast<double>(raw() >> 11) * 0x1.0p-53;
  }

  /// Uniform draw in (0, 1], used where log(u) must stay finite.
  double uniform_positive() {
    return static_cast<double>((raw() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal draw (Box-Muller, pairs cached).
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = uniform_positive();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_ = radius * std::sin(angle);
    have_cached_ = true;
    return radius * std::cos(angle);
  }

  void fill_normal(std::span<double> out) {
    for (double& x : out) x = normal();
  }

  void fill_uniform(std::span<double> out) {
    for (double& x : out) x = uniform();
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace ergo
