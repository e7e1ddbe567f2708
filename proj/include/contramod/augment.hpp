#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "contramod/dataio.hpp"
#include "contramod/rng.hpp"

namespace contramod {

/// Quarter-turn rotation angles; the value counts multiples of pi/2.
enum class RotationAngle : std::uint8_t { Deg0 = 0, Deg90 = 1, Deg180 = 2, Deg270 = 3 };

inline constexpr std::array<RotationAngle, 4> kRotationAngles = {RotationAngle::Deg0, RotationAngle::Deg90,
                                                                 RotationAngle::Deg180, RotationAngle::Deg270};

constexpr RotationAngle compose(RotationAngle a, RotationAngle b) noexcept {
  return static_cast<RotationAngle>((static_cast<int>(a) + static_cast<int>(b)) % 4);
}
constexpr RotationAngle inverse(RotationAngle a) noexcept {
  return static_cast<RotationAngle>((4 - static_cast<int>(a)) % 4);
}
double radians(RotationAngle a) noexcept;

/// I' = I cos(theta) - Q sin(theta), Q' = I sin(theta) + Q cos(theta). With
/// cos/sin in {-1, 0, 1} every output value is an input value or its negation.
IQFrame rotate(const IQFrame& frame, RotationAngle theta);

RotationAngle draw_angle(CounterRng& rng) noexcept;

struct ViewPair {
  IQFrame view_i;
  IQFrame view_j;
  std::size_t source_index = 0;
  RotationAngle theta_i = RotationAngle::Deg0;
  RotationAngle theta_j = RotationAngle::Deg0;
};

/// Two independent uniform angle draws applied to the same frame.
ViewPair make_pair(const IQFrame& frame, CounterRng& rng, std::size_t source_index = 0);

}  // namespace contramod
