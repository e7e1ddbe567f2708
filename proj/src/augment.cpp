#include "contramod/augment.hpp"

#include <numbers>

namespace contramod {

double radians(RotationAngle a) noexcept { return static_cast<int>(a) * std::numbers::pi / 2.0; }

IQFrame rotate(const IQFrame& frame, RotationAngle theta) {
  IQFrame out(frame.length());
  for (std::size_t t = 0; t < frame.length(); ++t) {
    const float i = frame.i(t);
    const float q = frame.q(t);
    switch (theta) {
      case RotationAngle::Deg0:
        out.i(t) = i;
        out.q(t) = q;
        break;
      case RotationAngle::Deg90:
        out.i(t) = -q;
        out.q(t) = i;
        break;
      case RotationAngle::Deg180:
        out.i(t) = -i;
        out.q(t) = -q;
        break;
      case RotationAngle::Deg270:
        out.i(t) = q;
        out.q(t) = -i;
        break;
    }
  }
  return out;
}

RotationAngle draw_angle(CounterRng& rng) noexcept { return static_cast<RotationAngle>(rng.below(4)); }

ViewPair make_pair(const IQFrame& frame, CounterRng& rng, std::size_t source_index) {
  ViewPair pair;
  pair.source_index = source_index;
  pair.theta_i = draw_angle(rng);
  pair.theta_j = draw_angle(rng);
  pair.view_i = rotate(frame, pair.theta_i);
  pair.view_j = rotate(frame, pair.theta_j);
  return pair;
}

}  // namespace contramod
