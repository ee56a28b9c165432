#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mif {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

inline constexpr double kPi = std::numbers::pi;

// Error hierarchy. Every failure mode named by the library contract has its own
// type so callers (and the CLI) can map them to outcomes and exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MIF_DEFINE_ERROR(Name)           \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  }

MIF_DEFINE_ERROR(EmptyInput);
MIF_DEFINE_ERROR(DegenerateOpacity);
MIF_DEFINE_ERROR(DegenerateWeight);
MIF_DEFINE_ERROR(InsufficientData);
MIF_DEFINE_ERROR(DimensionMismatch);
MIF_DEFINE_ERROR(NormalizationError);
MIF_DEFINE_ERROR(InvalidRegion);
MIF_DEFINE_ERROR(TargetNotFound);
MIF_DEFINE_ERROR(DegenerateView);
MIF_DEFINE_ERROR(AssetNotFound);
MIF_DEFINE_ERROR(DegenerateGeometry);
MIF_DEFINE_ERROR(TopologyError);
MIF_DEFINE_ERROR(DegenerateSupport);
MIF_DEFINE_ERROR(NoFeasibleStance);
MIF_DEFINE_ERROR(NoPath);
MIF_DEFINE_ERROR(ParseError);
MIF_DEFINE_ERROR(EventError);
MIF_DEFINE_ERROR(EmptySuite);
MIF_DEFINE_ERROR(IoError);

#undef MIF_DEFINE_ERROR

/// Wraps an angle to (-pi, pi].
inline double normalize_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

/// Rounds to 9 significant digits; all emitted numbers go through this.
double round_sig9(double x);

/// Formats with "%.9g".
std::string format_sig9(double x);

/// 64-bit FNV-1a, used to derive stable seeds from names.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Mixes two seeds into a new independent stream seed (splitmix64 finalizer).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace mif
