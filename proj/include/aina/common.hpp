#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace aina {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Point sets are stored one point per row.
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;
// Fingertip positions, rows ordered thumb, index, middle, ring, pinky.
using HandMatrix = Eigen::Matrix<double, 5, 3>;

inline constexpr int kNumFingertips = 5;
inline constexpr double kFrameRateHz = 10.0;

// Base class for every error thrown by the library. what() always starts
// with the error name so callers can match on it.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define AINA_DEFINE_ERROR(Name)                                          \
  struct Name : ::aina::Error {                                          \
    explicit Name(const std::string& detail = "")                        \
        : Error(detail.empty() ? std::string(#Name)                      \
                               : std::string(#Name) + ": " + detail) {}  \
  }

// geom
AINA_DEFINE_ERROR(DegenerateDisparity);
AINA_DEFINE_ERROR(NonPositiveDepth);
AINA_DEFINE_ERROR(DegenerateConfiguration);
AINA_DEFINE_ERROR(ParallelRays);

// demos
AINA_DEFINE_ERROR(MissingDepth);
AINA_DEFINE_ERROR(FrameCountMismatch);
AINA_DEFINE_ERROR(AllPointsInvisible);
AINA_DEFINE_ERROR(InvalidTrajectory);
AINA_DEFINE_ERROR(InvalidWorkspace);
AINA_DEFINE_ERROR(BadMagic);
AINA_DEFINE_ERROR(UnsupportedVersion);
AINA_DEFINE_ERROR(TruncatedFile);
AINA_DEFINE_ERROR(ChecksumMismatch);

// align
AINA_DEFINE_ERROR(NMismatch);

// policy
AINA_DEFINE_ERROR(ShapeMismatch);
AINA_DEFINE_ERROR(EmptyDataset);
AINA_DEFINE_ERROR(NonAlignedInput);
AINA_DEFINE_ERROR(VersionMismatch);

// kin
AINA_DEFINE_ERROR(JointLimitViolation);

// config / io plumbing
AINA_DEFINE_ERROR(BadConfig);
AINA_DEFINE_ERROR(IoError);

#undef AINA_DEFINE_ERROR

}  // namespace aina
