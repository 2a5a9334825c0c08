#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace rispos {

using cd = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSpeedOfLight = 3.0e8;

enum class ErrorCode {
    DegenerateGeometry,
    DimensionMismatch,
    ScheduleInfeasible,
    RankDeficient,
    SparsityInfeasible,
    SingularConcentration,
    BranchAmbiguity,
    OutOfRange,
    ZeroDenominator,
    InfeasibleGeometry,
    ArccosDomain,
    SingularDenominator,
    ConfigError,
    IoError,
};

const char* to_string(ErrorCode code);

/// Exception carrying a machine-readable error code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ScheduleInfeasible: return "ScheduleInfeasible";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::SparsityInfeasible: return "SparsityInfeasible";
    case ErrorCode::SingularConcentration: return "SingularConcentration";
    case ErrorCode::BranchAmbiguity: return "BranchAmbiguity";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::ZeroDenominator: return "ZeroDenominator";
    case ErrorCode::InfeasibleGeometry: return "InfeasibleGeometry";
    case ErrorCode::ArccosDomain: return "ArccosDomain";
    case ErrorCode::SingularDenominator: return "SingularDenominator";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

} // namespace rispos
