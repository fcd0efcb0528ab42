#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace rpo
{

    using Vec3 = Eigen::Vector3d;
    using Vec6 = Eigen::Matrix<double, 6, 1>;
    using Mat3 = Eigen::Matrix3d;
    using Mat6 = Eigen::Matrix<double, 6, 6>;
    using Mat63 = Eigen::Matrix<double, 6, 3>;

    inline constexpr double kPi = std::numbers::pi;
    inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
    inline constexpr double kDegToRad = std::numbers::pi / 180.0;

    inline constexpr double kMuEarth = 3.986e14;        // m^3/s^2
    inline constexpr double kEarthRadius = 6378136.0;   // m

    /// Base for every error raised by the library.
    struct Error : std::runtime_error
    {
        using std::runtime_error::runtime_error;
    };

    /// Iterative solver did not converge, or a matrix lost a required property.
    struct NumericalFailure : Error
    {
        using Error::Error;
    };

    /// Caller passed arguments outside an operation's preconditions.
    struct ContractViolation : Error
    {
        using Error::Error;
    };

    /// Parabolic or hyperbolic orbit handed to an elliptic-only routine.
    struct UnsupportedOrbit : Error
    {
        using Error::Error;
    };

    /// RTN frame cannot be built (target angular momentum vanishes).
    struct FrameUndefined : Error
    {
        using Error::Error;
    };

    /// Lambert iteration failed to bracket or converge.
    struct TargetingFailure : Error
    {
        using Error::Error;
    };

    /// Lambert transfer plane is undefined (collinear endpoints).
    struct GeometryError : Error
    {
        using Error::Error;
    };

    /// An impulse plan does not reproduce the mission's terminal state.
    struct InconsistentPlan : Error
    {
        using Error::Error;
    };

    /// Wraps an angle into [0, 2*pi).
    inline double wrap_two_pi(double angle)
    {
        double w = std::fmod(angle, kTwoPi);
        if (w < 0.0)
            w += kTwoPi;
        if (w >= kTwoPi)
            w = 0.0;
        return w;
    }

    /// Wraps an angle into [-pi, pi).
    inline double wrap_pi(double angle)
    {
        return wrap_two_pi(angle + kPi) - kPi;
    }

    inline bool all_finite(const auto &m)
    {
        return m.allFinite();
    }

} // namespace rpo
