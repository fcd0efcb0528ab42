#pragma once

// Minimum-norm impulse meeting a single contraction constraint
// ||Phi (dx + M u)|| <= alpha ||dx||, with M selecting the velocity channel.

#include "rpo/core.hpp"

#include <Eigen/SVD>

namespace rpo
{

    struct QcqpResult
    {
        enum class Kind
        {
            interior,       ///< free drift already satisfies the bound
            active,         ///< constraint active, solved on the secular equation
            least_squares,  ///< bound unreachable; closest achievable deviation
        };

        Vec3 ddv{Vec3::Zero()};
        Vec6 dx_next{Vec6::Zero()};
        double lambda{0.0};  ///< multiplier of the scaled constraint, u + lambda A^T (A u + b) = 0
        Kind kind{Kind::interior};
    };

    inline QcqpResult qcqp_step(const Vec6 &dx, const Mat6 &phi, double alpha)
    {
        if (!(alpha >= 0.0))
            throw ContractViolation("qcqp_step requires alpha >= 0");
        const Mat63 A = phi.rightCols<3>();
        const Vec6 b = phi * dx;
        const double r = alpha * dx.norm();

        QcqpResult res;
        if (b.norm() <= r)
        {
            res.dx_next = b;
            return res;
        }

        const Eigen::JacobiSVD<Mat63> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const Vec3 s = svd.singularValues();
        const Mat63 U = svd.matrixU().leftCols<3>();
        const Mat3 V = svd.matrixV();
        const Vec3 c = U.transpose() * b;
        const double tol = 1e-13 * std::max(1.0, s[0]);
        const Vec6 b_perp = b - U * c;
        const double bp2 = b_perp.squaredNorm();

        // closest achievable deviation (least-norm least squares)
        double res2 = bp2;
        Vec3 u_ls = Vec3::Zero();
        for (int i = 0; i < 3; ++i)
        {
            if (s[i] > tol)
                u_ls -= (c[i] / s[i]) * V.col(i);
            else
                res2 += c[i] * c[i];
        }
        if (res2 >= r * r)
        {
            res.ddv = u_ls;
            res.dx_next = A * u_ls + b;
            res.kind = QcqpResult::Kind::least_squares;
            return res;
        }

        auto excess = [&](double lam) {
            double g = bp2 - r * r;
            for (int i = 0; i < 3; ++i)
            {
                const double den = s[i] > tol ? 1.0 + lam * s[i] * s[i] : 1.0;
                g += c[i] * c[i] / (den * den);
            }
            return g;
        };
        double lo = 0.0;
        double hi = 1.0 / (s[0] * s[0]);
        for (int it = 0; it < 2000 && excess(hi) > 0.0; ++it)
            hi *= 2.0;
        if (excess(hi) > 0.0)
            throw NumericalFailure("qcqp_step: secular equation could not be bracketed");
        for (int it = 0; it < 400; ++it)
        {
            const double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi)
                break;
            (excess(mid) > 0.0 ? lo : hi) = mid;
        }
        const double lam = hi;  // feasible side of the bracket
        Vec3 u = Vec3::Zero();
        for (int i = 0; i < 3; ++i)
            if (s[i] > tol)
                u -= (lam * s[i] * c[i] / (1.0 + lam * s[i] * s[i])) * V.col(i);
        res.ddv = u;
        res.dx_next = A * u + b;
        res.lambda = lam;
        res.kind = QcqpResult::Kind::active;
        return res;
    }

} // namespace rpo
