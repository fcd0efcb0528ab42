#pragma once

// Angles-only extended Kalman filter on the relative state, used to check how
// well a trajectory makes the target's range observable.

#include "rpo/astro.hpp"
#include "rpo/nominal.hpp"
#include "rpo/random.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <vector>

namespace rpo
{

    struct EkfConfig
    {
        double dt{10.0};
        double sigma_s{1e-3};  ///< per-axis noise on the unit line of sight
        Vec6 sigma_w{(Vec6() << 50.0, 50.0, 50.0, 0.1, 0.1, 0.1).finished()};
        Vec6 sigma_x0{(Vec6() << 300.0, 100.0, 100.0, 0.3, 0.3, 0.3).finished()};
        /// Scales the process noise diag(sigma_w)^2 added per filter step. The
        /// default 0 leaves sigma_w to the measurement position scatter only.
        double process_noise_scale{0.0};
        /// Adds the bearing scatter of the measurement position noise to the filter's R.
        bool scatter_in_r{false};
        /// Corrupts the measured position with sigma_w before normalising.
        bool position_scatter{true};
        /// Resets the covariance to its initial value at each impulse.
        bool reset_at_impulse{false};
        std::uint64_t seed{1};

        void validate() const
        {
            if (!(dt > 0.0))
                throw ContractViolation("ekf requires dt > 0");
            if (!(sigma_s >= 0.0) || (sigma_w.array() < 0.0).any() || (sigma_x0.array() < 0.0).any() ||
                !sigma_w.allFinite() || !sigma_x0.allFinite())
                throw ContractViolation("ekf standard deviations must be finite and non-negative");
            if (!(process_noise_scale >= 0.0))
                throw ContractViolation("ekf process noise scale must be non-negative");
        }
    };

    /// Relative-state truth sampled on the filter grid, with the impulses it contains.
    struct TruthTrajectory
    {
        struct Impulse
        {
            std::size_t index{0};  ///< grid index at which the impulse is applied
            Vec3 dv_rtn{Vec3::Zero()};
        };

        KeplerianElements target_el0;  ///< target elements at `t0`
        GravityModel gravity;
        double t0{0.0};
        std::vector<double> times;
        std::vector<Vec6> states;  ///< RTN relative states, after any impulse at that epoch
        std::vector<Impulse> impulses;
    };

    /**
     * @brief Samples the nominal (or a maneuver-free) relative trajectory every dt.
     *
     * The first impulse is part of the initial state and the arrival burn at
     * t_f is left out, so the last sample is the uncertainty the filter
     * reaches at arrival. With `maneuvers` false the chaser coasts from the
     * unmaneuvered initial relative state.
     */
    inline TruthTrajectory sample_truth(const NominalTrajectory &nom, double dt, bool maneuvers = true)
    {
        if (!(dt > 0.0))
            throw ContractViolation("sample_truth requires dt > 0");
        const MissionConfig &m = nom.mission;
        TruthTrajectory tr;
        tr.target_el0 = m.target_el0;
        tr.gravity = m.gravity;
        tr.t0 = m.t0;
        const long count = static_cast<long>(std::floor((m.tf - m.t0) / dt + 1e-9));
        const double span = m.tf - m.t0;
        std::vector<KeplerOrbit> arcs;
        if (maneuvers)
            arcs = nom.arcs;
        else
            arcs.emplace_back(eci_to_kepler(rtn_relative_to_eci(m.x0_rel, nom.target.state_at(m.t0)), m.gravity),
                              m.t0, m.gravity);

        std::size_t seg = 0;
        for (long k = 0; k <= count; ++k)
        {
            const double t = m.t0 + std::min(span, k * dt);
            if (maneuvers)
                while (seg + 1 < arcs.size() && t >= nom.plan.node_times[seg + 1] - 1e-9)
                {
                    ++seg;
                    const AbsoluteState tgt = nom.target.state_at(t);
                    tr.impulses.push_back({static_cast<std::size_t>(k), RtnFrame::of(tgt).C * nom.plan.dv[seg]});
                }
            const AbsoluteState tgt = nom.target.state_at(t);
            tr.times.push_back(t);
            tr.states.push_back(eci_to_rtn_relative(arcs[seg].state_at(t), tgt).x);
        }
        return tr;
    }

    /// Unit line of sight corrupted by position scatter (sigma_w position block) and sensor noise.
    inline Vec3 simulate_measurement(const Vec3 &r, const EkfConfig &cfg, Rng &rng)
    {
        if (!(r.norm() > 0.0))
            throw ContractViolation("simulate_measurement requires a non-zero relative position");
        Vec3 re = r;
        if (cfg.position_scatter)
            for (int i = 0; i < 3; ++i)
                re[i] += cfg.sigma_w[i] * normal01(rng);
        Vec3 y = re.normalized();
        for (int i = 0; i < 3; ++i)
            y[i] += cfg.sigma_s * normal01(rng);
        return y;
    }

    /// Square root of the largest eigenvalue of the position block, m.
    inline double max_position_uncertainty(const Mat6 &P)
    {
        const Eigen::SelfAdjointEigenSolver<Mat3> es(P.topLeftCorner<3, 3>(), Eigen::EigenvaluesOnly);
        return std::sqrt(std::max(0.0, es.eigenvalues()[2]));
    }

    struct EkfHistory
    {
        std::vector<double> times;
        std::vector<Vec6> estimates;
        std::vector<Mat6> covariances;
        std::vector<double> max_pos_sigma;     ///< sqrt of the largest position eigenvalue, m
        std::vector<double> max_pos_eigen;     ///< the eigenvalue itself, m^2
        std::vector<Vec3> innovations;

        double final_sigma() const { return max_pos_sigma.back(); }
    };

    /// Range-blind bearing Jacobian (I - y y^T) / |r| on the position block.
    inline Eigen::Matrix<double, 3, 6> bearing_jacobian(const Vec3 &r)
    {
        const double rn = r.norm();
        if (!(rn > 0.0))
            throw NumericalFailure("bearing Jacobian undefined at zero range");
        const Vec3 y = r / rn;
        Eigen::Matrix<double, 3, 6> H = Eigen::Matrix<double, 3, 6>::Zero();
        H.leftCols<3>() = (Mat3::Identity() - y * y.transpose()) / rn;
        return H;
    }

    namespace detail
    {
        inline bool psd_within(const Mat6 &P, double tol)
        {
            const Eigen::SelfAdjointEigenSolver<Mat6> es(P, Eigen::EigenvaluesOnly);
            return es.eigenvalues()[0] > -tol * std::max(1.0, es.eigenvalues()[5]);
        }
    } // namespace detail

    /**
     * @brief Runs the filter along a sampled truth.
     *
     * Prediction uses the elliptic linear relative-motion transition matrix of
     * the target orbit. Each update is Joseph-form and followed by
     * symmetrisation. At an impulse the known velocity change is added to the
     * estimate (and the covariance optionally reset). A coasting arc under
     * linear dynamics leaves the range scale unobservable, so a reset at every
     * impulse discards exactly the information the maneuvers provide.
     */
    inline EkfHistory ekf_run(const TruthTrajectory &truth, const EkfConfig &cfg, Rng &rng)
    {
        cfg.validate();
        if (truth.times.size() < 2 || truth.states.size() != truth.times.size())
            throw ContractViolation("ekf_run requires at least two truth samples");
        for (std::size_t k = 1; k < truth.times.size(); ++k)
            if (truth.times[k] - truth.times[k - 1] > cfg.dt * (1.0 + 1e-9))
                throw ContractViolation("truth must be sampled at least at the filter step");

        const Mat6 P0 = cfg.sigma_x0.array().square().matrix().asDiagonal();
        const Mat6 Q = (cfg.process_noise_scale * cfg.sigma_w.array().square()).matrix().asDiagonal();
        const Mat3 R = cfg.sigma_s * cfg.sigma_s * Mat3::Identity();

        Vec6 x = truth.states[0];
        for (int i = 0; i < 6; ++i)
            x[i] += cfg.sigma_x0[i] * normal01(rng);
        Mat6 P = P0;

        EkfHistory h;
        const std::size_t n = truth.times.size();
        h.times.reserve(n);
        h.estimates.reserve(n);
        h.covariances.reserve(n);
        h.max_pos_sigma.reserve(n);
        h.max_pos_eigen.reserve(n);
        h.innovations.reserve(n);
        auto record = [&](double t, const Vec3 &innov) {
            h.times.push_back(t);
            h.estimates.push_back(x);
            h.covariances.push_back(P);
            const double s = max_position_uncertainty(P);
            h.max_pos_sigma.push_back(s);
            h.max_pos_eigen.push_back(s * s);
            h.innovations.push_back(innov);
        };
        record(truth.times[0], Vec3::Zero());

        std::size_t next_imp = 0;
        while (next_imp < truth.impulses.size() && truth.impulses[next_imp].index == 0)
            ++next_imp;

        for (std::size_t k = 1; k < n; ++k)
        {
            const double dt = truth.times[k] - truth.times[k - 1];
            const Mat6 phi = ya_stm(truth.target_el0, truth.times[k - 1] - truth.t0, dt, truth.gravity);
            x = phi * x;
            P = phi * P * phi.transpose() + Q;

            const Vec3 y = simulate_measurement(truth.states[k].head<3>(), cfg, rng);
            const Vec3 r_hat = x.head<3>();
            const Vec3 innov = y - r_hat.normalized();
            const Eigen::Matrix<double, 3, 6> H = bearing_jacobian(r_hat);
            Mat3 Rk = R;
            if (cfg.scatter_in_r && cfg.position_scatter)
            {
                const Mat3 Hr = H.leftCols<3>();
                Rk += Hr * cfg.sigma_w.head<3>().array().square().matrix().asDiagonal() * Hr.transpose();
            }
            const Mat3 S = H * P * H.transpose() + Rk;
            const Eigen::Matrix<double, 6, 3> K = P * H.transpose() * S.inverse();
            x += K * innov;
            const Mat6 IKH = Mat6::Identity() - K * H;
            P = IKH * P * IKH.transpose() + K * Rk * K.transpose();
            P = (0.5 * (P + P.transpose())).eval();
            if (!P.allFinite() || !x.allFinite())
                throw NumericalFailure("ekf state or covariance became non-finite");
            if (!detail::psd_within(P, 1e-9))
                throw NumericalFailure("ekf covariance lost positive semi-definiteness");

            while (next_imp < truth.impulses.size() && truth.impulses[next_imp].index == k)
            {
                x.tail<3>() += truth.impulses[next_imp].dv_rtn;
                if (cfg.reset_at_impulse)
                    P = P0;
                ++next_imp;
            }
            record(truth.times[k], innov);
        }
        return h;
    }

} // namespace rpo
