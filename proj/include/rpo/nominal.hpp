#pragma once

// Nominal multi-impulse transfer design: objective evaluation with a
// Lambert-closed final segment, swarm optimisation and weight calibration.

#include "rpo/astro.hpp"
#include "rpo/metrics.hpp"
#include "rpo/pso.hpp"

#include <array>
#include <vector>

namespace rpo
{

    using Weights = std::array<double, 3>;  ///< (delta-v, observability, safety)

    inline constexpr double kLambertFailurePenalty = 1e12;
    inline constexpr double kWeightFloor = 1e-9;

    struct MissionConfig
    {
        double t0{0.0};
        double tf{21600.0};
        int n{6};  ///< nominal impulse nodes
        KeplerianElements target_el0{kEarthRadius + 300e3, 0.0, 99.8 * kDegToRad, 0.0, 0.0, 0.0};
        RelativeState x0_rel{};
        RelativeState xf_rel{};
        double dv_lim{10.0};  ///< per-component bound on free impulses, m/s
        int n_grid{1000};
        SafetyConfig safety{};
        GravityModel gravity{};
        RnVariant rn_variant{RnVariant::as_written};

        void validate() const
        {
            if (!(tf > t0))
                throw ContractViolation("mission requires tf > t0");
            if (n < 3)
                throw ContractViolation("mission requires at least 3 nodes");
            if (!(dv_lim > 0.0))
                throw ContractViolation("mission requires dv_lim > 0");
            if (n_grid < 2)
                throw ContractViolation("mission requires n_grid >= 2");
            if (!x0_rel.x.allFinite() || !xf_rel.x.allFinite())
                throw ContractViolation("mission relative states must be finite");
            target_el0.validate();
            safety.validate();
            gravity.validate();
        }

        double segment_duration() const { return (tf - t0) / (n - 1); }
        double node_time(int k) const { return k == n - 1 ? tf : t0 + k * segment_duration(); }
        int free_impulses() const { return n - 2; }
    };

    /// Far-range V-bar approach with the reference parameter set.
    inline MissionConfig reference_mission()
    {
        MissionConfig m;
        m.x0_rel.x << 1.0, 100e3, 5.0, -0.02, 0.01, 0.0;
        m.xf_rel.x << 0.0, 1000.0, 0.0, 0.0, 0.0, 0.0;
        m.safety = SafetyConfig::make(500.0, 5400.0);
        return m;
    }

    struct ImpulsePlan
    {
        std::vector<double> node_times;
        std::vector<Vec3> dv;  ///< ECI, m/s

        double total_dv() const
        {
            double s = 0.0;
            for (const auto &d : dv)
                s += d.norm();
            return s;
        }

        void validate(const MissionConfig &m) const
        {
            if (static_cast<int>(node_times.size()) != m.n || static_cast<int>(dv.size()) != m.n)
                throw ContractViolation("impulse plan must have one time and one impulse per node");
            for (int k = 0; k < m.n; ++k)
            {
                if (std::abs(node_times[k] - m.node_time(k)) > 1e-6)
                    throw ContractViolation("impulse plan node times do not match the mission layout");
                if (!dv[k].allFinite())
                    throw ContractViolation("impulse plan contains non-finite impulses");
            }
            for (int k = 0; k < m.free_impulses(); ++k)
                if ((dv[k].cwiseAbs().array() > m.dv_lim * (1.0 + 1e-12)).any())
                    throw ContractViolation("free impulse exceeds the per-component bound");
        }
    };

    struct ObjectiveBreakdown
    {
        double g_total{0.0};
        double g_dv{0.0};
        double g_obs{0.0};
        double g_safety{0.0};
        Weights gamma{1.0, 0.0, 0.0};
        bool lambert_failed{false};
    };

    /// Extra output of a trajectory walk, used to materialise the nominal profiles.
    struct WalkDetail
    {
        std::vector<SegmentProfile> profiles;
        std::vector<KeplerOrbit> arcs;            ///< maneuvered arc of each segment
        std::vector<KeplerOrbit> ballistic_arcs;  ///< arc if the segment's impulse is missed
        std::vector<Vec3> dv;
        AbsoluteState final_state;  ///< after the arrival impulse
    };

    /**
     * @brief Mission objective with cached target samples.
     *
     * Segment k is propagated on linspace(t_k, t_k+1, n_grid); every segment
     * after the first drops its start point, which belongs to the previous one.
     */
    class ObjectiveEvaluator
    {
    public:
        explicit ObjectiveEvaluator(const MissionConfig &m) : m_(m)
        {
            m_.validate();
            target_ = KeplerOrbit(m_.target_el0, m_.t0, m_.gravity);
            const AbsoluteState tgt0 = target_.state_at(m_.t0);
            chaser0_ = rtn_relative_to_eci(m_.x0_rel, tgt0);
            const AbsoluteState tgtf = target_.state_at(m_.tf);
            xf_ = rtn_relative_to_eci(m_.xf_rel, tgtf);
            normal_ = tgt0.r.cross(tgt0.v);
            const int segs = m_.n - 1;
            grid_times_.resize(segs);
            grid_target_.resize(segs);
            node_target_.resize(m_.n);
            for (int k = 0; k < m_.n; ++k)
                node_target_[k] = target_.state_at(m_.node_time(k));
            for (int s = 0; s < segs; ++s)
            {
                const double a = m_.node_time(s);
                const double b = m_.node_time(s + 1);
                for (int k = (s == 0 ? 0 : 1); k < m_.n_grid; ++k)
                {
                    const double t = k == m_.n_grid - 1 ? b : a + (b - a) * k / (m_.n_grid - 1);
                    grid_times_[s].push_back(t);
                    grid_target_[s].push_back(target_.state_at(t).r);
                }
            }
        }

        const MissionConfig &mission() const { return m_; }
        const KeplerOrbit &target_orbit() const { return target_; }
        const AbsoluteState &chaser_initial() const { return chaser0_; }
        const AbsoluteState &terminal_state() const { return xf_; }
        const AbsoluteState &target_at_node(int k) const { return node_target_[k]; }

        int dimension() const { return 3 * m_.free_impulses(); }

        std::vector<Vec3> free_to_impulses(const Eigen::VectorXd &dv_free) const
        {
            if (dv_free.size() != dimension())
                throw ContractViolation("free impulse vector has the wrong length");
            std::vector<Vec3> dv(m_.n, Vec3::Zero());
            for (int k = 0; k < m_.free_impulses(); ++k)
                dv[k] = dv_free.segment<3>(3 * k);
            return dv;
        }

        /// Objective of a free-impulse vector; the final two impulses come from Lambert targeting.
        ObjectiveBreakdown evaluate(const Eigen::VectorXd &dv_free, const Weights &gamma,
                                    WalkDetail *detail = nullptr) const
        {
            std::vector<Vec3> dv = free_to_impulses(dv_free);
            try
            {
                return walk(dv, true, gamma, detail);
            }
            catch (const TargetingFailure &)
            {
            }
            catch (const GeometryError &)
            {
            }
            ObjectiveBreakdown b;
            b.gamma = gamma;
            b.g_total = kLambertFailurePenalty;
            b.lambert_failed = true;
            return b;
        }

        /// Complete plan (with Lambert pair) for a free-impulse vector.
        ImpulsePlan plan_for(const Eigen::VectorXd &dv_free) const
        {
            WalkDetail d;
            walk(free_to_impulses(dv_free), true, {1.0, 0.0, 0.0}, &d);
            ImpulsePlan p;
            for (int k = 0; k < m_.n; ++k)
                p.node_times.push_back(m_.node_time(k));
            p.dv = d.dv;
            return p;
        }

        /**
         * @brief Propagates the chaser through all segments and sums the metrics.
         *
         * With `close_with_lambert` the last two entries of `dv` are replaced by
         * the Lambert pair reaching the terminal state.
         */
        ObjectiveBreakdown walk(std::vector<Vec3> dv, bool close_with_lambert, const Weights &gamma,
                                WalkDetail *detail) const
        {
            const int n = m_.n;
            const double W = m_.safety.pas_window;
            AbsoluteState x = chaser0_;
            double g_obs = 0.0, g_safety = 0.0;
            if (detail)
            {
                detail->profiles.assign(n - 1, SegmentProfile{});
                detail->arcs.clear();
                detail->ballistic_arcs.clear();
            }
            for (int s = 0; s < n - 1; ++s)
            {
                const double ts = m_.node_time(s);
                const AbsoluteState &tgt = node_target_[s];
                if (s == n - 2 && close_with_lambert)
                {
                    const LambertSolution sol = lambert_solve(x.r, xf_.r, m_.tf - ts, m_.gravity, normal_);
                    dv[n - 2] = sol.v1 - x.v;
                    dv[n - 1] = xf_.v - sol.v2;
                }
                const AbsoluteState bal = x;
                x.v += dv[s];
                const KeplerOrbit arc(eci_to_kepler(x, m_.gravity), ts, m_.gravity);
                const KeplerOrbit barc(eci_to_kepler(bal, m_.gravity), ts, m_.gravity);
                const RnDistanceProfile pas(compute_roe(bal, tgt, m_.gravity, ts), m_.rn_variant);

                const auto &times = grid_times_[s];
                const auto &rt = grid_target_[s];
                SegmentProfile *prof = detail ? &detail->profiles[s] : nullptr;
                if (prof)
                    prof->reserve(times.size());
                for (std::size_t k = 0; k < times.size(); ++k)
                {
                    const double t = times[k];
                    const AbsoluteState c = arc.state_at(t);
                    const Vec3 rel = c.r - rt[k];
                    const Vec3 rel_bal = barc.state_at(t).r - rt[k];
                    const double d = rel.norm();
                    const double eta = observability_eta_from_positions(rel_bal, rel);
                    const bool arrival = s == n - 2 && k + 1 == times.size();
                    const double pas_d = arrival ? min_relative_distance(arc, target_, t, W) : pas.min_over(t, W);
                    const double z_pws = gaussian_penalty(d, m_.safety);
                    const double z_pas = gaussian_penalty(pas_d, m_.safety);
                    g_obs += eta;
                    g_safety += z_pas + z_pws;
                    if (prof)
                    {
                        prof->times.push_back(t);
                        prof->eta.push_back(eta);
                        prof->zeta_pws.push_back(z_pws);
                        prof->zeta_pas.push_back(z_pas);
                        prof->pas_min_dist.push_back(pas_d);
                        const RelativeState rs = eci_to_rtn_relative(c, target_.state_at(t));
                        prof->rel_pos.push_back(rs.x.head<3>());
                        prof->rel_vel.push_back(rs.x.tail<3>());
                    }
                }
                if (detail)
                {
                    detail->arcs.push_back(arc);
                    detail->ballistic_arcs.push_back(barc);
                }
                x = arc.state_at(m_.node_time(s + 1));
            }
            x.v += dv[n - 1];

            ObjectiveBreakdown b;
            b.gamma = gamma;
            for (const auto &d : dv)
                b.g_dv += d.norm();
            b.g_obs = g_obs;
            b.g_safety = g_safety;
            b.g_total = gamma[0] * b.g_dv + gamma[1] * b.g_obs + gamma[2] * b.g_safety;
            if (detail)
            {
                detail->dv = dv;
                detail->final_state = x;
            }
            return b;
        }

    private:
        MissionConfig m_;
        KeplerOrbit target_;
        AbsoluteState chaser0_;
        AbsoluteState xf_;
        Vec3 normal_;
        std::vector<std::vector<double>> grid_times_;
        std::vector<std::vector<Vec3>> grid_target_;
        std::vector<AbsoluteState> node_target_;
    };

    inline ObjectiveBreakdown objective(const Eigen::VectorXd &dv_free, const MissionConfig &mission, const Weights &gamma)
    {
        return ObjectiveEvaluator(mission).evaluate(dv_free, gamma);
    }

    struct DesignResult
    {
        ImpulsePlan plan;
        ObjectiveBreakdown breakdown;
        std::vector<double> history;
    };

    inline DesignResult pso_optimize(const ObjectiveEvaluator &eval, const Weights &gamma, const PsoConfig &cfg)
    {
        const int dim = eval.dimension();
        const double lim = eval.mission().dv_lim;
        const Eigen::VectorXd lo = Eigen::VectorXd::Constant(dim, -lim);
        const Eigen::VectorXd hi = Eigen::VectorXd::Constant(dim, lim);
        const PsoResult r = pso_minimize([&](const Eigen::VectorXd &x) { return eval.evaluate(x, gamma).g_total; },
                                         lo, hi, cfg);
        DesignResult out;
        out.breakdown = eval.evaluate(r.best_x, gamma);
        out.history = r.history;
        if (out.breakdown.lambert_failed)
        {
            // every particle failed targeting; report free impulses with a zero closing pair
            out.plan.dv = eval.free_to_impulses(r.best_x);
            for (int k = 0; k < eval.mission().n; ++k)
                out.plan.node_times.push_back(eval.mission().node_time(k));
        }
        else
            out.plan = eval.plan_for(r.best_x);
        return out;
    }

    inline DesignResult pso_optimize(const MissionConfig &mission, const Weights &gamma, const PsoConfig &cfg)
    {
        return pso_optimize(ObjectiveEvaluator(mission), gamma, cfg);
    }

    struct Calibration
    {
        Weights gamma{};
        std::array<double, 3> optimal_cost{};
    };

    inline double weight_from_cost(double cost)
    {
        return 1.0 / std::max(std::abs(cost), kWeightFloor);
    }

    /// Single-objective optimisations; each weight is the reciprocal of that optimum's magnitude.
    inline Calibration calibrate_weights(const ObjectiveEvaluator &eval, const PsoConfig &cfg)
    {
        Calibration c;
        for (int k = 0; k < 3; ++k)
        {
            Weights w{0.0, 0.0, 0.0};
            w[k] = 1.0;
            const DesignResult r = pso_optimize(eval, w, cfg);
            const double costs[3] = {r.breakdown.g_dv, r.breakdown.g_obs, r.breakdown.g_safety};
            c.optimal_cost[k] = costs[k];
            c.gamma[k] = weight_from_cost(costs[k]);
        }
        return c;
    }

    inline Calibration calibrate_weights(const MissionConfig &mission, const PsoConfig &cfg)
    {
        return calibrate_weights(ObjectiveEvaluator(mission), cfg);
    }

    /// Dense nominal trajectory consumed by guidance, filtering and reporting.
    struct NominalTrajectory
    {
        MissionConfig mission;
        ImpulsePlan plan;
        std::vector<SegmentProfile> profiles;
        std::vector<KeplerOrbit> arcs;
        KeplerOrbit target;
        std::vector<double> eta_times;
        std::vector<double> eta_values;
        double total_dv{0.0};

        /// Nominal eta at epoch t, linear between mission grid points.
        double eta_bar(double t) const
        {
            if (t <= eta_times.front())
                return eta_values.front();
            if (t >= eta_times.back())
                return eta_values.back();
            const auto it = std::upper_bound(eta_times.begin(), eta_times.end(), t);
            const std::size_t k = static_cast<std::size_t>(it - eta_times.begin());
            const double t0 = eta_times[k - 1], t1 = eta_times[k];
            const double w = (t - t0) / (t1 - t0);
            return (1.0 - w) * eta_values[k - 1] + w * eta_values[k];
        }

        double min_pws_distance() const
        {
            double m = std::numeric_limits<double>::infinity();
            for (const auto &p : profiles)
                for (const auto &r : p.rel_pos)
                    m = std::min(m, r.norm());
            return m;
        }

        double min_pas_distance() const
        {
            double m = std::numeric_limits<double>::infinity();
            for (const auto &p : profiles)
                for (double d : p.pas_min_dist)
                    m = std::min(m, d);
            return m;
        }
    };

    inline constexpr double kTerminalPositionTolerance = 1.0;   // m
    inline constexpr double kTerminalVelocityTolerance = 1e-3;  // m/s

    inline NominalTrajectory build_nominal(const MissionConfig &mission, const ImpulsePlan &plan)
    {
        plan.validate(mission);
        const ObjectiveEvaluator eval(mission);
        WalkDetail d;
        eval.walk(plan.dv, false, {1.0, 0.0, 0.0}, &d);
        const Vec6 end = eci_to_rtn_relative(d.final_state, eval.target_orbit().state_at(mission.tf)).x;
        const Vec6 err = end - mission.xf_rel.x;
        if (!(err.head<3>().norm() < kTerminalPositionTolerance) || !(err.tail<3>().norm() < kTerminalVelocityTolerance))
            throw InconsistentPlan("impulse plan does not reach the terminal state");

        NominalTrajectory nt;
        nt.mission = mission;
        nt.plan = plan;
        nt.profiles = std::move(d.profiles);
        nt.arcs = std::move(d.arcs);
        nt.target = eval.target_orbit();
        for (const auto &p : nt.profiles)
        {
            nt.eta_times.insert(nt.eta_times.end(), p.times.begin(), p.times.end());
            nt.eta_values.insert(nt.eta_values.end(), p.eta.begin(), p.eta.end());
        }
        nt.total_dv = plan.total_dv();
        return nt;
    }

} // namespace rpo
