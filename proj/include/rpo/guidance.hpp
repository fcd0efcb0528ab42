#pragma once

// Closed-loop guidance environment: nominal impulses (with execution errors)
// plus per-sub-node contraction impulses, rewards and safety/observability
// penalties, and the benchmark contraction schedules.

#include "rpo/astro.hpp"
#include "rpo/metrics.hpp"
#include "rpo/nominal.hpp"
#include "rpo/qcqp.hpp"
#include "rpo/random.hpp"

#include <Eigen/Geometry>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace rpo
{

    enum class ErrorLevel
    {
        none,
        low,
        high,
    };

    inline std::string to_string(ErrorLevel l)
    {
        switch (l)
        {
        case ErrorLevel::none:
            return "none";
        case ErrorLevel::low:
            return "low";
        case ErrorLevel::high:
            return "high";
        }
        return "none";
    }

    inline ErrorLevel error_level_from_string(const std::string &s)
    {
        if (s == "none")
            return ErrorLevel::none;
        if (s == "low")
            return ErrorLevel::low;
        if (s == "high")
            return ErrorLevel::high;
        throw ContractViolation("unknown error level '" + s + "'");
    }

    /// Execution error of the nominal impulses: relative magnitude and pointing scatter.
    struct ThrustErrorModel
    {
        ErrorLevel level{ErrorLevel::none};
        double sigma_mag{0.0};
        double sigma_dir{0.0};  ///< rad

        static ThrustErrorModel preset(ErrorLevel l)
        {
            switch (l)
            {
            case ErrorLevel::low:
                return {l, 0.01, 1.0 * kDegToRad};
            case ErrorLevel::high:
                return {l, 0.05, 2.0 * kDegToRad};
            default:
                return {};
            }
        }

        void validate() const
        {
            if (!(sigma_mag >= 0.0) || !(sigma_dir >= 0.0))
                throw ContractViolation("thrust error standard deviations must be non-negative");
            if (level == ErrorLevel::none && (sigma_mag != 0.0 || sigma_dir != 0.0))
                throw ContractViolation("error level 'none' requires zero standard deviations");
        }

        /// Applies one error draw to a nominal impulse.
        Vec3 apply(const Vec3 &dv, Rng &rng) const
        {
            if (level == ErrorLevel::none)
                return dv;
            const double mag = 1.0 + sigma_mag * normal01(rng);
            const double ang = sigma_dir * normal01(rng);
            Vec3 g(normal01(rng), normal01(rng), normal01(rng));
            const double dn = dv.norm();
            if (!(dn > 0.0))
                return dv;
            const Vec3 u = dv / dn;
            Vec3 axis = g - g.dot(u) * u;
            if (!(axis.norm() > 1e-12))
                axis = u.unitOrthogonal();
            axis.normalize();
            return mag * (Eigen::AngleAxisd(ang, axis) * dv);
        }
    };

    struct GuidanceConfig
    {
        int m{7};  ///< guidance impulses per segment
        double alpha_max{2.0};
        double rho_obs{1000.0};
        double rho_safe{1000.0};
        Vec6 dx0_max{(Vec6() << 15e3, 15e3, 750.0, 0.0, 0.0, 0.0).finished()};
        ThrustErrorModel thrust_error{};
        double reach_tolerance{10.0};  ///< terminal position tolerance, m
        std::uint64_t seed{1};

        void validate() const
        {
            if (m < 0)
                throw ContractViolation("guidance requires m >= 0");
            if (!(alpha_max > 0.0))
                throw ContractViolation("guidance requires alpha_max > 0");
            if (!(rho_obs >= 0.0) || !(rho_safe >= 0.0))
                throw ContractViolation("guidance penalty constants must be non-negative");
            if (!dx0_max.allFinite() || (dx0_max.array() < 0.0).any())
                throw ContractViolation("initial dispersion bounds must be finite and non-negative");
            if (!(reach_tolerance > 0.0))
                throw ContractViolation("reach tolerance must be positive");
            thrust_error.validate();
        }
    };

    inline constexpr int kActorStateSize = 21;
    using ActorVector = Eigen::Matrix<double, kActorStateSize, 1>;

    /// Raw actor input and its min-max normalised counterpart.
    struct ActorState
    {
        ActorVector raw{ActorVector::Zero()};
        ActorVector normalized{ActorVector::Zero()};
    };

    /// Min-max bounds of the actor input, derived from the mission scale.
    struct NormalizationBounds
    {
        ActorVector lo{ActorVector::Zero()};
        ActorVector hi{ActorVector::Ones()};

        static NormalizationBounds for_mission(const MissionConfig &m, const GuidanceConfig &g, int steps)
        {
            NormalizationBounds b;
            const double a = m.target_el0.a;
            const double pos = a + 200e3;
            const double vel = 1.2 * std::sqrt(m.gravity.mu / a);
            const double rel = 2.0 * (m.x0_rel.x.head<3>().norm() + g.dx0_max.head<3>().norm());
            const double rel_v = m.dv_lim;
            auto sym = [&](int i, double v) {
                b.lo[i] = -v;
                b.hi[i] = v;
            };
            b.lo[0] = 0.0;
            b.hi[0] = steps;
            for (int i = 0; i < 3; ++i)
            {
                sym(1 + i, pos);
                sym(4 + i, vel);
                sym(7 + i, rel);
                sym(10 + i, rel_v);
                sym(15 + i, rel);
                sym(18 + i, rel_v);
            }
            b.lo[13] = -(g.rho_safe * m.safety.d_min + 10.0 * m.dv_lim);
            b.hi[13] = 0.0;
            b.lo[14] = 0.0;
            b.hi[14] = g.alpha_max;
            return b;
        }

        ActorVector normalize(const ActorVector &s) const
        {
            ActorVector out;
            for (int i = 0; i < kActorStateSize; ++i)
                out[i] = std::clamp(2.0 * (s[i] - lo[i]) / (hi[i] - lo[i]) - 1.0, -1.0, 1.0);
            return out;
        }
    };

    struct GuidanceStep
    {
        int j{0};
        double t_j{0.0};
        AbsoluteState x_j;        ///< ECI chaser state after this step's impulses
        RelativeState x_rel_j;    ///< relative state after the nominal impulse, before guidance
        Vec6 dx_j{Vec6::Zero()};  ///< deviation from the nominal relative state
        double alpha_j{0.0};
        Vec3 ddv_j{Vec3::Zero()};  ///< guidance impulse, RTN
        double ddv_norm{0.0};
        double nominal_dv{0.0};  ///< applied nominal impulse magnitude (plus arrival burn on the last step)
        double p_safe{0.0};
        double p_obs{0.0};
        double reward{0.0};
        double eta{1.0};          ///< at t_{j+1}
        double eta_bar{1.0};      ///< nominal value at t_{j+1}
        double rel_dist{0.0};     ///< |r_rel(t_{j+1})|
        double pas_dist{0.0};     ///< PAS separation at t_{j+1}: segment coast without its nominal impulse
    };

    struct EpisodeResult
    {
        std::vector<GuidanceStep> steps;
        double total_dv{0.0};
        double pws_min{0.0};
        double pas_min{0.0};
        bool reached{false};
        RelativeState final_rel;  ///< relative state at t_f after the arrival burn
        double terminal_error{0.0};
        double total_reward{0.0};
        bool failed{false};   ///< propagation broke down (e.g. an impulse made the orbit unbound)
        std::string failure;
    };

    inline double reward_from_terms(double ddv_norm, double nominal_dv, double p_safe, double p_obs)
    {
        return -(ddv_norm + nominal_dv + p_safe + p_obs);
    }

    inline double safety_penalty(double rel_dist, double pas_dist, double d_min, double rho_safe)
    {
        if (rel_dist <= d_min)
            return rho_safe * (d_min - rel_dist);
        if (pas_dist <= d_min)
            return rho_safe * (d_min - pas_dist);
        return 0.0;
    }

    inline double observability_penalty(double eta, double eta_bar, double rho_obs)
    {
        return eta >= eta_bar ? rho_obs * (eta - eta_bar) : 0.0;
    }

    inline double alpha_ld(double t, double t0, double tf)
    {
        if (!(tf > t0) || t < t0 || t > tf)
            throw ContractViolation("alpha_ld requires t in [t0, tf]");
        return 1.0 - (t - t0) / (tf - t0);
    }

    inline double alpha_c() { return 0.0; }

    inline RelativeState sample_initial_state(const MissionConfig &m, const GuidanceConfig &g, Rng &rng)
    {
        RelativeState s = m.x0_rel;
        for (int i = 0; i < 6; ++i)
            if (g.dx0_max[i] > 0.0)
                s.x[i] += g.dx0_max[i] * (2.0 * uniform01(rng) - 1.0);
        return s;
    }

    /**
     * @brief Step-wise guidance environment around a fixed nominal trajectory.
     *
     * The mission span is divided into (n-1)(m+1) equal steps. The nominal
     * reference states are produced by stepping the nominal plan with the same
     * arithmetic as an episode, so an undispersed, error-free episode at zero
     * contraction tracks it exactly.
     */
    class GuidanceEnv
    {
    public:
        GuidanceEnv(const NominalTrajectory &nominal, const GuidanceConfig &cfg)
            : nom_(nominal), cfg_(cfg)
        {
            cfg_.validate();
            const MissionConfig &m = nom_.mission;
            steps_ = (m.n - 1) * (cfg_.m + 1);
            dt_ = (m.tf - m.t0) / steps_;
            bounds_ = NormalizationBounds::for_mission(m, cfg_, steps_);
            times_.resize(steps_ + 1);
            target_.resize(steps_ + 1);
            for (int j = 0; j <= steps_; ++j)
            {
                times_[j] = j == steps_ ? m.tf : m.t0 + j * dt_;
                target_[j] = nom_.target.state_at(times_[j]);
            }
            stm_.resize(steps_);
            for (int j = 0; j < steps_; ++j)
                stm_[j] = ya_stm(m.target_el0, times_[j] - m.t0, times_[j + 1] - times_[j], m.gravity);
            xf_ = rtn_relative_to_eci(m.xf_rel, target_[steps_]);

            // reference track
            ref_pre_.resize(steps_ + 1);
            ref_post_.resize(steps_);
            eta_ref_.assign(steps_ + 1, 1.0);
            AbsoluteState x = rtn_relative_to_eci(m.x0_rel, target_[0]);
            AbsoluteState bal = x;
            for (int j = 0; j < steps_; ++j)
            {
                ref_pre_[j] = eci_to_rtn_relative(x, target_[j]);
                if (is_node(j))
                {
                    bal = x;
                    x.v += nom_.plan.dv[node_of(j)];
                }
                ref_post_[j] = eci_to_rtn_relative(x, target_[j]);
                x = advance(x, j);
                bal = advance(bal, j);
                eta_ref_[j + 1] = observability_eta_from_positions(bal.r - target_[j + 1].r, x.r - target_[j + 1].r);
            }
            ref_pre_[steps_] = eci_to_rtn_relative(x, target_[steps_]);
        }

        int total_steps() const { return steps_; }
        double step_duration() const { return dt_; }
        double time_at(int j) const { return times_[j]; }
        const GuidanceConfig &config() const { return cfg_; }
        const NominalTrajectory &nominal() const { return nom_; }
        const NormalizationBounds &bounds() const { return bounds_; }
        const RelativeState &reference_post(int j) const { return ref_post_[j]; }
        double reference_eta(int j) const { return eta_ref_[j]; }
        bool is_node(int j) const { return j % (cfg_.m + 1) == 0; }
        int node_of(int j) const { return j / (cfg_.m + 1); }
        bool done() const { return j_ >= steps_; }
        int step_index() const { return j_; }

        /// Starts an episode; thrust-error draws are addressed by (cfg.seed, sample, node).
        void reset(const RelativeState &x0_rel, std::uint64_t sample, const ThrustErrorModel &errors)
        {
            errors.validate();
            errors_ = errors;
            sample_ = sample;
            j_ = 0;
            x_ = rtn_relative_to_eci(x0_rel, target_[0]);
            x_bal_ = x_;
            prev_reward_ = 0.0;
            prev_alpha_ = 0.0;
            result_ = EpisodeResult{};
            result_.steps.reserve(steps_);
            const RelativeState r0 = eci_to_rtn_relative(x_, target_[0]);
            pws_min_ = r0.x.head<3>().norm();
            pas_min_ = std::numeric_limits<double>::infinity();
            obs_ = make_observation(0, r0);
        }

        const ActorState &observation() const { return obs_; }

        /// Penalty reward of a step whose propagation broke down; the episode ends there.
        double failure_reward() const { return bounds_.lo[13]; }

        /// Advances one sub-node with contraction `alpha` (clipped to [0, alpha_max]).
        const GuidanceStep &step(double alpha)
        {
            if (done())
                throw ContractViolation("guidance episode already finished");
            try
            {
                return step_impl(alpha);
            }
            catch (const ContractViolation &)
            {
                throw;
            }
            catch (const Error &e)
            {
                GuidanceStep st;
                st.j = j_;
                st.t_j = times_[j_];
                st.alpha_j = std::clamp(alpha, 0.0, cfg_.alpha_max);
                st.reward = failure_reward();
                result_.total_reward += st.reward;
                result_.steps.push_back(st);
                result_.failed = true;
                result_.failure = e.what();
                result_.reached = false;
                result_.pws_min = pws_min_;
                result_.pas_min = pas_min_;
                j_ = steps_;
                return result_.steps.back();
            }
        }

        const EpisodeResult &result() const { return result_; }

    private:
        const GuidanceStep &step_impl(double alpha)
        {
            const MissionConfig &m = nom_.mission;
            const int j = j_;
            GuidanceStep st;
            st.j = j;
            st.t_j = times_[j];

            if (is_node(j))
            {
                x_bal_ = x_;
                const int k = node_of(j);
                Rng rng = make_stream(cfg_.seed, sample_, static_cast<std::uint64_t>(k));
                const Vec3 applied = errors_.apply(nom_.plan.dv[k], rng);
                x_.v += applied;
                st.nominal_dv = applied.norm();
                pas_profile_ = RnDistanceProfile(compute_roe(x_bal_, target_[j], m.gravity, times_[j]), m.rn_variant);
            }
            const RtnFrame frame = RtnFrame::of(target_[j]);
            st.x_rel_j = eci_to_rtn_relative(x_, target_[j], frame);
            st.dx_j = st.x_rel_j.x - ref_post_[j].x;

            const bool last = j == steps_ - 1;
            st.alpha_j = last ? 0.0 : std::clamp(alpha, 0.0, cfg_.alpha_max);
            const QcqpResult q = qcqp_step(st.dx_j, stm_[j], st.alpha_j);
            st.ddv_j = q.ddv;
            st.ddv_norm = q.ddv.norm();
            x_.v += frame.C.transpose() * q.ddv;
            st.x_j = x_;

            x_ = advance(x_, j);
            x_bal_ = advance(x_bal_, j);
            const double t1 = times_[j + 1];
            const RelativeState rel1 = eci_to_rtn_relative(x_, target_[j + 1]);
            const Vec3 rb = x_bal_.r - target_[j + 1].r;
            const Vec3 rc = x_.r - target_[j + 1].r;
            st.eta = observability_eta_from_positions(rb, rc);
            st.eta_bar = eta_ref_[j + 1];
            st.rel_dist = rc.norm();
            if (last)
            {
                // arrival: the coast if the terminal burn is missed
                const KeplerOrbit coast(eci_to_kepler(x_, m.gravity), t1, m.gravity);
                st.pas_dist = min_relative_distance(coast, nom_.target, t1, m.safety.pas_window);
            }
            else
                st.pas_dist = pas_profile_->min_over(t1, m.safety.pas_window);
            st.p_obs = observability_penalty(st.eta, st.eta_bar, cfg_.rho_obs);
            st.p_safe = safety_penalty(st.rel_dist, st.pas_dist, m.safety.d_min, cfg_.rho_safe);

            if (last)
            {
                // arrival burn onto the terminal velocity
                const Vec3 closure = xf_.v - x_.v;
                st.nominal_dv += closure.norm();
                x_.v += closure;
            }
            st.reward = reward_from_terms(st.ddv_norm, st.nominal_dv, st.p_safe, st.p_obs);

            pws_min_ = std::min(pws_min_, st.rel_dist);
            pas_min_ = std::min(pas_min_, st.pas_dist);
            result_.total_dv += st.ddv_norm + st.nominal_dv;
            result_.total_reward += st.reward;
            prev_reward_ = st.reward;
            prev_alpha_ = st.alpha_j;
            result_.steps.push_back(st);
            ++j_;

            if (done())
            {
                result_.final_rel = eci_to_rtn_relative(x_, target_[steps_]);
                const Vec6 err = result_.final_rel.x - m.xf_rel.x;
                result_.terminal_error = err.head<3>().norm();
                result_.reached = result_.terminal_error <= cfg_.reach_tolerance;
                result_.pws_min = pws_min_;
                result_.pas_min = pas_min_;
            }
            else
                obs_ = make_observation(j_, rel1);
            return result_.steps.back();
        }

        AbsoluteState advance(const AbsoluteState &x, int j) const
        {
            return KeplerOrbit(eci_to_kepler(x, nom_.mission.gravity), times_[j], nom_.mission.gravity)
                .state_at(times_[j + 1]);
        }

        ActorState make_observation(int j, const RelativeState &rel) const
        {
            ActorState s;
            s.raw[0] = steps_ - j;
            s.raw.segment<3>(1) = x_.r;
            s.raw.segment<3>(4) = x_.v;
            s.raw.segment<6>(7) = rel.x;
            s.raw[13] = prev_reward_;
            s.raw[14] = prev_alpha_;
            s.raw.segment<6>(15) = rel.x - ref_pre_[j].x;
            s.normalized = bounds_.normalize(s.raw);
            return s;
        }

        const NominalTrajectory &nom_;
        GuidanceConfig cfg_;
        int steps_{0};
        double dt_{0.0};
        NormalizationBounds bounds_;
        std::vector<double> times_;
        std::vector<AbsoluteState> target_;
        std::vector<Mat6> stm_;
        std::vector<RelativeState> ref_pre_;
        std::vector<RelativeState> ref_post_;
        std::vector<double> eta_ref_;  ///< nominal eta at each step epoch
        AbsoluteState xf_;

        ThrustErrorModel errors_{};
        std::uint64_t sample_{0};
        int j_{0};
        AbsoluteState x_;
        AbsoluteState x_bal_;  ///< segment coast without the node's nominal impulse
        std::optional<RnDistanceProfile> pas_profile_;
        double prev_reward_{0.0};
        double prev_alpha_{0.0};
        double pws_min_{0.0};
        double pas_min_{0.0};
        ActorState obs_;
        EpisodeResult result_;
    };

    /// Contraction choice per step from the current actor state.
    using AlphaPolicy = std::function<double(const ActorState &, int j)>;

    inline AlphaPolicy schedule_policy(std::vector<double> schedule)
    {
        return [s = std::move(schedule)](const ActorState &, int j) {
            return j < static_cast<int>(s.size()) ? s[j] : 0.0;
        };
    }

    inline std::vector<double> alpha_ld_schedule(const GuidanceEnv &env)
    {
        std::vector<double> s(env.total_steps());
        const MissionConfig &m = env.nominal().mission;
        for (int j = 0; j < env.total_steps(); ++j)
            s[j] = alpha_ld(env.time_at(j), m.t0, m.tf);
        return s;
    }

    inline std::vector<double> alpha_c_schedule(const GuidanceEnv &env)
    {
        return std::vector<double>(env.total_steps(), alpha_c());
    }

    inline EpisodeResult run_episode(GuidanceEnv &env, const AlphaPolicy &policy, const RelativeState &x0_rel,
                                     std::uint64_t sample, const ThrustErrorModel &errors)
    {
        env.reset(x0_rel, sample, errors);
        while (!env.done())
            env.step(policy(env.observation(), env.step_index()));
        return env.result();
    }


    /// Twelve evaluation starts at the nominal initial state plus and minus half the dispersion bound, per component.
    inline std::vector<RelativeState> sigma_points(const MissionConfig &m, const GuidanceConfig &g)
    {
        std::vector<RelativeState> pts;
        pts.reserve(12);
        for (int sign : {1, -1})
            for (int i = 0; i < 6; ++i)
            {
                RelativeState s = m.x0_rel;
                s.x[i] += sign * 0.5 * g.dx0_max[i];
                pts.push_back(s);
            }
        return pts;
    }

    /// Summed episode reward of a fixed schedule over the given starts, without thrust error.
    inline double schedule_objective(GuidanceEnv &env, const std::vector<double> &schedule,
                                     const std::vector<RelativeState> &starts)
    {
        const AlphaPolicy policy = schedule_policy(schedule);
        double total = 0.0;
        for (std::size_t k = 0; k < starts.size(); ++k)
            total += run_episode(env, policy, starts[k], k, ThrustErrorModel{}).total_reward;
        return total;
    }

    struct AlphaSConfig
    {
        int max_iterations{500};
        double fd_step{1e-4};  ///< forward-difference step, fraction of alpha_max
        int barrier_stages{5};
        double tolerance{1e-6};
    };

    struct AlphaSResult
    {
        std::vector<double> schedule;
        double objective{0.0};
        double objective_c{0.0};
        double objective_ld{0.0};
        double objective_optimized{0.0};
        bool converged{false};  ///< false flags an iteration-capped or stalled solve
        int iterations{0};
        std::string source;  ///< which candidate was returned: optimized, c or ld
    };

    /**
     * @brief Contraction schedule maximizing the summed sigma-point reward.
     *
     * Log-barrier on the box [0, alpha_max] with a BFGS inner solve on
     * forward-difference gradients, started from the linear-decrease schedule.
     * The objective is piecewise smooth, so the returned schedule is the best of
     * the optimized iterate and the two benchmark schedules.
     */
    inline AlphaSResult alpha_s_optimize(GuidanceEnv &env, const AlphaSConfig &acfg = {})
    {
        const MissionConfig &m = env.nominal().mission;
        const double amax = env.config().alpha_max;
        const auto pts = sigma_points(m, env.config());
        const int steps = env.total_steps();
        const int d = steps - 1;  // the last step always runs at zero contraction

        auto full = [&](const Eigen::VectorXd &a) {
            std::vector<double> s(steps, 0.0);
            for (int i = 0; i < d; ++i)
                s[i] = a[i];
            return s;
        };
        auto reward = [&](const Eigen::VectorXd &a) { return schedule_objective(env, full(a), pts); };

        AlphaSResult res;
        const auto sched_ld = alpha_ld_schedule(env);
        const auto sched_c = alpha_c_schedule(env);
        res.objective_ld = schedule_objective(env, sched_ld, pts);
        res.objective_c = schedule_objective(env, sched_c, pts);

        const double edge = 1e-3 * amax;
        Eigen::VectorXd a(d);
        for (int i = 0; i < d; ++i)
            a[i] = std::clamp(sched_ld[i], edge, amax - edge);

        Eigen::VectorXd best_a = a;
        double best_r = reward(a);
        double mu = 1e-3 * std::max(1.0, std::abs(best_r)) / d;
        const double h = acfg.fd_step * amax;
        int it = 0;
        bool converged = false;

        for (int stage = 0; stage < acfg.barrier_stages && it < acfg.max_iterations; ++stage, mu *= 0.1)
        {
            auto f = [&](const Eigen::VectorXd &x, double &r) {
                r = reward(x);
                double b = 0.0;
                for (int i = 0; i < d; ++i)
                    b += std::log(x[i]) + std::log(amax - x[i]);
                return -r - mu * b;
            };
            auto grad = [&](const Eigen::VectorXd &x, double fx) {
                Eigen::VectorXd g(d);
                for (int i = 0; i < d; ++i)
                {
                    Eigen::VectorXd xp = x;
                    const double hi = x[i] + h < amax ? h : -h;
                    xp[i] += hi;
                    double r;
                    g[i] = (f(xp, r) - fx) / hi;
                }
                return g;
            };

            double r;
            double fx = f(a, r);
            Eigen::VectorXd g = grad(a, fx);
            Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(d, d) * (0.1 * amax / std::max(1e-12, g.norm()));
            converged = false;
            while (it < acfg.max_iterations)
            {
                ++it;
                Eigen::VectorXd p = -Hinv * g;
                if (p.dot(g) >= 0.0)
                {
                    Hinv = Eigen::MatrixXd::Identity(d, d) * (0.1 * amax / std::max(1e-12, g.norm()));
                    p = -Hinv * g;
                }
                // fraction-to-boundary step limit
                double tmax = 1.0;
                for (int i = 0; i < d; ++i)
                {
                    if (p[i] < 0.0)
                        tmax = std::min(tmax, -0.995 * a[i] / p[i]);
                    else if (p[i] > 0.0)
                        tmax = std::min(tmax, 0.995 * (amax - a[i]) / p[i]);
                }
                double t = tmax;
                Eigen::VectorXd a_new;
                double f_new = fx, r_new = r;
                bool accepted = false;
                for (int ls = 0; ls < 30; ++ls, t *= 0.5)
                {
                    a_new = a + t * p;
                    f_new = f(a_new, r_new);
                    if (f_new <= fx + 1e-4 * t * g.dot(p))
                    {
                        accepted = true;
                        break;
                    }
                }
                if (!accepted)
                    break;
                const Eigen::VectorXd g_new = grad(a_new, f_new);
                const Eigen::VectorXd sv = a_new - a;
                const Eigen::VectorXd yv = g_new - g;
                const double sy = sv.dot(yv);
                if (sy > 1e-12 * sv.norm() * yv.norm())
                {
                    const double rho = 1.0 / sy;
                    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
                    Hinv = (I - rho * sv * yv.transpose()) * Hinv * (I - rho * yv * sv.transpose()) +
                           rho * sv * sv.transpose();
                }
                const double df = std::abs(fx - f_new);
                a = a_new;
                fx = f_new;
                r = r_new;
                g = g_new;
                if (r > best_r)
                {
                    best_r = r;
                    best_a = a;
                }
                if (sv.norm() < acfg.tolerance * amax || df < acfg.tolerance * std::max(1.0, std::abs(fx)))
                {
                    converged = true;
                    break;
                }
            }
        }

        res.iterations = it;
        res.converged = converged;
        res.objective_optimized = best_r;
        res.schedule = full(best_a);
        res.objective = best_r;
        res.source = "optimized";
        if (res.objective_c > res.objective)
        {
            res.schedule = sched_c;
            res.objective = res.objective_c;
            res.source = "c";
        }
        if (res.objective_ld > res.objective)
        {
            res.schedule = sched_ld;
            res.objective = res.objective_ld;
            res.source = "ld";
        }
        return res;
    }

} // namespace rpo
