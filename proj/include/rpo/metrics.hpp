#pragma once

// Observability and keep-out-zone safety indices shared by the nominal
// designer and the guidance penalties.

#include "rpo/astro.hpp"

#include <cmath>
#include <vector>

namespace rpo
{

    struct SafetyConfig
    {
        double d_min{500.0};        ///< keep-out-zone radius, m
        double sigma{500.0 / 3.0};  ///< Gaussian width, always d_min / 3
        double pas_window{5400.0};  ///< passive-safety horizon, s

        static SafetyConfig make(double d_min, double pas_window)
        {
            SafetyConfig c{d_min, d_min / 3.0, pas_window};
            c.validate();
            return c;
        }

        void validate() const
        {
            if (!(d_min > 0.0) || sigma != d_min / 3.0)
                throw ContractViolation("safety config requires d_min > 0 and sigma == d_min / 3");
            if (!(pas_window > 0.0))
                throw ContractViolation("safety config requires pas_window > 0");
        }
    };

    /// Per-grid-point metrics of one trajectory segment.
    struct SegmentProfile
    {
        std::vector<double> times;
        std::vector<double> eta;
        std::vector<double> zeta_pws;
        std::vector<double> zeta_pas;
        std::vector<Vec3> rel_pos;
        std::vector<Vec3> rel_vel;  ///< filled only when the full relative state is requested
        std::vector<double> pas_min_dist;

        std::size_t size() const { return times.size(); }

        void reserve(std::size_t n)
        {
            times.reserve(n);
            eta.reserve(n);
            zeta_pws.reserve(n);
            zeta_pas.reserve(n);
            rel_pos.reserve(n);
            pas_min_dist.reserve(n);
        }
    };

    /// Dot product of the ballistic and maneuvered unit lines of sight.
    inline double observability_eta(const Vec3 &y_bal, const Vec3 &y)
    {
        if (std::abs(y_bal.norm() - 1.0) > 1e-9 || std::abs(y.norm() - 1.0) > 1e-9)
            throw ContractViolation("observability_eta expects unit vectors");
        return std::clamp(y_bal.dot(y), -1.0, 1.0);
    }

    /// Same metric from two relative positions; a vanishing line of sight counts as unchanged (1).
    inline double observability_eta_from_positions(const Vec3 &r_bal, const Vec3 &r)
    {
        const double den = r_bal.norm() * r.norm();
        if (!(den > 0.0))
            return 1.0;
        return std::clamp(r_bal.dot(r) / den, -1.0, 1.0);
    }

    inline double gaussian_penalty(double d, const SafetyConfig &cfg)
    {
        return std::exp(-(d * d) / (2.0 * cfg.sigma * cfg.sigma));
    }

    inline double pws_penalty(double rel_dist, const SafetyConfig &cfg)
    {
        if (rel_dist < 0.0)
            throw ContractViolation("pws_penalty requires a non-negative distance");
        return gaussian_penalty(rel_dist, cfg);
    }

    inline double pas_penalty(double min_dist, const SafetyConfig &cfg)
    {
        if (min_dist < 0.0)
            throw ContractViolation("pas_penalty requires a non-negative distance");
        return gaussian_penalty(min_dist, cfg);
    }

    /// Minimum Euclidean separation of two free-flying orbits over [t, t + window).
    inline double min_relative_distance(const KeplerOrbit &chaser, const KeplerOrbit &target, double t, double window)
    {
        if (!(window > 0.0))
            throw ContractViolation("min_relative_distance requires window > 0");
        auto f = [&](double tau) { return (chaser.state_at(tau).r - target.state_at(tau).r).norm(); };
        return detail::grid_golden_min(f, t, t + window);
    }

    /**
     * @brief Passive-safety separation of a ballistic chaser arc.
     *
     * Nodes 1..n-1 use the radial-normal separation of the relative orbit;
     * node n uses the full relative distance because chaser and target share
     * an orbit there. States are given at a common epoch.
     */
    inline double pas_min_distance(int node_index, int n, const AbsoluteState &chaser_ballistic,
                                   const AbsoluteState &target, const SafetyConfig &cfg, const GravityModel &g,
                                   RnVariant variant = RnVariant::as_written)
    {
        if (node_index < 1 || node_index > n)
            throw ContractViolation("pas_min_distance requires 1 <= node_index <= n");
        if (node_index < n)
            return min_rn_distance(compute_roe(chaser_ballistic, target, g), 0.0, cfg.pas_window, variant);
        const KeplerOrbit c(eci_to_kepler(chaser_ballistic, g), 0.0, g);
        const KeplerOrbit t(eci_to_kepler(target, g), 0.0, g);
        return min_relative_distance(c, t, 0.0, cfg.pas_window);
    }

    struct ObjectiveTerms
    {
        double g_obs{0.0};
        double g_safety{0.0};
    };

    /// Plain sums of eta and of both safety indices over every grid point,
    /// subtotalled per segment so the result is exactly additive over segments.
    inline ObjectiveTerms accumulate_objective_terms(const std::vector<SegmentProfile> &profiles)
    {
        ObjectiveTerms terms;
        for (const auto &p : profiles)
        {
            double obs = 0.0, safety = 0.0;
            for (std::size_t k = 0; k < p.size(); ++k)
            {
                obs += p.eta[k];
                safety += p.zeta_pas[k] + p.zeta_pws[k];
            }
            terms.g_obs += obs;
            terms.g_safety += safety;
        }
        return terms;
    }

} // namespace rpo
