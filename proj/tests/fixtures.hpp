#pragma once

// Shared inputs for the test suites: published free impulses, a PAS-safe
// designed plan, and small missions that keep test runtimes short.

#include "rpo/nominal.hpp"

#include <Eigen/Dense>

namespace rpo::test
{

    /// Free impulses at nodes 1-4 of the reference transfer, ECI m/s.
    inline Eigen::VectorXd reference_free_impulses()
    {
        Eigen::VectorXd x(12);
        x << -0.3222, -0.0691, 0.3964, 0.0, 0.0, 0.0, -0.7197, 0.0313, -0.1560, 0.2889, -0.0495, 0.2627;
        return x;
    }

    /// Plan found by the full-budget swarm (seed 101); every PWS and PAS distance exceeds 700 m.
    inline ImpulsePlan designed_plan(const MissionConfig &m)
    {
        ImpulsePlan p;
        for (int k = 0; k < m.n; ++k)
            p.node_times.push_back(m.node_time(k));
        p.dv = {
            {-0.00097974786078156581, 0.0018481085275233807, -0.0012716297153625067},
            {0.031255201357543477, 0.14800523683843564, -0.20531581635668752},
            {-1.2682822197436134, -0.52280094852213965, -0.80491950029299675},
            {-0.016011307104192542, -0.020543631282958878, 0.021469919001196436},
            {0.94557833918042888, -0.33610088704301688, -0.063083894290684839},
            {-0.22569066473602106, -0.32880071033855529, -0.77403860375943623},
        };
        return p;
    }

    inline NominalTrajectory designed_nominal(int n_grid = 1000)
    {
        MissionConfig m = reference_mission();
        m.n_grid = n_grid;
        return build_nominal(m, designed_plan(m));
    }

    /// Reference mission on a coarse grid, for tests that run the swarm.
    inline MissionConfig coarse_mission(int n_grid = 60)
    {
        MissionConfig m = reference_mission();
        m.n_grid = n_grid;
        return m;
    }

} // namespace rpo::test
