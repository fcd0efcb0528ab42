#pragma once

// Global-best particle swarm minimiser over a box.

#include "rpo/core.hpp"
#include "rpo/parallel.hpp"
#include "rpo/random.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

namespace rpo
{

    struct PsoConfig
    {
        int swarm_size{200};
        int iterations{300};
        double w{0.7298};
        double c1{1.49618};
        double c2{1.49618};
        double velocity_clamp{0.2};  ///< fraction of the box width
        std::uint64_t seed{1};
        int workers{1};

        void validate() const
        {
            if (swarm_size < 1 || iterations < 0)
                throw ContractViolation("pso config requires swarm_size >= 1 and iterations >= 0");
            if (!(w > 0.0 && w <= 1.0) || !(c1 > 0.0) || !(c2 > 0.0))
                throw ContractViolation("pso config requires w in (0, 1] and c1, c2 > 0");
            if (!(velocity_clamp > 0.0))
                throw ContractViolation("pso config requires velocity_clamp > 0");
        }
    };

    struct PsoResult
    {
        Eigen::VectorXd best_x;
        double best_f{std::numeric_limits<double>::infinity()};
        std::vector<double> history;  ///< global-best value after initialisation and after each generation
        long evaluations{0};
    };

    /**
     * @brief Minimises f over [lo, hi].
     *
     * Each particle owns a random stream derived from (seed, particle), and
     * the best-merge runs after all evaluations of a generation, so results
     * do not depend on the number of workers.
     */
    template <class F>
    PsoResult pso_minimize(F &&f, const Eigen::VectorXd &lo, const Eigen::VectorXd &hi, const PsoConfig &cfg)
    {
        cfg.validate();
        const int dim = static_cast<int>(lo.size());
        if (hi.size() != dim || ((hi - lo).array() < 0.0).any())
            throw ContractViolation("pso bounds must satisfy lo <= hi");
        const int S = cfg.swarm_size;
        const Eigen::VectorXd vmax = cfg.velocity_clamp * (hi - lo);

        std::vector<Rng> streams;
        streams.reserve(S);
        for (int p = 0; p < S; ++p)
            streams.push_back(make_stream(cfg.seed, static_cast<std::uint64_t>(p)));

        std::vector<Eigen::VectorXd> x(S, Eigen::VectorXd(dim)), v(S, Eigen::VectorXd(dim));
        for (int p = 0; p < S; ++p)
            for (int d = 0; d < dim; ++d)
            {
                x[p][d] = lo[d] + (hi[d] - lo[d]) * uniform01(streams[p]);
                v[p][d] = vmax[d] * (2.0 * uniform01(streams[p]) - 1.0);
            }

        std::vector<double> fx(S);
        auto evaluate_all = [&] {
            parallel_for(static_cast<std::size_t>(S), cfg.workers, [&](std::size_t p) { fx[p] = f(x[p]); });
        };

        PsoResult res;
        evaluate_all();
        res.evaluations += S;
        std::vector<Eigen::VectorXd> pbest = x;
        std::vector<double> fbest = fx;
        int g = 0;
        for (int p = 1; p < S; ++p)
            if (fbest[p] < fbest[g])
                g = p;
        res.best_x = pbest[g];
        res.best_f = fbest[g];
        res.history.push_back(res.best_f);

        for (int it = 0; it < cfg.iterations; ++it)
        {
            for (int p = 0; p < S; ++p)
            {
                for (int d = 0; d < dim; ++d)
                {
                    const double r1 = uniform01(streams[p]);
                    const double r2 = uniform01(streams[p]);
                    double vd = cfg.w * v[p][d] + cfg.c1 * r1 * (pbest[p][d] - x[p][d]) +
                                cfg.c2 * r2 * (res.best_x[d] - x[p][d]);
                    vd = std::clamp(vd, -vmax[d], vmax[d]);
                    v[p][d] = vd;
                    x[p][d] = std::clamp(x[p][d] + vd, lo[d], hi[d]);
                }
            }
            evaluate_all();
            res.evaluations += S;
            for (int p = 0; p < S; ++p)
                if (fx[p] < fbest[p])
                {
                    fbest[p] = fx[p];
                    pbest[p] = x[p];
                }
            for (int p = 0; p < S; ++p)
                if (fbest[p] < res.best_f)
                {
                    res.best_f = fbest[p];
                    res.best_x = pbest[p];
                }
            res.history.push_back(res.best_f);
        }
        return res;
    }

} // namespace rpo
