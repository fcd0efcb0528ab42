#pragma once

// Monte-Carlo comparison of contraction strategies over dispersed starts and
// nominal-impulse execution errors.

#include "rpo/guidance.hpp"
#include "rpo/parallel.hpp"
#include "rpo/random.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace rpo
{

    struct Strategy
    {
        std::string name;  ///< rl, ld, c or s
        AlphaPolicy policy;
    };

    struct McConfig
    {
        int samples{500};
        std::vector<ErrorLevel> error_levels{ErrorLevel::none, ErrorLevel::low, ErrorLevel::high};
        std::uint64_t seed{1};
        int workers{1};
        int trace_samples{1};  ///< leading samples whose full step history is kept
        ThrustErrorModel low_error{ThrustErrorModel::preset(ErrorLevel::low)};
        ThrustErrorModel high_error{ThrustErrorModel::preset(ErrorLevel::high)};

        ThrustErrorModel error_model(ErrorLevel l) const
        {
            switch (l)
            {
            case ErrorLevel::low:
                return low_error;
            case ErrorLevel::high:
                return high_error;
            default:
                return {};
            }
        }

        void validate() const
        {
            if (samples < 1)
                throw ContractViolation("mc requires samples >= 1");
            if (error_levels.empty())
                throw ContractViolation("mc requires at least one error level");
            if (trace_samples < 0)
                throw ContractViolation("mc trace_samples must be non-negative");
            low_error.validate();
            high_error.validate();
        }
    };

    struct McRecord
    {
        int sample{0};
        std::string strategy;
        ErrorLevel level{ErrorLevel::none};
        double total_dv{0.0};
        double pws_min{0.0};
        double pas_min{0.0};
        bool reached{false};
        bool failed{false};
        double terminal_error{0.0};
        double total_reward{0.0};
    };

    struct McTrace
    {
        int sample{0};
        std::string strategy;
        ErrorLevel level{ErrorLevel::none};
        EpisodeResult episode;
    };

    struct McStats
    {
        std::string strategy;
        ErrorLevel level{ErrorLevel::none};
        int count{0};      ///< episodes entering the statistics
        int failures{0};   ///< excluded episodes
        int reached{0};
        double mean{0.0};
        double std{0.0};
        double p25{0.0};
        double p75{0.0};
        double p99{0.0};
        double pws_min{0.0};
        double pas_min{0.0};
    };

    struct McSummary
    {
        std::vector<McStats> rows;  ///< one per (strategy, level) in input order

        const McStats &at(const std::string &strategy, ErrorLevel level) const
        {
            for (const auto &r : rows)
                if (r.strategy == strategy && r.level == level)
                    return r;
            throw ContractViolation("no summary row for strategy '" + strategy + "'");
        }
    };

    /// Linear interpolation between order statistics at position q (n - 1).
    inline double percentile(std::vector<double> v, double q)
    {
        if (v.empty())
            throw ContractViolation("percentile of an empty sample");
        if (!(q >= 0.0 && q <= 1.0))
            throw ContractViolation("percentile requires q in [0, 1]");
        std::sort(v.begin(), v.end());
        const double h = q * static_cast<double>(v.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
    }

    /// Statistics of one (strategy, level) group; failed episodes are only counted.
    inline McStats summarize_group(const std::vector<McRecord> &records)
    {
        if (records.empty())
            throw ContractViolation("summarize requires records");
        McStats s;
        s.strategy = records.front().strategy;
        s.level = records.front().level;
        std::vector<double> dv;
        s.pws_min = std::numeric_limits<double>::infinity();
        s.pas_min = std::numeric_limits<double>::infinity();
        for (const auto &r : records)
        {
            if (r.failed)
            {
                ++s.failures;
                continue;
            }
            dv.push_back(r.total_dv);
            s.reached += r.reached ? 1 : 0;
            s.pws_min = std::min(s.pws_min, r.pws_min);
            s.pas_min = std::min(s.pas_min, r.pas_min);
        }
        s.count = static_cast<int>(dv.size());
        if (dv.empty())
        {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            s.mean = s.std = s.p25 = s.p75 = s.p99 = s.pws_min = s.pas_min = nan;
            return s;
        }
        for (double v : dv)
            s.mean += v;
        s.mean /= dv.size();
        if (dv.size() > 1)
        {
            for (double v : dv)
                s.std += (v - s.mean) * (v - s.mean);
            s.std = std::sqrt(s.std / (dv.size() - 1));
        }
        s.p25 = percentile(dv, 0.25);
        s.p75 = percentile(dv, 0.75);
        s.p99 = percentile(dv, 0.99);
        return s;
    }

    /// Groups records by (strategy, level) in order of first appearance.
    inline McSummary summarize(const std::vector<McRecord> &records)
    {
        if (records.empty())
            throw ContractViolation("summarize requires records");
        std::vector<std::pair<std::string, ErrorLevel>> keys;
        std::map<std::pair<std::string, int>, std::vector<McRecord>> groups;
        for (const auto &r : records)
        {
            const auto k = std::make_pair(r.strategy, static_cast<int>(r.level));
            auto it = groups.find(k);
            if (it == groups.end())
            {
                keys.emplace_back(r.strategy, r.level);
                groups[k] = {r};
            }
            else
                it->second.push_back(r);
        }
        McSummary out;
        for (const auto &[name, level] : keys)
            out.rows.push_back(summarize_group(groups[{name, static_cast<int>(level)}]));
        return out;
    }

    struct McResult
    {
        std::vector<McRecord> records;  ///< ordered by level, sample, strategy
        std::vector<McTrace> traces;
        McSummary summary;
    };

    /// Initial state of MC sample `k`, shared by every strategy and error level.
    inline RelativeState mc_initial_state(const MissionConfig &m, const GuidanceConfig &g, std::uint64_t seed, int k)
    {
        Rng rng = make_stream(seed, static_cast<std::uint64_t>(k), 0x1a17u);
        return sample_initial_state(m, g, rng);
    }

    /**
     * @brief Runs every strategy on every sample and error level.
     *
     * Within a sample all strategies see the same initial state and the same
     * execution-error draws (addressed by sample and node), and each sample
     * writes to its own slots, so the result does not depend on `workers`.
     */
    inline McResult run_campaign(const NominalTrajectory &nominal, const GuidanceConfig &gcfg,
                                 const std::vector<Strategy> &strategies, const McConfig &cfg)
    {
        cfg.validate();
        if (strategies.empty())
            throw ContractViolation("run_campaign requires at least one strategy");
        GuidanceConfig g = gcfg;
        g.seed = cfg.seed;
        g.validate();
        const std::size_t S = strategies.size();
        const std::size_t L = cfg.error_levels.size();
        const std::size_t N = static_cast<std::size_t>(cfg.samples);
        const int workers = std::min<int>(resolve_workers(cfg.workers), static_cast<int>(N));

        std::vector<McRecord> records(L * N * S);
        std::vector<std::vector<McTrace>> traces(N);
        std::vector<GuidanceEnv> envs;
        envs.reserve(workers);
        for (int w = 0; w < workers; ++w)
            envs.emplace_back(nominal, g);

        parallel_for(static_cast<std::size_t>(workers), workers, [&](std::size_t w) {
            GuidanceEnv &env = envs[w];
            for (std::size_t k = N * w / workers; k < N * (w + 1) / workers; ++k)
            {
                const RelativeState x0 = mc_initial_state(nominal.mission, g, cfg.seed, static_cast<int>(k));
                for (std::size_t l = 0; l < L; ++l)
                {
                    const ThrustErrorModel err = cfg.error_model(cfg.error_levels[l]);
                    for (std::size_t s = 0; s < S; ++s)
                    {
                        const EpisodeResult ep = run_episode(env, strategies[s].policy, x0, k, err);
                        McRecord &r = records[(l * N + k) * S + s];
                        r.sample = static_cast<int>(k);
                        r.strategy = strategies[s].name;
                        r.level = cfg.error_levels[l];
                        r.total_dv = ep.total_dv;
                        r.pws_min = ep.pws_min;
                        r.pas_min = ep.pas_min;
                        r.reached = ep.reached;
                        r.failed = ep.failed;
                        r.terminal_error = ep.terminal_error;
                        r.total_reward = ep.total_reward;
                        if (static_cast<int>(k) < cfg.trace_samples)
                            traces[k].push_back({static_cast<int>(k), strategies[s].name, cfg.error_levels[l], ep});
                    }
                }
            }
        });

        McResult out;
        out.records = std::move(records);
        for (auto &t : traces)
            for (auto &x : t)
                out.traces.push_back(std::move(x));
        out.summary = summarize(out.records);
        return out;
    }

} // namespace rpo
