#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace rpo
{

    /// Worker count: RPO_FORGE_THREADS wins, then `requested`, then the hardware.
    inline int resolve_workers(int requested)
    {
        if (const char *env = std::getenv("RPO_FORGE_THREADS"))
        {
            try
            {
                const int v = std::stoi(env);
                if (v > 0)
                    return v;
            }
            catch (const std::exception &)
            {
            }
        }
        if (requested > 0)
            return requested;
        return std::max(1u, std::thread::hardware_concurrency());
    }

    /**
     * @brief Runs f(i) for i in [0, n) over contiguous static blocks.
     *
     * Results must be written to per-index slots; the partition never
     * affects which index does what, so output is independent of `workers`.
     * The exception of the lowest failing block is rethrown.
     */
    template <class F>
    void parallel_for(std::size_t n, int workers, F &&f)
    {
        const std::size_t w = std::min<std::size_t>(std::max(1, workers), n);
        if (w <= 1)
        {
            for (std::size_t i = 0; i < n; ++i)
                f(i);
            return;
        }
        std::vector<std::exception_ptr> errors(w);
        std::vector<std::thread> threads;
        threads.reserve(w);
        for (std::size_t b = 0; b < w; ++b)
        {
            const std::size_t lo = n * b / w;
            const std::size_t hi = n * (b + 1) / w;
            threads.emplace_back([&, lo, hi, b] {
                try
                {
                    for (std::size_t i = lo; i < hi; ++i)
                        f(i);
                }
                catch (...)
                {
                    errors[b] = std::current_exception();
                }
            });
        }
        for (auto &t : threads)
            t.join();
        for (auto &e : errors)
            if (e)
                std::rethrow_exception(e);
    }

} // namespace rpo
