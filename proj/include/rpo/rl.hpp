#pragma once

// Proximal policy optimisation for the contraction policy: tanh MLP actor and
// critic on flat parameter vectors, tanh-squashed Gaussian actions, GAE and
// the clipped surrogate with hand-written backpropagation.

#include "rpo/guidance.hpp"
#include "rpo/parallel.hpp"
#include "rpo/random.hpp"

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace rpo
{

    /// Fully connected network with tanh hidden layers and a linear output.
    struct MlpShape
    {
        std::vector<int> sizes;  ///< input, hidden..., output

        int layers() const { return static_cast<int>(sizes.size()) - 1; }

        int parameter_count() const
        {
            int n = 0;
            for (int l = 0; l < layers(); ++l)
                n += sizes[l + 1] * (sizes[l] + 1);
            return n;
        }

        static MlpShape make(int in, int width, int depth, int out)
        {
            MlpShape s;
            s.sizes.push_back(in);
            for (int i = 0; i < depth; ++i)
                s.sizes.push_back(width);
            s.sizes.push_back(out);
            return s;
        }
    };

    /// Forward activations of a batch, kept for the backward pass.
    struct MlpCache
    {
        std::vector<Eigen::MatrixXd> a;  ///< a[0] is the input, a.back() the output
    };

    /// Weights are stored per layer as W (column-major, out x in) followed by b.
    inline Eigen::MatrixXd mlp_forward(const MlpShape &shape, const Eigen::VectorXd &w, const Eigen::MatrixXd &x,
                                       MlpCache *cache = nullptr)
    {
        Eigen::MatrixXd a = x;
        if (cache)
        {
            cache->a.clear();
            cache->a.push_back(a);
        }
        int off = 0;
        for (int l = 0; l < shape.layers(); ++l)
        {
            const int in = shape.sizes[l], out = shape.sizes[l + 1];
            const Eigen::Map<const Eigen::MatrixXd> W(w.data() + off, out, in);
            const Eigen::Map<const Eigen::VectorXd> b(w.data() + off + out * in, out);
            off += out * (in + 1);
            Eigen::MatrixXd z = W * a;
            z.colwise() += b;
            if (l + 1 < shape.layers())
                a = z.array().tanh().matrix();
            else
                a = std::move(z);
            if (cache)
                cache->a.push_back(a);
        }
        return a;
    }

    /// Accumulates d(sum_k g_out(:,k) . y_k)/dw into `grad`.
    inline void mlp_backward(const MlpShape &shape, const Eigen::VectorXd &w, const MlpCache &cache,
                             const Eigen::MatrixXd &g_out, Eigen::Ref<Eigen::VectorXd> grad)
    {
        Eigen::MatrixXd delta = g_out;
        int off = shape.parameter_count();
        for (int l = shape.layers() - 1; l >= 0; --l)
        {
            const int in = shape.sizes[l], out = shape.sizes[l + 1];
            off -= out * (in + 1);
            const Eigen::Map<const Eigen::MatrixXd> W(w.data() + off, out, in);
            Eigen::Map<Eigen::MatrixXd> gW(grad.data() + off, out, in);
            Eigen::Map<Eigen::VectorXd> gb(grad.data() + off + out * in, out);
            const Eigen::MatrixXd &a_in = cache.a[l];
            gW += delta * a_in.transpose();
            gb += delta.rowwise().sum();
            if (l > 0)
                delta = ((W.transpose() * delta).array() * (1.0 - a_in.array().square())).matrix();
        }
    }

    inline Eigen::VectorXd mlp_init(const MlpShape &shape, Rng &rng, double output_gain)
    {
        Eigen::VectorXd w(shape.parameter_count());
        int off = 0;
        for (int l = 0; l < shape.layers(); ++l)
        {
            const int in = shape.sizes[l], out = shape.sizes[l + 1];
            const double gain = l + 1 == shape.layers() ? output_gain : 1.0;
            const double sd = gain / std::sqrt(static_cast<double>(in));
            for (int k = 0; k < out * in; ++k)
                w[off + k] = sd * normal01(rng);
            w.segment(off + out * in, out).setZero();
            off += out * (in + 1);
        }
        return w;
    }

    struct PolicyParams
    {
        MlpShape actor_shape;
        MlpShape critic_shape;
        Eigen::VectorXd actor;
        Eigen::VectorXd critic;
        double log_std{std::log(0.25)};

        int size() const { return static_cast<int>(actor.size() + critic.size()) + 1; }

        /// Concatenation [actor, critic, log_std].
        Eigen::VectorXd flat() const
        {
            Eigen::VectorXd f(size());
            f << actor, critic, log_std;
            return f;
        }

        void set_flat(const Eigen::VectorXd &f)
        {
            if (f.size() != size())
                throw ContractViolation("policy parameter vector has the wrong length");
            actor = f.head(actor.size());
            critic = f.segment(actor.size(), critic.size());
            log_std = f[f.size() - 1];
        }

        void validate() const
        {
            if (actor.size() != actor_shape.parameter_count() || critic.size() != critic_shape.parameter_count())
                throw ContractViolation("policy weights do not match the layer sizes");
            if (!actor.allFinite() || !critic.allFinite() || !std::isfinite(log_std))
                throw ContractViolation("policy weights must be finite");
        }

        /// `initial_mean` is the pre-squash action the untrained actor outputs (its output bias).
        static PolicyParams make(int width, int depth, std::uint64_t seed, double initial_std = 0.25,
                                 double initial_mean = 0.0)
        {
            PolicyParams p;
            p.actor_shape = MlpShape::make(kActorStateSize, width, depth, 1);
            p.critic_shape = MlpShape::make(kActorStateSize, width, depth, 1);
            Rng ra = make_stream(seed, 0xac7);
            Rng rc = make_stream(seed, 0xc71);
            p.actor = mlp_init(p.actor_shape, ra, 0.01);
            p.actor[p.actor.size() - 1] = initial_mean;
            p.critic = mlp_init(p.critic_shape, rc, 1.0);
            p.log_std = std::log(initial_std);
            return p;
        }
    };

    struct PpoConfig
    {
        int batch_size{64};
        int epochs{10};
        int eval_episodes{6};  ///< kept for configuration parity; evaluation always uses the 12 sigma points
        double gae_lambda{1.0};
        double discount{0.99};
        double clip{0.1};
        double lr{0.003};
        double entropy_coef{0.01};
        double value_coef{0.5};
        int rollout_steps{2048};
        long total_steps{200000};
        int hidden_width{64};
        int hidden_layers{4};
        double initial_alpha{0.25};  ///< contraction the untrained actor starts around
        int eval_every{1};  ///< rollouts between sigma-point evaluations
        std::uint64_t seed{1};
        int workers{1};

        void validate() const
        {
            if (!(clip > 0.0 && clip < 1.0))
                throw ContractViolation("ppo clip must lie in (0, 1)");
            if (!(discount > 0.0 && discount <= 1.0))
                throw ContractViolation("ppo discount must lie in (0, 1]");
            if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0))
                throw ContractViolation("ppo gae_lambda must lie in [0, 1]");
            if (batch_size < 1 || epochs < 0 || rollout_steps < 1 || total_steps < 0)
                throw ContractViolation("ppo sizes must be positive");
            if (!(initial_alpha >= 0.0))
                throw ContractViolation("ppo initial_alpha must be non-negative");
            if (hidden_width < 1 || hidden_layers < 1 || eval_every < 1)
                throw ContractViolation("ppo network and evaluation sizes must be positive");
            if (!(lr > 0.0) || !(entropy_coef >= 0.0) || !(value_coef >= 0.0))
                throw ContractViolation("ppo coefficients must be non-negative and lr positive");
        }
    };

    struct Transition
    {
        ActorVector s{ActorVector::Zero()};  ///< normalised actor state
        double u{0.0};                       ///< pre-squash Gaussian sample
        double a{0.0};                       ///< tanh(u), in (-1, 1)
        double log_prob{0.0};
        double reward{0.0};
        double value{0.0};
        double advantage{0.0};
        double ret{0.0};
    };

    inline constexpr double kLogSqrtTwoPi = 0.91893853320467274178;

    /// log(1 - tanh(u)^2) without cancellation.
    inline double log_tanh_jacobian(double u)
    {
        const double x = -2.0 * std::abs(u);
        return 2.0 * (std::log(2.0) - std::abs(u) - std::log1p(std::exp(x)));
    }

    /// Density of a = tanh(u), u ~ N(mean, std), at the pre-squash value u.
    inline double squashed_log_prob(double u, double mean, double log_std)
    {
        const double z = (u - mean) * std::exp(-log_std);
        return -0.5 * z * z - log_std - kLogSqrtTwoPi - log_tanh_jacobian(u);
    }

    inline double actor_mean(const PolicyParams &p, const ActorVector &s)
    {
        return mlp_forward(p.actor_shape, p.actor, s)(0, 0);
    }

    inline double critic_value(const PolicyParams &p, const ActorVector &s)
    {
        return mlp_forward(p.critic_shape, p.critic, s)(0, 0);
    }

    struct PolicyAction
    {
        double a{0.0};
        double u{0.0};
        double log_prob{0.0};
        double mean{0.0};
    };

    inline PolicyAction policy_act(const PolicyParams &p, const ActorVector &s, Rng &rng, bool deterministic)
    {
        PolicyAction out;
        out.mean = actor_mean(p, s);
        out.u = deterministic ? out.mean : out.mean + std::exp(p.log_std) * normal01(rng);
        out.a = std::tanh(out.u);
        out.log_prob = squashed_log_prob(out.u, out.mean, p.log_std);
        return out;
    }

    inline double action_to_alpha(double a, double alpha_max)
    {
        return std::clamp(alpha_max * (a + 1.0) / 2.0, 0.0, alpha_max);
    }

    /// Pre-squash action whose contraction is `alpha` (kept inside the open action range).
    inline double alpha_to_action(double alpha, double alpha_max)
    {
        const double a = std::clamp(2.0 * alpha / alpha_max - 1.0, -1.0 + 1e-6, 1.0 - 1e-6);
        return std::atanh(a);
    }

    struct GaeResult
    {
        std::vector<double> advantages;
        std::vector<double> returns;
    };

    /// GAE over one finite episode (terminal bootstrap value 0).
    inline GaeResult compute_gae(const std::vector<double> &rewards, const std::vector<double> &values,
                                 double discount, double lambda)
    {
        if (rewards.size() != values.size())
            throw ContractViolation("compute_gae requires equal-length rewards and values");
        const std::size_t n = rewards.size();
        GaeResult g;
        g.advantages.assign(n, 0.0);
        g.returns.assign(n, 0.0);
        double acc = 0.0;
        for (std::size_t k = n; k-- > 0;)
        {
            const double next_v = k + 1 < n ? values[k + 1] : 0.0;
            const double delta = rewards[k] + discount * next_v - values[k];
            acc = delta + discount * lambda * acc;
            g.advantages[k] = acc;
            g.returns[k] = acc + values[k];
        }
        if (lambda == 1.0)
        {
            // exact discounted return, free of the value telescoping round-off
            double ret = 0.0;
            for (std::size_t k = n; k-- > 0;)
            {
                ret = rewards[k] + discount * ret;
                g.returns[k] = ret;
                g.advantages[k] = ret - values[k];
            }
        }
        return g;
    }

    struct PpoLoss
    {
        double total{0.0};
        double policy{0.0};   ///< negative mean clipped surrogate
        double value{0.0};    ///< mean squared value error
        double entropy{0.0};  ///< Gaussian entropy of the pre-squash distribution
        double clip_fraction{0.0};
    };

    /**
     * @brief PPO loss of a minibatch and, optionally, its gradient w.r.t. the flat parameters.
     *
     * total = -mean(min(r A, clip(r, 1 -+ eps) A)) + c_v mean((V - R)^2) - c_e H,
     * with r the probability ratio of the stored pre-squash sample. Value
     * targets are divided by `value_scale`.
     */
    inline PpoLoss ppo_loss(const PolicyParams &p, const std::vector<const Transition *> &batch, const PpoConfig &cfg,
                            double value_scale = 1.0, Eigen::VectorXd *grad = nullptr)
    {
        const int B = static_cast<int>(batch.size());
        if (B == 0)
            throw ContractViolation("ppo_loss requires a non-empty batch");
        Eigen::MatrixXd X(kActorStateSize, B);
        for (int k = 0; k < B; ++k)
            X.col(k) = batch[k]->s;
        MlpCache ca, cc;
        const Eigen::MatrixXd mu = mlp_forward(p.actor_shape, p.actor, X, grad ? &ca : nullptr);
        const Eigen::MatrixXd V = mlp_forward(p.critic_shape, p.critic, X, grad ? &cc : nullptr);

        const double sd = std::exp(p.log_std);
        Eigen::MatrixXd g_mu(1, B), g_v(1, B);
        double g_logstd = 0.0;
        PpoLoss L;
        for (int k = 0; k < B; ++k)
        {
            const Transition &t = *batch[k];
            const double z = (t.u - mu(0, k)) / sd;
            const double logp = squashed_log_prob(t.u, mu(0, k), p.log_std);
            const double ratio = std::exp(logp - t.log_prob);
            const double A = t.advantage;
            const double clipped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
            const double s_unc = ratio * A, s_clip = clipped * A;
            const bool use_unclipped = s_unc <= s_clip;
            L.policy -= std::min(s_unc, s_clip) / B;
            if (!use_unclipped)
                L.clip_fraction += 1.0 / B;
            // d(-surrogate)/d logp = -ratio A on the unclipped branch, 0 otherwise
            const double g_logp = use_unclipped ? -ratio * A / B : 0.0;
            g_mu(0, k) = g_logp * z / sd;
            g_logstd += g_logp * (z * z - 1.0);

            const double err = V(0, k) - t.ret / value_scale;
            L.value += err * err / B;
            g_v(0, k) = cfg.value_coef * 2.0 * err / B;
        }
        L.entropy = 0.5 + kLogSqrtTwoPi + p.log_std;
        L.total = L.policy + cfg.value_coef * L.value - cfg.entropy_coef * L.entropy;

        if (grad)
        {
            grad->setZero(p.size());
            mlp_backward(p.actor_shape, p.actor, ca, g_mu, grad->head(p.actor.size()));
            mlp_backward(p.critic_shape, p.critic, cc, g_v, grad->segment(p.actor.size(), p.critic.size()));
            (*grad)[p.size() - 1] = g_logstd - cfg.entropy_coef;
        }
        return L;
    }

    struct Adam
    {
        double lr{0.003};
        double beta1{0.9};
        double beta2{0.999};
        double eps{1e-8};
        long t{0};
        Eigen::VectorXd m;
        Eigen::VectorXd v;

        void step(Eigen::VectorXd &x, const Eigen::VectorXd &g)
        {
            if (m.size() != x.size())
            {
                m = Eigen::VectorXd::Zero(x.size());
                v = Eigen::VectorXd::Zero(x.size());
            }
            ++t;
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
            x.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
        }
    };

    struct UpdateStats
    {
        PpoLoss first;  ///< loss of the first minibatch before any step
        PpoLoss last;
        int skipped{0};  ///< minibatches dropped for a non-finite loss or gradient
        int applied{0};
    };

    /// Shuffled minibatch epochs of Adam steps on the PPO loss.
    inline UpdateStats ppo_update(PolicyParams &p, const std::vector<Transition> &data, const PpoConfig &cfg,
                                  Adam &opt, Rng &rng, double value_scale = 1.0)
    {
        if (data.empty())
            throw ContractViolation("ppo_update requires a non-empty batch");
        UpdateStats st;
        std::vector<std::size_t> idx(data.size());
        std::iota(idx.begin(), idx.end(), 0);
        Eigen::VectorXd flat = p.flat();
        Eigen::VectorXd g;
        bool first = true;
        for (int e = 0; e < cfg.epochs; ++e)
        {
            std::shuffle(idx.begin(), idx.end(), rng);
            for (std::size_t lo = 0; lo < idx.size(); lo += cfg.batch_size)
            {
                const std::size_t hi = std::min(idx.size(), lo + cfg.batch_size);
                std::vector<const Transition *> mb;
                mb.reserve(hi - lo);
                for (std::size_t k = lo; k < hi; ++k)
                    mb.push_back(&data[idx[k]]);
                const PpoLoss L = ppo_loss(p, mb, cfg, value_scale, &g);
                if (first)
                {
                    st.first = L;
                    first = false;
                }
                st.last = L;
                if (!std::isfinite(L.total) || !g.allFinite())
                {
                    ++st.skipped;
                    continue;
                }
                opt.step(flat, g);
                p.set_flat(flat);
                ++st.applied;
            }
        }
        return st;
    }

    /// Deterministic policy as a guidance contraction law.
    inline AlphaPolicy deterministic_policy(const PolicyParams &p, double alpha_max)
    {
        return [p, alpha_max](const ActorState &s, int) {
            return action_to_alpha(std::tanh(actor_mean(p, s.normalized)), alpha_max);
        };
    }

    struct SigmaScore
    {
        double reward{0.0};    ///< summed total reward
        double mean_dv{0.0};   ///< mean total delta-v, m/s
        int failures{0};
    };

    /// Error-free episodes of a contraction law from the 12 sigma points.
    inline SigmaScore evaluate_sigma_points(GuidanceEnv &env, const AlphaPolicy &policy)
    {
        const auto pts = sigma_points(env.nominal().mission, env.config());
        SigmaScore s;
        for (std::size_t k = 0; k < pts.size(); ++k)
        {
            const EpisodeResult r = run_episode(env, policy, pts[k], k, ThrustErrorModel{});
            s.reward += r.total_reward;
            s.mean_dv += r.total_dv / pts.size();
            s.failures += r.failed ? 1 : 0;
        }
        return s;
    }

    struct TrainingPoint
    {
        int update{0};
        long env_steps{0};
        double mean_episode_reward{0.0};
        double mean_episode_dv{0.0};
        double sigma_reward{0.0};  ///< NaN when not evaluated at this update
        double sigma_mean_dv{0.0};
        double log_std{0.0};
    };

    struct TrainResult
    {
        PolicyParams best;
        SigmaScore best_score;
        int best_update{-1};  ///< -1: the initial parameters
        std::vector<TrainingPoint> curve;
        double value_scale{1.0};
    };

    /**
     * @brief PPO training on dispersed starts with sigma-point policy selection.
     *
     * Rollouts are whole episodes whose initial states and action noise come
     * from streams addressed by (seed, rollout, episode), so results do not
     * depend on the worker count. The critic regresses returns divided by the
     * spread of the first rollout's returns.
     */
    inline TrainResult train(const NominalTrajectory &nominal, const GuidanceConfig &gcfg, const PpoConfig &cfg)
    {
        cfg.validate();
        gcfg.validate();
        GuidanceEnv probe(nominal, gcfg);
        const int steps = probe.total_steps();
        const int episodes = std::max(1, (cfg.rollout_steps + steps - 1) / steps);
        const int workers = resolve_workers(cfg.workers);

        PolicyParams p = PolicyParams::make(cfg.hidden_width, cfg.hidden_layers, cfg.seed, 0.25,
                                            alpha_to_action(cfg.initial_alpha, gcfg.alpha_max));
        TrainResult out;
        out.best = p;
        out.best_score = evaluate_sigma_points(probe, deterministic_policy(p, gcfg.alpha_max));
        if (cfg.total_steps == 0)
            return out;

        std::vector<GuidanceEnv> envs;
        envs.reserve(workers);
        for (int w = 0; w < workers; ++w)
            envs.emplace_back(nominal, gcfg);

        Adam opt;
        opt.lr = cfg.lr;
        Rng shuffle_rng = make_stream(cfg.seed, 0x5fu);
        long env_steps = 0;
        bool scale_set = false;
        for (int update = 0; env_steps < cfg.total_steps; ++update)
        {
            std::vector<std::vector<Transition>> eps(episodes);
            std::vector<double> ep_reward(episodes, 0.0), ep_dv(episodes, 0.0);
            const PolicyParams snapshot = p;
            const std::size_t nw = std::min<std::size_t>(workers, episodes);
            parallel_for(nw, static_cast<int>(nw), [&](std::size_t w) {
                GuidanceEnv &env = envs[w];
                for (std::size_t e = episodes * w / nw; e < episodes * (w + 1) / nw; ++e)
                {
                    Rng rng = make_stream(cfg.seed, 0x10000u + static_cast<std::uint64_t>(update),
                                          static_cast<std::uint64_t>(e));
                    const RelativeState x0 = sample_initial_state(nominal.mission, gcfg, rng);
                    const std::uint64_t sample = stream_seed(cfg.seed, update, e);
                    env.reset(x0, sample, gcfg.thrust_error);
                    auto &tr = eps[e];
                    tr.reserve(steps);
                    while (!env.done())
                    {
                        Transition t;
                        t.s = env.observation().normalized;
                        const PolicyAction act = policy_act(snapshot, t.s, rng, false);
                        t.u = act.u;
                        t.a = act.a;
                        t.log_prob = act.log_prob;
                        t.value = critic_value(snapshot, t.s);
                        t.reward = env.step(action_to_alpha(act.a, gcfg.alpha_max)).reward;
                        tr.push_back(t);
                    }
                    ep_reward[e] = env.result().total_reward;
                    ep_dv[e] = env.result().total_dv;
                }
            });

            if (!scale_set)
            {
                std::vector<double> rets;
                for (const auto &tr : eps)
                {
                    std::vector<double> r(tr.size()), z(tr.size(), 0.0);
                    for (std::size_t k = 0; k < tr.size(); ++k)
                        r[k] = tr[k].reward;
                    const GaeResult g = compute_gae(r, z, cfg.discount, 1.0);
                    rets.insert(rets.end(), g.returns.begin(), g.returns.end());
                }
                double mean = 0.0, var = 0.0;
                for (double v : rets)
                    mean += v / rets.size();
                for (double v : rets)
                    var += (v - mean) * (v - mean) / rets.size();
                out.value_scale = std::max(1.0, std::sqrt(var));
                scale_set = true;
            }

            std::vector<Transition> data;
            data.reserve(static_cast<std::size_t>(episodes) * steps);
            for (auto &tr : eps)
            {
                std::vector<double> r(tr.size()), v(tr.size());
                for (std::size_t k = 0; k < tr.size(); ++k)
                {
                    r[k] = tr[k].reward;
                    v[k] = tr[k].value * out.value_scale;
                }
                const GaeResult g = compute_gae(r, v, cfg.discount, cfg.gae_lambda);
                for (std::size_t k = 0; k < tr.size(); ++k)
                {
                    tr[k].advantage = g.advantages[k];
                    tr[k].ret = g.returns[k];
                    data.push_back(tr[k]);
                }
            }
            env_steps += static_cast<long>(data.size());

            double am = 0.0, as = 0.0;
            for (const auto &t : data)
                am += t.advantage / data.size();
            for (const auto &t : data)
                as += (t.advantage - am) * (t.advantage - am) / data.size();
            as = std::sqrt(as);
            for (auto &t : data)
                t.advantage = as > 0.0 ? (t.advantage - am) / as : 0.0;

            ppo_update(p, data, cfg, opt, shuffle_rng, out.value_scale);

            TrainingPoint pt;
            pt.update = update;
            pt.env_steps = env_steps;
            for (int e = 0; e < episodes; ++e)
            {
                pt.mean_episode_reward += ep_reward[e] / episodes;
                pt.mean_episode_dv += ep_dv[e] / episodes;
            }
            pt.log_std = p.log_std;
            pt.sigma_reward = std::numeric_limits<double>::quiet_NaN();
            pt.sigma_mean_dv = std::numeric_limits<double>::quiet_NaN();
            const bool last = env_steps >= cfg.total_steps;
            if ((update + 1) % cfg.eval_every == 0 || last)
            {
                const SigmaScore sc = evaluate_sigma_points(envs[0], deterministic_policy(p, gcfg.alpha_max));
                pt.sigma_reward = sc.reward;
                pt.sigma_mean_dv = sc.mean_dv;
                if (sc.reward > out.best_score.reward)
                {
                    out.best = p;
                    out.best_score = sc;
                    out.best_update = update;
                }
            }
            out.curve.push_back(pt);
        }
        return out;
    }

} // namespace rpo
