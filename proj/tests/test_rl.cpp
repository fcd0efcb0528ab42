#include "fixtures.hpp"
#include "rpo/rl.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace rpo;

namespace
{
    const NominalTrajectory &nominal()
    {
        static const NominalTrajectory nt = test::designed_nominal(200);
        return nt;
    }

    PpoConfig small_ppo()
    {
        PpoConfig c;
        c.hidden_width = 8;
        c.hidden_layers = 2;
        c.rollout_steps = 80;
        c.total_steps = 160;
        c.batch_size = 20;
        c.epochs = 2;
        c.seed = 5;
        return c;
    }

    ActorVector random_state(Rng &rng)
    {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        ActorVector s;
        for (int i = 0; i < kActorStateSize; ++i)
            s[i] = u(rng);
        return s;
    }

    /// Four transitions whose stored log-probabilities put the ratio on both sides of the clip range.
    std::vector<Transition> fd_batch(const PolicyParams &p)
    {
        Rng rng(17);
        std::vector<Transition> b(4);
        const double offsets[4] = {0.05, -0.04, -0.5, 0.5};
        const double adv[4] = {1.3, -0.7, 0.9, -1.1};
        for (int k = 0; k < 4; ++k)
        {
            Transition &t = b[k];
            t.s = random_state(rng);
            t.u = actor_mean(p, t.s) + 0.3 * (k - 1.5);
            t.a = std::tanh(t.u);
            t.log_prob = squashed_log_prob(t.u, actor_mean(p, t.s), p.log_std) + offsets[k];
            t.advantage = adv[k];
            t.ret = 2.0 * k - 3.0;
        }
        return b;
    }

    std::vector<const Transition *> ptrs(const std::vector<Transition> &v)
    {
        std::vector<const Transition *> out;
        for (const auto &t : v)
            out.push_back(&t);
        return out;
    }

    double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
} // namespace

TEST(Mlp, ShapeAndInit)
{
    const PolicyParams p = PolicyParams::make(64, 4, 1);
    EXPECT_EQ(p.actor_shape.sizes.front(), kActorStateSize);
    EXPECT_EQ(p.actor_shape.sizes.back(), 1);
    EXPECT_EQ(p.actor_shape.layers(), 5);
    EXPECT_EQ(p.actor.size(), 21 * 64 + 64 + 3 * (64 * 64 + 64) + 64 + 1);
    EXPECT_EQ(p.size(), p.actor.size() + p.critic.size() + 1);
    EXPECT_NO_THROW(p.validate());
    PolicyParams q = p;
    q.set_flat(p.flat());
    EXPECT_EQ(q.flat(), p.flat());
    EXPECT_THROW(q.set_flat(Eigen::VectorXd::Zero(3)), ContractViolation);
}

TEST(PpoLoss, GradientMatchesFiniteDifferences)
{
    PolicyParams p = PolicyParams::make(6, 2, 3);
    // non-trivial output bias so the actor gradient is not tiny everywhere
    p.actor[p.actor.size() - 1] = 0.2;
    PpoConfig cfg;
    cfg.clip = 0.2;
    cfg.value_coef = 0.7;
    cfg.entropy_coef = 0.03;
    const auto data = fd_batch(p);
    const auto batch = ptrs(data);
    const double vs = 2.0;

    Eigen::VectorXd g;
    const PpoLoss L = ppo_loss(p, batch, cfg, vs, &g);
    EXPECT_GT(L.clip_fraction, 0.0);
    EXPECT_LT(L.clip_fraction, 1.0);

    const Eigen::VectorXd x0 = p.flat();
    const double h = 1e-6;
    double worst_actor = 0.0, worst_critic = 0.0;
    for (int i = 0; i < x0.size(); ++i)
    {
        Eigen::VectorXd xp = x0, xm = x0;
        xp[i] += h;
        xm[i] -= h;
        PolicyParams pp = p, pm = p;
        pp.set_flat(xp);
        pm.set_flat(xm);
        const double fd = (ppo_loss(pp, batch, cfg, vs).total - ppo_loss(pm, batch, cfg, vs).total) / (2.0 * h);
        const double err = std::abs(fd - g[i]);
        if (i < p.actor.size() || i == x0.size() - 1)
            worst_actor = std::max(worst_actor, err);
        else
            worst_critic = std::max(worst_critic, err);
    }
    EXPECT_LT(worst_actor, 1e-4);
    EXPECT_LT(worst_critic, 1e-4);
}

TEST(PpoLoss, ClippedRegionHasZeroPolicyGradient)
{
    const PolicyParams p = PolicyParams::make(6, 2, 4);
    PpoConfig cfg;
    cfg.clip = 0.1;
    cfg.value_coef = 0.0;
    cfg.entropy_coef = 0.0;
    Rng rng(3);
    std::vector<Transition> data(3);
    for (auto &t : data)
    {
        t.s = random_state(rng);
        t.u = actor_mean(p, t.s) + 0.1;
        // ratio = e^{0.5} > 1 + clip with a positive advantage
        t.log_prob = squashed_log_prob(t.u, actor_mean(p, t.s), p.log_std) - 0.5;
        t.advantage = 2.0;
    }
    Eigen::VectorXd g;
    const PpoLoss L = ppo_loss(p, ptrs(data), cfg, 1.0, &g);
    EXPECT_DOUBLE_EQ(L.clip_fraction, 1.0);
    EXPECT_NEAR(L.policy, -(1.0 + cfg.clip) * 2.0, 1e-12);
    EXPECT_EQ(g.norm(), 0.0);
}

TEST(PpoLoss, UnitRatioGivesMeanAdvantage)
{
    const PolicyParams p = PolicyParams::make(6, 2, 5);
    PpoConfig cfg;
    Rng rng(4);
    std::vector<Transition> data(5);
    double mean_a = 0.0;
    for (int k = 0; k < 5; ++k)
    {
        Transition &t = data[k];
        t.s = random_state(rng);
        t.u = actor_mean(p, t.s) - 0.2 * k;
        t.log_prob = squashed_log_prob(t.u, actor_mean(p, t.s), p.log_std);
        t.advantage = 0.4 * k - 0.9;
        mean_a += t.advantage / 5.0;
    }
    const PpoLoss L = ppo_loss(p, ptrs(data), cfg);
    EXPECT_NEAR(L.policy, -mean_a, 1e-12);
    EXPECT_EQ(L.clip_fraction, 0.0);
}

TEST(PpoLoss, ZeroAdvantagesLeaveActorUntouched)
{
    const PolicyParams p = PolicyParams::make(6, 2, 6);
    PpoConfig cfg;
    cfg.entropy_coef = 0.0;
    Rng rng(5);
    std::vector<Transition> data(4);
    for (auto &t : data)
    {
        t.s = random_state(rng);
        t.u = 0.3;
        t.log_prob = -0.2;
        t.ret = 1.0;
    }
    Eigen::VectorXd g;
    const PpoLoss L = ppo_loss(p, ptrs(data), cfg, 1.0, &g);
    EXPECT_EQ(L.policy, 0.0);
    EXPECT_EQ(g.head(p.actor.size()).norm(), 0.0);
    EXPECT_EQ(g[g.size() - 1], 0.0);
    EXPECT_GT(g.segment(p.actor.size(), p.critic.size()).norm(), 0.0);
}

TEST(PpoLoss, EntropyAndValidation)
{
    PolicyParams p = PolicyParams::make(4, 1, 7);
    p.log_std = std::log(0.7);
    Transition t;
    const PpoLoss L = ppo_loss(p, {&t}, PpoConfig{});
    EXPECT_NEAR(L.entropy, 0.5 * std::log(2.0 * M_PI * M_E * 0.49), 1e-12);
    EXPECT_THROW(ppo_loss(p, {}, PpoConfig{}), ContractViolation);
}

TEST(Gae, ExamplesAndOracle)
{
    const GaeResult a = compute_gae({1, 1, 1}, {0, 0, 0}, 1.0, 1.0);
    EXPECT_EQ(a.returns, (std::vector<double>{3, 2, 1}));
    EXPECT_EQ(a.advantages, (std::vector<double>{3, 2, 1}));

    // values equal to the discounted returns leave no advantage
    const double gamma = 0.9;
    const std::vector<double> r{0.5, -1.0, 2.0, 0.25};
    std::vector<double> ret(r.size());
    double acc = 0.0;
    for (std::size_t k = r.size(); k-- > 0;)
        ret[k] = acc = r[k] + gamma * acc;
    const GaeResult b = compute_gae(r, ret, gamma, 0.95);
    for (double v : b.advantages)
        EXPECT_NEAR(v, 0.0, 1e-12);

    // lambda = 1: advantage is the direct discounted sum minus the value
    Rng rng(9);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<double> rr(40), vv(40);
    for (int k = 0; k < 40; ++k)
    {
        rr[k] = n01(rng);
        vv[k] = 3.0 * n01(rng);
    }
    const GaeResult c = compute_gae(rr, vv, 0.99, 1.0);
    for (int k = 0; k < 40; ++k)
    {
        double s = 0.0;
        for (int j = k; j < 40; ++j)
            s += std::pow(0.99, j - k) * rr[j];
        EXPECT_NEAR(c.returns[k], s, 1e-12);
        EXPECT_NEAR(c.advantages[k], s - vv[k], 1e-12);
    }

    // lambda = 0 reduces to the one-step TD error
    const GaeResult d = compute_gae(rr, vv, 0.99, 0.0);
    for (int k = 0; k < 40; ++k)
    {
        const double next = k + 1 < 40 ? vv[k + 1] : 0.0;
        EXPECT_NEAR(d.advantages[k], rr[k] + 0.99 * next - vv[k], 1e-12);
    }
    EXPECT_THROW(compute_gae({1.0}, {}, 0.9, 0.9), ContractViolation);
}

TEST(Policy, SquashedLogProbIsTheSampledDensity)
{
    PolicyParams p = PolicyParams::make(4, 1, 8);
    p.actor[p.actor.size() - 1] = 0.3;
    p.log_std = std::log(0.5);
    ActorVector s = ActorVector::Zero();
    const double mean = actor_mean(p, s);
    Rng rng(11);
    const int N = 1000000, bins = 20;
    std::vector<int> count(bins, 0);
    for (int i = 0; i < N; ++i)
    {
        const PolicyAction a = policy_act(p, s, rng, false);
        ASSERT_GT(a.a, -1.0);
        ASSERT_LT(a.a, 1.0);
        const int b = std::min(bins - 1, static_cast<int>((a.a + 1.0) / 2.0 * bins));
        ++count[b];
    }
    for (int b = 0; b < bins; ++b)
    {
        const double lo = -1.0 + 2.0 * b / bins, hi = lo + 2.0 / bins;
        // Simpson's rule on the density in a
        const int M = 200;
        double integral = 0.0;
        for (int j = 0; j <= M; ++j)
        {
            const double a = std::clamp(lo + (hi - lo) * j / M, -1.0 + 1e-12, 1.0 - 1e-12);
            const double w = (j == 0 || j == M) ? 1.0 : (j % 2 ? 4.0 : 2.0);
            integral += w * std::exp(squashed_log_prob(std::atanh(a), mean, p.log_std));
        }
        integral *= (hi - lo) / (3.0 * M);
        // independent check of the integral through the Gaussian CDF
        const double sd = std::exp(p.log_std);
        const double exact = std_normal_cdf((std::atanh(std::min(hi, 1.0 - 1e-15)) - mean) / sd) -
                             std_normal_cdf((std::atanh(std::max(lo, -1.0 + 1e-15)) - mean) / sd);
        if (exact < 0.02)
            continue;
        EXPECT_NEAR(integral, exact, 1e-6);
        EXPECT_NEAR(count[b] / static_cast<double>(N), integral, 0.02 * integral) << "bin " << b;
    }
}

TEST(Policy, ActionRangeAndMapping)
{
    PolicyParams p = PolicyParams::make(4, 1, 9);
    p.actor[p.actor.size() - 1] = 40.0;
    Rng rng(12);
    for (int i = 0; i < 1000; ++i)
    {
        const PolicyAction a = policy_act(p, ActorVector::Zero(), rng, false);
        EXPECT_LE(std::abs(a.a), 1.0);
        EXPECT_TRUE(std::isfinite(a.log_prob));
        const double alpha = action_to_alpha(a.a, 2.0);
        EXPECT_GE(alpha, 0.0);
        EXPECT_LE(alpha, 2.0);
    }
    EXPECT_EQ(action_to_alpha(-1.0, 2.0), 0.0);
    EXPECT_EQ(action_to_alpha(1.0, 2.0), 2.0);
    EXPECT_EQ(action_to_alpha(0.0, 2.0), 1.0);
    EXPECT_EQ(action_to_alpha(5.0, 2.0), 2.0);
    for (double alpha : {0.1, 0.25, 1.0, 1.9})
        EXPECT_NEAR(action_to_alpha(std::tanh(alpha_to_action(alpha, 2.0)), 2.0), alpha, 1e-12);
    EXPECT_TRUE(std::isfinite(alpha_to_action(0.0, 2.0)));
    EXPECT_TRUE(std::isfinite(alpha_to_action(2.0, 2.0)));

    const PolicyAction d = policy_act(p, ActorVector::Zero(), rng, true);
    EXPECT_EQ(d.u, d.mean);
}

TEST(Adam, BiasCorrectedFirstStepAndConvergence)
{
    Adam opt;
    opt.lr = 0.01;
    Eigen::VectorXd x(3);
    x << 1.0, -2.0, 0.5;
    const Eigen::VectorXd x0 = x;
    opt.step(x, 2.0 * x);
    for (int i = 0; i < 3; ++i)
        EXPECT_NEAR(x0[i] - x[i], 0.01 * (x0[i] > 0 ? 1.0 : -1.0), 1e-8);
    opt.lr = 0.05;
    for (int k = 0; k < 3000; ++k)
        opt.step(x, 2.0 * x);
    EXPECT_LT(x.norm(), 1e-2);
}

TEST(PpoConfig, Validation)
{
    PpoConfig c;
    EXPECT_NO_THROW(c.validate());
    c.clip = 0.0;
    EXPECT_THROW(c.validate(), ContractViolation);
    c = PpoConfig{};
    c.gae_lambda = 1.5;
    EXPECT_THROW(c.validate(), ContractViolation);
    c = PpoConfig{};
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), ContractViolation);
    c = PpoConfig{};
    c.lr = 0.0;
    EXPECT_THROW(c.validate(), ContractViolation);
}

TEST(Train, ZeroStepsReturnsInitialPolicy)
{
    GuidanceConfig g;
    PpoConfig c = small_ppo();
    c.total_steps = 0;
    const TrainResult r = train(nominal(), g, c);
    const PolicyParams init = PolicyParams::make(c.hidden_width, c.hidden_layers, c.seed, 0.25,
                                                 alpha_to_action(c.initial_alpha, g.alpha_max));
    EXPECT_EQ(r.best.flat(), init.flat());
    EXPECT_EQ(r.best_update, -1);
    EXPECT_TRUE(r.curve.empty());
    const AlphaPolicy pol = deterministic_policy(r.best, g.alpha_max);
    Rng rng(1);
    for (int i = 0; i < 10; ++i)
    {
        ActorState s;
        s.normalized = random_state(rng);
        EXPECT_NEAR(pol(s, 0), 0.25, 0.05);
    }
}

TEST(Train, BestPolicyReproducesScoreAndIsDeterministic)
{
    GuidanceConfig g;
    const PpoConfig c = small_ppo();
    const TrainResult a = train(nominal(), g, c);
    ASSERT_FALSE(a.curve.empty());
    EXPECT_GE(a.curve.back().env_steps, c.total_steps);
    EXPECT_GE(a.value_scale, 1.0);
    GuidanceEnv env(nominal(), g);
    const SigmaScore s = evaluate_sigma_points(env, deterministic_policy(a.best, g.alpha_max));
    EXPECT_EQ(s.reward, a.best_score.reward);
    EXPECT_EQ(s.mean_dv, a.best_score.mean_dv);
    double best_seen = -std::numeric_limits<double>::infinity();
    for (const auto &pt : a.curve)
        if (std::isfinite(pt.sigma_reward))
            best_seen = std::max(best_seen, pt.sigma_reward);
    EXPECT_GE(a.best_score.reward, best_seen);

    const TrainResult b = train(nominal(), g, c);
    EXPECT_EQ(a.best.flat(), b.best.flat());
    PpoConfig c2 = c;
    c2.workers = 2;
    const TrainResult w = train(nominal(), g, c2);
    EXPECT_EQ(a.best.flat(), w.best.flat());
    ASSERT_EQ(a.curve.size(), w.curve.size());
    for (std::size_t k = 0; k < a.curve.size(); ++k)
        EXPECT_EQ(a.curve[k].mean_episode_reward, w.curve[k].mean_episode_reward);
}

TEST(Train, UpdateSkipsNothingOnFiniteData)
{
    PolicyParams p = PolicyParams::make(6, 2, 10);
    const Eigen::VectorXd before = p.flat();
    auto data = fd_batch(p);
    PpoConfig cfg;
    cfg.batch_size = 3;
    cfg.epochs = 2;
    Adam opt;
    Rng rng(2);
    const UpdateStats st = ppo_update(p, data, cfg, opt, rng);
    EXPECT_EQ(st.applied, 4);
    EXPECT_EQ(st.skipped, 0);
    EXPECT_NE(p.flat(), before);
    EXPECT_THROW(ppo_update(p, {}, cfg, opt, rng), ContractViolation);
}
