#include "rpo/metrics.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace rpo;

namespace
{
    const GravityModel kGrav{};
    const SafetyConfig kSafety = SafetyConfig::make(500.0, 5400.0);

    Vec3 random_unit(std::mt19937_64 &rng)
    {
        std::normal_distribution<double> n;
        return Vec3(n(rng), n(rng), n(rng)).normalized();
    }

    AbsoluteState circular(double a, double u)
    {
        return kepler_to_eci({a, 0.0, 99.8 * kDegToRad, 0.0, 0.0, u}, kGrav);
    }
} // namespace

TEST(SafetyConfig, SigmaIsThirdOfRadius)
{
    EXPECT_EQ(kSafety.sigma, 500.0 / 3.0);
    EXPECT_THROW(SafetyConfig::make(0.0, 10.0), ContractViolation);
    EXPECT_THROW(SafetyConfig::make(500.0, 0.0), ContractViolation);
    SafetyConfig bad = kSafety;
    bad.sigma = 100.0;
    EXPECT_THROW(bad.validate(), ContractViolation);
}

TEST(Eta, IdenticalLinesOfSight)
{
    const Vec3 y = Vec3(1, 2, 3).normalized();
    EXPECT_DOUBLE_EQ(observability_eta(y, y), 1.0);
}

TEST(Eta, ReversedLineOfSight)
{
    const Vec3 y = Vec3(-1, 4, 0.5).normalized();
    EXPECT_DOUBLE_EQ(observability_eta(y, -y), -1.0);
}

TEST(Eta, Perpendicular)
{
    EXPECT_EQ(observability_eta(Vec3::UnitX(), Vec3::UnitZ()), 0.0);
}

TEST(Eta, RejectsNonUnit)
{
    EXPECT_THROW(observability_eta(Vec3(1.1, 0, 0), Vec3::UnitX()), ContractViolation);
    EXPECT_THROW(observability_eta(Vec3::UnitX(), Vec3::Zero()), ContractViolation);
}

TEST(Eta, SymmetricAndBounded)
{
    std::mt19937_64 rng(5);
    for (int i = 0; i < 1000; ++i)
    {
        const Vec3 a = random_unit(rng), b = random_unit(rng);
        const double e = observability_eta(a, b);
        EXPECT_EQ(e, observability_eta(b, a));
        EXPECT_GE(e, -1.0);
        EXPECT_LE(e, 1.0);
        EXPECT_NEAR(observability_eta_from_positions(1e5 * a, 3.0 * b), e, 1e-12);
    }
}

TEST(Eta, FromPositionsZeroRange)
{
    EXPECT_EQ(observability_eta_from_positions(Vec3::Zero(), Vec3::UnitX()), 1.0);
}

TEST(Penalty, PwsValues)
{
    EXPECT_EQ(pws_penalty(0.0, kSafety), 1.0);
    EXPECT_NEAR(pws_penalty(500.0, kSafety), std::exp(-4.5), 1e-15);
    EXPECT_NEAR(pws_penalty(500.0, kSafety), 0.011109, 1e-6);
    EXPECT_NEAR(pws_penalty(kSafety.sigma, kSafety), 0.606531, 1e-6);
    EXPECT_THROW(pws_penalty(-1.0, kSafety), ContractViolation);
}

TEST(Penalty, PasValues)
{
    EXPECT_EQ(pas_penalty(0.0, kSafety), 1.0);
    EXPECT_NEAR(pas_penalty(500.0, kSafety), std::exp(-4.5), 1e-15);
    EXPECT_NEAR(pas_penalty(1000.0, kSafety), 1.523e-8, 1e-11);
    EXPECT_THROW(pas_penalty(-1.0, kSafety), ContractViolation);
}

TEST(Penalty, StrictlyDecreasingAndBounded)
{
    double prev = 2.0;
    for (double d = 0.0; d <= 2000.0; d += 7.0)
    {
        const double p = pws_penalty(d, kSafety);
        EXPECT_LT(p, prev);
        EXPECT_GT(p, 0.0);
        EXPECT_LE(p, 1.0);
        EXPECT_EQ(p, pas_penalty(d, kSafety));
        prev = p;
    }
}

TEST(PasMinDistance, FinalNodeSameState)
{
    const AbsoluteState t = circular(kEarthRadius + 300e3, 0.3);
    EXPECT_NEAR(pas_min_distance(6, 6, t, t, kSafety, kGrav), 0.0, 1e-6);
}

TEST(PasMinDistance, RadialOffsetOrbit)
{
    const double a = kEarthRadius + 300e3;
    const AbsoluteState t = circular(a, 0.0);
    const AbsoluteState c = circular(a + 700.0, 0.0);
    EXPECT_NEAR(pas_min_distance(1, 6, c, t, kSafety, kGrav), 700.0, 1e-6);
}

TEST(PasMinDistance, AlongTrackHoldOracle)
{
    const double a = kEarthRadius + 300e3;
    const double du = 1000.0 / a;
    const AbsoluteState t = circular(a, 0.0);
    const AbsoluteState c = circular(a, du);
    const double d = pas_min_distance(6, 6, c, t, kSafety, kGrav);
    double oracle = 1e99;
    for (double tau = 0.0; tau <= kSafety.pas_window; tau += 1.0)
        oracle = std::min(oracle, (propagate(c, tau, kGrav).r - propagate(t, tau, kGrav).r).norm());
    EXPECT_NEAR(d, oracle, 1e-3);
    EXPECT_NEAR(d, 2.0 * a * std::sin(du / 2.0), 1e-3);
}

TEST(PasMinDistance, NodeRange)
{
    const AbsoluteState t = circular(kEarthRadius + 300e3, 0.0);
    EXPECT_THROW(pas_min_distance(0, 6, t, t, kSafety, kGrav), ContractViolation);
    EXPECT_THROW(pas_min_distance(7, 6, t, t, kSafety, kGrav), ContractViolation);
}

TEST(Accumulate, UnitEtaSegment)
{
    SegmentProfile p;
    for (int k = 0; k < 1000; ++k)
    {
        p.times.push_back(k);
        p.eta.push_back(1.0);
        p.zeta_pws.push_back(pws_penalty(5000.0, kSafety));
        p.zeta_pas.push_back(pas_penalty(5000.0, kSafety));
    }
    const ObjectiveTerms t = accumulate_objective_terms({p});
    EXPECT_EQ(t.g_obs, 1000.0);
    EXPECT_LT(t.g_safety, 2000.0 * std::exp(-450.0) + 1e-300);
}

TEST(Accumulate, SyntheticTwoSegmentsAndPartition)
{
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<SegmentProfile> segs(2);
    double obs = 0.0, safe = 0.0;
    for (int s = 0; s < 2; ++s)
        for (int k = 0; k < 37 + 11 * s; ++k)
        {
            const double e = u(rng), zw = 0.5 * (u(rng) + 1.0), zs = 0.5 * (u(rng) + 1.0);
            segs[s].times.push_back(k);
            segs[s].eta.push_back(e);
            segs[s].zeta_pws.push_back(zw);
            segs[s].zeta_pas.push_back(zs);
            obs += e;
            safe += zs + zw;
        }
    const ObjectiveTerms t = accumulate_objective_terms(segs);
    EXPECT_NEAR(t.g_obs, obs, 1e-12);
    EXPECT_NEAR(t.g_safety, safe, 1e-12);
    const ObjectiveTerms a = accumulate_objective_terms({segs[0]});
    const ObjectiveTerms b = accumulate_objective_terms({segs[1]});
    EXPECT_EQ(t.g_obs, a.g_obs + b.g_obs);
    EXPECT_EQ(t.g_safety, a.g_safety + b.g_safety);
}
