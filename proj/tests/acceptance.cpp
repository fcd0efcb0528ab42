// End-to-end acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance            all criteria
//   acceptance 2 5 6      a subset
//
// Criteria 1 and 7 run the full-budget swarm and policy training and take tens
// of minutes on one core.

#include "fixtures.hpp"
#include "qcqp_oracle.hpp"
#include "rpo/io.hpp"
#include "rpo/mc.hpp"
#include "rpo/navfilter.hpp"
#include "rpo/qcqp.hpp"
#include "rpo/rl.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <sstream>

using namespace rpo;
namespace fs = std::filesystem;

namespace
{

    struct Verdict
    {
        bool pass{true};
        std::ostringstream detail;

        void check(bool ok, const std::string &what)
        {
            if (!ok)
            {
                pass = false;
                detail << " [failed: " << what << "]";
            }
        }
    };

    std::string num(double v, int prec = 6)
    {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        return buf;
    }

    io::RunConfig reference_config()
    {
        io::RunConfig c = io::load_config(fs::path(RPO_CONFIG_DIR) / "table1.json");
        c.propagate();
        c.validate();
        return c;
    }

    double median(std::vector<double> v)
    {
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }

    // Plan shared by criteria 3 and 7: the best run of criterion 1 when it ran,
    // otherwise the stored plan of an earlier full-budget run.
    std::optional<ImpulsePlan> g_designed;

    NominalTrajectory designed_nominal(const MissionConfig &m)
    {
        return build_nominal(m, g_designed ? *g_designed : test::designed_plan(m));
    }

    // ---- 1 -------------------------------------------------------------------

    void nominal_design(Verdict &v)
    {
        const io::RunConfig cfg = reference_config();
        const MissionConfig &m = cfg.mission;
        const ObjectiveEvaluator eval(m);
        const Calibration cal = calibrate_weights(eval, cfg.pso);
        v.detail << "gamma (" << num(cal.gamma[0], 4) << ", " << num(cal.gamma[1], 4) << ", " << num(cal.gamma[2], 4)
                 << ");";
        double best = std::numeric_limits<double>::infinity();
        for (std::uint64_t seed = 1; seed <= 5; ++seed)
        {
            PsoConfig p = cfg.pso;
            p.seed = seed;
            const DesignResult d = pso_optimize(eval, cal.gamma, p);
            const NominalTrajectory nt = build_nominal(m, d.plan);
            WalkDetail wd;
            eval.walk(d.plan.dv, false, cal.gamma, &wd);
            const Vec6 err = eci_to_rtn_relative(wd.final_state, eval.target_orbit().state_at(m.tf)).x - m.xf_rel.x;
            const bool safe = nt.min_pws_distance() >= m.safety.d_min && nt.min_pas_distance() >= m.safety.d_min - 1.0;
            const bool closes = err.head<3>().norm() < 1.0 && err.tail<3>().norm() < 1e-3;
            v.detail << " seed " << seed << ": dv " << num(nt.total_dv, 5) << " PWS " << num(nt.min_pws_distance(), 4)
                     << " PAS " << num(nt.min_pas_distance(), 4) << (safe && closes ? "" : " (rejected)") << ";";
            if (safe && closes && nt.total_dv < best)
            {
                best = nt.total_dv;
                g_designed = d.plan;
            }
        }
        v.detail << " best safe dv " << num(best, 5) << " m/s";
        v.check(std::isfinite(best), "no run was PWS/PAS safe with terminal closure");
        v.check(best <= 6.0, "best total dv above 6.0 m/s");
    }

    // ---- 2 -------------------------------------------------------------------

    void objective_spot_check(Verdict &v)
    {
        const ObjectiveBreakdown b = objective(test::reference_free_impulses(), reference_mission(), {1.0, 0.0, 0.0});
        v.detail << "g_dv " << num(b.g_dv, 8) << " m/s";
        v.check(!b.lambert_failed, "closure Lambert failed");
        v.check(std::abs(b.g_dv - 5.0381) <= 1e-3, "g_dv outside 5.0381 +- 0.001");
    }

    // ---- 3 -------------------------------------------------------------------

    void ekf_observability(Verdict &v)
    {
        const io::RunConfig cfg = reference_config();
        const NominalTrajectory nom = designed_nominal(cfg.mission);
        const TruthTrajectory man = sample_truth(nom, cfg.ekf.dt, true);
        const TruthTrajectory bal = sample_truth(nom, cfg.ekf.dt, false);
        std::vector<double> fm, fb;
        int below = 0;
        for (int k = 0; k < cfg.ekf_seeds; ++k)
        {
            Rng a = make_stream(cfg.ekf.seed, k, 0xe4fu);
            fm.push_back(ekf_run(man, cfg.ekf, a).final_sigma());
            Rng b = make_stream(cfg.ekf.seed, k, 0xe4fu);
            fb.push_back(ekf_run(bal, cfg.ekf, b).final_sigma());
            below += fm.back() < fb.back() ? 1 : 0;
        }
        v.detail << "median final sigma " << num(median(fm), 4) << " m over " << cfg.ekf_seeds
                 << " seeds; ballistic median " << num(median(fb), 4) << " m; maneuvered below ballistic on " << below
                 << "/" << cfg.ekf_seeds << " seeds";
        v.check(median(fm) <= 1.0, "median above 1 m");
        v.check(median(fm) < median(fb), "maneuvered median not below ballistic");
        v.check(below == cfg.ekf_seeds, "some seed not below its ballistic run");
    }

    // ---- 4 -------------------------------------------------------------------

    void qcqp_oracle(Verdict &v)
    {
        std::mt19937_64 rng(2024), orng(7);
        std::uniform_real_distribution<double> ua(0.05, 2.0);
        int interior = 0, active = 0, ls = 0;
        double worst_constraint = 0.0, worst_gap = -std::numeric_limits<double>::infinity();
        bool interior_zero = true;
        for (int i = 0; i < 1000; ++i)
        {
            const test::QcqpInstance q = test::random_qcqp_instance(rng, ua(rng));
            const QcqpResult r = qcqp_step(q.dx, q.phi, q.alpha);
            const double bound = q.alpha * q.dx.norm();
            if (r.kind == QcqpResult::Kind::interior)
            {
                ++interior;
                interior_zero = interior_zero && r.ddv == Vec3::Zero();
                continue;
            }
            if (r.kind == QcqpResult::Kind::least_squares)
            {
                ++ls;
                continue;
            }
            ++active;
            worst_constraint = std::max(worst_constraint, r.dx_next.norm() - bound);
            const double oracle = test::best_feasible_norm(q, 1000000, orng);
            worst_gap = std::max(worst_gap, r.ddv.norm() - oracle);
        }
        v.detail << interior << " interior, " << active << " active, " << ls
                 << " without a feasible impulse; worst constraint excess " << num(worst_constraint, 3)
                 << ", worst norm minus oracle " << num(worst_gap, 3);
        v.check(interior_zero, "interior case with a non-zero impulse");
        v.check(worst_constraint <= 1e-9, "contraction constraint violated beyond 1e-9");
        v.check(worst_gap <= 1e-6, "norm above the sampled optimum");
        v.check(interior > 0 && active > 0, "instance mix lacks interior or active cases");
    }

    // ---- 5 -------------------------------------------------------------------

    void astro_kernel(Verdict &v)
    {
        const GravityModel grav{};
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        const auto random_el = [&](double emax) {
            return KeplerianElements{kEarthRadius + 200e3 + 3.0e7 * u01(rng), emax * u01(rng),
                                     0.01 + (kPi - 0.02) * u01(rng), kTwoPi * u01(rng), kTwoPi * u01(rng),
                                     kTwoPi * u01(rng)};
        };

        double lam = 0.0;
        for (int cases = 0; cases < 500;)
        {
            const KeplerianElements el = random_el(0.5);
            const AbsoluteState s0 = kepler_to_eci(el, grav);
            const double tof = orbital_period(el.a, grav) * (0.02 + 0.96 * u01(rng));
            const AbsoluteState s1 = propagate(s0, tof, grav);
            if (s0.r.cross(s1.r).norm() < 1e-3 * s0.r.norm() * s1.r.norm())
                continue;
            const LambertSolution sol = lambert_solve(s0.r, s1.r, tof, grav, s0.r.cross(s0.v));
            const AbsoluteState end = propagate({s0.r, sol.v1}, tof, grav);
            lam = std::max(lam, (end.r - s1.r).norm() / s1.r.norm());
            ++cases;
        }

        const double a = kEarthRadius + 300e3;
        const KeplerianElements circ{a, 0.0, 99.8 * kDegToRad, 0.0, 0.0, 0.0};
        const double n = std::sqrt(grav.mu / (a * a * a));
        double cw = 0.0;
        for (double dt : {10.0, 540.0, 3000.0, 21600.0})
        {
            const double c = std::cos(n * dt), s = std::sin(n * dt);
            Mat6 P;
            P << 4 - 3 * c, 0, 0, s / n, 2 * (1 - c) / n, 0, 6 * (s - n * dt), 1, 0, -2 * (1 - c) / n,
                (4 * s - 3 * n * dt) / n, 0, 0, 0, c, 0, 0, s / n, 3 * n * s, 0, 0, c, 2 * s, 0, -6 * n * (1 - c), 0, 0,
                -2 * s, 4 * c - 3, 0, 0, 0, -n * s, 0, 0, c;
            const Mat6 ya = ya_stm(circ, 0.0, dt, grav);
            for (int i = 0; i < 36; ++i)
                cw = std::max(cw, std::abs(ya(i) - P(i)) / std::max(1.0, std::abs(P(i))));
        }

        std::normal_distribution<double> nd(0.0, 1.0);
        double nl = 0.0;
        const AbsoluteState tgt0 = kepler_to_eci(circ, grav);
        for (int k = 0; k < 100; ++k)
        {
            Vec6 dx0;
            for (int i = 0; i < 3; ++i)
            {
                dx0[i] = 100.0 * nd(rng);
                dx0[i + 3] = 0.05 * nd(rng);
            }
            const double dt = 60.0 + 5340.0 * u01(rng);
            const Vec6 lin = ya_stm(circ, 0.0, dt, grav) * dx0;
            const AbsoluteState ch0 = rtn_relative_to_eci(RelativeState{dx0}, tgt0);
            const Vec6 truth = eci_to_rtn_relative(propagate(ch0, dt, grav), propagate(tgt0, dt, grav)).x;
            nl = std::max(nl, (lin - truth).head<3>().norm() / truth.head<3>().norm());
        }

        double per = 0.0;
        for (int k = 0; k < 50; ++k)
        {
            const KeplerianElements el = random_el(0.7);
            const AbsoluteState s0 = kepler_to_eci(el, grav);
            const AbsoluteState s1 = propagate(s0, orbital_period(el.a, grav), grav);
            per = std::max({per, (s1.r - s0.r).norm() / s0.r.norm(), (s1.v - s0.v).norm() / s0.v.norm()});
        }

        v.detail << "Lambert closure " << num(lam, 3) << " (500 arcs), YA vs CW " << num(cw, 3)
                 << ", YA vs nonlinear " << num(nl, 3) << ", one-period " << num(per, 3);
        v.check(lam <= 1e-8, "Lambert closure");
        v.check(cw <= 1e-9, "YA/CW agreement");
        v.check(nl <= 1e-3, "YA/nonlinear agreement");
        v.check(per <= 1e-9, "periodicity");
    }

    // ---- 6 -------------------------------------------------------------------

    void ppo_properties(Verdict &v)
    {
        PolicyParams p = PolicyParams::make(8, 2, 3);
        p.actor[p.actor.size() - 1] = 0.2;
        PpoConfig cfg;
        cfg.clip = 0.2;
        Rng rng(17);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::vector<Transition> data(4);
        const double offsets[4] = {0.05, -0.04, -0.5, 0.5};
        const double adv[4] = {1.3, -0.7, 0.9, -1.1};
        for (int k = 0; k < 4; ++k)
        {
            Transition &t = data[k];
            for (int i = 0; i < kActorStateSize; ++i)
                t.s[i] = u(rng);
            t.u = actor_mean(p, t.s) + 0.3 * (k - 1.5);
            t.log_prob = squashed_log_prob(t.u, actor_mean(p, t.s), p.log_std) + offsets[k];
            t.advantage = adv[k];
            t.ret = 2.0 * k - 3.0;
        }
        std::vector<const Transition *> batch;
        for (const auto &t : data)
            batch.push_back(&t);
        Eigen::VectorXd g;
        ppo_loss(p, batch, cfg, 2.0, &g);
        const Eigen::VectorXd x0 = p.flat();
        double fd_err = 0.0;
        for (int i = 0; i < x0.size(); ++i)
        {
            PolicyParams pp = p, pm = p;
            Eigen::VectorXd xp = x0, xm = x0;
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            pp.set_flat(xp);
            pm.set_flat(xm);
            const double fd = (ppo_loss(pp, batch, cfg, 2.0).total - ppo_loss(pm, batch, cfg, 2.0).total) / 2e-6;
            fd_err = std::max(fd_err, std::abs(fd - g[i]));
        }

        std::normal_distribution<double> nd(0.0, 1.0);
        std::vector<double> r(200), val(200);
        for (int k = 0; k < 200; ++k)
        {
            r[k] = nd(rng);
            val[k] = nd(rng);
        }
        const GaeResult gae = compute_gae(r, val, 0.99, 1.0);
        bool exact = true;
        double ret = 0.0;
        for (int k = 199; k >= 0; --k)
        {
            ret = r[k] + 0.99 * ret;
            exact = exact && gae.returns[k] == ret && gae.advantages[k] == ret - val[k];
        }

        // every sample beyond the clip range on the side its advantage favours
        PpoConfig zc = cfg;
        zc.value_coef = 0.0;
        zc.entropy_coef = 0.0;
        std::vector<Transition> clipped = data;
        for (auto &t : clipped)
            t.log_prob = squashed_log_prob(t.u, actor_mean(p, t.s), p.log_std) + (t.advantage > 0 ? -0.5 : 0.5);
        std::vector<const Transition *> cb;
        for (const auto &t : clipped)
            cb.push_back(&t);
        Eigen::VectorXd gz;
        const PpoLoss lz = ppo_loss(p, cb, zc, 1.0, &gz);

        v.detail << "max |analytic - FD| " << num(fd_err, 3) << "; GAE(lambda=1) bitwise equal to discounted returns: "
                 << (exact ? "yes" : "no") << "; clipped-region gradient norm " << num(gz.norm(), 3);
        v.check(fd_err < 1e-4, "gradient");
        v.check(exact, "GAE returns");
        v.check(lz.clip_fraction == 1.0 && gz.norm() == 0.0, "clipped region gradient");
    }

    // ---- 7 -------------------------------------------------------------------

    void guidance_learning(Verdict &v)
    {
        const io::RunConfig cfg = reference_config();
        const NominalTrajectory nom = designed_nominal(cfg.mission);
        const auto t0 = std::chrono::steady_clock::now();
        const TrainResult tr = train(nom, cfg.guidance, cfg.ppo);
        const double train_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        GuidanceEnv env(nom, cfg.guidance);
        const SigmaScore sc = evaluate_sigma_points(env, schedule_policy(alpha_c_schedule(env)));
        const SigmaScore sld = evaluate_sigma_points(env, schedule_policy(alpha_ld_schedule(env)));
        v.detail << "training " << num(train_s, 4) << " s, best update " << tr.best_update
                 << "; sigma-point mean dv RL " << num(tr.best_score.mean_dv, 5) << ", C " << num(sc.mean_dv, 5)
                 << ", LD " << num(sld.mean_dv, 5) << ";";
        v.check(tr.best_score.mean_dv < sc.mean_dv, "sigma-point RL not below C");
        v.check(tr.best_score.mean_dv < sld.mean_dv, "sigma-point RL not below LD");

        const std::vector<Strategy> strategies{{"rl", deterministic_policy(tr.best, cfg.guidance.alpha_max)},
                                               {"c", schedule_policy(alpha_c_schedule(env))},
                                               {"ld", schedule_policy(alpha_ld_schedule(env))}};
        const McResult mc = run_campaign(nom, cfg.guidance, strategies, cfg.mc);
        for (ErrorLevel l : cfg.mc.error_levels)
        {
            const McStats &rl = mc.summary.at("rl", l), &c = mc.summary.at("c", l), &ld = mc.summary.at("ld", l);
            v.detail << " " << to_string(l) << ": RL " << num(rl.mean, 5) << " < C " << num(c.mean, 5) << " < LD "
                     << num(ld.mean, 5) << " (failures " << rl.failures << "/" << c.failures << "/" << ld.failures
                     << "), RL PWS min " << num(rl.pws_min, 4) << " m, PAS min " << num(rl.pas_min, 4) << " m;";
            v.check(rl.mean < c.mean && c.mean < ld.mean, "MC ordering at " + to_string(l));
            v.check(rl.pws_min >= cfg.mission.safety.d_min, "RL PWS keep-out at " + to_string(l));
            v.check(rl.pas_min >= cfg.mission.safety.d_min, "RL PAS keep-out at " + to_string(l));
        }
    }

    // ---- 8 -------------------------------------------------------------------

    void benchmarks(Verdict &v)
    {
        const io::RunConfig cfg = reference_config();
        const MissionConfig &m = cfg.mission;
        const double ld0 = alpha_ld(m.t0, m.t0, m.tf), ldf = alpha_ld(m.tf, m.t0, m.tf);
        const NominalTrajectory nom = designed_nominal(m);
        GuidanceEnv env(nom, cfg.guidance);
        const EpisodeResult ep = run_episode(env, schedule_policy(alpha_c_schedule(env)), m.x0_rel, 0, ThrustErrorModel{});
        const AlphaSConfig &as = cfg.alpha_s;
        const AlphaSResult s = alpha_s_optimize(env, as);
        const double c_obj = schedule_objective(env, alpha_c_schedule(env), sigma_points(m, cfg.guidance));
        v.detail << "alpha_LD(t0) " << ld0 << ", alpha_LD(tf) " << ldf << "; alpha_C zero-dispersion dv error "
                 << num(std::abs(ep.total_dv - nom.total_dv), 3) << " m/s; alpha_S objective " << num(s.objective, 8)
                 << " (" << s.source << ", " << as.max_iterations << " iterations x " << as.barrier_stages
                 << " stages) vs alpha_C " << num(c_obj, 8);
        v.check(ld0 == 1.0 && ldf == 0.0, "alpha_LD end points");
        v.check(std::abs(ep.total_dv - nom.total_dv) <= 1e-6, "alpha_C nominal reproduction");
        v.check(s.objective >= c_obj, "alpha_S below alpha_C");
    }

    // ---- 9 -------------------------------------------------------------------

    int forge(const std::string &args)
    {
        const std::string cmd = std::string("\"") + RPO_FORGE_PATH + "\" " + args + " > /dev/null 2>&1";
        const int st = std::system(cmd.c_str());
        return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    }

    void determinism(Verdict &v)
    {
        const fs::path desk = fs::path(RPO_CONFIG_DIR) / "desk.json";
        const fs::path root = fs::temp_directory_path() / "rpo_acceptance_determinism";
        fs::remove_all(root);
        const std::vector<std::pair<std::string, std::string>> runs{{"a", ""}, {"b", ""}, {"c", " --workers 3"}};
        for (const auto &[name, extra] : runs)
        {
            const std::string common = " --config \"" + desk.string() + "\" --out-dir \"" + (root / name).string() +
                                       "\"" + extra;
            for (const std::string sub : {"calibrate-weights", "design", "ekf", "train", "mc --strategies rl,c,ld,s"})
                if (forge(sub + common) != 0)
                {
                    v.check(false, "rpo_forge " + sub + " failed");
                    return;
                }
        }
        std::set<std::string> files;
        for (const auto &e : fs::directory_iterator(root / "a"))
            files.insert(e.path().filename().string());
        int identical = 0;
        for (const auto &f : files)
            for (const char *other : {"b", "c"})
            {
                const fs::path p = root / other / f;
                const bool same = fs::exists(p) && io::read_text(root / "a" / f) == io::read_text(p);
                identical += same ? 1 : 0;
                v.check(same, f + " differs in run " + other);
            }
        v.detail << files.size() << " artifacts per run; " << identical << "/" << 2 * files.size()
                 << " byte-identical across a rerun and a 3-worker rerun";
        v.check(files.size() >= 15, "missing artifacts");
    }

} // namespace

int main(int argc, char **argv)
{
    const std::vector<std::pair<std::string, std::function<void(Verdict &)>>> criteria{
        {"nominal design", nominal_design},   {"objective spot-check", objective_spot_check},
        {"EKF observability", ekf_observability}, {"QCQP oracle", qcqp_oracle},
        {"astrodynamics kernel", astro_kernel}, {"PPO correctness", ppo_properties},
        {"guidance learning", guidance_learning}, {"benchmark identities", benchmarks},
        {"determinism", determinism}};
    std::set<int> selected;
    for (int i = 1; i < argc; ++i)
        selected.insert(std::atoi(argv[i]));

    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k)
    {
        const int id = static_cast<int>(k) + 1;
        if (!selected.empty() && !selected.count(id))
            continue;
        Verdict v;
        const auto t0 = std::chrono::steady_clock::now();
        try
        {
            criteria[k].second(v);
        }
        catch (const std::exception &e)
        {
            v.check(false, std::string("exception: ") + e.what());
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s criterion %d (%s, %.0f s): %s\n", v.pass ? "PASS" : "FAIL", id, criteria[k].first.c_str(), s,
                    v.detail.str().c_str());
        std::fflush(stdout);
        failed += v.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
