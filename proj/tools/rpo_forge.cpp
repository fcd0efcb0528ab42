// rpo_forge: nominal design, navigation check, guidance training and
// Monte-Carlo evaluation driven by one JSON configuration.

#include "rpo/io.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>

namespace
{

    using namespace rpo;
    using io::CsvWriter;
    using io::json;
    namespace fs = std::filesystem;

    struct Common
    {
        std::string config;
        std::string out_dir{"."};
        std::optional<std::uint64_t> seed;
        std::optional<int> workers;
    };

    void add_common(CLI::App *sub, Common &c)
    {
        sub->add_option("--config", c.config, "JSON configuration file")->required();
        sub->add_option("--out-dir", c.out_dir, "directory receiving the artifacts")->capture_default_str();
        sub->add_option("--seed", c.seed, "overrides the configuration seed");
        sub->add_option("--workers", c.workers, "worker threads (0: all cores; RPO_FORGE_THREADS wins)");
    }

    io::RunConfig load(const Common &c)
    {
        if (!fs::exists(c.config))
            throw io::ConfigError("configuration file '" + c.config + "' does not exist");
        io::RunConfig cfg = io::load_config(c.config);
        if (c.seed)
            cfg.seed = *c.seed;
        if (c.workers)
            cfg.workers = *c.workers;
        cfg.propagate();
        cfg.validate();
        return cfg;
    }

    std::vector<std::string> split_list(const std::string &s)
    {
        std::vector<std::string> out;
        std::string cur;
        for (char ch : s + ",")
        {
            if (ch == ',')
            {
                if (!cur.empty())
                    out.push_back(cur);
                cur.clear();
            }
            else if (ch != ' ')
                cur += ch;
        }
        return out;
    }

    Weights parse_gamma(const std::string &s)
    {
        const auto parts = split_list(s);
        if (parts.size() != 3)
            throw io::ConfigError("--gamma expects three comma-separated weights");
        Weights w{};
        for (int k = 0; k < 3; ++k)
        {
            const char *b = parts[k].data();
            const char *e = b + parts[k].size();
            const auto r = std::from_chars(b, e, w[k]);
            if (r.ec != std::errc() || r.ptr != e || !(w[k] >= 0.0) || !std::isfinite(w[k]))
                throw io::ConfigError("--gamma weight '" + parts[k] + "' is not a finite non-negative number");
        }
        return w;
    }

    void finish(const fs::path &dir, const io::RunConfig &cfg, const std::string &command,
                const std::map<std::string, std::string> &artifacts)
    {
        io::RunManifest m;
        m.config_hash = io::config_hash(cfg);
        m.seeds[command] = cfg.seed;
        m.artifacts = artifacts;
        io::update_manifest(dir, m);
    }

    json weights_json(const Weights &g, const std::optional<Calibration> &cal)
    {
        json j = {{"gamma", g}, {"calibrated", cal.has_value()}};
        if (cal)
            j["optimal_cost"] = {{"dv_m_s", cal->optimal_cost[0]},
                                 {"observability", cal->optimal_cost[1]},
                                 {"safety", cal->optimal_cost[2]}};
        return j;
    }

    NominalTrajectory load_nominal(const io::RunConfig &cfg, const std::string &plan_path)
    {
        if (!fs::exists(plan_path))
            throw io::IoError("plan file '" + plan_path + "' does not exist");
        return build_nominal(cfg.mission, io::load_plan(plan_path));
    }

    std::string default_plan(const Common &c, const std::string &given)
    {
        return given.empty() ? (fs::path(c.out_dir) / "plan.json").string() : given;
    }

    // ---- commands ----------------------------------------------------------

    int cmd_calibrate(const Common &c, const std::string &gamma_flag)
    {
        const io::RunConfig cfg = load(c);
        const fs::path dir = c.out_dir;
        Weights g{};
        std::optional<Calibration> cal;
        if (!gamma_flag.empty())
            g = parse_gamma(gamma_flag);
        else
        {
            cal = calibrate_weights(cfg.mission, cfg.pso);
            g = cal->gamma;
        }
        io::write_json(dir / "weights.json", weights_json(g, cal));
        std::printf("gamma = %s, %s, %s\n", io::format_number(g[0]).c_str(), io::format_number(g[1]).c_str(),
                    io::format_number(g[2]).c_str());
        finish(dir, cfg, "calibrate-weights", {{"weights", "weights.json"}});
        return 0;
    }

    int cmd_design(const Common &c, const std::string &gamma_flag, const std::string &weights_path)
    {
        const io::RunConfig cfg = load(c);
        const fs::path dir = c.out_dir;
        std::map<std::string, std::string> artifacts;
        Weights g{};
        if (!gamma_flag.empty())
            g = parse_gamma(gamma_flag);
        else if (cfg.gamma)
            g = *cfg.gamma;
        else if (!weights_path.empty())
        {
            const json w = io::read_json(weights_path);
            if (!w.contains("gamma") || !w.at("gamma").is_array() || w.at("gamma").size() != 3)
                throw io::ConfigError("weights file '" + weights_path + "' has no gamma triple");
            for (int k = 0; k < 3; ++k)
                g[k] = w.at("gamma")[k].get<double>();
        }
        else
        {
            const Calibration cal = calibrate_weights(cfg.mission, cfg.pso);
            g = cal.gamma;
            io::write_json(dir / "weights.json", weights_json(g, cal));
            artifacts["weights"] = "weights.json";
        }

        const ObjectiveEvaluator eval(cfg.mission);
        const DesignResult d = pso_optimize(eval, g, cfg.pso);
        const NominalTrajectory nom = build_nominal(cfg.mission, d.plan);

        WalkDetail wd;
        eval.walk(d.plan.dv, false, g, &wd);
        const Vec6 err =
            eci_to_rtn_relative(wd.final_state, eval.target_orbit().state_at(cfg.mission.tf)).x - cfg.mission.xf_rel.x;

        io::save_plan(dir / "plan.json", d.plan);

        CsvWriter prof({"t_s", "segment", "r_R_m", "r_T_m", "r_N_m", "v_R_m_s", "v_T_m_s", "v_N_m_s", "eta",
                        "zeta_pws", "zeta_pas", "pas_min_m"});
        for (std::size_t s = 0; s < nom.profiles.size(); ++s)
        {
            const SegmentProfile &p = nom.profiles[s];
            for (std::size_t k = 0; k < p.times.size(); ++k)
            {
                prof << p.times[k] << s << p.rel_pos[k] << p.rel_vel[k] << p.eta[k] << p.zeta_pws[k] << p.zeta_pas[k]
                     << p.pas_min_dist[k];
                prof.end_row();
            }
        }
        prof.save(dir / "profiles.csv");

        CsvWriter hist({"generation", "best_objective"});
        for (std::size_t k = 0; k < d.history.size(); ++k)
        {
            hist << k << d.history[k];
            hist.end_row();
        }
        hist.save(dir / "pso_history.csv");

        const json summary = {{"gamma", g},
                              {"total_dv_m_s", d.plan.total_dv()},
                              {"g_dv", d.breakdown.g_dv},
                              {"g_obs", d.breakdown.g_obs},
                              {"g_safety", d.breakdown.g_safety},
                              {"g_total", d.breakdown.g_total},
                              {"min_pws_distance_m", nom.min_pws_distance()},
                              {"min_pas_distance_m", nom.min_pas_distance()},
                              {"terminal_position_error_m", err.head<3>().norm()},
                              {"terminal_velocity_error_m_s", err.tail<3>().norm()}};
        io::write_json(dir / "design.json", summary);
        std::printf("total dv %s m/s, min PWS %s m, min PAS %s m\n", io::format_number(d.plan.total_dv()).c_str(),
                    io::format_number(nom.min_pws_distance()).c_str(), io::format_number(nom.min_pas_distance()).c_str());

        artifacts["nominal_plan"] = "plan.json";
        artifacts["nominal_profiles"] = "profiles.csv";
        artifacts["pso_history"] = "pso_history.csv";
        artifacts["design_summary"] = "design.json";
        finish(dir, cfg, "design", artifacts);
        return 0;
    }

    int cmd_ekf(const Common &c, const std::string &plan_flag, std::optional<int> seeds_flag)
    {
        const io::RunConfig cfg = load(c);
        const fs::path dir = c.out_dir;
        const int seeds = seeds_flag.value_or(cfg.ekf_seeds);
        if (seeds < 1)
            throw io::ConfigError("--seeds must be >= 1");
        const NominalTrajectory nom = load_nominal(cfg, default_plan(c, plan_flag));
        const TruthTrajectory truth = sample_truth(nom, cfg.ekf.dt, true);
        const TruthTrajectory ballistic = sample_truth(nom, cfg.ekf.dt, false);

        std::vector<EkfHistory> hist(seeds);
        std::vector<double> final_b(seeds);
        parallel_for(static_cast<std::size_t>(seeds), resolve_workers(cfg.workers), [&](std::size_t k) {
            Rng rng = make_stream(cfg.ekf.seed, k, 0xe4fu);
            hist[k] = ekf_run(truth, cfg.ekf, rng);
            Rng rng_b = make_stream(cfg.ekf.seed, k, 0xe4fu);
            final_b[k] = ekf_run(ballistic, cfg.ekf, rng_b).final_sigma();
        });

        std::map<std::string, std::string> artifacts;
        std::vector<double> final_m(seeds), final_err(seeds);
        int below = 0;
        for (int k = 0; k < seeds; ++k)
        {
            const EkfHistory &h = hist[k];
            CsvWriter w({"t_s", "x_R_m", "x_T_m", "x_N_m", "v_R_m_s", "v_T_m_s", "v_N_m_s", "max_pos_sigma_m"});
            for (std::size_t i = 0; i < h.times.size(); ++i)
            {
                w << h.times[i] << h.estimates[i] << h.max_pos_sigma[i];
                w.end_row();
            }
            const std::string name = "ekf_seed_" + std::to_string(k) + ".csv";
            w.save(dir / name);
            artifacts["ekf_history_" + std::to_string(k)] = name;
            final_m[k] = h.final_sigma();
            final_err[k] = (h.estimates.back() - truth.states.back()).head<3>().norm();
            below += final_m[k] < final_b[k] ? 1 : 0;
        }
        const auto stats = [](const std::vector<double> &v) {
            double mean = 0.0;
            for (double x : v)
                mean += x / v.size();
            return json{{"median_m", percentile(v, 0.5)},
                        {"mean_m", mean},
                        {"min_m", *std::min_element(v.begin(), v.end())},
                        {"max_m", *std::max_element(v.begin(), v.end())}};
        };
        const json summary = {{"seeds", seeds},
                              {"final_max_pos_sigma_m", final_m},
                              {"final_position_error_m", final_err},
                              {"maneuvered", stats(final_m)},
                              {"ballistic_final_max_pos_sigma_m", final_b},
                              {"ballistic", stats(final_b)},
                              {"maneuvered_below_ballistic", below}};
        io::write_json(dir / "ekf_summary.json", summary);
        artifacts["ekf_summary"] = "ekf_summary.json";
        std::printf("median final max position sigma %s m (ballistic %s m)\n",
                    io::format_number(percentile(final_m, 0.5)).c_str(),
                    io::format_number(percentile(final_b, 0.5)).c_str());
        finish(dir, cfg, "ekf", artifacts);
        return 0;
    }

    json score_json(const SigmaScore &s)
    {
        return {{"reward", s.reward}, {"mean_dv_m_s", s.mean_dv}, {"failures", s.failures}};
    }

    int cmd_train(const Common &c, const std::string &plan_flag)
    {
        const io::RunConfig cfg = load(c);
        const fs::path dir = c.out_dir;
        const NominalTrajectory nom = load_nominal(cfg, default_plan(c, plan_flag));
        const TrainResult tr = train(nom, cfg.guidance, cfg.ppo);

        GuidanceEnv env(nom, cfg.guidance);
        io::PolicyCheckpoint ck;
        ck.params = tr.best;
        ck.bounds = env.bounds();
        ck.guidance = cfg.guidance;
        ck.score = tr.best_score;
        ck.best_update = tr.best_update;
        ck.value_scale = tr.value_scale;
        io::save_checkpoint(dir / "policy.json", ck);

        CsvWriter w({"update", "env_steps", "mean_episode_reward", "mean_episode_dv_m_s", "sigma_reward",
                     "sigma_mean_dv_m_s", "log_std"});
        for (const auto &p : tr.curve)
        {
            w << p.update << p.env_steps << p.mean_episode_reward << p.mean_episode_dv << p.sigma_reward
              << p.sigma_mean_dv << p.log_std;
            w.end_row();
        }
        w.save(dir / "training_curve.csv");

        const SigmaScore sc = evaluate_sigma_points(env, schedule_policy(alpha_c_schedule(env)));
        const SigmaScore sld = evaluate_sigma_points(env, schedule_policy(alpha_ld_schedule(env)));
        io::write_json(dir / "train_summary.json", {{"policy", score_json(tr.best_score)},
                                                    {"alpha_c", score_json(sc)},
                                                    {"alpha_ld", score_json(sld)},
                                                    {"best_update", tr.best_update},
                                                    {"updates", tr.curve.size()}});
        std::printf("sigma-point mean dv: policy %s, alpha_C %s, alpha_LD %s m/s\n",
                    io::format_number(tr.best_score.mean_dv).c_str(), io::format_number(sc.mean_dv).c_str(),
                    io::format_number(sld.mean_dv).c_str());
        finish(dir, cfg, "train",
               {{"policy_checkpoint", "policy.json"},
                {"training_curve", "training_curve.csv"},
                {"train_summary", "train_summary.json"}});
        return 0;
    }

    int cmd_mc(const Common &c, const std::string &plan_flag, const std::string &policy_flag,
               const std::string &strategies_flag, const std::string &levels_flag)
    {
        io::RunConfig cfg = load(c);
        if (!strategies_flag.empty())
            cfg.strategies = split_list(strategies_flag);
        if (!levels_flag.empty())
        {
            cfg.mc.error_levels.clear();
            for (const auto &l : split_list(levels_flag))
                cfg.mc.error_levels.push_back(error_level_from_string(l));
        }
        cfg.validate();
        if (cfg.strategies.empty())
            throw io::ConfigError("no strategies selected");
        const fs::path dir = c.out_dir;
        const NominalTrajectory nom = load_nominal(cfg, default_plan(c, plan_flag));
        GuidanceEnv env(nom, cfg.guidance);
        std::map<std::string, std::string> artifacts;

        std::vector<Strategy> strategies;
        for (const auto &name : cfg.strategies)
        {
            if (name == "rl")
            {
                const std::string path = policy_flag.empty() ? (dir / "policy.json").string() : policy_flag;
                if (!fs::exists(path))
                    throw io::IoError("policy checkpoint '" + path + "' does not exist");
                const io::PolicyCheckpoint ck = io::load_checkpoint(path);
                if (ck.bounds.lo != env.bounds().lo || ck.bounds.hi != env.bounds().hi ||
                    ck.guidance.alpha_max != cfg.guidance.alpha_max || ck.guidance.m != cfg.guidance.m)
                    throw io::ConfigError("policy checkpoint was trained against a different guidance setup");
                strategies.push_back({name, deterministic_policy(ck.params, cfg.guidance.alpha_max)});
            }
            else if (name == "c")
                strategies.push_back({name, schedule_policy(alpha_c_schedule(env))});
            else if (name == "ld")
                strategies.push_back({name, schedule_policy(alpha_ld_schedule(env))});
            else if (name == "s")
            {
                const AlphaSResult s = alpha_s_optimize(env, cfg.alpha_s);
                io::write_json(dir / "alpha_s.json", {{"schedule", s.schedule},
                                                      {"objective", s.objective},
                                                      {"objective_c", s.objective_c},
                                                      {"objective_ld", s.objective_ld},
                                                      {"objective_optimized", s.objective_optimized},
                                                      {"converged", s.converged},
                                                      {"iterations", s.iterations},
                                                      {"source", s.source}});
                artifacts["alpha_s_schedule"] = "alpha_s.json";
                strategies.push_back({name, schedule_policy(s.schedule)});
            }
        }

        const McResult r = run_campaign(nom, cfg.guidance, strategies, cfg.mc);

        CsvWriter rec({"sample", "strategy", "level", "total_dv_m_s", "pws_min_m", "pas_min_m", "reached", "failed",
                       "terminal_error_m", "total_reward"});
        for (const auto &x : r.records)
        {
            rec << x.sample << x.strategy << to_string(x.level) << x.total_dv << x.pws_min << x.pas_min << x.reached
                << x.failed << x.terminal_error << x.total_reward;
            rec.end_row();
        }
        rec.save(dir / "mc_records.csv");

        json rows = json::array();
        for (const auto &s : r.summary.rows)
        {
            const auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
            rows.push_back({{"strategy", s.strategy},
                            {"level", to_string(s.level)},
                            {"samples", s.count},
                            {"failures", s.failures},
                            {"reached", s.reached},
                            {"mean_m_s", num(s.mean)},
                            {"std_m_s", num(s.std)},
                            {"p25_m_s", num(s.p25)},
                            {"p75_m_s", num(s.p75)},
                            {"p99_m_s", num(s.p99)},
                            {"pws_min_m", num(s.pws_min)},
                            {"pas_min_m", num(s.pas_min)}});
        }
        io::write_json(dir / "mc_summary.json", {{"samples", cfg.mc.samples}, {"rows", rows}});

        CsvWriter at({"sample", "level", "strategy", "step", "t_s", "alpha"});
        CsvWriter dt({"sample", "level", "strategy", "step", "t_s", "dx_R_m", "dx_T_m", "dx_N_m", "dv_R_m_s",
                      "dv_T_m_s", "dv_N_m_s", "deviation_m", "rel_dist_m", "pas_dist_m", "ddv_m_s"});
        for (const auto &t : r.traces)
            for (const auto &s : t.episode.steps)
            {
                at << t.sample << to_string(t.level) << t.strategy << s.j << s.t_j << s.alpha_j;
                at.end_row();
                dt << t.sample << to_string(t.level) << t.strategy << s.j << s.t_j << s.dx_j
                   << s.dx_j.head<3>().norm() << s.rel_dist << s.pas_dist << s.ddv_norm;
                dt.end_row();
            }
        at.save(dir / "mc_alpha_trace.csv");
        dt.save(dir / "mc_deviation_trace.csv");

        for (const auto &s : r.summary.rows)
            std::printf("%-3s %-5s mean %s m/s, failures %d, PWS min %s m, PAS min %s m\n", s.strategy.c_str(),
                        to_string(s.level).c_str(), io::format_number(s.mean).c_str(), s.failures,
                        io::format_number(s.pws_min).c_str(), io::format_number(s.pas_min).c_str());
        artifacts["mc_records"] = "mc_records.csv";
        artifacts["mc_summary"] = "mc_summary.json";
        artifacts["mc_alpha_trace"] = "mc_alpha_trace.csv";
        artifacts["mc_deviation_trace"] = "mc_deviation_trace.csv";
        finish(dir, cfg, "mc", artifacts);
        return 0;
    }

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Far-range rendezvous design, navigation check and guidance evaluation"};
    app.require_subcommand(1);

    Common cal_c, des_c, ekf_c, tr_c, mc_c;
    std::string cal_gamma, des_gamma, des_weights, ekf_plan, tr_plan, mc_plan, mc_policy, mc_strategies, mc_levels;
    std::optional<int> ekf_seeds;

    auto *cal = app.add_subcommand("calibrate-weights", "single-objective optimisations giving the objective weights");
    add_common(cal, cal_c);
    cal->add_option("--gamma", cal_gamma, "use these weights (dv,obs,safety) instead of calibrating");

    auto *des = app.add_subcommand("design", "optimise the nominal impulse plan");
    add_common(des, des_c);
    des->add_option("--gamma", des_gamma, "objective weights dv,obs,safety (skips calibration)");
    des->add_option("--weights", des_weights, "weights.json from calibrate-weights");

    auto *ekf = app.add_subcommand("ekf", "angles-only filter runs along the nominal plan");
    add_common(ekf, ekf_c);
    ekf->add_option("--plan", ekf_plan, "plan JSON (default: <out-dir>/plan.json)");
    ekf->add_option("--seeds", ekf_seeds, "number of noise seeds");

    auto *tr = app.add_subcommand("train", "train the contraction policy");
    add_common(tr, tr_c);
    tr->add_option("--plan", tr_plan, "plan JSON (default: <out-dir>/plan.json)");

    auto *mc = app.add_subcommand("mc", "Monte-Carlo comparison of contraction strategies");
    add_common(mc, mc_c);
    mc->add_option("--plan", mc_plan, "plan JSON (default: <out-dir>/plan.json)");
    mc->add_option("--policy", mc_policy, "policy checkpoint (default: <out-dir>/policy.json)");
    mc->add_option("--strategies", mc_strategies, "comma-separated subset of rl,c,ld,s");
    mc->add_option("--levels", mc_levels, "comma-separated subset of none,low,high");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try
    {
        if (*cal)
            return cmd_calibrate(cal_c, cal_gamma);
        if (*des)
            return cmd_design(des_c, des_gamma, des_weights);
        if (*ekf)
            return cmd_ekf(ekf_c, ekf_plan, ekf_seeds);
        if (*tr)
            return cmd_train(tr_c, tr_plan);
        if (*mc)
            return cmd_mc(mc_c, mc_plan, mc_policy, mc_strategies, mc_levels);
    }
    catch (const io::IoError &e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    catch (const ContractViolation &e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    catch (const InconsistentPlan &e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    catch (const Error &e)
    {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
    catch (const std::exception &e)
    {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
