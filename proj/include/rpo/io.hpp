#pragma once

// Configuration documents, persisted artifacts (plans, policy checkpoints,
// manifests) and CSV output with round-trip exact numbers.

#include "rpo/guidance.hpp"
#include "rpo/mc.hpp"
#include "rpo/navfilter.hpp"
#include "rpo/nominal.hpp"
#include "rpo/rl.hpp"

#include "json.hpp"

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace rpo::io
{

    using nlohmann::json;
    namespace fs = std::filesystem;

    inline constexpr const char *kToolVersion = "1.0.0";

    /// Malformed, incomplete or contradictory configuration document.
    struct ConfigError : ContractViolation
    {
        using ContractViolation::ContractViolation;
    };

    /// A file could not be read or written.
    struct IoError : Error
    {
        using Error::Error;
    };

    /// Shortest decimal text that parses back to the same double.
    inline std::string format_number(double v)
    {
        if (std::isnan(v))
            return "nan";
        if (std::isinf(v))
            return v > 0 ? "inf" : "-inf";
        char buf[32];
        const auto r = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, r.ptr);
    }

    inline std::string read_text(const fs::path &path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw IoError("cannot open '" + path.string() + "' for reading");
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    inline void write_text(const fs::path &path, const std::string &text)
    {
        if (path.has_parent_path())
        {
            std::error_code ec;
            fs::create_directories(path.parent_path(), ec);
        }
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot open '" + path.string() + "' for writing");
        out << text;
        if (!out)
            throw IoError("failed writing '" + path.string() + "'");
    }

    inline json parse_json(const std::string &text, const std::string &what)
    {
        try
        {
            return json::parse(text);
        }
        catch (const json::parse_error &e)
        {
            throw ConfigError(what + ": " + e.what());
        }
    }

    inline json read_json(const fs::path &path) { return parse_json(read_text(path), path.string()); }

    inline std::string dump_json(const json &j) { return j.dump(2) + "\n"; }

    inline void write_json(const fs::path &path, const json &j) { write_text(path, dump_json(j)); }

    /// Row-oriented CSV builder; the text is written in one piece by `save`.
    class CsvWriter
    {
    public:
        explicit CsvWriter(const std::vector<std::string> &header) : columns_(header.size())
        {
            for (const auto &h : header)
                cell(h);
            end_row();
        }

        CsvWriter &operator<<(double v) { return cell(format_number(v)); }
        CsvWriter &operator<<(int v) { return cell(std::to_string(v)); }
        CsvWriter &operator<<(long v) { return cell(std::to_string(v)); }
        CsvWriter &operator<<(std::size_t v) { return cell(std::to_string(v)); }
        CsvWriter &operator<<(bool v) { return cell(v ? "1" : "0"); }
        CsvWriter &operator<<(const std::string &v) { return cell(v); }
        CsvWriter &operator<<(const char *v) { return cell(v); }

        template <class Derived>
        CsvWriter &operator<<(const Eigen::MatrixBase<Derived> &v)
        {
            for (Eigen::Index i = 0; i < v.size(); ++i)
                *this << static_cast<double>(v(i));
            return *this;
        }

        void end_row()
        {
            if (in_row_ != columns_)
                throw ContractViolation("csv row has " + std::to_string(in_row_) + " cells, expected " +
                                        std::to_string(columns_));
            text_ += '\n';
            in_row_ = 0;
        }

        const std::string &text() const { return text_; }
        void save(const fs::path &path) const { write_text(path, text_); }

    private:
        CsvWriter &cell(const std::string &s)
        {
            if (s.find_first_of(",\"\n") != std::string::npos)
                throw ContractViolation("csv cells may not contain separators or quotes");
            if (in_row_ > 0)
                text_ += ',';
            text_ += s;
            ++in_row_;
            return *this;
        }

        std::size_t columns_;
        std::size_t in_row_{0};
        std::string text_;
    };

    inline std::uint64_t fnv1a(std::string_view s)
    {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : s)
        {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    inline std::string hex64(std::uint64_t v)
    {
        static const char *digits = "0123456789abcdef";
        std::string s(16, '0');
        for (int i = 15; i >= 0; --i, v >>= 4)
            s[i] = digits[v & 0xf];
        return s;
    }

    /// Key-checked view of a JSON object: every key must be consumed before `finish`.
    class Reader
    {
    public:
        Reader(const json &j, std::string where) : j_(&j), where_(std::move(where))
        {
            if (!j.is_object())
                throw ConfigError(label() + " must be an object");
        }

        bool has(const std::string &key) const { return j_->contains(key); }

        /// Consumes a key without interpreting it; null when absent.
        const json *raw(const std::string &key) { return take(key); }

        double number(const std::string &key, double def)
        {
            const json *v = take(key);
            if (!v)
                return def;
            if (!v->is_number())
                throw ConfigError(path(key) + " must be a number");
            const double x = v->get<double>();
            if (!std::isfinite(x))
                throw ConfigError(path(key) + " must be finite");
            return x;
        }

        long integer(const std::string &key, long def)
        {
            const json *v = take(key);
            if (!v)
                return def;
            if (!v->is_number_integer())
                throw ConfigError(path(key) + " must be an integer");
            return v->get<long>();
        }

        std::uint64_t seed(const std::string &key, std::uint64_t def)
        {
            const json *v = take(key);
            if (!v)
                return def;
            if (!v->is_number_unsigned())
                throw ConfigError(path(key) + " must be a non-negative integer");
            return v->get<std::uint64_t>();
        }

        bool boolean(const std::string &key, bool def)
        {
            const json *v = take(key);
            if (!v)
                return def;
            if (!v->is_boolean())
                throw ConfigError(path(key) + " must be true or false");
            return v->get<bool>();
        }

        std::string string(const std::string &key, const std::string &def)
        {
            const json *v = take(key);
            if (!v)
                return def;
            if (!v->is_string())
                throw ConfigError(path(key) + " must be a string");
            return v->get<std::string>();
        }

        std::vector<std::string> strings(const std::string &key, const std::vector<std::string> &def)
        {
            const json *v = take(key);
            if (!v)
                return def;
            if (!v->is_array())
                throw ConfigError(path(key) + " must be an array of strings");
            std::vector<std::string> out;
            for (const auto &e : *v)
            {
                if (!e.is_string())
                    throw ConfigError(path(key) + " must be an array of strings");
                out.push_back(e.get<std::string>());
            }
            return out;
        }

        Vec3 vec3(const std::string &key, const Vec3 &def)
        {
            const json *v = take(key);
            if (!v)
                return def;
            if (!v->is_array() || v->size() != 3)
                throw ConfigError(path(key) + " must be an array of 3 numbers");
            Vec3 out;
            for (int i = 0; i < 3; ++i)
            {
                if (!(*v)[i].is_number())
                    throw ConfigError(path(key) + " must be an array of 3 numbers");
                out[i] = (*v)[i].get<double>();
            }
            if (!out.allFinite())
                throw ConfigError(path(key) + " must be finite");
            return out;
        }

        /// Relative-state block {"position_m": [...], "velocity_m_s": [...]}.
        Vec6 state(const std::string &key, const Vec6 &def)
        {
            if (!has(key))
            {
                used_.insert(key);
                return def;
            }
            Reader r = object(key);
            Vec6 out;
            out.head<3>() = r.vec3("position_m", def.head<3>());
            out.tail<3>() = r.vec3("velocity_m_s", def.tail<3>());
            r.finish();
            return out;
        }

        /// Nested object; a missing key reads as an empty object.
        Reader object(const std::string &key)
        {
            static const json empty = json::object();
            const json *v = take(key);
            return Reader(v ? *v : empty, dotted(key));
        }

        void finish() const
        {
            for (const auto &[k, v] : j_->items())
                if (!used_.count(k))
                    throw ConfigError("unknown key " + path(k));
        }

    private:
        const json *take(const std::string &key)
        {
            used_.insert(key);
            const auto it = j_->find(key);
            return it == j_->end() ? nullptr : &*it;
        }

        std::string label() const { return where_.empty() ? "document" : "'" + where_ + "'"; }
        std::string dotted(const std::string &key) const { return where_.empty() ? key : where_ + "." + key; }
        std::string path(const std::string &key) const { return "'" + dotted(key) + "'"; }

        const json *j_;
        std::string where_;
        std::set<std::string> used_;
    };

    inline json state_json(const Vec6 &x)
    {
        return {{"position_m", {x[0], x[1], x[2]}}, {"velocity_m_s", {x[3], x[4], x[5]}}};
    }

    inline RnVariant rn_variant_from_string(const std::string &s)
    {
        if (s == "as_written")
            return RnVariant::as_written;
        if (s == "standard")
            return RnVariant::standard;
        throw ConfigError("unknown rn_variant '" + s + "' (expected as_written or standard)");
    }

    inline std::string to_string(RnVariant v) { return v == RnVariant::standard ? "standard" : "as_written"; }

    inline const std::vector<std::string> &known_strategies()
    {
        static const std::vector<std::string> s{"rl", "c", "ld", "s"};
        return s;
    }

    /// Everything one configuration file controls, for all commands.
    struct RunConfig
    {
        MissionConfig mission{reference_mission()};
        PsoConfig pso{};
        std::optional<Weights> gamma;
        GuidanceConfig guidance{};
        ThrustErrorModel low_error{ThrustErrorModel::preset(ErrorLevel::low)};
        ThrustErrorModel high_error{ThrustErrorModel::preset(ErrorLevel::high)};
        PpoConfig ppo{};
        AlphaSConfig alpha_s{};
        EkfConfig ekf{};
        int ekf_seeds{20};
        McConfig mc{};
        std::vector<std::string> strategies{"rl", "c", "ld"};
        std::uint64_t seed{1};
        int workers{1};

        /// Pushes the run seed and worker count into every stage.
        void propagate()
        {
            pso.seed = ppo.seed = mc.seed = ekf.seed = guidance.seed = seed;
            pso.workers = ppo.workers = mc.workers = workers;
            mc.low_error = low_error;
            mc.high_error = high_error;
        }

        void validate() const
        {
            mission.validate();
            pso.validate();
            guidance.validate();
            ppo.validate();
            ekf.validate();
            mc.validate();
            if (ekf_seeds < 1)
                throw ConfigError("ekf seeds must be >= 1");
            if (workers < 0)
                throw ConfigError("workers must be >= 0 (0 selects the hardware concurrency)");
            if (gamma)
                for (double g : *gamma)
                    if (!(g >= 0.0) || !std::isfinite(g))
                        throw ConfigError("weights must be finite and non-negative");
            for (const auto &s : strategies)
                if (std::find(known_strategies().begin(), known_strategies().end(), s) == known_strategies().end())
                    throw ConfigError("unknown strategy '" + s + "'");
        }
    };

    namespace detail
    {
        inline ThrustErrorModel read_error(Reader r, ErrorLevel level, const ThrustErrorModel &def)
        {
            ThrustErrorModel e = def;
            e.level = level;
            e.sigma_mag = r.number("sigma_magnitude_fraction", def.sigma_mag);
            if (r.has("sigma_direction_deg") && r.has("sigma_direction_rad"))
                throw ConfigError("give the pointing error in degrees or radians, not both");
            e.sigma_dir = r.number("sigma_direction_rad", def.sigma_dir);
            if (r.has("sigma_direction_deg"))
                e.sigma_dir = r.number("sigma_direction_deg", 0.0) * kDegToRad;
            r.finish();
            return e;
        }

        inline json error_json(const ThrustErrorModel &e)
        {
            return {{"sigma_magnitude_fraction", e.sigma_mag}, {"sigma_direction_rad", e.sigma_dir}};
        }

        inline double read_angle(Reader &r, const std::string &base, double def_rad)
        {
            if (r.has(base + "_deg") && r.has(base + "_rad"))
                throw ConfigError("give '" + base + "' in degrees or radians, not both");
            const double rad = r.number(base + "_rad", def_rad);
            return r.has(base + "_deg") ? r.number(base + "_deg", 0.0) * kDegToRad : rad;
        }
    } // namespace detail

    inline GuidanceConfig parse_guidance(Reader r, GuidanceConfig g = {})
    {
        g.m = static_cast<int>(r.integer("impulses_per_segment", g.m));
        g.alpha_max = r.number("alpha_max", g.alpha_max);
        g.rho_obs = r.number("rho_obs_m_s", g.rho_obs);
        g.rho_safe = r.number("rho_safe_per_s", g.rho_safe);
        g.dx0_max = r.state("dx0_max", g.dx0_max);
        g.reach_tolerance = r.number("reach_tolerance_m", g.reach_tolerance);
        const std::string level = r.string("training_error_level", to_string(g.thrust_error.level));
        g.thrust_error.level = error_level_from_string(level);
        if (r.has("training_error"))
            g.thrust_error = detail::read_error(r.object("training_error"), g.thrust_error.level, g.thrust_error);
        else if (g.thrust_error.level != ErrorLevel::none && g.thrust_error.sigma_mag == 0.0 &&
                 g.thrust_error.sigma_dir == 0.0)
            g.thrust_error = ThrustErrorModel::preset(g.thrust_error.level);
        r.finish();
        return g;
    }

    inline json guidance_json(const GuidanceConfig &g)
    {
        return {{"impulses_per_segment", g.m},
                {"alpha_max", g.alpha_max},
                {"rho_obs_m_s", g.rho_obs},
                {"rho_safe_per_s", g.rho_safe},
                {"dx0_max", state_json(g.dx0_max)},
                {"reach_tolerance_m", g.reach_tolerance},
                {"training_error_level", to_string(g.thrust_error.level)},
                {"training_error", detail::error_json(g.thrust_error)}};
    }

    inline RunConfig parse_config(const json &doc)
    {
        RunConfig c;
        Reader root(doc, "");
        c.seed = root.seed("seed", c.seed);
        c.workers = static_cast<int>(root.integer("workers", c.workers));

        {
            Reader m = root.object("mission");
            MissionConfig &mc = c.mission;
            mc.gravity.mu = m.number("mu_m3_s2", mc.gravity.mu);
            {
                Reader t = m.object("target");
                KeplerianElements &el = mc.target_el0;
                if (t.has("semi_major_axis_m") && t.has("altitude_m"))
                    throw ConfigError("give the target orbit by semi_major_axis_m or altitude_m, not both");
                el.a = t.number("semi_major_axis_m", el.a);
                if (t.has("altitude_m"))
                    el.a = kEarthRadius + t.number("altitude_m", 0.0);
                el.e = t.number("eccentricity", el.e);
                el.i = detail::read_angle(t, "inclination", el.i);
                el.raan = detail::read_angle(t, "raan", el.raan);
                el.argp = detail::read_angle(t, "arg_perigee", el.argp);
                el.M = detail::read_angle(t, "mean_anomaly", el.M);
                t.finish();
            }
            mc.t0 = m.number("t0_s", mc.t0);
            if (m.has("tof_s") && m.has("tof_orbits"))
                throw ConfigError("give the transfer time by tof_s or tof_orbits, not both");
            double tof = m.number("tof_s", mc.tf - mc.t0);
            if (m.has("tof_orbits"))
            {
                const double a = mc.target_el0.a;
                tof = m.number("tof_orbits", 0.0) * kTwoPi * std::sqrt(a * a * a / mc.gravity.mu);
            }
            mc.tf = mc.t0 + tof;
            mc.n = static_cast<int>(m.integer("nodes", mc.n));
            mc.dv_lim = m.number("dv_lim_m_s", mc.dv_lim);
            mc.n_grid = static_cast<int>(m.integer("grid_points", mc.n_grid));
            mc.x0_rel.x = m.state("x0_rel", mc.x0_rel.x);
            mc.xf_rel.x = m.state("xf_rel", mc.xf_rel.x);
            const double d_min = m.number("d_min_m", mc.safety.d_min);
            const double window = m.number("pas_window_s", mc.safety.pas_window);
            if (!(d_min > 0.0) || !(window > 0.0))
                throw ConfigError("d_min_m and pas_window_s must be positive");
            mc.safety = SafetyConfig::make(d_min, window);
            mc.rn_variant = rn_variant_from_string(m.string("rn_variant", to_string(mc.rn_variant)));
            m.finish();
        }
        {
            Reader p = root.object("pso");
            c.pso.swarm_size = static_cast<int>(p.integer("swarm_size", c.pso.swarm_size));
            c.pso.iterations = static_cast<int>(p.integer("iterations", c.pso.iterations));
            c.pso.w = p.number("inertia", c.pso.w);
            c.pso.c1 = p.number("cognitive", c.pso.c1);
            c.pso.c2 = p.number("social", c.pso.c2);
            c.pso.velocity_clamp = p.number("velocity_clamp_fraction", c.pso.velocity_clamp);
            p.finish();
        }
        if (const json *g = root.raw("gamma"))
        {
            if (!g->is_array() || g->size() != 3)
                throw ConfigError("'gamma' must be an array of 3 numbers");
            Weights w{};
            for (int k = 0; k < 3; ++k)
            {
                if (!(*g)[k].is_number())
                    throw ConfigError("'gamma' must be an array of 3 numbers");
                w[k] = (*g)[k].get<double>();
            }
            c.gamma = w;
        }
        c.guidance = parse_guidance(root.object("guidance"));
        {
            Reader e = root.object("thrust_error");
            c.low_error = detail::read_error(e.object("low"), ErrorLevel::low, c.low_error);
            c.high_error = detail::read_error(e.object("high"), ErrorLevel::high, c.high_error);
            e.finish();
        }
        {
            Reader p = root.object("ppo");
            PpoConfig &q = c.ppo;
            q.batch_size = static_cast<int>(p.integer("batch_size", q.batch_size));
            q.epochs = static_cast<int>(p.integer("epochs", q.epochs));
            q.eval_episodes = static_cast<int>(p.integer("eval_episodes", q.eval_episodes));
            q.gae_lambda = p.number("gae_lambda", q.gae_lambda);
            q.discount = p.number("discount", q.discount);
            q.clip = p.number("clip", q.clip);
            q.lr = p.number("learning_rate", q.lr);
            q.entropy_coef = p.number("entropy_coef", q.entropy_coef);
            q.value_coef = p.number("value_coef", q.value_coef);
            q.rollout_steps = static_cast<int>(p.integer("rollout_steps", q.rollout_steps));
            q.total_steps = p.integer("total_steps", q.total_steps);
            q.hidden_width = static_cast<int>(p.integer("hidden_width", q.hidden_width));
            q.hidden_layers = static_cast<int>(p.integer("hidden_layers", q.hidden_layers));
            q.initial_alpha = p.number("initial_alpha", q.initial_alpha);
            q.eval_every = static_cast<int>(p.integer("eval_every", q.eval_every));
            p.finish();
        }
        {
            Reader a = root.object("alpha_s");
            c.alpha_s.max_iterations = static_cast<int>(a.integer("max_iterations", c.alpha_s.max_iterations));
            c.alpha_s.fd_step = a.number("fd_step_fraction", c.alpha_s.fd_step);
            c.alpha_s.barrier_stages = static_cast<int>(a.integer("barrier_stages", c.alpha_s.barrier_stages));
            c.alpha_s.tolerance = a.number("tolerance", c.alpha_s.tolerance);
            a.finish();
        }
        {
            Reader e = root.object("ekf");
            c.ekf.dt = e.number("dt_s", c.ekf.dt);
            c.ekf.sigma_s = e.number("sigma_los", c.ekf.sigma_s);
            c.ekf.sigma_w = e.state("sigma_w", c.ekf.sigma_w);
            c.ekf.sigma_x0 = e.state("sigma_x0", c.ekf.sigma_x0);
            c.ekf.process_noise_scale = e.number("process_noise_scale", c.ekf.process_noise_scale);
            c.ekf.scatter_in_r = e.boolean("scatter_in_r", c.ekf.scatter_in_r);
            c.ekf.position_scatter = e.boolean("position_scatter", c.ekf.position_scatter);
            c.ekf.reset_at_impulse = e.boolean("reset_at_impulse", c.ekf.reset_at_impulse);
            c.ekf_seeds = static_cast<int>(e.integer("seeds", c.ekf_seeds));
            e.finish();
        }
        {
            Reader m = root.object("mc");
            c.mc.samples = static_cast<int>(m.integer("samples", c.mc.samples));
            c.mc.trace_samples = static_cast<int>(m.integer("trace_samples", c.mc.trace_samples));
            std::vector<std::string> levels;
            for (ErrorLevel l : c.mc.error_levels)
                levels.push_back(to_string(l));
            c.mc.error_levels.clear();
            for (const auto &s : m.strings("levels", levels))
                c.mc.error_levels.push_back(error_level_from_string(s));
            c.strategies = m.strings("strategies", c.strategies);
            m.finish();
        }
        root.finish();
        c.propagate();
        c.validate();
        return c;
    }

    inline RunConfig load_config(const fs::path &path) { return parse_config(read_json(path)); }

    /// Canonical document of the effective configuration; hashed into manifests.
    inline json config_json(const RunConfig &c)
    {
        const MissionConfig &m = c.mission;
        json levels = json::array();
        for (ErrorLevel l : c.mc.error_levels)
            levels.push_back(to_string(l));
        json j = {
            {"seed", c.seed},
            {"workers", c.workers},
            {"mission",
             {{"mu_m3_s2", m.gravity.mu},
              {"target",
               {{"semi_major_axis_m", m.target_el0.a},
                {"eccentricity", m.target_el0.e},
                {"inclination_rad", m.target_el0.i},
                {"raan_rad", m.target_el0.raan},
                {"arg_perigee_rad", m.target_el0.argp},
                {"mean_anomaly_rad", m.target_el0.M}}},
              {"t0_s", m.t0},
              {"tof_s", m.tf - m.t0},
              {"nodes", m.n},
              {"dv_lim_m_s", m.dv_lim},
              {"grid_points", m.n_grid},
              {"x0_rel", state_json(m.x0_rel.x)},
              {"xf_rel", state_json(m.xf_rel.x)},
              {"d_min_m", m.safety.d_min},
              {"pas_window_s", m.safety.pas_window},
              {"rn_variant", to_string(m.rn_variant)}}},
            {"pso",
             {{"swarm_size", c.pso.swarm_size},
              {"iterations", c.pso.iterations},
              {"inertia", c.pso.w},
              {"cognitive", c.pso.c1},
              {"social", c.pso.c2},
              {"velocity_clamp_fraction", c.pso.velocity_clamp}}},
            {"guidance", guidance_json(c.guidance)},
            {"thrust_error", {{"low", detail::error_json(c.low_error)}, {"high", detail::error_json(c.high_error)}}},
            {"ppo",
             {{"batch_size", c.ppo.batch_size},
              {"epochs", c.ppo.epochs},
              {"eval_episodes", c.ppo.eval_episodes},
              {"gae_lambda", c.ppo.gae_lambda},
              {"discount", c.ppo.discount},
              {"clip", c.ppo.clip},
              {"learning_rate", c.ppo.lr},
              {"entropy_coef", c.ppo.entropy_coef},
              {"value_coef", c.ppo.value_coef},
              {"rollout_steps", c.ppo.rollout_steps},
              {"total_steps", c.ppo.total_steps},
              {"hidden_width", c.ppo.hidden_width},
              {"hidden_layers", c.ppo.hidden_layers},
              {"initial_alpha", c.ppo.initial_alpha},
              {"eval_every", c.ppo.eval_every}}},
            {"alpha_s",
             {{"max_iterations", c.alpha_s.max_iterations},
              {"fd_step_fraction", c.alpha_s.fd_step},
              {"barrier_stages", c.alpha_s.barrier_stages},
              {"tolerance", c.alpha_s.tolerance}}},
            {"ekf",
             {{"dt_s", c.ekf.dt},
              {"sigma_los", c.ekf.sigma_s},
              {"sigma_w", state_json(c.ekf.sigma_w)},
              {"sigma_x0", state_json(c.ekf.sigma_x0)},
              {"process_noise_scale", c.ekf.process_noise_scale},
              {"scatter_in_r", c.ekf.scatter_in_r},
              {"position_scatter", c.ekf.position_scatter},
              {"reset_at_impulse", c.ekf.reset_at_impulse},
              {"seeds", c.ekf_seeds}}},
            {"mc",
             {{"samples", c.mc.samples},
              {"trace_samples", c.mc.trace_samples},
              {"levels", levels},
              {"strategies", c.strategies}}},
        };
        if (c.gamma)
            j["gamma"] = *c.gamma;
        return j;
    }

    /// Hash of everything that can change results; the worker count cannot.
    inline std::string config_hash(const RunConfig &c)
    {
        json j = config_json(c);
        j.erase("workers");
        return hex64(fnv1a(j.dump()));
    }

    // ---- impulse plans ----------------------------------------------------

    inline json plan_json(const ImpulsePlan &p)
    {
        json dv = json::array();
        for (const auto &d : p.dv)
            dv.push_back({d[0], d[1], d[2]});
        return {{"node_times_s", p.node_times}, {"dv_eci_m_s", dv}, {"total_dv_m_s", p.total_dv()}};
    }

    inline ImpulsePlan parse_plan(const json &doc)
    {
        Reader r(doc, "plan");
        ImpulsePlan p;
        const json *tp = r.raw("node_times_s");
        const json *dvp = r.raw("dv_eci_m_s");
        r.number("total_dv_m_s", 0.0);
        r.finish();
        if (!tp || !dvp)
            throw ConfigError("plan requires node_times_s and dv_eci_m_s");
        const json &t = *tp;
        const json &dv = *dvp;
        if (!t.is_array() || !dv.is_array() || t.size() != dv.size())
            throw ConfigError("plan node_times_s and dv_eci_m_s must be arrays of equal length");
        for (std::size_t k = 0; k < t.size(); ++k)
        {
            if (!t[k].is_number())
                throw ConfigError("plan node times must be numbers");
            p.node_times.push_back(t[k].get<double>());
            if (!dv[k].is_array() || dv[k].size() != 3)
                throw ConfigError("each plan impulse must be an array of 3 numbers");
            Vec3 v;
            for (int i = 0; i < 3; ++i)
            {
                if (!dv[k][i].is_number())
                    throw ConfigError("each plan impulse must be an array of 3 numbers");
                v[i] = dv[k][i].get<double>();
            }
            p.dv.push_back(v);
        }
        return p;
    }

    inline ImpulsePlan load_plan(const fs::path &path) { return parse_plan(read_json(path)); }
    inline void save_plan(const fs::path &path, const ImpulsePlan &p) { write_json(path, plan_json(p)); }

    // ---- policy checkpoints -------------------------------------------------

    struct PolicyCheckpoint
    {
        PolicyParams params;
        NormalizationBounds bounds;
        GuidanceConfig guidance;
        SigmaScore score;
        int best_update{-1};
        double value_scale{1.0};
    };

    namespace detail
    {
        inline std::vector<double> to_std(const Eigen::VectorXd &v) { return {v.data(), v.data() + v.size()}; }

        inline Eigen::VectorXd numbers(const json &j, const std::string &what)
        {
            if (!j.is_array())
                throw ConfigError("checkpoint '" + what + "' must be an array");
            Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
            for (std::size_t k = 0; k < j.size(); ++k)
            {
                if (!j[k].is_number())
                    throw ConfigError("checkpoint '" + what + "' must contain numbers");
                v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
            }
            return v;
        }

        inline MlpShape shape(const json &j, const std::string &what)
        {
            MlpShape s;
            if (!j.is_array() || j.size() < 2)
                throw ConfigError("checkpoint '" + what + "' must list at least two layer sizes");
            for (const auto &e : j)
            {
                if (!e.is_number_integer() || e.get<int>() < 1)
                    throw ConfigError("checkpoint '" + what + "' sizes must be positive integers");
                s.sizes.push_back(e.get<int>());
            }
            return s;
        }
    } // namespace detail

    inline json checkpoint_json(const PolicyCheckpoint &c)
    {
        const auto vec = [](const ActorVector &v) { return std::vector<double>(v.data(), v.data() + v.size()); };
        return {{"actor_layers", c.params.actor_shape.sizes},
                {"critic_layers", c.params.critic_shape.sizes},
                {"actor_weights", detail::to_std(c.params.actor)},
                {"critic_weights", detail::to_std(c.params.critic)},
                {"log_std", c.params.log_std},
                {"normalization", {{"lo", vec(c.bounds.lo)}, {"hi", vec(c.bounds.hi)}}},
                {"guidance", guidance_json(c.guidance)},
                {"sigma_score",
                 {{"reward", c.score.reward}, {"mean_dv_m_s", c.score.mean_dv}, {"failures", c.score.failures}}},
                {"best_update", c.best_update},
                {"value_scale", c.value_scale}};
    }

    inline PolicyCheckpoint parse_checkpoint(const json &doc)
    {
        Reader r(doc, "checkpoint");
        for (const char *k : {"actor_layers", "critic_layers", "actor_weights", "critic_weights", "log_std",
                              "normalization", "guidance"})
            if (!r.has(k))
                throw ConfigError(std::string("checkpoint is missing '") + k + "'");
        PolicyCheckpoint c;
        c.params.actor_shape = detail::shape(*r.raw("actor_layers"), "actor_layers");
        c.params.critic_shape = detail::shape(*r.raw("critic_layers"), "critic_layers");
        c.params.actor = detail::numbers(*r.raw("actor_weights"), "actor_weights");
        c.params.critic = detail::numbers(*r.raw("critic_weights"), "critic_weights");
        c.params.log_std = r.number("log_std", 0.0);
        for (const auto &sh : {c.params.actor_shape, c.params.critic_shape})
            if (sh.sizes.front() != kActorStateSize || sh.sizes.back() != 1)
                throw ConfigError("checkpoint networks must map the actor state to one output");
        c.params.validate();
        {
            Reader n = r.object("normalization");
            const json *lop = n.raw("lo");
            const json *hip = n.raw("hi");
            if (!lop || !hip)
                throw ConfigError("checkpoint normalization requires lo and hi");
            const Eigen::VectorXd lo = detail::numbers(*lop, "normalization.lo");
            const Eigen::VectorXd hi = detail::numbers(*hip, "normalization.hi");
            if (lo.size() != kActorStateSize || hi.size() != kActorStateSize)
                throw ConfigError("checkpoint normalization bounds must have one entry per actor input");
            c.bounds.lo = lo;
            c.bounds.hi = hi;
            n.finish();
        }
        c.guidance = parse_guidance(r.object("guidance"));
        c.guidance.validate();
        {
            Reader s = r.object("sigma_score");
            c.score.reward = s.number("reward", 0.0);
            c.score.mean_dv = s.number("mean_dv_m_s", 0.0);
            c.score.failures = static_cast<int>(s.integer("failures", 0));
            s.finish();
        }
        c.best_update = static_cast<int>(r.integer("best_update", -1));
        c.value_scale = r.number("value_scale", 1.0);
        r.finish();
        return c;
    }

    inline PolicyCheckpoint load_checkpoint(const fs::path &path) { return parse_checkpoint(read_json(path)); }
    inline void save_checkpoint(const fs::path &path, const PolicyCheckpoint &c) { write_json(path, checkpoint_json(c)); }

    // ---- manifests ----------------------------------------------------------

    /// Record of one output directory: config hash, seeds and the artifacts written so far.
    struct RunManifest
    {
        std::string config_hash;
        std::map<std::string, std::uint64_t> seeds;
        std::map<std::string, std::string> artifacts;  ///< role -> path relative to the output directory
        std::string tool_version{kToolVersion};

        json to_json() const
        {
            return {{"config_hash", config_hash}, {"seeds", seeds}, {"artifacts", artifacts}, {"tool_version", tool_version}};
        }
    };

    /**
     * @brief Merges `m` into the manifest stored in `dir` and rewrites it.
     *
     * Entries whose files no longer exist are dropped, so every listed path
     * exists after a successful write.
     */
    inline RunManifest update_manifest(const fs::path &dir, const RunManifest &m)
    {
        RunManifest out;
        const fs::path file = dir / "manifest.json";
        if (fs::exists(file))
        {
            try
            {
                const json old = read_json(file);
                if (old.contains("artifacts") && old.at("artifacts").is_object())
                    for (const auto &[k, v] : old.at("artifacts").items())
                        if (v.is_string())
                            out.artifacts[k] = v.get<std::string>();
                if (old.contains("seeds") && old.at("seeds").is_object())
                    for (const auto &[k, v] : old.at("seeds").items())
                        if (v.is_number_unsigned())
                            out.seeds[k] = v.get<std::uint64_t>();
            }
            catch (const ConfigError &)
            {
                // an unreadable manifest is simply replaced
            }
        }
        out.config_hash = m.config_hash;
        for (const auto &[k, v] : m.seeds)
            out.seeds[k] = v;
        for (const auto &[k, v] : m.artifacts)
            out.artifacts[k] = v;
        for (auto it = out.artifacts.begin(); it != out.artifacts.end();)
            it = fs::exists(dir / it->second) ? std::next(it) : out.artifacts.erase(it);
        write_json(file, out.to_json());
        return out;
    }

} // namespace rpo::io
