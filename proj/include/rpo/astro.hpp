#pragma once

// Two-body propagation, frame conversions, Lambert targeting and the
// Yamanaka-Ankersen relative-motion STM. All quantities are SI (m, s, rad).

#include "rpo/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace rpo
{

    struct GravityModel
    {
        double mu{kMuEarth};  ///< m^3/s^2

        void validate() const
        {
            if (!(mu > 0.0) || !std::isfinite(mu))
                throw ContractViolation("gravity model requires mu > 0");
        }
    };

    struct AbsoluteState
    {
        Vec3 r{Vec3::Zero()};  ///< ECI position, m
        Vec3 v{Vec3::Zero()};  ///< ECI velocity, m/s
    };

    struct KeplerianElements
    {
        double a{0.0};     ///< semi-major axis, m
        double e{0.0};
        double i{0.0};     ///< inclination, rad
        double raan{0.0};  ///< rad
        double argp{0.0};  ///< rad
        double M{0.0};     ///< mean anomaly, rad

        void validate() const
        {
            if (!(a > 0.0) || !std::isfinite(a))
                throw ContractViolation("elements require a > 0");
            if (!(e >= 0.0 && e < 1.0))
                throw ContractViolation("elements require 0 <= e < 1");
        }
    };

    /// Chaser state in the target-centred rotating RTN frame: [dr_R, dr_T, dr_N, dv_R, dv_T, dv_N].
    struct RelativeState
    {
        Vec6 x{Vec6::Zero()};

        auto position() const { return x.head<3>(); }
        auto velocity() const { return x.tail<3>(); }
    };

    /// Relative orbital elements used by the radial-normal separation metric.
    /// `da` is in metres; `de` and `di` are dimensionless vector magnitudes.
    struct RelativeOrbitalElements
    {
        double a_t{0.0};
        double da{0.0};
        double de{0.0};
        double di{0.0};
        double theta{0.0};
        double phi{0.0};
        double u_epoch{0.0};  ///< chaser mean argument of latitude at `epoch`
        double u_rate{0.0};   ///< chaser mean motion, rad/s
        double epoch{0.0};

        double u(double t) const { return u_epoch + u_rate * (t - epoch); }
    };

    // ------------------------------------------------------------------
    // Kepler's equation
    // ------------------------------------------------------------------

    inline constexpr int kKeplerMaxIterations = 50;
    inline constexpr double kKeplerTolerance = 1e-12;

    /// Eccentric anomaly for mean anomaly M (any real value) and 0 <= e < 1.
    inline double solve_kepler(double M, double e)
    {
        const double Mw = wrap_two_pi(M);
        if (e == 0.0)
            return Mw;
        double sM = std::sin(Mw);
        double E = Mw + 0.85 * e * (sM >= 0.0 ? 1.0 : -1.0);  // Danby starter
        for (int it = 0; it < kKeplerMaxIterations; ++it)
        {
            const double f = E - e * std::sin(E) - Mw;
            if (std::abs(f) < kKeplerTolerance)
                return E;
            const double fp = 1.0 - e * std::cos(E);
            E -= f / fp;
        }
        const double f = E - e * std::sin(E) - Mw;
        if (std::abs(f) < kKeplerTolerance)
            return E;
        throw NumericalFailure("Kepler solver did not converge");
    }

    inline double true_from_eccentric(double E, double e)
    {
        return 2.0 * std::atan2(std::sqrt(1.0 + e) * std::sin(0.5 * E), std::sqrt(1.0 - e) * std::cos(0.5 * E));
    }

    inline double eccentric_from_true(double nu, double e)
    {
        return 2.0 * std::atan2(std::sqrt(1.0 - e) * std::sin(0.5 * nu), std::sqrt(1.0 + e) * std::cos(0.5 * nu));
    }

    inline double true_anomaly_from_mean(double M, double e)
    {
        return true_from_eccentric(solve_kepler(M, e), e);
    }

    // ------------------------------------------------------------------
    // Element / Cartesian conversion
    // ------------------------------------------------------------------

    inline constexpr double kDegenerateTolerance = 1e-12;

    /**
     * @brief Elliptic Keplerian orbit with cached perifocal basis.
     *
     * Evaluating the state at a new epoch only advances the mean anomaly and
     * solves Kepler's equation, so repeated sampling along one arc is cheap.
     */
    class KeplerOrbit
    {
    public:
        KeplerOrbit() = default;

        KeplerOrbit(const KeplerianElements &el, double epoch, const GravityModel &g)
            : el_(el), epoch_(epoch), mu_(g.mu)
        {
            el.validate();
            g.validate();
            init_basis();
        }

        const KeplerianElements &elements() const { return el_; }
        double epoch() const { return epoch_; }
        double mean_motion() const { return n_; }
        double period() const { return kTwoPi / n_; }

        double mean_anomaly_at(double t) const { return el_.M + n_ * (t - epoch_); }

        AbsoluteState state_at(double t) const
        {
            const double E = solve_kepler(mean_anomaly_at(t), el_.e);
            const double cE = std::cos(E);
            const double sE = std::sin(E);
            const double r = el_.a * (1.0 - el_.e * cE);
            AbsoluteState s;
            s.r = (el_.a * (cE - el_.e)) * P_ + (el_.a * beta_ * sE) * Q_;
            const double k = std::sqrt(mu_ * el_.a) / r;
            s.v = (-k * sE) * P_ + (k * beta_ * cE) * Q_;
            return s;
        }

    private:
        void init_basis()
        {
            const double cO = std::cos(el_.raan), sO = std::sin(el_.raan);
            const double ci = std::cos(el_.i), si = std::sin(el_.i);
            const double cw = std::cos(el_.argp), sw = std::sin(el_.argp);
            P_ = Vec3(cO * cw - sO * sw * ci, sO * cw + cO * sw * ci, sw * si);
            Q_ = Vec3(-cO * sw - sO * cw * ci, -sO * sw + cO * cw * ci, cw * si);
            beta_ = std::sqrt(1.0 - el_.e * el_.e);
            n_ = std::sqrt(mu_ / (el_.a * el_.a * el_.a));
        }

        KeplerianElements el_{};
        double epoch_{0.0};
        double mu_{kMuEarth};
        double n_{0.0};
        double beta_{1.0};
        Vec3 P_{Vec3::UnitX()};
        Vec3 Q_{Vec3::UnitY()};
    };

    inline AbsoluteState kepler_to_eci(const KeplerianElements &el, const GravityModel &g)
    {
        return KeplerOrbit(el, 0.0, g).state_at(0.0);
    }

    /// Osculating elements. Circular orbits get argp = 0, equatorial orbits raan = 0.
    inline KeplerianElements eci_to_kepler(const AbsoluteState &s, const GravityModel &g)
    {
        g.validate();
        const double rn = s.r.norm();
        if (!(rn > 0.0) || !s.r.allFinite() || !s.v.allFinite())
            throw ContractViolation("state must be finite with |r| > 0");
        const Vec3 h = s.r.cross(s.v);
        const double hn = h.norm();
        const double v2 = s.v.squaredNorm();
        const double energy = 0.5 * v2 - g.mu / rn;
        if (!(energy < 0.0) || hn <= 0.0)
            throw UnsupportedOrbit("only elliptic orbits are supported");

        KeplerianElements el;
        el.a = -g.mu / (2.0 * energy);
        const Vec3 evec = ((v2 - g.mu / rn) * s.r - s.r.dot(s.v) * s.v) / g.mu;
        el.e = evec.norm();
        if (el.e >= 1.0)
            throw UnsupportedOrbit("only elliptic orbits are supported");
        const Vec3 hhat = h / hn;
        el.i = std::acos(std::clamp(hhat.z(), -1.0, 1.0));

        Vec3 node(-h.y(), h.x(), 0.0);
        const double nn = node.norm();
        Vec3 node_hat;
        if (el.i < kDegenerateTolerance || nn <= kDegenerateTolerance * hn)
        {
            el.raan = 0.0;
            node_hat = Vec3::UnitX();
        }
        else
        {
            node_hat = node / nn;
            el.raan = wrap_two_pi(std::atan2(node_hat.y(), node_hat.x()));
        }
        const Vec3 node_perp = hhat.cross(node_hat);

        double nu = 0.0;
        if (el.e < kDegenerateTolerance)
        {
            el.argp = 0.0;
            nu = std::atan2(s.r.dot(node_perp), s.r.dot(node_hat));
        }
        else
        {
            el.argp = wrap_two_pi(std::atan2(evec.dot(node_perp), evec.dot(node_hat)));
            const Vec3 p_hat = evec / el.e;
            const Vec3 q_hat = hhat.cross(p_hat);
            nu = std::atan2(s.r.dot(q_hat), s.r.dot(p_hat));
        }
        const double E = eccentric_from_true(nu, el.e);
        el.M = wrap_two_pi(E - el.e * std::sin(E));
        return el;
    }

    /// Two-body propagation through the element set (mean-anomaly update only).
    inline AbsoluteState propagate(const AbsoluteState &s, double dt, const GravityModel &g)
    {
        if (dt == 0.0)
            return s;
        return KeplerOrbit(eci_to_kepler(s, g), 0.0, g).state_at(dt);
    }

    inline double orbital_period(double a, const GravityModel &g)
    {
        return kTwoPi * std::sqrt(a * a * a / g.mu);
    }

    // ------------------------------------------------------------------
    // RTN frame
    // ------------------------------------------------------------------

    /// Rotation ECI -> RTN (rows R, T, N) and frame rotation rate |h|/r^2.
    struct RtnFrame
    {
        Mat3 C{Mat3::Identity()};
        double omega{0.0};

        static RtnFrame of(const AbsoluteState &target)
        {
            const double rn = target.r.norm();
            const Vec3 h = target.r.cross(target.v);
            const double hn = h.norm();
            if (!(rn > 0.0) || !(hn > kDegenerateTolerance * rn * target.v.norm()) || !(hn > 0.0))
                throw FrameUndefined("target angular momentum vanishes; RTN frame undefined");
            RtnFrame f;
            const Vec3 R = target.r / rn;
            const Vec3 N = h / hn;
            const Vec3 T = N.cross(R);
            f.C.row(0) = R.transpose();
            f.C.row(1) = T.transpose();
            f.C.row(2) = N.transpose();
            f.omega = hn / (rn * rn);
            return f;
        }

        /// Transport term omega x dr expressed in RTN, with the sign used by the conversion.
        Vec3 transport(const Vec3 &dr) const { return Vec3(omega * dr.y(), -omega * dr.x(), 0.0); }

        Vec3 to_rtn(const Vec3 &eci) const { return C * eci; }
        Vec3 to_eci(const Vec3 &rtn) const { return C.transpose() * rtn; }
    };

    inline RelativeState eci_to_rtn_relative(const AbsoluteState &chaser, const AbsoluteState &target,
                                             const RtnFrame &frame)
    {
        RelativeState rel;
        const Vec3 dr = frame.C * (chaser.r - target.r);
        rel.x.head<3>() = dr;
        rel.x.tail<3>() = frame.transport(dr) + frame.C * (chaser.v - target.v);
        return rel;
    }

    inline RelativeState eci_to_rtn_relative(const AbsoluteState &chaser, const AbsoluteState &target)
    {
        return eci_to_rtn_relative(chaser, target, RtnFrame::of(target));
    }

    inline AbsoluteState rtn_relative_to_eci(const RelativeState &rel, const AbsoluteState &target)
    {
        const RtnFrame frame = RtnFrame::of(target);
        const Vec3 dr = rel.x.head<3>();
        const Vec3 dv = rel.x.tail<3>();
        AbsoluteState s;
        s.r = target.r + frame.to_eci(dr);
        s.v = target.v + frame.to_eci(dv - frame.transport(dr));
        return s;
    }

    // ------------------------------------------------------------------
    // Relative orbital elements and radial-normal separation
    // ------------------------------------------------------------------

    /// Radial term phase convention for the RN separation.
    enum class RnVariant
    {
        as_written,  ///< cos(u - theta - phi)
        standard,    ///< cos(u - phi)
    };

    inline RelativeOrbitalElements compute_roe(const AbsoluteState &chaser, const AbsoluteState &target,
                                               const GravityModel &g, double epoch = 0.0)
    {
        const KeplerianElements c = eci_to_kepler(chaser, g);
        const KeplerianElements t = eci_to_kepler(target, g);
        RelativeOrbitalElements roe;
        roe.a_t = t.a;
        roe.da = c.a - t.a;
        const double dex = c.e * std::cos(c.argp) - t.e * std::cos(t.argp);
        const double dey = c.e * std::sin(c.argp) - t.e * std::sin(t.argp);
        roe.de = std::hypot(dex, dey);
        roe.phi = std::atan2(dey, dex);
        const double dix = c.i - t.i;
        const double diy = wrap_pi(c.raan - t.raan) * std::sin(t.i);
        roe.di = std::hypot(dix, diy);
        roe.theta = std::atan2(diy, dix);
        roe.u_epoch = c.argp + c.M;
        roe.u_rate = std::sqrt(g.mu / (c.a * c.a * c.a));
        roe.epoch = epoch;
        return roe;
    }

    /// Radial-normal separation at chaser mean argument of latitude u.
    inline double rn_distance(const RelativeOrbitalElements &roe, double u, RnVariant variant = RnVariant::as_written)
    {
        const double normal = roe.a_t * roe.di * std::sin(u - roe.theta);
        const double phase = variant == RnVariant::as_written ? roe.theta + roe.phi : roe.phi;
        const double radial = roe.da - roe.a_t * roe.de * std::cos(u - phase);
        return std::sqrt(normal * normal + radial * radial);
    }

    namespace detail
    {
        inline constexpr int kWindowGrid = 720;

        /// Golden-section minimisation of f on [lo, hi]; returns the minimiser.
        template <class F>
        double golden_section(F &&f, double lo, double hi, double tol)
        {
            constexpr double invphi = 0.6180339887498949;
            double a = lo, b = hi;
            double c = b - invphi * (b - a);
            double d = a + invphi * (b - a);
            double fc = f(c), fd = f(d);
            for (int it = 0; it < 200 && (b - a) > tol; ++it)
            {
                if (fc < fd)
                {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - invphi * (b - a);
                    fc = f(c);
                }
                else
                {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + invphi * (b - a);
                    fd = f(d);
                }
            }
            return 0.5 * (a + b);
        }

        /// Grid search over [lo, hi] followed by golden refinement around the best sample.
        template <class F>
        double grid_golden_min(F &&f, double lo, double hi, int grid = kWindowGrid)
        {
            const double step = (hi - lo) / grid;
            int best = 0;
            double fbest = f(lo);
            for (int k = 1; k <= grid; ++k)
            {
                const double fk = f(lo + step * k);
                if (fk < fbest)
                {
                    fbest = fk;
                    best = k;
                }
            }
            const double a = lo + step * std::max(best - 1, 0);
            const double b = lo + step * std::min(best + 1, grid);
            const double x = golden_section(f, a, b, 1e-12 * std::max(1.0, std::abs(hi - lo)));
            return std::min(fbest, f(x));
        }
    } // namespace detail

    /// Minimum RN separation over epochs [t, t + window).
    inline double min_rn_distance(const RelativeOrbitalElements &roe, double t, double window,
                                  RnVariant variant = RnVariant::as_written)
    {
        if (!(window > 0.0))
            throw ContractViolation("min_rn_distance requires window > 0");
        auto f = [&](double tau) { return rn_distance(roe, roe.u(tau), variant); };
        return detail::grid_golden_min(f, t, t + window);
    }

    /**
     * @brief Windowed RN-separation minima for one fixed ROE set.
     *
     * The separation depends on time only through u(t), so the local minima
     * over one u-cycle are located once and each window query reduces to
     * comparing the window endpoints with the minima that fall inside it.
     */
    class RnDistanceProfile
    {
    public:
        RnDistanceProfile(const RelativeOrbitalElements &roe, RnVariant variant)
            : roe_(roe), variant_(variant)
        {
            constexpr int grid = detail::kWindowGrid;
            const double step = kTwoPi / grid;
            std::array<double, grid> vals{};
            for (int k = 0; k < grid; ++k)
                vals[k] = f(step * k);
            for (int k = 0; k < grid; ++k)
            {
                const double prev = vals[(k + grid - 1) % grid];
                const double next = vals[(k + 1) % grid];
                if (vals[k] <= prev && vals[k] < next)
                {
                    const double c = step * k;
                    const double u = detail::golden_section([&](double x) { return f(x); }, c - step, c + step, 1e-13);
                    minima_.push_back({wrap_two_pi(u), f(u)});
                }
            }
            global_ = std::numeric_limits<double>::infinity();
            for (const auto &m : minima_)
                global_ = std::min(global_, m.value);
            if (minima_.empty())  // constant separation
                global_ = vals[0];
        }

        double min_over(double t, double window) const
        {
            const double u0 = roe_.u(t);
            const double span = roe_.u_rate * window;
            if (span >= kTwoPi || minima_.empty())
                return global_;
            double best = std::min(f(u0), f(u0 + span));
            const double base = wrap_two_pi(u0);
            for (const auto &m : minima_)
            {
                double offset = m.u - base;
                if (offset < 0.0)
                    offset += kTwoPi;
                if (offset <= span)
                    best = std::min(best, m.value);
            }
            return best;
        }

        double global_min() const { return global_; }

    private:
        struct LocalMin
        {
            double u;
            double value;
        };

        double f(double u) const { return rn_distance(roe_, u, variant_); }

        RelativeOrbitalElements roe_;
        RnVariant variant_;
        std::vector<LocalMin> minima_;
        double global_{0.0};
    };

    // ------------------------------------------------------------------
    // Lambert targeting (universal variables, zero revolutions)
    // ------------------------------------------------------------------

    struct LambertSolution
    {
        Vec3 v1{Vec3::Zero()};
        Vec3 v2{Vec3::Zero()};
    };

    namespace detail
    {
        /// Stumpff functions C(z), S(z) and the combination z*S(z) - 1 (computed without cancellation).
        inline void stumpff(double z, double &C, double &S, double &zs1)
        {
            if (std::abs(z) < 1e-2)
            {
                C = 0.5 - z / 24.0 + z * z / 720.0 - z * z * z / 40320.0 + z * z * z * z / 3628800.0;
                S = 1.0 / 6.0 - z / 120.0 + z * z / 5040.0 - z * z * z / 362880.0 + z * z * z * z / 39916800.0;
                zs1 = z * S - 1.0;
            }
            else if (z > 0.0)
            {
                const double sz = std::sqrt(z);
                const double h = std::sin(0.5 * sz);
                C = 2.0 * h * h / z;
                S = (sz - std::sin(sz)) / (sz * sz * sz);
                zs1 = -std::sin(sz) / sz;
            }
            else
            {
                const double sz = std::sqrt(-z);
                C = (std::cosh(sz) - 1.0) / (-z);
                S = (std::sinh(sz) - sz) / (sz * sz * sz);
                zs1 = -std::sinh(sz) / sz;
            }
        }
    } // namespace detail

    /**
     * @brief Zero-revolution Lambert solution by universal variables.
     *
     * The transfer sense is the one whose angular momentum has a non-negative
     * projection on `prograde_normal` (normally the target orbit normal).
     */
    inline LambertSolution lambert_solve(const Vec3 &r1, const Vec3 &r2, double tof, const GravityModel &g,
                                         const Vec3 &prograde_normal = Vec3::UnitZ())
    {
        g.validate();
        if (!(tof > 0.0))
            throw ContractViolation("lambert_solve requires tof > 0");
        const double r1n = r1.norm();
        const double r2n = r2.norm();
        if (!(r1n > 0.0) || !(r2n > 0.0))
            throw ContractViolation("lambert_solve requires non-zero radii");
        const Vec3 cross = r1.cross(r2);
        if (cross.norm() <= 1e-10 * r1n * r2n)
            throw GeometryError("Lambert endpoints are collinear; transfer plane undefined");
        const double cosdnu = std::clamp(r1.dot(r2) / (r1n * r2n), -1.0, 1.0);
        const bool short_way = cross.dot(prograde_normal) >= 0.0;
        const double A = (short_way ? 1.0 : -1.0) * std::sqrt(r1n * r2n * (1.0 + cosdnu));
        const double sqrt_mu = std::sqrt(g.mu);

        auto y_of = [&](double z) {
            double C, S, zs1;
            detail::stumpff(z, C, S, zs1);
            return r1n + r2n + A * zs1 / std::sqrt(C);
        };
        auto tof_of = [&](double z) {
            double C, S, zs1;
            detail::stumpff(z, C, S, zs1);
            const double y = r1n + r2n + A * zs1 / std::sqrt(C);
            if (y < 0.0)
                return -std::numeric_limits<double>::infinity();
            const double x = std::sqrt(y / C);
            return (x * x * x * S + A * std::sqrt(y)) / sqrt_mu;
        };

        const double z_max = 4.0 * kPi * kPi;
        double hi = z_max * (1.0 - 1e-12);
        double lo = -z_max;
        if (A > 0.0 && y_of(lo) < 0.0)
        {
            // lower edge where y crosses zero (time of flight -> 0 there)
            double a = lo, b = hi;
            for (int it = 0; it < 200; ++it)
            {
                const double m = 0.5 * (a + b);
                (y_of(m) < 0.0 ? a : b) = m;
            }
            lo = b;
        }
        else
        {
            while (tof_of(lo) > tof)
            {
                lo *= 2.0;
                if (lo < -4e5)
                    throw TargetingFailure("Lambert: time of flight below hyperbolic limit");
            }
        }
        if (tof_of(hi) < tof)
            throw TargetingFailure("Lambert: zero-revolution time of flight exceeded");

        for (int it = 0; it < 300; ++it)
        {
            const double m = 0.5 * (lo + hi);
            if (m <= lo || m >= hi)
                break;
            (tof_of(m) < tof ? lo : hi) = m;
        }
        const double z = 0.5 * (lo + hi);
        const double y = y_of(z);
        const double t_sol = tof_of(z);
        if (!(y > 0.0) || !(std::abs(t_sol - tof) <= 1e-9 * tof))
            throw TargetingFailure("Lambert: universal-variable iteration did not converge");

        const double f = 1.0 - y / r1n;
        const double gg = A * std::sqrt(y / g.mu);
        const double gdot = 1.0 - y / r2n;
        LambertSolution sol;
        sol.v1 = (r2 - f * r1) / gg;
        sol.v2 = (gdot * r2 - r1) / gg;
        if (!sol.v1.allFinite() || !sol.v2.allFinite())
            throw TargetingFailure("Lambert: non-finite velocity");
        return sol;
    }

    // ------------------------------------------------------------------
    // Yamanaka-Ankersen state transition matrix
    // ------------------------------------------------------------------

    namespace detail
    {
        /// RTN [R,T,N,...] -> YA LVLH [x=T, y=-N, z=-R, ...].
        inline Mat6 rtn_to_ya()
        {
            Mat6 P = Mat6::Zero();
            for (int blk = 0; blk < 2; ++blk)
            {
                const int o = 3 * blk;
                P(o + 0, o + 1) = 1.0;
                P(o + 1, o + 2) = -1.0;
                P(o + 2, o + 0) = -1.0;
            }
            return P;
        }
    } // namespace detail

    /**
     * @brief Linear relative-motion STM about an elliptic target orbit.
     *
     * `target_el` holds the target elements at epoch 0; the matrix maps an RTN
     * deviation at epoch t to epoch t + dt.
     */
    inline Mat6 ya_stm(const KeplerianElements &target_el, double t, double dt, const GravityModel &g)
    {
        target_el.validate();
        if (dt < 0.0)
            throw ContractViolation("ya_stm requires dt >= 0");
        if (dt == 0.0)
            return Mat6::Identity();

        const double e = target_el.e;
        const double a = target_el.a;
        const double p = a * (1.0 - e * e);
        const double n = std::sqrt(g.mu / (a * a * a));
        const double k2 = std::sqrt(g.mu / (p * p * p));
        const double nu0 = true_anomaly_from_mean(target_el.M + n * t, e);
        const double nu1 = true_anomaly_from_mean(target_el.M + n * (t + dt), e);
        const double J = k2 * dt;

        // in-plane fundamental matrix at nu1 (with J) and its inverse at nu0
        const double rho1 = 1.0 + e * std::cos(nu1);
        const double s1 = rho1 * std::sin(nu1);
        const double c1 = rho1 * std::cos(nu1);
        const double sp1 = std::cos(nu1) + e * std::cos(2.0 * nu1);
        const double cp1 = -(std::sin(nu1) + e * std::sin(2.0 * nu1));
        Eigen::Matrix4d phi;
        phi << 1.0, -c1 * (1.0 + 1.0 / rho1), s1 * (1.0 + 1.0 / rho1), 3.0 * rho1 * rho1 * J,
            0.0, s1, c1, 2.0 - 3.0 * e * s1 * J,
            0.0, 2.0 * s1, 2.0 * c1 - e, 3.0 * (1.0 - 2.0 * e * s1 * J),
            0.0, sp1, cp1, -3.0 * e * (sp1 * J + s1 / (rho1 * rho1));

        const double rho0 = 1.0 + e * std::cos(nu0);
        const double s0 = rho0 * std::sin(nu0);
        const double c0 = rho0 * std::cos(nu0);
        Eigen::Matrix4d inv;
        inv << 1.0 - e * e, 3.0 * e * s0 * (1.0 / rho0 + 1.0 / (rho0 * rho0)), -e * s0 * (1.0 + 1.0 / rho0), -e * c0 + 2.0,
            0.0, -3.0 * s0 * (1.0 / rho0 + e * e / (rho0 * rho0)), s0 * (1.0 + 1.0 / rho0), c0 - 2.0 * e,
            0.0, -3.0 * (c0 / rho0 + e), c0 * (1.0 + 1.0 / rho0) + e, -s0,
            0.0, 3.0 * rho0 + e * e - 1.0, -rho0 * rho0, e * s0;
        inv /= (1.0 - e * e);
        const Eigen::Matrix4d in_plane = phi * inv;

        // transformed-variable STM in YA order [x, y, z, x', y', z']
        Mat6 tilde = Mat6::Zero();
        constexpr std::array<int, 4> ip{0, 2, 3, 5};
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c)
                tilde(ip[r], ip[c]) = in_plane(r, c);
        const double dnu = nu1 - nu0;
        tilde(1, 1) = std::cos(dnu);
        tilde(1, 4) = std::sin(dnu);
        tilde(4, 1) = -std::sin(dnu);
        tilde(4, 4) = std::cos(dnu);

        // physical <-> transformed variables
        Mat6 to_tilde = Mat6::Zero();
        to_tilde.topLeftCorner<3, 3>() = rho0 * Mat3::Identity();
        to_tilde.bottomLeftCorner<3, 3>() = -e * std::sin(nu0) * Mat3::Identity();
        to_tilde.bottomRightCorner<3, 3>() = (1.0 / (k2 * rho0)) * Mat3::Identity();
        Mat6 from_tilde = Mat6::Zero();
        from_tilde.topLeftCorner<3, 3>() = (1.0 / rho1) * Mat3::Identity();
        from_tilde.bottomLeftCorner<3, 3>() = k2 * e * std::sin(nu1) * Mat3::Identity();
        from_tilde.bottomRightCorner<3, 3>() = k2 * rho1 * Mat3::Identity();

        const Mat6 P = detail::rtn_to_ya();
        return P.transpose() * from_tilde * tilde * to_tilde * P;
    }

} // namespace rpo
