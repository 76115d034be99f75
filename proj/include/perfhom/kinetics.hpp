#pragma once

// Precipitation / dissolution kinetics on the grain surface.
//
//   dv/dt = k (r(u) - w),   w = 0        if v < 0
//                           w = min(r,1) if v = 0
//                           w = 1        if v > 0
//
// With u frozen over a step the v-equation is piecewise linear in time, so
// the step is integrated exactly, including the instant where v reaches 0.

#include <algorithm>
#include <cmath>
#include <sstream>

#include "perfhom/error.hpp"

namespace perfhom {

/// r(u) = ([u - onset]_+ / (solubility - onset))^p, scaled by the rate
/// constant k in the surface ODE.
class RateLaw {
public:
    RateLaw() = default;

    static RateLaw make(double onset, double solubility, double exponent, double k = 1.0)
    {
        if (!(onset >= 0.0))
            fail(ErrorKind::parameter, "onset concentration u_star must be >= 0");
        if (!(solubility > onset)) {
            std::ostringstream msg;
            msg << "solubility u_solubility (" << solubility << ") must exceed the onset u_star (" << onset << ")";
            fail(ErrorKind::parameter, msg.str());
        }
        if (!(exponent >= 1.0))
            fail(ErrorKind::parameter, "rate exponent must be >= 1");
        if (!(k > 0.0))
            fail(ErrorKind::parameter, "rate constant k must be > 0");
        RateLaw law;
        law.onset_ = onset;
        law.solubility_ = solubility;
        law.exponent_ = exponent;
        law.k_ = k;
        return law;
    }

    double onset() const { return onset_; }
    double solubility() const { return solubility_; }
    double exponent() const { return exponent_; }
    double k() const { return k_; }

    double operator()(double u) const
    {
        if (u <= onset_)
            return 0.0;
        const double s = (u - onset_) / (solubility_ - onset_);
        if (exponent_ == 1.0)
            return s;
        if (exponent_ == 2.0)
            return s * s;
        return std::pow(s, exponent_);
    }

    /// Lipschitz constant of r on [0, bound]; r is convex for p >= 1 so the
    /// slope at the right end is the bound.
    double lipschitz(double bound) const
    {
        if (bound <= onset_)
            return 0.0;
        const double span = solubility_ - onset_;
        return exponent_ / span * std::pow((bound - onset_) / span, exponent_ - 1.0);
    }

private:
    double onset_ = 0.0;
    double solubility_ = 1.0;
    double exponent_ = 2.0;
    double k_ = 1.0;
};

enum class ResolutionMode { exact, regularized };

struct DissolutionResolution {
    ResolutionMode mode = ResolutionMode::exact;
    double delta = 1e-2;

    void validate() const
    {
        if (mode == ResolutionMode::regularized && !(delta > 0.0))
            fail(ErrorKind::parameter, "regularization width delta must be > 0");
    }
};

inline double precip_rate(const RateLaw& law, double u) { return law(u); }

/// The single-valued selection from the Heaviside graph H(v).
inline double dissolution_rate(const RateLaw& law, double u, double v)
{
    if (v < 0.0)
        return 0.0;
    if (v > 0.0)
        return 1.0;
    return std::min(law(u), 1.0);
}

inline double regularized_heaviside(double delta, double v)
{
    if (!(delta > 0.0))
        fail(ErrorKind::parameter, "regularization width delta must be > 0");
    if (v <= 0.0)
        return 0.0;
    if (v >= delta)
        return 1.0;
    return v / delta;
}

struct OdeStep {
    double v_new = 0.0;
    /// Time-averaged w over the step: v_new - v = dt k (r(u) - w_effective).
    double w_effective = 0.0;
};

namespace detail {

inline OdeStep close_step(const RateLaw& law, double r, double v, double v_new, double dt)
{
    return {v_new, r - (v_new - v) / (dt * law.k())};
}

inline void check_step_input(double v, double dt)
{
    if (!(dt > 0.0))
        fail(ErrorKind::parameter, "ode step requires dt > 0");
    if (v < 0.0) {
        std::ostringstream msg;
        msg << "negative precipitate on input to the surface ODE (v = " << v << ")";
        fail(ErrorKind::state, msg.str());
    }
}

} // namespace detail

/// Exact integration of the surface ODE over [t, t+dt] with u frozen.
inline OdeStep ode_step(const RateLaw& law, double u, double v, double dt)
{
    detail::check_step_input(v, dt);
    const double r = law(u);
    const double k = law.k();
    if (r >= 1.0) {
        // v > 0 immediately (or stays at the equilibrium when r == 1), so w = 1.
        return {v + dt * k * (r - 1.0), 1.0};
    }
    if (v == 0.0)
        return {0.0, r};
    const double decay = k * (1.0 - r);
    const double hit = v / decay;
    if (hit >= dt)
        return {v - dt * decay, 1.0};
    // v reaches 0 at t + hit and stays there with w = r for the remainder.
    return detail::close_step(law, r, v, 0.0, dt);
}

/// Exact integration of dv/dt = k (r(u) - H_delta(v)) with u frozen. The
/// ramp H_delta makes the flow linear on each of the three pieces.
inline OdeStep ode_step_regularized(const RateLaw& law, double delta, double u, double v, double dt)
{
    detail::check_step_input(v, dt);
    if (!(delta > 0.0))
        fail(ErrorKind::parameter, "regularization width delta must be > 0");
    const double r = law(u);
    const double k = law.k();
    const double v0 = v;
    double remaining = dt;
    // Above the ramp: linear decay or growth.
    if (v >= delta) {
        if (r >= 1.0)
            return detail::close_step(law, r, v0, v + remaining * k * (r - 1.0), dt);
        const double reach = (v - delta) / (k * (1.0 - r));
        if (reach >= remaining)
            return detail::close_step(law, r, v0, v - remaining * k * (1.0 - r), dt);
        remaining -= reach;
        v = delta;
        // Inside the ramp the solution relaxes to r*delta < delta, never leaving.
        const double eq = r * delta;
        const double v_new = eq + (v - eq) * std::exp(-k * remaining / delta);
        return detail::close_step(law, r, v0, v_new, dt);
    }
    // Inside the ramp: relaxation toward r*delta.
    const double eq = r * delta;
    if (r > 1.0) {
        const double reach = delta / k * std::log((eq - v) / (eq - delta));
        if (reach < remaining) {
            remaining -= reach;
            return detail::close_step(law, r, v0, delta + remaining * k * (r - 1.0), dt);
        }
    }
    const double v_new = eq + (v - eq) * std::exp(-k * remaining / delta);
    return detail::close_step(law, r, v0, std::max(v_new, 0.0), dt);
}

/// Dispatches to the exact or regularized surface step.
inline OdeStep surface_step(const RateLaw& law, const DissolutionResolution& res, double u, double v, double dt)
{
    if (res.mode == ResolutionMode::regularized)
        return ode_step_regularized(law, res.delta, u, v, dt);
    return ode_step(law, u, v, dt);
}

/// w as seen by the state after a step.
inline double resolved_w(const RateLaw& law, const DissolutionResolution& res, double u, double v)
{
    if (res.mode == ResolutionMode::regularized)
        return regularized_heaviside(res.delta, v);
    return dissolution_rate(law, u, v);
}

} // namespace perfhom
