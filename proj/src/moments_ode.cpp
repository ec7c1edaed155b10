#include "resdiff/moments_ode.hpp"

#include <cmath>
#include <stdexcept>

namespace resdiff {

MomentState MomentState::single(double m0, double q0) {
    MomentState s;
    s.m = VectorXd::Constant(1, m0);
    s.lambda = MatrixXd::Constant(1, 1, q0);
    return s;
}

MomentState MomentState::pair(double m0, double q0, double m0b, double q0b, double lambda0) {
    MomentState s;
    s.m.resize(2);
    s.m << m0, m0b;
    s.lambda.resize(2, 2);
    s.lambda << q0, lambda0, lambda0, q0b;
    return s;
}

MomentState moment_rhs(const MomentState& s, const OdeParams& p) {
    const Eigen::Index n = s.m.size();
    VectorXd sv(n);
    for (Eigen::Index i = 0; i < n; ++i) sv(i) = p.sigb2 + p.sigw2 * s.lambda(i, i);
    MomentState d;
    d.m = 0.5 * p.phi2 * sv;
    d.lambda.resize(n, n);
    const double a = p.phi1 * p.phi1;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            d.lambda(i, j) = 0.5 * p.phi2 * (sv(i) * s.m(j) + sv(j) * s.m(i)) +
                             a * (p.sigb2 + p.sigw2 * s.lambda(i, j));
    return d;
}

namespace {

MomentState axpy(const MomentState& s, double h, const MomentState& d) {
    MomentState out;
    out.m = s.m + h * d.m;
    out.lambda = s.lambda + h * d.lambda;
    return out;
}

bool over(const MomentState& s, double lim) {
    for (Eigen::Index i = 0; i < s.m.size(); ++i)
        if (!std::isfinite(s.lambda(i, i)) || s.lambda(i, i) > lim) return true;
    return false;
}

MomentState rk4_step(const MomentState& s, const OdeParams& p, double h) {
    const MomentState k1 = moment_rhs(s, p);
    const MomentState k2 = moment_rhs(axpy(s, 0.5 * h, k1), p);
    const MomentState k3 = moment_rhs(axpy(s, 0.5 * h, k2), p);
    const MomentState k4 = moment_rhs(axpy(s, h, k3), p);
    MomentState out;
    out.m = s.m + (h / 6.0) * (k1.m + 2.0 * (k2.m + k3.m) + k4.m);
    out.lambda = s.lambda + (h / 6.0) * (k1.lambda + 2.0 * (k2.lambda + k3.lambda) + k4.lambda);
    return out;
}

}  // namespace

MomentTrajectory integrate_moments(const MomentState& s0, const OdeParams& p, double T, double step,
                                   double explode_q) {
    if (!(step > 0)) throw std::invalid_argument("integrate_moments: step must be positive");
    if (T < 0) throw std::invalid_argument("integrate_moments: T must be non-negative");
    MomentTrajectory tr;
    tr.t.push_back(0.0);
    tr.states.push_back(s0);
    const long n = std::lround(std::ceil(T / step - 1e-9));
    MomentState s = s0;
    for (long k = 0; k < n; ++k) {
        const double t0 = k * step;
        const double h = std::min(step, T - t0);
        s = rk4_step(s, p, h);
        if (over(s, explode_q)) {
            tr.exploded = true;
            tr.last_valid_t = t0;
            return tr;
        }
        tr.t.push_back(t0 + h);
        tr.states.push_back(s);
    }
    tr.last_valid_t = tr.t.back();
    return tr;
}

MomentTriple closed_form_nonexplosive(double m0, double q0, double lambda0, const OdeParams& p, double T) {
    if (p.phi2 != 0.0) throw std::invalid_argument("closed_form_nonexplosive: requires phi''(0) = 0");
    const double a = p.phi1 * p.phi1;
    if (p.sigw2 == 0.0) return {m0, q0 + a * p.sigb2 * T, lambda0 + a * p.sigb2 * T};
    const double r = p.sigb2 / p.sigw2;
    const double em1 = std::expm1(a * p.sigw2 * T);
    return {m0, q0 + (q0 + r) * em1, lambda0 + (lambda0 + r) * em1};
}

ExplosiveConstants fit_explosive_constants(double m0, double q0, const OdeParams& p) {
    if (p.phi2 == 0.0) throw std::invalid_argument("fit_explosive_constants: requires phi''(0) != 0");
    ExplosiveConstants c;
    c.p = p;
    c.m0 = m0;
    c.q0 = q0;
    const double a = p.phi1 * p.phi1;
    const double s0 = p.sigb2 + p.sigw2 * q0;
    c.y0 = p.phi2 * m0 + a;
    c.C = p.phi2 * p.phi2 * s0 - p.sigw2 * c.y0 * c.y0;
    if (p.sigw2 == 0.0) {
        c.regime = ExplosiveRegime::linear;
        return c;
    }
    c.c1 = ((c.C + a * a * p.sigw2) / (p.phi2 * p.phi2) - p.sigb2) / p.sigw2;
    const double sw = std::sqrt(p.sigw2);
    const double scale = p.phi2 * p.phi2 * s0 + p.sigw2 * c.y0 * c.y0;
    if (std::abs(c.C) <= 1e-14 * (1.0 + scale)) {
        c.regime = ExplosiveRegime::critical;
        c.C = 0.0;
    } else if (c.C > 0) {
        c.regime = ExplosiveRegime::oscillatory;
        const double rc = std::sqrt(c.C);
        const double theta0 = std::atan(sw * c.y0 / rc);  // branch (-pi/2, pi/2)
        c.c2 = theta0 / (sw * rc);
    } else {
        c.regime = ExplosiveRegime::hyperbolic;
    }
    return c;
}

namespace {

// y(t) for the reduced equation dy = 1/2 (sigw2 y^2 + C) dt
double y_at(const ExplosiveConstants& c, double t) {
    const double sw2 = c.p.sigw2;
    const double sw = std::sqrt(sw2);
    switch (c.regime) {
        case ExplosiveRegime::oscillatory: {
            const double rc = std::sqrt(c.C);
            const double theta = 0.5 * sw * rc * (t + 2.0 * c.c2);
            return rc / sw * std::tan(theta);
        }
        case ExplosiveRegime::critical:
            return c.y0 / (1.0 - 0.5 * sw2 * c.y0 * t);
        case ExplosiveRegime::hyperbolic: {
            const double kap = std::sqrt(-c.C);
            const double a = kap / sw;          // fixed points y = +-a
            const double k = 0.5 * sw * kap;    // w' = k (w^2 - 1), w = y / a
            const double w0 = c.y0 / a;
            if (std::abs(w0) < 1.0) return -a * std::tanh(k * t - std::atanh(w0));
            if (w0 == 1.0 || w0 == -1.0) return c.y0;
            // |w0| > 1: w = -coth(k t + u0) with coth(u0) = -w0
            const double u0 = std::atanh(-1.0 / w0);
            return -a / std::tanh(k * t + u0);
        }
        case ExplosiveRegime::linear:
            break;
    }
    return 0.0;
}

}  // namespace

std::pair<double, double> closed_form_explosive(const ExplosiveConstants& c, double T) {
    const OdeParams& p = c.p;
    const double a = p.phi1 * p.phi1;
    if (c.regime == ExplosiveRegime::linear) {
        const double m = c.m0 + 0.5 * p.phi2 * p.sigb2 * T;
        const double q = c.q0 + p.sigb2 * ((p.phi2 * c.m0 + a) * T + 0.25 * p.phi2 * p.phi2 * p.sigb2 * T * T);
        return {m, q};
    }
    if (auto ts = explosion_time(c); ts && T >= *ts)
        throw std::domain_error("closed_form_explosive: T is past the explosion time");
    const double y = y_at(c, T);
    const double m = (y - a) / p.phi2;
    double q;
    if (c.regime == ExplosiveRegime::oscillatory) {
        // q = (C sec^2 theta - phi2^2 sigb2) / (phi2^2 sigw2)
        const double theta = 0.5 * std::sqrt(p.sigw2) * std::sqrt(c.C) * (T + 2.0 * c.c2);
        const double sec = 1.0 / std::cos(theta);
        q = (c.C * sec * sec - p.phi2 * p.phi2 * p.sigb2) / (p.phi2 * p.phi2 * p.sigw2);
    } else {
        const double s = (p.sigw2 * y * y + c.C) / (p.phi2 * p.phi2);
        q = (s - p.sigb2) / p.sigw2;
    }
    return {m, q};
}

std::optional<double> explosion_time(const ExplosiveConstants& c) {
    const double sw2 = c.p.sigw2;
    switch (c.regime) {
        case ExplosiveRegime::oscillatory:
            return M_PI / (std::sqrt(sw2) * std::sqrt(c.C)) - 2.0 * c.c2;
        case ExplosiveRegime::critical:
            if (c.y0 > 0) return 2.0 / (sw2 * c.y0);
            return std::nullopt;
        case ExplosiveRegime::hyperbolic: {
            const double sw = std::sqrt(sw2);
            const double kap = std::sqrt(-c.C);
            const double w0 = c.y0 * sw / kap;
            if (w0 <= 1.0) return std::nullopt;
            return std::atanh(1.0 / w0) / (0.5 * sw * kap);
        }
        case ExplosiveRegime::linear:
            return std::nullopt;
    }
    return std::nullopt;
}

std::optional<double> rk4_blowup_time(double m0, double q0, const OdeParams& p, double step,
                                      double threshold, double t_max) {
    MomentState s = MomentState::single(m0, q0);
    const long n = std::lround(std::ceil(t_max / step));
    for (long k = 1; k <= n; ++k) {
        s = rk4_step(s, p, step);
        if (!std::isfinite(s.q()) || s.q() > threshold) return k * step;
    }
    return std::nullopt;
}

}  // namespace resdiff
