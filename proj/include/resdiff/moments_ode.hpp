#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace resdiff {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct OdeParams {
    double phi1 = 1.0;  // phi'(0)
    double phi2 = 0.0;  // phi''(0)
    double sigw2 = 1.0;
    double sigb2 = 1.0;
};

// m_i per input and lambda_ij per pair; q_i = lambda_ii.
struct MomentState {
    VectorXd m;
    MatrixXd lambda;

    static MomentState single(double m0, double q0);
    static MomentState pair(double m0, double q0, double m0b, double q0b, double lambda0);
    double q(int i = 0) const { return lambda(i, i); }
};

// dm_i   = 1/2 phi2 s_i,  s_i = sigb2 + sigw2 q_i
// dlam_ij = 1/2 phi2 (s_i m_j + s_j m_i) + phi1^2 (sigb2 + sigw2 lam_ij)
MomentState moment_rhs(const MomentState& s, const OdeParams& p);

struct MomentTrajectory {
    std::vector<double> t;
    std::vector<MomentState> states;
    bool exploded = false;
    double last_valid_t = 0.0;
};

// Classical fixed-step RK4 on [0, T]. Stops with the explosion flag once any q
// exceeds `explode_q`.
MomentTrajectory integrate_moments(const MomentState& s0, const OdeParams& p, double T, double step,
                                   double explode_q = 1e12);

struct MomentTriple {
    double m, q, lambda;
};

// phi''(0) = 0 closed forms; sigma_w = 0 uses the limit q_T = q0 + phi1^2 sigb2 T.
MomentTriple closed_form_nonexplosive(double m0, double q0, double lambda0, const OdeParams& p, double T);

// With y = phi2 m + phi1^2 and s = sigb2 + sigw2 q the (m, q) system reduces to
// dy = 1/2 (sigw2 y^2 + C) dt with the conserved C = phi2^2 s - sigw2 y^2.
enum class ExplosiveRegime {
    oscillatory,  // C > 0: tan/sec solution, always explodes
    hyperbolic,   // C < 0: coth/tanh branch
    critical,     // C = 0: rational solution
    linear        // sigma_w = 0: polynomial in t
};

struct ExplosiveConstants {
    OdeParams p;
    double m0 = 0, q0 = 0;
    double C = 0;
    double c1 = 0;  // from C = -phi1^4 sigw2 + phi2^2 (sigb2 + sigw2 c1)
    double c2 = 0;  // theta = 1/2 sigma_w sqrt(C) (T + 2 c2); oscillatory only
    double y0 = 0;
    ExplosiveRegime regime = ExplosiveRegime::oscillatory;
};

ExplosiveConstants fit_explosive_constants(double m0, double q0, const OdeParams& p);

// (m_T, q_T) from the fitted constants; throws past the explosion time.
std::pair<double, double> closed_form_explosive(const ExplosiveConstants& c, double T);

// Deterministic explosion time; nullopt when the solution stays finite.
std::optional<double> explosion_time(const ExplosiveConstants& c);

// First grid time at which RK4's q exceeds `threshold` (nullopt if never before t_max).
std::optional<double> rk4_blowup_time(double m0, double q0, const OdeParams& p, double step,
                                      double threshold, double t_max);

}  // namespace resdiff
