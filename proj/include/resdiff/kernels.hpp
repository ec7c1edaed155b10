#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "resdiff/moments_ode.hpp"
#include "resdiff/resnet_forward.hpp"

namespace resdiff {

enum class KernelFamily { weak, ntk, completed_weak, completed_ntk };

KernelFamily kernel_family_by_name(const std::string& name);
const char* kernel_family_name(KernelFamily f);

struct KernelSpec {
    KernelFamily family = KernelFamily::ntk;
    double phi1 = 1.0;
    double sigw2 = 1.0;
    double sigb2 = 1.0;
    double T = 1.0;
    double sigz2 = 1.0;  // completed variants only
    double sigy2 = 1.0;

    double C() const { return phi1 * phi1 * sigw2 * T; }
    double E() const { return std::exp(C()); }
    double ratio() const;  // sigma_b^2 / sigma_w^2

    // Every family is affine in lambda_0 (or <z, z'>): k = slope * inner + intercept.
    double slope() const;
    double intercept() const;
    double operator()(double inner) const { return slope() * inner + intercept(); }
    double operator()(const VectorXd& z, const VectorXd& zp) const { return (*this)(z.dot(zp)); }
};

struct BivariateGaussian {
    Eigen::Vector2d mean;
    Eigen::Matrix2d cov;
};

// Law of (x_T^(i), x_T^(j)) for one coordinate given x_0. mom0/momT hold the
// moments of the pair (index 0 = i, 1 = j).
BivariateGaussian transition_density(double x0i, double x0j, const MomentState& mom0,
                                     const MomentState& momT);

// Moments at T for copied inputs (x_0 = z 1) from the closed forms (phi''(0)=0)
// or RK4 otherwise.
MomentState copied_input_moments(double zi, double zj, const OdeParams& p, double T);

double weak_kernel(double lambda0, const KernelSpec& spec);
double completed_weak_kernel(const VectorXd& z, const VectorXd& zp, const KernelSpec& spec);

struct NtkValue {
    double K_W, K_b, K_total;
};
NtkValue ntk_kernel(double lambda0, const KernelSpec& spec);
double completed_ntk_kernel(const VectorXd& z, const VectorXd& zp, const KernelSpec& spec);

// Gradients of y = x_{T,1} w.r.t. the standardised parameters
// (Delta W = eps^W sigma_w sqrt(dt/D), Delta b = eps^b sigma_b sqrt(dt)).
struct OutputGradients {
    std::vector<MatrixXd> dW;  // per layer, D x D
    std::vector<VectorXd> db;
    double y;
};

// Layer draws of a fully i.i.d. network are regenerated from the substream
// (seed, draw, layer), so nothing beyond the states has to be stored.
struct NetworkDraw {
    std::uint64_t seed = 1;
    std::uint64_t draw = 0;
    Increments layer(const NetConfig& cfg, int l) const;
};

OutputGradients output_gradients(const NetConfig& cfg, const NetworkDraw& net, const VectorXd& x0);
double network_output(const NetConfig& cfg, const NetworkDraw& net, const VectorXd& x0);

struct EmpiricalNtk {
    double K_W = 0, K_b = 0;
    bool flagged_phi2 = false;  // phi''(0) != 0: limit formulas do not apply
    double total() const { return K_W + K_b; }
};

// Reverse accumulation of u_t = dy/dx_t through the layer Jacobians.
EmpiricalNtk empirical_ntk(const NetConfig& cfg, const NetworkDraw& net, const VectorXd& x0i,
                           const VectorXd& x0j);

}  // namespace resdiff
