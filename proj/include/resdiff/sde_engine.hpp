#pragma once

#include <vector>

#include <Eigen/Dense>

#include "resdiff/activations.hpp"
#include "resdiff/paramdist.hpp"
#include "resdiff/resnet_forward.hpp"
#include "resdiff/rng.hpp"

namespace resdiff {

struct SdeSimConfig {
    int steps = 200;
    int D = 1;
    double T = 1.0;
    Activation phi{ActKind::tanh};
    Activation psi{ActKind::identity};
    ParamScheme scheme = ParamScheme::full_iid(1, 0.0, 0.0);
    bool retain_path = false;
    bool explicit_weights = false;

    double dt() const { return T / steps; }
    void validate() const;
};

// Default step count when mirroring a depth-L network.
inline int default_steps(int L) { return L > 200 ? L : 200; }

// x' = x + mu dt + S zeta sqrt(dt)
VectorXd euler_step(const VectorXd& x, const VectorXd& mu, const MatrixXd& S, double dt,
                    const VectorXd& zeta);

// Euler scheme driven by shared parameter increments:
// x' = x + phi'(0)(dW psi(x) + db) + 1/2 phi''(0) diag(Cov[eps psi(x) + eps^b]) dt
LayerPath simulate_fc_driven(const SdeSimConfig& cfg, const MatrixXd& X0, Rng& rng);

// Joint law over inputs for the fully i.i.d. scheme. Each step the N x N
// matrix s_ij = sigma_b^2 + sigma_w^2 <psi(x_i), psi(x_j)>/D is factorised and
// applied independently to every coordinate.
LayerPath simulate_fc_iid_joint(const SdeSimConfig& cfg, const MatrixXd& X0, Rng& rng);

// CNN counterpart: the matrix runs over (input, position) pairs and uses patch
// inner products.
LayerPath simulate_cnn_iid_joint(const SdeSimConfig& cfg, const CnnGeometry& g, const MatrixXd& X0,
                                 Rng& rng);

// g' = g + (phi'(dW x + db) 1^T o dW) g
MatrixXd jacobian_recursion_step(const MatrixXd& g, const VectorXd& x, const MatrixXd& dW,
                                 const VectorXd& db, const Activation& phi);

struct JacobianPath {
    std::vector<MatrixXd> g;     // g_0..g_T if retained, else {g_T}
    std::vector<MatrixXd> ginv;  // same layout; empty without inverse
    VectorXd x_T;
    bool exploded = false;
    int explode_step = -1;
    const MatrixXd& g_T() const { return g.back(); }
    const MatrixXd& ginv_T() const { return ginv.back(); }
};

// Discrete network Jacobian J(x_T, x_0), propagated with the state.
JacobianPath jacobian_recursion(const NetConfig& cfg, const VectorXd& x0, Rng& rng, bool retain = false);

// Matrix SDE for the fully i.i.d. scheme (psi = identity):
//   dg    = (phi'(0) dW + phi''(0) (sigma_w^2/D) 1 x^T dt) g
//   dg^-1 = g^-1 (-phi'(0) dW - phi''(0) (sigma_w^2/D) 1 x^T dt + phi'(0)^2 (sigma_w^2/D) I dt)
// Both driven by the same increments; x follows the driven SDE.
JacobianPath simulate_jacobian_sde(const SdeSimConfig& cfg, const VectorXd& x0, Rng& rng,
                                   bool with_inverse);

}  // namespace resdiff
