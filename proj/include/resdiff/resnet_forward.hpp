#pragma once

#include <vector>

#include <Eigen/Dense>

#include "resdiff/activations.hpp"
#include "resdiff/paramdist.hpp"
#include "resdiff/rng.hpp"

namespace resdiff {

struct NetConfig {
    int D = 1;
    int L = 1;
    double T = 1.0;
    Activation phi{ActKind::tanh};
    Activation psi{ActKind::identity};
    ParamScheme scheme = ParamScheme::full_iid(1, 0.0, 0.0);

    double dt() const { return T / L; }
    void validate() const;
};

// Spatial extent of a CNN state. A batch of N images with D channels is stored
// as a D x (N*P) matrix, column n*P + p with p = u*V + v.
struct CnnGeometry {
    int U = 1;
    int V = 1;
    int P() const { return U * V; }
};

struct ForwardOptions {
    bool retain_path = false;
    bool explicit_weights = false;  // draw Delta W even when the projection is cheaper
};

struct LayerPath {
    std::vector<MatrixXd> states;  // x_0..x_T if retained, else {x_T}
    bool exploded = false;
    int explode_layer = -1;
    const MatrixXd& terminal() const { return states.back(); }
};

// non-finite entry or norm above 1e12
bool is_exploded(const MatrixXd& x);

VectorXd fc_step(const VectorXd& x, const MatrixXd& dW, const VectorXd& db, const Activation& phi,
                 const Activation& psi);
MatrixXd fc_step(const MatrixXd& X, const MatrixXd& dW, const VectorXd& db, const Activation& phi,
                 const Activation& psi);

// All columns of X0 share the parameter draws of every layer.
LayerPath fc_forward(const NetConfig& cfg, const MatrixXd& X0, Rng& rng, ForwardOptions opt = {});

// Copies scalar inputs across all D coordinates: column i is z_i * 1.
MatrixXd copy_inputs(const VectorXd& z, int D);

// Patch of length K*K*D around (u, v), zero padded, ordered (du, dv, channel).
VectorXd extract_patch(const MatrixXd& x, const CnnGeometry& g, int u, int v, int K);
// Every patch of every image as a column: (K*K*D) x (N*P).
MatrixXd im2col(const MatrixXd& X, const CnnGeometry& g, int K);
// Adjoint of im2col: scatter-adds patch columns back onto a D x (N*P) state.
MatrixXd col2im(const MatrixXd& cols, const CnnGeometry& g, int K, int D);

MatrixXd cnn_step(const MatrixXd& X, const CnnGeometry& g, const MatrixXd& dW, const VectorXd& db,
                  const Activation& phi, const Activation& psi);
LayerPath cnn_forward(const NetConfig& cfg, const CnnGeometry& g, const MatrixXd& X0, Rng& rng,
                      ForwardOptions opt = {});

// Adaptation layers: A has N(0, sigz2) entries, G has N(0, sigy2/D) entries.
MatrixXd sample_input_adapter(int D, int Z, double sigz2, Rng& rng);
MatrixXd sample_readout(int Y, int D, double sigy2, Rng& rng);
inline MatrixXd input_adapt(const MatrixXd& A, const MatrixXd& Zcols) { return A * Zcols; }
inline MatrixXd output_adapt(const MatrixXd& G, const MatrixXd& XT) { return G * XT; }
// global spatial average of G x_{T,p}: Y x N
MatrixXd cnn_output_adapt(const MatrixXd& G, const MatrixXd& XT, const CnnGeometry& g);

// Plain feedforward net x_{l+1} = phi(A_l x_l + a_l), A ~ N(0, sigw2/D), a ~ N(0, sigb2).
LayerPath feedforward_baseline(int D, int L, double sigw2, double sigb2, const Activation& phi,
                               const MatrixXd& X0, Rng& rng);

}  // namespace resdiff
