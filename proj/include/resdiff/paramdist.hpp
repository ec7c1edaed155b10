#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "resdiff/rng.hpp"

namespace resdiff {

using Eigen::MatrixXd;
using Eigen::VectorXd;

class NotPsdError : public std::runtime_error {
public:
    explicit NotPsdError(const std::string& what) : std::runtime_error(what) {}
};

struct PsdFactor {
    enum class Method { cholesky, eigen_clipped };
    MatrixXd S;  // S * S^T == Sigma
    Method method;
};

// Cholesky first (no jitter); eigen-decomposition with clipping of slightly
// negative eigenvalues (>= -1e-10 * ||Sigma||) as fallback.
PsdFactor psd_sqrt(const MatrixXd& sigma);

MatrixXd kron(const MatrixXd& a, const MatrixXd& b);

enum class SchemeKind { full_iid, matrix_gaussian, general_gaussian, cnn_full_iid, cnn_tensor_gaussian };

const char* scheme_name(SchemeKind k);

struct Increments {
    MatrixXd dW;  // D x D (FC) or D x K*K*D (CNN)
    VectorXd db;  // D
};

// Parameter distribution of one residual layer. Immutable after construction.
// CNN filters act on patches flattened as (row offset, column offset, channel),
// channel fastest.
class ParamScheme {
public:
    static ParamScheme full_iid(int D, double sigma_w, double sigma_b);
    static ParamScheme matrix_gaussian(const MatrixXd& mu_w, const VectorXd& mu_b,
                                       const MatrixXd& sig_o, const MatrixXd& sig_i,
                                       const MatrixXd& sig_b);
    // sig_w is the covariance of the row-major vectorisation of eps^W.
    static ParamScheme general_gaussian(const MatrixXd& mu_w, const VectorXd& mu_b,
                                        const MatrixXd& sig_w, const MatrixXd& sig_b);
    static ParamScheme cnn_full_iid(int D, int K, double sigma_w, double sigma_b);
    static ParamScheme cnn_tensor_gaussian(const MatrixXd& mu_w, const VectorXd& mu_b,
                                           const MatrixXd& sig_o, const MatrixXd& sig_u,
                                           const MatrixXd& sig_v, const MatrixXd& sig_i,
                                           const MatrixXd& sig_b);

    SchemeKind kind() const { return kind_; }
    int dim() const { return D_; }
    int K() const { return K_; }
    int in_width() const { return is_cnn() ? K_ * K_ * D_ : D_; }
    bool is_cnn() const { return kind_ == SchemeKind::cnn_full_iid || kind_ == SchemeKind::cnn_tensor_gaussian; }
    bool is_iid() const { return kind_ == SchemeKind::full_iid || kind_ == SchemeKind::cnn_full_iid; }
    double sigma_w() const { return sigma_w_; }
    double sigma_b() const { return sigma_b_; }

    // Delta W = mu^W dt + eps^W sqrt(dt), Delta b = mu^b dt + eps^b sqrt(dt)
    Increments sample_increments(double dt, Rng& rng) const;

    // Delta W * Psi + Delta b 1^T for a batch of columns Psi, all sharing one
    // parameter draw. Exact in law; samples the projection directly when that
    // is cheaper than drawing Delta W, unless explicit_weights is set.
    MatrixXd sample_preactivation(const MatrixXd& Psi, double dt, Rng& rng,
                                  bool explicit_weights = false) const;

    // Cov[eps^W u + eps^b, eps^W v + eps^b]
    MatrixXd block_cross_cov(const VectorXd& u, const VectorXd& v) const;

    // mu^W u + mu^b
    VectorXd mean_preactivation(const VectorXd& u) const;

    bool has_mean() const { return has_mean_; }
    const MatrixXd& mu_w() const { return mu_w_; }
    const VectorXd& mu_b() const { return mu_b_; }

private:
    ParamScheme() = default;
    void finish();

    SchemeKind kind_ = SchemeKind::full_iid;
    int D_ = 0;
    int K_ = 1;
    double sigma_w_ = 0, sigma_b_ = 0;
    bool has_mean_ = false;
    MatrixXd mu_w_;
    VectorXd mu_b_;
    MatrixXd sig_o_, sig_in_, sig_b_, sig_w_;
    MatrixXd l_o_, l_in_, l_b_, l_w_;
};

}  // namespace resdiff
