#include "resdiff/paramdist.hpp"

#include <cmath>
#include <sstream>

namespace resdiff {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

void require_square(const MatrixXd& m, Eigen::Index n, const char* what) {
    if (m.rows() != n || m.cols() != n) {
        std::ostringstream os;
        os << what << " must be " << n << "x" << n << ", got " << m.rows() << "x" << m.cols();
        throw std::invalid_argument(os.str());
    }
    if (!m.isApprox(m.transpose(), 1e-12) && m.norm() > 0)
        throw std::invalid_argument(std::string(what) + " is not symmetric");
}

}  // namespace

PsdFactor psd_sqrt(const MatrixXd& sigma) {
    require(sigma.rows() == sigma.cols(), "psd_sqrt: matrix not square");
    const Eigen::Index n = sigma.rows();
    const double nrm = sigma.norm();
    if (n == 0) return {MatrixXd(0, 0), PsdFactor::Method::cholesky};
    if (nrm == 0.0) return {MatrixXd::Zero(n, n), PsdFactor::Method::cholesky};

    Eigen::LLT<MatrixXd> llt(sigma);
    if (llt.info() == Eigen::Success) {
        MatrixXd L = llt.matrixL();
        if ((L * L.transpose() - sigma).norm() <= 1e-8 * (1.0 + nrm))
            return {L, PsdFactor::Method::cholesky};
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma);
    if (es.info() != Eigen::Success) throw NotPsdError("psd_sqrt: eigen-decomposition failed");
    const VectorXd& ev = es.eigenvalues();
    if (ev.minCoeff() < -1e-10 * nrm) {
        std::ostringstream os;
        os << "matrix is not positive semi-definite: minimum eigenvalue " << ev.minCoeff()
           << " (norm " << nrm << ")";
        throw NotPsdError(os.str());
    }
    const VectorXd root = ev.cwiseMax(0.0).cwiseSqrt();
    return {es.eigenvectors() * root.asDiagonal(), PsdFactor::Method::eigen_clipped};
}

MatrixXd kron(const MatrixXd& a, const MatrixXd& b) {
    MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

const char* scheme_name(SchemeKind k) {
    switch (k) {
        case SchemeKind::full_iid: return "full-iid";
        case SchemeKind::matrix_gaussian: return "matrix-gaussian";
        case SchemeKind::general_gaussian: return "general-gaussian";
        case SchemeKind::cnn_full_iid: return "cnn-iid";
        case SchemeKind::cnn_tensor_gaussian: return "cnn-tensor";
    }
    return "?";
}

ParamScheme ParamScheme::full_iid(int D, double sigma_w, double sigma_b) {
    require(D >= 1, "full_iid: D must be >= 1");
    require(sigma_w >= 0 && sigma_b >= 0, "full_iid: scales must be non-negative");
    ParamScheme s;
    s.kind_ = SchemeKind::full_iid;
    s.D_ = D;
    s.sigma_w_ = sigma_w;
    s.sigma_b_ = sigma_b;
    s.mu_w_ = MatrixXd::Zero(D, D);
    s.mu_b_ = VectorXd::Zero(D);
    s.sig_o_ = MatrixXd::Identity(D, D);
    s.sig_in_ = MatrixXd::Identity(D, D) * (sigma_w * sigma_w / D);
    s.sig_b_ = MatrixXd::Identity(D, D) * (sigma_b * sigma_b);
    s.finish();
    return s;
}

ParamScheme ParamScheme::matrix_gaussian(const MatrixXd& mu_w, const VectorXd& mu_b,
                                         const MatrixXd& sig_o, const MatrixXd& sig_i,
                                         const MatrixXd& sig_b) {
    const Eigen::Index D = mu_b.size();
    require(D >= 1 && mu_w.rows() == D && mu_w.cols() == D, "matrix_gaussian: mu^W must be DxD");
    require_square(sig_o, D, "Sigma^{W_O}");
    require_square(sig_i, D, "Sigma^{W_I}");
    require_square(sig_b, D, "Sigma^b");
    ParamScheme s;
    s.kind_ = SchemeKind::matrix_gaussian;
    s.D_ = static_cast<int>(D);
    s.mu_w_ = mu_w;
    s.mu_b_ = mu_b;
    s.sig_o_ = sig_o;
    s.sig_in_ = sig_i;
    s.sig_b_ = sig_b;
    s.finish();
    return s;
}

ParamScheme ParamScheme::general_gaussian(const MatrixXd& mu_w, const VectorXd& mu_b,
                                          const MatrixXd& sig_w, const MatrixXd& sig_b) {
    const Eigen::Index D = mu_b.size();
    require(D >= 1 && D <= 64, "general_gaussian: D must be in 1..64");
    require(mu_w.rows() == D && mu_w.cols() == D, "general_gaussian: mu^W must be DxD");
    require_square(sig_w, D * D, "Sigma^W");
    require_square(sig_b, D, "Sigma^b");
    ParamScheme s;
    s.kind_ = SchemeKind::general_gaussian;
    s.D_ = static_cast<int>(D);
    s.mu_w_ = mu_w;
    s.mu_b_ = mu_b;
    s.sig_w_ = sig_w;
    s.sig_b_ = sig_b;
    s.finish();
    return s;
}

ParamScheme ParamScheme::cnn_full_iid(int D, int K, double sigma_w, double sigma_b) {
    require(D >= 1, "cnn_full_iid: D must be >= 1");
    require(K >= 1 && K % 2 == 1, "cnn_full_iid: filter length K must be odd");
    require(sigma_w >= 0 && sigma_b >= 0, "cnn_full_iid: scales must be non-negative");
    ParamScheme s;
    s.kind_ = SchemeKind::cnn_full_iid;
    s.D_ = D;
    s.K_ = K;
    s.sigma_w_ = sigma_w;
    s.sigma_b_ = sigma_b;
    const int w = K * K * D;
    s.mu_w_ = MatrixXd::Zero(D, w);
    s.mu_b_ = VectorXd::Zero(D);
    s.sig_o_ = MatrixXd::Identity(D, D);
    s.sig_in_ = MatrixXd::Identity(w, w) * (sigma_w * sigma_w / D);
    s.sig_b_ = MatrixXd::Identity(D, D) * (sigma_b * sigma_b);
    s.finish();
    return s;
}

ParamScheme ParamScheme::cnn_tensor_gaussian(const MatrixXd& mu_w, const VectorXd& mu_b,
                                             const MatrixXd& sig_o, const MatrixXd& sig_u,
                                             const MatrixXd& sig_v, const MatrixXd& sig_i,
                                             const MatrixXd& sig_b) {
    const Eigen::Index D = mu_b.size();
    const Eigen::Index K = sig_u.rows();
    require(D >= 1, "cnn_tensor_gaussian: empty bias mean");
    require(K >= 1 && K % 2 == 1, "cnn_tensor_gaussian: filter length K must be odd");
    require(mu_w.rows() == D && mu_w.cols() == K * K * D, "cnn_tensor_gaussian: mu^W must be D x K*K*D");
    require_square(sig_o, D, "Sigma^{W_O}");
    require_square(sig_u, K, "Sigma^{W_U}");
    require_square(sig_v, K, "Sigma^{W_V}");
    require_square(sig_i, D, "Sigma^{W_I}");
    require_square(sig_b, D, "Sigma^b");
    ParamScheme s;
    s.kind_ = SchemeKind::cnn_tensor_gaussian;
    s.D_ = static_cast<int>(D);
    s.K_ = static_cast<int>(K);
    s.mu_w_ = mu_w;
    s.mu_b_ = mu_b;
    s.sig_o_ = sig_o;
    s.sig_in_ = kron(sig_u, kron(sig_v, sig_i));
    s.sig_b_ = sig_b;
    s.finish();
    return s;
}

void ParamScheme::finish() {
    has_mean_ = mu_w_.size() > 0 && (mu_w_.norm() > 0 || mu_b_.norm() > 0);
    l_b_ = psd_sqrt(sig_b_).S;
    if (kind_ == SchemeKind::general_gaussian) {
        l_w_ = psd_sqrt(sig_w_).S;
    } else if (!is_iid()) {
        l_o_ = psd_sqrt(sig_o_).S;
        l_in_ = psd_sqrt(sig_in_).S;
    }
}

Increments ParamScheme::sample_increments(double dt, Rng& rng) const {
    require(dt > 0, "sample_increments: dt must be positive");
    const double sq = std::sqrt(dt);
    Increments inc;
    const int w = in_width();
    switch (kind_) {
        case SchemeKind::full_iid:
        case SchemeKind::cnn_full_iid:
            inc.dW = rng.normals(D_, w) * (sigma_w_ * sq / std::sqrt(static_cast<double>(D_)));
            inc.db = rng.normals(D_) * (sigma_b_ * sq);
            return inc;
        case SchemeKind::matrix_gaussian:
        case SchemeKind::cnn_tensor_gaussian: {
            MatrixXd Z = rng.normals(D_, w);
            inc.dW = mu_w_ * dt + (l_o_ * Z * l_in_.transpose()) * sq;
            break;
        }
        case SchemeKind::general_gaussian: {
            VectorXd v = l_w_ * rng.normals(static_cast<Eigen::Index>(D_) * D_);
            // row-major vec: entry (a, i) at a*D + i
            MatrixXd eps = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                v.data(), D_, D_);
            inc.dW = mu_w_ * dt + eps * sq;
            break;
        }
    }
    inc.db = mu_b_ * dt + (l_b_ * rng.normals(D_)) * sq;
    return inc;
}

MatrixXd ParamScheme::sample_preactivation(const MatrixXd& Psi, double dt, Rng& rng,
                                           bool explicit_weights) const {
    require(dt > 0, "sample_preactivation: dt must be positive");
    require(Psi.rows() == in_width(), "sample_preactivation: input width mismatch");
    const Eigen::Index M = Psi.cols();
    const double sq = std::sqrt(dt);
    const bool projectable = kind_ != SchemeKind::general_gaussian;
    if (explicit_weights || !projectable || M >= in_width()) {
        Increments inc = sample_increments(dt, rng);
        MatrixXd H = inc.dW * Psi;
        H.colwise() += inc.db;
        return H;
    }
    // Rows of Z * Mx are iid N(0, Mx^T Mx): sample them as Xi * S^T.
    MatrixXd H;
    if (is_iid()) {
        MatrixXd S = psd_sqrt(Psi.transpose() * Psi).S;
        H = rng.normals(D_, M) * S.transpose();
        H *= sigma_w_ * sq / std::sqrt(static_cast<double>(D_));
    } else {
        MatrixXd Mx = l_in_.transpose() * Psi;
        MatrixXd S = psd_sqrt(Mx.transpose() * Mx).S;
        H = (l_o_ * rng.normals(D_, M)) * S.transpose();
        H *= sq;
    }
    VectorXd db;
    if (is_iid())
        db = rng.normals(D_) * (sigma_b_ * sq);
    else
        db = mu_b_ * dt + (l_b_ * rng.normals(D_)) * sq;
    if (has_mean_) H += (mu_w_ * Psi) * dt;
    H.colwise() += db;
    return H;
}

MatrixXd ParamScheme::block_cross_cov(const VectorXd& u, const VectorXd& v) const {
    if (u.size() != in_width() || v.size() != in_width()) {
        std::ostringstream os;
        os << "block_cross_cov: expected vectors of length " << in_width() << ", got " << u.size()
           << " and " << v.size();
        throw std::invalid_argument(os.str());
    }
    switch (kind_) {
        case SchemeKind::full_iid:
        case SchemeKind::cnn_full_iid:
            return MatrixXd::Identity(D_, D_) *
                   (sigma_b_ * sigma_b_ + sigma_w_ * sigma_w_ / D_ * u.dot(v));
        case SchemeKind::matrix_gaussian:
        case SchemeKind::cnn_tensor_gaussian:
            return sig_b_ + sig_o_ * u.dot(sig_in_ * v);
        case SchemeKind::general_gaussian: {
            MatrixXd c = sig_b_;
            for (int a = 0; a < D_; ++a)
                for (int b = 0; b < D_; ++b)
                    c(a, b) += u.dot(sig_w_.block(a * D_, b * D_, D_, D_) * v);
            return c;
        }
    }
    return {};
}

VectorXd ParamScheme::mean_preactivation(const VectorXd& u) const {
    require(u.size() == in_width(), "mean_preactivation: input width mismatch");
    return mu_w_ * u + mu_b_;
}

}  // namespace resdiff
