#include "resdiff/sde_engine.hpp"

#include <cmath>
#include <stdexcept>

namespace resdiff {

void SdeSimConfig::validate() const {
    if (steps < 1 || D < 1 || !(T > 0)) throw std::invalid_argument("SdeSimConfig: need steps >= 1, D >= 1, T > 0");
    if (scheme.dim() != D) throw std::invalid_argument("SdeSimConfig: scheme dimension differs from D");
    require_smooth(phi, "sde simulation");
}

VectorXd euler_step(const VectorXd& x, const VectorXd& mu, const MatrixXd& S, double dt,
                    const VectorXd& zeta) {
    return x + mu * dt + S * zeta * std::sqrt(dt);
}

namespace {

// diag Cov[eps psi + eps^b] for each column of Psi, D x N
MatrixXd drift_variances(const ParamScheme& s, const MatrixXd& Psi) {
    const int D = s.dim();
    MatrixXd out(D, Psi.cols());
    if (s.is_iid()) {
        const double sw2 = s.sigma_w() * s.sigma_w(), sb2 = s.sigma_b() * s.sigma_b();
        for (Eigen::Index n = 0; n < Psi.cols(); ++n)
            out.col(n).setConstant(sb2 + sw2 / D * Psi.col(n).squaredNorm());
        return out;
    }
    for (Eigen::Index n = 0; n < Psi.cols(); ++n) {
        VectorXd u = Psi.col(n);
        out.col(n) = s.block_cross_cov(u, u).diagonal();
    }
    return out;
}

void mark(LayerPath& path, const MatrixXd& X, int step) {
    if (is_exploded(X)) {
        path.exploded = true;
        path.explode_layer = step;
    }
}

}  // namespace

LayerPath simulate_fc_driven(const SdeSimConfig& cfg, const MatrixXd& X0, Rng& rng) {
    cfg.validate();
    if (cfg.scheme.is_cnn()) throw std::invalid_argument("simulate_fc_driven: CNN scheme given");
    if (X0.rows() != cfg.D) throw std::invalid_argument("simulate_fc_driven: input dimension mismatch");
    const double dt = cfg.dt();
    const double p1 = cfg.phi.phi1_at_0(), p2 = cfg.phi.phi2_at_0();
    LayerPath path;
    MatrixXd X = X0;
    if (cfg.retain_path) path.states.push_back(X);
    for (int k = 0; k < cfg.steps; ++k) {
        MatrixXd Psi = cfg.psi.apply(X);
        // Delta W carries its mu^W dt part, so phi'(0) mu drift is included here
        MatrixXd H = cfg.scheme.sample_preactivation(Psi, dt, rng, cfg.explicit_weights);
        X += p1 * H;
        if (p2 != 0.0) X += (0.5 * p2 * dt) * drift_variances(cfg.scheme, Psi);
        if (cfg.retain_path) path.states.push_back(X);
        mark(path, X, k + 1);
        if (path.exploded) break;
    }
    if (!cfg.retain_path) path.states.push_back(X);
    return path;
}

namespace {

// Shared Euler step of the joint i.i.d. SDEs given the column Gram of psi(X)
// (FC) or of its patches (CNN).
void joint_step(MatrixXd& X, const MatrixXd& inner, double sw2, double sb2, int D, double p1,
                double p2, double dt, Rng& rng) {
    MatrixXd s = (sw2 / D) * inner;
    s.array() += sb2;
    const MatrixXd F = psd_sqrt(s).S;
    const Eigen::Index N = X.cols();
    MatrixXd Xi = rng.normals(X.rows(), N);
    X.noalias() += (p1 * std::sqrt(dt)) * (Xi * F.transpose());
    if (p2 != 0.0)
        for (Eigen::Index n = 0; n < N; ++n) X.col(n).array() += 0.5 * p2 * s(n, n) * dt;
}

}  // namespace

LayerPath simulate_fc_iid_joint(const SdeSimConfig& cfg, const MatrixXd& X0, Rng& rng) {
    cfg.validate();
    if (cfg.scheme.kind() != SchemeKind::full_iid)
        throw std::invalid_argument("simulate_fc_iid_joint: fully i.i.d. scheme required");
    if (X0.rows() != cfg.D) throw std::invalid_argument("simulate_fc_iid_joint: input dimension mismatch");
    const double dt = cfg.dt();
    const double sw2 = cfg.scheme.sigma_w() * cfg.scheme.sigma_w();
    const double sb2 = cfg.scheme.sigma_b() * cfg.scheme.sigma_b();
    LayerPath path;
    MatrixXd X = X0;
    if (cfg.retain_path) path.states.push_back(X);
    for (int k = 0; k < cfg.steps; ++k) {
        MatrixXd Psi = cfg.psi.apply(X);
        joint_step(X, Psi.transpose() * Psi, sw2, sb2, cfg.D, cfg.phi.phi1_at_0(), cfg.phi.phi2_at_0(),
                   dt, rng);
        if (cfg.retain_path) path.states.push_back(X);
        mark(path, X, k + 1);
        if (path.exploded) break;
    }
    if (!cfg.retain_path) path.states.push_back(X);
    return path;
}

LayerPath simulate_cnn_iid_joint(const SdeSimConfig& cfg, const CnnGeometry& g, const MatrixXd& X0,
                                 Rng& rng) {
    cfg.validate();
    if (cfg.scheme.kind() != SchemeKind::cnn_full_iid)
        throw std::invalid_argument("simulate_cnn_iid_joint: CNN fully i.i.d. scheme required");
    if (X0.rows() != cfg.D || X0.cols() % g.P() != 0)
        throw std::invalid_argument("simulate_cnn_iid_joint: input shape mismatch");
    const double dt = cfg.dt();
    const double sw2 = cfg.scheme.sigma_w() * cfg.scheme.sigma_w();
    const double sb2 = cfg.scheme.sigma_b() * cfg.scheme.sigma_b();
    LayerPath path;
    MatrixXd X = X0;
    if (cfg.retain_path) path.states.push_back(X);
    for (int k = 0; k < cfg.steps; ++k) {
        MatrixXd Pt = im2col(cfg.psi.apply(X), g, cfg.scheme.K());
        joint_step(X, Pt.transpose() * Pt, sw2, sb2, cfg.D, cfg.phi.phi1_at_0(), cfg.phi.phi2_at_0(), dt,
                   rng);
        if (cfg.retain_path) path.states.push_back(X);
        mark(path, X, k + 1);
        if (path.exploded) break;
    }
    if (!cfg.retain_path) path.states.push_back(X);
    return path;
}

MatrixXd jacobian_recursion_step(const MatrixXd& g, const VectorXd& x, const MatrixXd& dW,
                                 const VectorXd& db, const Activation& phi) {
    if (dW.rows() != x.size() || dW.cols() != x.size() || g.rows() != x.size())
        throw std::invalid_argument("jacobian_recursion_step: dimension mismatch");
    MatrixXd h = dW * x + db;
    const VectorXd d = phi.apply(h, 1).col(0);
    MatrixXd out = g;
    out.noalias() += d.asDiagonal() * (dW * g);
    if (!out.allFinite()) throw std::runtime_error("jacobian_recursion_step: non-finite result");
    return out;
}

JacobianPath jacobian_recursion(const NetConfig& cfg, const VectorXd& x0, Rng& rng, bool retain) {
    cfg.validate();
    require_smooth(cfg.phi, "jacobian_recursion");
    if (!cfg.psi.is_identity()) throw std::invalid_argument("jacobian_recursion: psi must be identity");
    JacobianPath path;
    MatrixXd g = MatrixXd::Identity(cfg.D, cfg.D);
    VectorXd x = x0;
    if (retain) path.g.push_back(g);
    for (int l = 0; l < cfg.L; ++l) {
        Increments inc = cfg.scheme.sample_increments(cfg.dt(), rng);
        g = jacobian_recursion_step(g, x, inc.dW, inc.db, cfg.phi);
        x = fc_step(x, inc.dW, inc.db, cfg.phi, cfg.psi);
        if (retain) path.g.push_back(g);
        if (is_exploded(g) || is_exploded(x)) {
            path.exploded = true;
            path.explode_step = l + 1;
            break;
        }
    }
    if (!retain) path.g.push_back(g);
    path.x_T = x;
    return path;
}

JacobianPath simulate_jacobian_sde(const SdeSimConfig& cfg, const VectorXd& x0, Rng& rng,
                                   bool with_inverse) {
    cfg.validate();
    if (cfg.scheme.kind() != SchemeKind::full_iid)
        throw std::invalid_argument("simulate_jacobian_sde: fully i.i.d. scheme required");
    if (!cfg.psi.is_identity()) throw std::invalid_argument("simulate_jacobian_sde: psi must be identity");
    if (x0.size() != cfg.D) throw std::invalid_argument("simulate_jacobian_sde: x0 dimension mismatch");
    const int D = cfg.D;
    const double dt = cfg.dt();
    const double p1 = cfg.phi.phi1_at_0(), p2 = cfg.phi.phi2_at_0();
    const double sw2 = cfg.scheme.sigma_w() * cfg.scheme.sigma_w();
    const double sb2 = cfg.scheme.sigma_b() * cfg.scheme.sigma_b();
    const double qv = sw2 / D * dt;  // d[W]_t = (sigma_w^2/D) I dt

    JacobianPath path;
    MatrixXd g = MatrixXd::Identity(D, D);
    MatrixXd h = MatrixXd::Identity(D, D);
    VectorXd x = x0;
    const bool retain = cfg.retain_path;
    if (retain) {
        path.g.push_back(g);
        if (with_inverse) path.ginv.push_back(h);
    }
    MatrixXd tmp(D, D);
    for (int k = 0; k < cfg.steps; ++k) {
        Increments inc = cfg.scheme.sample_increments(dt, rng);
        if (with_inverse) {
            tmp.noalias() = h * inc.dW;
            MatrixXd step = -p1 * tmp;
            step += (p1 * p1 * qv) * h;
            if (p2 != 0.0) {
                // h (1 x^T) = (h 1) x^T
                const VectorXd h1 = h.rowwise().sum();
                step.noalias() -= (p2 * qv) * h1 * x.transpose();
            }
            h += step;
        }
        tmp.noalias() = p1 * (inc.dW * g);
        if (p2 != 0.0) {
            // (1 x^T) g = 1 (x^T g)
            const Eigen::RowVectorXd row = x.transpose() * g;
            tmp.rowwise() += (p2 * qv) * row;
        }
        g += tmp;
        const double drift = p2 != 0.0 ? 0.5 * p2 * (sb2 + sw2 / D * x.squaredNorm()) * dt : 0.0;
        x += p1 * (inc.dW * x + inc.db);
        x.array() += drift;
        if (retain) {
            path.g.push_back(g);
            if (with_inverse) path.ginv.push_back(h);
        }
        if (is_exploded(g) || (with_inverse && is_exploded(h))) {
            path.exploded = true;
            path.explode_step = k + 1;
            break;
        }
    }
    if (!retain) {
        path.g.push_back(g);
        if (with_inverse) path.ginv.push_back(h);
    }
    path.x_T = x;
    return path;
}

}  // namespace resdiff
