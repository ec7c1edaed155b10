#include "resdiff/resnet_forward.hpp"

#include <cmath>
#include <stdexcept>

namespace resdiff {

void NetConfig::validate() const {
    if (D < 1 || L < 1 || !(T > 0)) throw std::invalid_argument("NetConfig: need D >= 1, L >= 1, T > 0");
    if (scheme.dim() != D) throw std::invalid_argument("NetConfig: scheme dimension differs from D");
}

bool is_exploded(const MatrixXd& x) {
    if (!x.allFinite()) return true;
    return x.norm() > 1e12;
}

VectorXd fc_step(const VectorXd& x, const MatrixXd& dW, const VectorXd& db, const Activation& phi,
                 const Activation& psi) {
    MatrixXd X = x;
    return fc_step(X, dW, db, phi, psi).col(0);
}

MatrixXd fc_step(const MatrixXd& X, const MatrixXd& dW, const VectorXd& db, const Activation& phi,
                 const Activation& psi) {
    if (dW.cols() != X.rows() || dW.rows() != X.rows() || db.size() != X.rows())
        throw std::invalid_argument("fc_step: dimension mismatch");
    MatrixXd H = dW * psi.apply(X);
    H.colwise() += db;
    return X + phi.apply(H);
}

LayerPath fc_forward(const NetConfig& cfg, const MatrixXd& X0, Rng& rng, ForwardOptions opt) {
    cfg.validate();
    require_smooth(cfg.phi, "fc_forward");
    if (cfg.scheme.is_cnn()) throw std::invalid_argument("fc_forward: CNN scheme given");
    if (X0.rows() != cfg.D) throw std::invalid_argument("fc_forward: input dimension mismatch");
    const double dt = cfg.dt();
    LayerPath path;
    MatrixXd X = X0;
    if (opt.retain_path) path.states.push_back(X);
    for (int l = 0; l < cfg.L; ++l) {
        MatrixXd H = cfg.scheme.sample_preactivation(cfg.psi.apply(X), dt, rng, opt.explicit_weights);
        X += cfg.phi.apply(H);
        if (opt.retain_path) path.states.push_back(X);
        if (is_exploded(X)) {
            path.exploded = true;
            path.explode_layer = l + 1;
            break;
        }
    }
    if (!opt.retain_path) path.states.push_back(X);
    return path;
}

MatrixXd copy_inputs(const VectorXd& z, int D) {
    MatrixXd X(D, z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) X.col(i).setConstant(z(i));
    return X;
}

VectorXd extract_patch(const MatrixXd& x, const CnnGeometry& g, int u, int v, int K) {
    if (K < 1 || K % 2 == 0) throw std::invalid_argument("extract_patch: K must be odd");
    if (u < 0 || u >= g.U || v < 0 || v >= g.V) throw std::invalid_argument("extract_patch: position out of range");
    const int D = static_cast<int>(x.rows());
    const int E = (K - 1) / 2;
    VectorXd out = VectorXd::Zero(static_cast<Eigen::Index>(K) * K * D);
    for (int a = 0; a < K; ++a) {
        const int uu = u - E + a;
        if (uu < 0 || uu >= g.U) continue;
        for (int b = 0; b < K; ++b) {
            const int vv = v - E + b;
            if (vv < 0 || vv >= g.V) continue;
            out.segment((a * K + b) * D, D) = x.col(uu * g.V + vv);
        }
    }
    return out;
}

MatrixXd im2col(const MatrixXd& X, const CnnGeometry& g, int K) {
    const int P = g.P();
    if (X.cols() % P != 0) throw std::invalid_argument("im2col: column count is not a multiple of U*V");
    const Eigen::Index N = X.cols() / P;
    const int D = static_cast<int>(X.rows());
    MatrixXd out(static_cast<Eigen::Index>(K) * K * D, X.cols());
    for (Eigen::Index n = 0; n < N; ++n) {
        const auto img = X.middleCols(n * P, P);
        for (int u = 0; u < g.U; ++u)
            for (int v = 0; v < g.V; ++v)
                out.col(n * P + u * g.V + v) = extract_patch(img, g, u, v, K);
    }
    return out;
}

MatrixXd col2im(const MatrixXd& cols, const CnnGeometry& g, int K, int D) {
    const int P = g.P();
    const int E = (K - 1) / 2;
    if (cols.rows() != static_cast<Eigen::Index>(K) * K * D || cols.cols() % P != 0)
        throw std::invalid_argument("col2im: shape mismatch");
    MatrixXd out = MatrixXd::Zero(D, cols.cols());
    const Eigen::Index N = cols.cols() / P;
    for (Eigen::Index n = 0; n < N; ++n)
        for (int u = 0; u < g.U; ++u)
            for (int v = 0; v < g.V; ++v) {
                const auto c = cols.col(n * P + u * g.V + v);
                for (int a = 0; a < K; ++a) {
                    const int uu = u - E + a;
                    if (uu < 0 || uu >= g.U) continue;
                    for (int b = 0; b < K; ++b) {
                        const int vv = v - E + b;
                        if (vv < 0 || vv >= g.V) continue;
                        out.col(n * P + uu * g.V + vv) += c.segment((a * K + b) * D, D);
                    }
                }
            }
    return out;
}

MatrixXd cnn_step(const MatrixXd& X, const CnnGeometry& g, const MatrixXd& dW, const VectorXd& db,
                  const Activation& phi, const Activation& psi) {
    const Eigen::Index D = X.rows();
    if (dW.rows() != D || dW.cols() % D != 0 || db.size() != D)
        throw std::invalid_argument("cnn_step: dimension mismatch");
    const int K = static_cast<int>(std::lround(std::sqrt(static_cast<double>(dW.cols() / D))));
    MatrixXd H = dW * im2col(psi.apply(X), g, K);
    H.colwise() += db;
    return X + phi.apply(H);
}

LayerPath cnn_forward(const NetConfig& cfg, const CnnGeometry& g, const MatrixXd& X0, Rng& rng,
                      ForwardOptions opt) {
    cfg.validate();
    require_smooth(cfg.phi, "cnn_forward");
    if (!cfg.scheme.is_cnn()) throw std::invalid_argument("cnn_forward: CNN scheme required");
    if (X0.rows() != cfg.D || X0.cols() % g.P() != 0)
        throw std::invalid_argument("cnn_forward: input shape mismatch");
    const double dt = cfg.dt();
    const int K = cfg.scheme.K();
    LayerPath path;
    MatrixXd X = X0;
    if (opt.retain_path) path.states.push_back(X);
    for (int l = 0; l < cfg.L; ++l) {
        MatrixXd H = cfg.scheme.sample_preactivation(im2col(cfg.psi.apply(X), g, K), dt, rng,
                                                     opt.explicit_weights);
        X += cfg.phi.apply(H);
        if (opt.retain_path) path.states.push_back(X);
        if (is_exploded(X)) {
            path.exploded = true;
            path.explode_layer = l + 1;
            break;
        }
    }
    if (!opt.retain_path) path.states.push_back(X);
    return path;
}

MatrixXd sample_input_adapter(int D, int Z, double sigz2, Rng& rng) {
    return rng.normals(D, Z) * std::sqrt(sigz2);
}

MatrixXd sample_readout(int Y, int D, double sigy2, Rng& rng) {
    return rng.normals(Y, D) * std::sqrt(sigy2 / D);
}

MatrixXd cnn_output_adapt(const MatrixXd& G, const MatrixXd& XT, const CnnGeometry& g) {
    const int P = g.P();
    const Eigen::Index N = XT.cols() / P;
    MatrixXd pooled(XT.rows(), N);
    for (Eigen::Index n = 0; n < N; ++n) pooled.col(n) = XT.middleCols(n * P, P).rowwise().mean();
    return G * pooled;
}

LayerPath feedforward_baseline(int D, int L, double sigw2, double sigb2, const Activation& phi,
                               const MatrixXd& X0, Rng& rng) {
    if (L < 0 || D < 1 || X0.rows() != D) throw std::invalid_argument("feedforward_baseline: bad shape");
    const ParamScheme layer = ParamScheme::full_iid(D, std::sqrt(sigw2), std::sqrt(sigb2));
    LayerPath path;
    MatrixXd X = X0;
    for (int l = 0; l < L; ++l) {
        X = phi.apply(layer.sample_preactivation(X, 1.0, rng));
        if (is_exploded(X)) {
            path.exploded = true;
            path.explode_layer = l + 1;
            break;
        }
    }
    path.states.push_back(X);
    return path;
}

}  // namespace resdiff
