#include "resdiff/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace resdiff {

Dataset Dataset::from_labels(MatrixXd inputs, const std::vector<int>& labels, int classes, Split split) {
    if (static_cast<Eigen::Index>(labels.size()) != inputs.rows())
        throw std::invalid_argument("Dataset: label count differs from input rows");
    Dataset d;
    d.inputs = std::move(inputs);
    d.labels = labels;
    d.split = split;
    d.targets = MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes) throw std::invalid_argument("Dataset: label out of range");
        d.targets(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
    }
    return d;
}

Dataset Dataset::subset(const std::vector<int>& idx) const {
    Dataset d;
    d.split = split;
    d.inputs.resize(static_cast<Eigen::Index>(idx.size()), inputs.cols());
    d.targets.resize(static_cast<Eigen::Index>(idx.size()), targets.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        d.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(idx[i]);
        d.targets.row(static_cast<Eigen::Index>(i)) = targets.row(idx[i]);
        d.labels.push_back(labels[idx[i]]);
    }
    return d;
}

void Dataset::validate() const {
    if (targets.rows() != inputs.rows()) throw std::invalid_argument("Dataset: row count mismatch");
    for (Eigen::Index i = 0; i < targets.rows(); ++i) {
        const auto r = targets.row(i);
        if (std::abs(r.sum() - 1.0) > 0 || (r.array() == 1.0).count() != 1)
            throw std::invalid_argument("Dataset: target rows must be one-hot");
    }
}

std::vector<int> random_subset(int N, int n, std::uint64_t seed) {
    if (n > N || n < 0) throw std::invalid_argument("random_subset: n out of range");
    std::vector<int> all(static_cast<std::size_t>(N));
    std::iota(all.begin(), all.end(), 0);
    Rng rng(substream_seed(seed, 0x5eed));
    // partial Fisher-Yates
    for (int i = 0; i < n; ++i) {
        const auto j = i + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(N - i));
        std::swap(all[i], all[j]);
    }
    std::vector<int> out(all.begin(), all.begin() + n);
    std::sort(out.begin(), out.end());
    return out;
}

GramMatrix build_gram(const KernelSpec& k, const MatrixXd& inputs, double jitter) {
    GramMatrix g;
    g.jitter = jitter < 0 ? 1.0 / static_cast<double>(std::max<Eigen::Index>(1, inputs.rows())) : jitter;
    // rank update fills one triangle; mirroring keeps G exactly symmetric
    const Eigen::Index n = inputs.rows();
    g.G = MatrixXd::Constant(n, n, k.intercept());
    g.G.selfadjointView<Eigen::Lower>().rankUpdate(inputs, k.slope());
    g.G.triangularView<Eigen::StrictlyUpper>() = g.G.transpose();
    return g;
}

MatrixXd cross_gram(const KernelSpec& k, const MatrixXd& train, const MatrixXd& test) {
    if (train.cols() != test.cols()) throw std::invalid_argument("cross_gram: feature dimension mismatch");
    MatrixXd c;
    c.noalias() = k.slope() * (test * train.transpose());
    c.array() += k.intercept();
    return c;
}

namespace {

[[noreturn]] void cholesky_failure(const MatrixXd* original, double jitter) {
    std::ostringstream os;
    os << "Cholesky factorisation failed after jitter " << jitter;
    if (original && original->rows() <= 4000) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(*original, Eigen::EigenvaluesOnly);
        os << "; minimum eigenvalue of the jittered Gram " << es.eigenvalues().minCoeff() + jitter;
    } else {
        os << "; minimum eigenvalue not computed (matrix too large)";
    }
    throw CholeskyError(os.str());
}

}  // namespace

MatrixXd krr_predict(const GramMatrix& gram, const MatrixXd& Y, const MatrixXd& cross) {
    if (gram.G.rows() != Y.rows() || cross.cols() != gram.G.rows())
        throw std::invalid_argument("krr_predict: dimension mismatch");
    MatrixXd A = gram.G;
    A.diagonal().array() += gram.jitter;
    Eigen::LLT<MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) cholesky_failure(&gram.G, gram.jitter);
    return cross * llt.solve(Y);
}

std::vector<int> classify(const MatrixXd& scores) {
    std::vector<int> out(static_cast<std::size_t>(scores.rows()));
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        int best = 0;
        for (Eigen::Index c = 1; c < scores.cols(); ++c)
            if (scores(i, c) > scores(i, best)) best = static_cast<int>(c);
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels) {
    if (predicted.size() != labels.size() || labels.empty())
        throw std::invalid_argument("accuracy: size mismatch");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hit += predicted[i] == labels[i];
    return static_cast<double>(hit) / static_cast<double>(labels.size());
}

KrrResult kernel_regression(const KernelSpec& k, const Dataset& train, const Dataset& test, double jitter,
                            Eigen::Index chunk) {
    const Eigen::Index n = train.size();
    if (n == 0) throw std::invalid_argument("kernel_regression: empty training set");
    KrrResult res;
    res.jitter = jitter < 0 ? 1.0 / static_cast<double>(n) : jitter;

    // lower triangle only; that is all the in-place Cholesky reads
    MatrixXd A = MatrixXd::Constant(n, n, k.intercept());
    A.selfadjointView<Eigen::Lower>().rankUpdate(train.inputs, k.slope());
    A.diagonal().array() += res.jitter;
    Eigen::LLT<Eigen::Ref<MatrixXd>> llt(A);  // factorises A in place
    if (llt.info() != Eigen::Success) {
        A.resize(0, 0);
        GramMatrix g = build_gram(k, train.inputs, res.jitter);
        cholesky_failure(&g.G, res.jitter);
    }
    const MatrixXd alpha = llt.solve(train.targets);
    A.resize(0, 0);

    // residual through the affine form: G alpha = slope Z (Z^T alpha) + intercept 1 (1^T alpha)
    MatrixXd r = k.slope() * (train.inputs * (train.inputs.transpose() * alpha));
    r.rowwise() += k.intercept() * alpha.colwise().sum();
    r += res.jitter * alpha - train.targets;
    res.relative_residual = r.norm() / train.targets.norm();

    res.predicted.reserve(static_cast<std::size_t>(test.size()));
    for (Eigen::Index s = 0; s < test.size(); s += chunk) {
        const Eigen::Index m = std::min(chunk, test.size() - s);
        const MatrixXd kc = cross_gram(k, train.inputs, test.inputs.middleRows(s, m));
        const std::vector<int> cls = classify(kc * alpha);
        res.predicted.insert(res.predicted.end(), cls.begin(), cls.end());
    }
    res.accuracy = accuracy(res.predicted, test.labels);
    return res;
}

// ---------------------------------------------------------------------------

CompletedModel CompletedModel::init(const CompletedNetSpec& spec, Rng& rng) {
    if (spec.D < 1 || spec.L < 1 || spec.Z < 1 || spec.Y < 1 || !(spec.T > 0))
        throw std::invalid_argument("CompletedModel: bad dimensions");
    require_smooth(spec.phi, "CompletedModel");
    if (spec.cnn && (spec.K < 1 || spec.K % 2 == 0)) throw std::invalid_argument("CompletedModel: K must be odd");
    CompletedModel m;
    m.spec_ = spec;
    if (m.spec_.sigz2 < 0) m.spec_.sigz2 = 1.0 / spec.Z;
    const double dt = spec.T / spec.L;
    m.cz_ = std::sqrt(m.spec_.sigz2);
    m.cw_ = std::sqrt(spec.sigw2 * dt / spec.D);
    m.cb_ = std::sqrt(spec.sigb2 * dt);
    m.cy_ = std::sqrt(spec.sigy2 / spec.D);
    const int w = spec.cnn ? spec.K * spec.K * spec.D : spec.D;
    m.params_.push_back(rng.normals(spec.D, spec.Z));
    for (int l = 0; l < spec.L; ++l) m.params_.push_back(rng.normals(spec.D, w));
    for (int l = 0; l < spec.L; ++l) m.params_.push_back(rng.normals(spec.D, 1));
    m.params_.push_back(rng.normals(spec.Y, spec.D));
    return m;
}

MatrixXd CompletedModel::embed(const MatrixXd& inputs) const {
    if (!spec_.cnn) {
        if (inputs.rows() != spec_.Z) throw std::invalid_argument("CompletedModel: input width mismatch");
        return inputs;
    }
    const Eigen::Index P = spec_.geom.P();
    if (inputs.rows() != spec_.Z * P) throw std::invalid_argument("CompletedModel: image size mismatch");
    // column-major Z*P x N is the same memory as Z x (N*P), channel fastest
    return Eigen::Map<const MatrixXd>(inputs.data(), spec_.Z, inputs.cols() * P);
}

double CompletedModel::run(const MatrixXd& inputs, const MatrixXd* targets, std::vector<MatrixXd>* grads,
                           MatrixXd* out) const {
    const CompletedNetSpec& s = spec_;
    const int L = s.L;
    const MatrixXd Zc = embed(inputs);
    const Eigen::Index N = inputs.cols();
    const Eigen::Index P = s.cnn ? s.geom.P() : 1;

    std::vector<MatrixXd> xs;    // x_0..x_{L-1}
    std::vector<MatrixXd> cols;  // psi(x) or its patches
    std::vector<MatrixXd> hs;
    const bool keep = grads != nullptr;
    MatrixXd X = cz_ * (eA() * Zc);
    for (int l = 0; l < L; ++l) {
        MatrixXd C = s.psi.apply(X);
        if (s.cnn) C = im2col(C, s.geom, s.K);
        MatrixXd H = cw_ * (eW(l) * C);
        H.colwise() += cb_ * eb(l).col(0);
        if (keep) {
            xs.push_back(X);
            cols.push_back(std::move(C));
        }
        X += s.phi.apply(H);
        if (keep) hs.push_back(std::move(H));
    }
    MatrixXd pooled = X;
    if (s.cnn) {
        pooled.resize(s.D, N);
        for (Eigen::Index n = 0; n < N; ++n) pooled.col(n) = X.middleCols(n * P, P).rowwise().mean();
    }
    MatrixXd yhat = cy_ * (eG() * pooled);
    if (out) *out = yhat;
    if (!targets) return 0.0;
    if (targets->rows() != s.Y || targets->cols() != N)
        throw std::invalid_argument("CompletedModel: target shape mismatch");
    const double denom = static_cast<double>(N) * s.Y;
    const MatrixXd R = yhat - *targets;
    const double loss = R.squaredNorm() / denom;
    if (!grads) return loss;

    grads->assign(params_.size(), MatrixXd());
    const MatrixXd dY = (2.0 / denom) * R;
    grads->back() = cy_ * dY * pooled.transpose();
    MatrixXd Ug = cy_ * (eG().transpose() * dY);  // D x N
    MatrixXd U;
    if (s.cnn) {
        U.resize(s.D, N * P);
        for (Eigen::Index n = 0; n < N; ++n)
            U.middleCols(n * P, P) = (Ug.col(n) / static_cast<double>(P)).replicate(1, P);
    } else {
        U = std::move(Ug);
    }
    for (int l = L - 1; l >= 0; --l) {
        const MatrixXd Delta = U.cwiseProduct(s.phi.apply(hs[l], 1));
        (*grads)[1 + l] = cw_ * Delta * cols[l].transpose();
        (*grads)[1 + L + l] = cb_ * Delta.rowwise().sum();
        MatrixXd back = cw_ * (eW(l).transpose() * Delta);
        if (s.cnn) back = col2im(back, s.geom, s.K, s.D);
        if (s.psi.is_identity())
            U += back;
        else
            U += back.cwiseProduct(s.psi.apply(xs[l], 1));
    }
    (*grads)[0] = cz_ * U * Zc.transpose();
    return loss;
}

MatrixXd CompletedModel::predict(const MatrixXd& inputs) const {
    MatrixXd out;
    run(inputs, nullptr, nullptr, &out);
    return out;
}

double CompletedModel::loss(const MatrixXd& inputs, const MatrixXd& targets, std::vector<MatrixXd>* grads) const {
    return run(inputs, &targets, grads, nullptr);
}

OptKind opt_by_name(const std::string& name) {
    if (name == "gd") return OptKind::gd;
    if (name == "sgd") return OptKind::sgd;
    if (name == "adam") return OptKind::adam;
    throw std::invalid_argument("unknown optimizer '" + name + "'");
}

Optimizer::Optimizer(const TrainConfig& cfg, const std::vector<MatrixXd>& shapes) : cfg_(cfg) {
    if (cfg.opt == OptKind::adam) {
        for (const auto& p : shapes) {
            m_.push_back(MatrixXd::Zero(p.rows(), p.cols()));
            v_.push_back(MatrixXd::Zero(p.rows(), p.cols()));
        }
    }
}

void Optimizer::step(std::vector<MatrixXd>& params, const std::vector<MatrixXd>& grads) {
    if (cfg_.opt != OptKind::adam) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg_.lr * grads[i];
        return;
    }
    ++t_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = b1 * m_[i] + (1.0 - b1) * grads[i];
        v_[i] = b2 * v_[i] + (1.0 - b2) * grads[i].cwiseAbs2();
        params[i].array() -= cfg_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.adam_eps);
    }
}

MatrixXd model_inputs(const Dataset& d) { return d.inputs.transpose(); }

double test_accuracy(const CompletedModel& m, const Dataset& test, Eigen::Index chunk) {
    std::vector<int> pred;
    pred.reserve(static_cast<std::size_t>(test.size()));
    for (Eigen::Index s = 0; s < test.size(); s += chunk) {
        const Eigen::Index n = std::min(chunk, test.size() - s);
        const MatrixXd out = m.predict(test.inputs.middleRows(s, n).transpose());
        const std::vector<int> c = classify(out.transpose());
        pred.insert(pred.end(), c.begin(), c.end());
    }
    return accuracy(pred, test.labels);
}

namespace {

double full_loss(const CompletedModel& m, const MatrixXd& X, const MatrixXd& Y, Eigen::Index chunk) {
    double total = 0;
    for (Eigen::Index s = 0; s < X.cols(); s += chunk) {
        const Eigen::Index n = std::min(chunk, X.cols() - s);
        total += m.loss(X.middleCols(s, n), Y.middleCols(s, n), nullptr) * static_cast<double>(n);
    }
    return total / static_cast<double>(X.cols());
}

}  // namespace

std::vector<EpochMetrics> train(CompletedModel& model, const Dataset& train_set, const Dataset& test_set,
                                const TrainConfig& cfg, const std::function<void(const EpochMetrics&)>& on_epoch) {
    if (!(cfg.lr >= 0) || !std::isfinite(cfg.lr)) throw std::invalid_argument("train: learning rate required");
    if (cfg.epochs < 0) throw std::invalid_argument("train: epochs must be non-negative");
    const MatrixXd X = model_inputs(train_set);
    const MatrixXd Y = train_set.targets.transpose();
    const Eigen::Index N = X.cols();
    const Eigen::Index B = (cfg.opt == OptKind::gd || cfg.batch <= 0 || cfg.batch >= N) ? N : cfg.batch;

    std::vector<EpochMetrics> hist;
    auto record = [&](int epoch) {
        const double l = full_loss(model, X, Y, cfg.eval_chunk);
        if (!std::isfinite(l)) throw TrainingDiverged(epoch, "training diverged at epoch " + std::to_string(epoch));
        EpochMetrics em{epoch, l, test_set.size() > 0 ? test_accuracy(model, test_set, cfg.eval_chunk) : 0.0};
        hist.push_back(em);
        if (on_epoch) on_epoch(em);
    };
    record(0);

    Optimizer opt(cfg, model.params());
    std::vector<int> order(static_cast<std::size_t>(N));
    std::iota(order.begin(), order.end(), 0);
    std::vector<MatrixXd> grads;
    for (int e = 1; e <= cfg.epochs; ++e) {
        if (B < N) {
            Rng rng = Rng::substream(cfg.seed, 0xba7c4, static_cast<std::uint64_t>(e));
            for (Eigen::Index i = N - 1; i > 0; --i) {
                const auto j = static_cast<Eigen::Index>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
                std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
            }
        }
        for (Eigen::Index s = 0; s < N; s += B) {
            const Eigen::Index n = std::min(B, N - s);
            double l;
            if (B == N) {
                l = model.loss(X, Y, &grads);
            } else {
                MatrixXd xb(X.rows(), n), yb(Y.rows(), n);
                for (Eigen::Index i = 0; i < n; ++i) {
                    xb.col(i) = X.col(order[static_cast<std::size_t>(s + i)]);
                    yb.col(i) = Y.col(order[static_cast<std::size_t>(s + i)]);
                }
                l = model.loss(xb, yb, &grads);
            }
            if (!std::isfinite(l)) throw TrainingDiverged(e, "training diverged at epoch " + std::to_string(e));
            opt.step(model.params(), grads);
        }
        record(e);
    }
    return hist;
}

}  // namespace resdiff
