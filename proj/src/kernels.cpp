#include "resdiff/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace resdiff {

KernelFamily kernel_family_by_name(const std::string& name) {
    if (name == "weak") return KernelFamily::weak;
    if (name == "ntk") return KernelFamily::ntk;
    if (name == "completed-weak" || name == "completed_weak") return KernelFamily::completed_weak;
    if (name == "completed-ntk" || name == "completed_ntk") return KernelFamily::completed_ntk;
    throw std::invalid_argument("unknown kernel family '" + name + "'");
}

const char* kernel_family_name(KernelFamily f) {
    switch (f) {
        case KernelFamily::weak: return "weak";
        case KernelFamily::ntk: return "ntk";
        case KernelFamily::completed_weak: return "completed-weak";
        case KernelFamily::completed_ntk: return "completed-ntk";
    }
    return "?";
}

double KernelSpec::ratio() const {
    if (sigw2 <= 0) throw std::invalid_argument("KernelSpec: sigma_w^2 must be positive");
    return sigb2 / sigw2;
}

double KernelSpec::slope() const {
    const double c = C(), e = E();
    switch (family) {
        case KernelFamily::weak: return e - 1.0;
        case KernelFamily::ntk: return c * e;
        case KernelFamily::completed_weak: return sigy2 * sigz2 * e;
        case KernelFamily::completed_ntk: return sigy2 * sigz2 * (c + 2.0) * e;
    }
    return 0.0;
}

double KernelSpec::intercept() const {
    const double c = C(), e = E(), r = ratio();
    switch (family) {
        case KernelFamily::weak: return r * (e - 1.0);
        case KernelFamily::ntk: return r * c * e;
        case KernelFamily::completed_weak: return sigy2 * r * (e - 1.0);
        case KernelFamily::completed_ntk: return sigy2 * r * (c * e + e - 1.0);
    }
    return 0.0;
}

BivariateGaussian transition_density(double x0i, double x0j, const MomentState& mom0,
                                     const MomentState& momT) {
    if (mom0.m.size() != 2 || momT.m.size() != 2)
        throw std::invalid_argument("transition_density: moment states must describe a pair");
    auto v = [](const MomentState& s, int i) { return s.lambda(i, i) - s.m(i) * s.m(i); };
    auto c = [](const MomentState& s) { return s.lambda(0, 1) - s.m(0) * s.m(1); };
    BivariateGaussian b;
    b.mean << x0i + momT.m(0) - mom0.m(0), x0j + momT.m(1) - mom0.m(1);
    b.cov << v(momT, 0) - v(mom0, 0), c(momT) - c(mom0), c(momT) - c(mom0), v(momT, 1) - v(mom0, 1);
    if (b.cov(0, 0) < -1e-12 || b.cov(1, 1) < -1e-12 || b.cov.determinant() < -1e-12)
        throw std::domain_error("transition_density: inconsistent moments (negative variance)");
    return b;
}

MomentState copied_input_moments(double zi, double zj, const OdeParams& p, double T) {
    const MomentState s0 = MomentState::pair(zi, zi * zi, zj, zj * zj, zi * zj);
    if (p.phi2 == 0.0) {
        const MomentTriple a = closed_form_nonexplosive(zi, zi * zi, zi * zj, p, T);
        const MomentTriple b = closed_form_nonexplosive(zj, zj * zj, zi * zj, p, T);
        return MomentState::pair(a.m, a.q, b.m, b.q, a.lambda);
    }
    const MomentTrajectory tr = integrate_moments(s0, p, T, 1e-3 * T);
    if (tr.exploded) throw std::domain_error("copied_input_moments: moments explode before T");
    return tr.states.back();
}

double weak_kernel(double lambda0, const KernelSpec& spec) {
    KernelSpec s = spec;
    s.family = KernelFamily::weak;
    return s(lambda0);
}

double completed_weak_kernel(const VectorXd& z, const VectorXd& zp, const KernelSpec& spec) {
    KernelSpec s = spec;
    s.family = KernelFamily::completed_weak;
    return s(z, zp);
}

NtkValue ntk_kernel(double lambda0, const KernelSpec& spec) {
    const double c = spec.C(), e = spec.E(), r = spec.ratio();
    NtkValue v;
    v.K_b = r * (e - 1.0);
    v.K_W = lambda0 * c * e + r * (c * e - (e - 1.0));
    v.K_total = v.K_W + v.K_b;
    return v;
}

double completed_ntk_kernel(const VectorXd& z, const VectorXd& zp, const KernelSpec& spec) {
    KernelSpec s = spec;
    s.family = KernelFamily::completed_ntk;
    return s(z, zp);
}

Increments NetworkDraw::layer(const NetConfig& cfg, int l) const {
    Rng rng = Rng::substream(seed, draw, static_cast<std::uint64_t>(l));
    return cfg.scheme.sample_increments(cfg.dt(), rng);
}

namespace {

void check_ntk_config(const NetConfig& cfg) {
    cfg.validate();
    require_smooth(cfg.phi, "empirical_ntk");
    if (cfg.scheme.kind() != SchemeKind::full_iid)
        throw std::invalid_argument("empirical_ntk: fully i.i.d. scheme required");
    if (!cfg.psi.is_identity()) throw std::invalid_argument("empirical_ntk: psi must be identity");
}

// Forward pass keeping x_{t-1} and phi'(h_t) for every layer.
struct Tape {
    std::vector<MatrixXd> x;   // x_0..x_T, D x N
    std::vector<MatrixXd> dphi;  // phi'(h_t), t = 1..T
};

Tape forward_tape(const NetConfig& cfg, const NetworkDraw& net, const MatrixXd& X0) {
    Tape tape;
    tape.x.push_back(X0);
    for (int l = 0; l < cfg.L; ++l) {
        const Increments inc = net.layer(cfg, l);
        MatrixXd H = inc.dW * tape.x.back();
        H.colwise() += inc.db;
        tape.dphi.push_back(cfg.phi.apply(H, 1));
        tape.x.push_back(tape.x.back() + cfg.phi.apply(H));
    }
    return tape;
}

}  // namespace

double network_output(const NetConfig& cfg, const NetworkDraw& net, const VectorXd& x0) {
    check_ntk_config(cfg);
    MatrixXd X = x0;
    for (int l = 0; l < cfg.L; ++l) {
        const Increments inc = net.layer(cfg, l);
        X = fc_step(X, inc.dW, inc.db, cfg.phi, cfg.psi);
    }
    return X(0, 0);
}

OutputGradients output_gradients(const NetConfig& cfg, const NetworkDraw& net, const VectorXd& x0) {
    check_ntk_config(cfg);
    const Tape tape = forward_tape(cfg, net, x0);
    const double cw = cfg.scheme.sigma_w() * std::sqrt(cfg.dt() / cfg.D);
    const double cb = cfg.scheme.sigma_b() * std::sqrt(cfg.dt());
    OutputGradients g;
    g.y = tape.x.back()(0, 0);
    g.dW.resize(cfg.L);
    g.db.resize(cfg.L);
    VectorXd u = VectorXd::Unit(cfg.D, 0);
    for (int l = cfg.L - 1; l >= 0; --l) {
        const VectorXd delta = u.cwiseProduct(tape.dphi[l].col(0));
        g.dW[l] = cw * delta * tape.x[l].col(0).transpose();
        g.db[l] = cb * delta;
        const Increments inc = net.layer(cfg, l);
        u += inc.dW.transpose() * delta;
    }
    return g;
}

EmpiricalNtk empirical_ntk(const NetConfig& cfg, const NetworkDraw& net, const VectorXd& x0i,
                           const VectorXd& x0j) {
    check_ntk_config(cfg);
    MatrixXd X0(cfg.D, 2);
    X0.col(0) = x0i;
    X0.col(1) = x0j;
    const Tape tape = forward_tape(cfg, net, X0);
    const double dt = cfg.dt();
    const double sw2 = cfg.scheme.sigma_w() * cfg.scheme.sigma_w();
    const double sb2 = cfg.scheme.sigma_b() * cfg.scheme.sigma_b();
    EmpiricalNtk k;
    k.flagged_phi2 = cfg.phi.phi2_at_0() != 0.0;
    MatrixXd U = MatrixXd::Zero(cfg.D, 2);
    U(0, 0) = U(0, 1) = 1.0;
    for (int l = cfg.L - 1; l >= 0; --l) {
        const MatrixXd Delta = U.cwiseProduct(tape.dphi[l]);
        const double dd = Delta.col(0).dot(Delta.col(1));
        const double xx = tape.x[l].col(0).dot(tape.x[l].col(1));
        k.K_W += sw2 * dt / cfg.D * dd * xx;
        k.K_b += sb2 * dt * dd;
        const Increments inc = net.layer(cfg, l);
        U.noalias() += inc.dW.transpose() * Delta;
    }
    return k;
}

}  // namespace resdiff
