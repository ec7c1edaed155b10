// Acceptance criteria. One PASS/FAIL line per criterion; indented lines carry
// the measured values. Every tolerance is a named constant below.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <sys/wait.h>

#include "resdiff/idx.hpp"
#include "resdiff/inference.hpp"
#include "resdiff/kernels.hpp"
#include "resdiff/moments_ode.hpp"
#include "resdiff/paramdist.hpp"
#include "resdiff/resnet_forward.hpp"
#include "resdiff/sde_engine.hpp"
#include "resdiff/stats.hpp"

using namespace resdiff;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const double kE = std::exp(1.0);

// C1
constexpr int kC1Width = 500, kC1Draws = 10000;
constexpr double kC1MeanSe = 4.0, kC1VarRel = 0.05, kC1CorrAbs = 0.03, kC1KsAlpha = 0.01;
// C2
constexpr int kC2Draws = 100;
constexpr double kC2Rel = 0.10;
// C3, C4
constexpr double kC3Step = 1e-3, kC3TolSmooth = 1e-8, kC3TolExplosive = 1e-6, kC3Frac = 0.9;
constexpr double kC4Step = 1e-4, kC4Threshold = 1e6, kC4Tol = 1e-2;
// C5
constexpr int kC5Width = 64, kC5Depth = 1000, kC5Draws = 5;
constexpr double kC5Defect = 0.05;
constexpr int kC5TraceWidth = 256, kC5TraceDraws = 50;
constexpr double kC5TraceRel = 0.05;
constexpr int kC5NormDraws = 10;
constexpr double kC5NormRatio = 1.25, kC5NormSlope = 0.05;
// C6
constexpr double kC6Dt = 1e-4, kC6Se = 4.0;
constexpr long kC6Samples = 1000000;
// C7, C8
constexpr int kNTrain = 2000, kNTrainLong = 20000, kNTest = 10000;
constexpr std::uint64_t kSubsetSeed = 1;
constexpr double kC7Threshold = 0.80, kC7LongTarget = 0.8536, kC7LongTol = 0.005;
constexpr int kC8Width = 32, kC8Epochs = 120;
constexpr double kC8Lr = 30.0, kC8Gap = 0.05;
// C9
constexpr int kC9Points = 20, kC9Width = 200, kC9Draws = 500;
constexpr double kC9Tol = 0.05;
constexpr int kC9ReluWidth = 500, kC9ReluDraws = 20;
constexpr double kC9ReluFloor = 0.95, kC9ReluSigw2 = 2.0, kC9ReluSigb2 = 0.0;

int g_threads = 1;

struct Report {
    bool pass = true;
    std::ostringstream detail;
    // records one sub-check
    void check(bool ok, const std::string& what) {
        detail << "    [" << (ok ? "ok" : "!!") << "] " << what << "\n";
        pass = pass && ok;
    }
    void note(const std::string& what) { detail << "    " << what << "\n"; }
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

double sd(const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double mean(const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    return m / static_cast<double>(v.size());
}

// ---- 1 ---------------------------------------------------------------------

void c1(Report& r) {
    CompareConfig c;
    c.model.D = kC1Width;
    c.model.L = kC1Width;
    c.model.steps = kC1Width;
    c.draws = kC1Draws;
    c.seed = 101;
    c.threads = g_threads;
    c.ks_alpha = kC1KsAlpha;
    VectorXd z(2);
    z << 0.0, 1.0;
    const AgreementReport a = compare_modes(c, z);
    const double target_mean[2] = {0.0, 1.0}, target_var[2] = {kE - 1, 2 * (kE - 1)};
    for (const ModeResult& m : a.modes) {
        const char* name = sample_mode_name(m.mode);
        const SummaryStats& s = m.stats;
        r.check(m.exploded == 0, fmt("%s: %ld exploded paths", name, m.exploded));
        for (int i = 0; i < 2; ++i) {
            const double zs = (s.mean(i) - target_mean[i]) / s.se_mean(i);
            r.check(std::abs(zs) <= kC1MeanSe,
                    fmt("%s z=%g: mean %.5f (target %g, %.2f SE)", name, z(i), s.mean(i), target_mean[i], zs));
            const double rel = s.var(i) / target_var[i] - 1;
            r.check(std::abs(rel) <= kC1VarRel,
                    fmt("%s z=%g: var %.5f (target %.5f, %+.2f%%)", name, z(i), s.var(i), target_var[i], 100 * rel));
        }
        const double corr = s.corr(0, 1);
        r.check(std::abs(corr - 1 / std::sqrt(2.0)) <= kC1CorrAbs,
                fmt("%s: corr %.5f (target %.5f)", name, corr, 1 / std::sqrt(2.0)));
    }
    for (const KsResult& k : a.ks)
        r.check(k.ok, fmt("KS %s vs %s, z=%g: D=%.4f (1%% critical %.4f)", k.a.c_str(), k.b.c_str(), z(k.input),
                          k.statistic, k.critical));
}

// ---- 2 ---------------------------------------------------------------------

void c2(Report& r) {
    const int sizes[] = {32, 64, 128, 256};
    std::vector<double> spreads, gaps;
    double kw256 = 0, kb256 = 0;
    for (int D : sizes) {
        NetConfig cfg;
        cfg.D = D;
        cfg.L = D;
        cfg.phi = Activation(ActKind::tanh);
        cfg.scheme = ParamScheme::full_iid(D, 1.0, 1.0);
        std::vector<double> kw(kC2Draws), kb(kC2Draws), tot(kC2Draws);
        const VectorXd x1 = VectorXd::Constant(D, 1.0), x2 = VectorXd::Constant(D, 2.0);
        parallel_for(kC2Draws, g_threads, [&](int d) {
            const EmpiricalNtk k = empirical_ntk(cfg, NetworkDraw{202, static_cast<std::uint64_t>(d)}, x1, x2);
            kw[static_cast<std::size_t>(d)] = k.K_W;
            kb[static_cast<std::size_t>(d)] = k.K_b;
            tot[static_cast<std::size_t>(d)] = k.total();
        });
        spreads.push_back(sd(tot));
        gaps.push_back(std::abs(mean(tot) - 3 * kE));
        r.note(fmt("L=D=%d: mean K_W %.4f, K_b %.4f, total %.4f, per-draw sd %.4f", D, mean(kw), mean(kb), mean(tot),
                   spreads.back()));
        if (D == 256) {
            kw256 = mean(kw);
            kb256 = mean(kb);
        }
    }
    r.check(std::abs(kw256 / (2 * kE + 1) - 1) <= kC2Rel,
            fmt("K_W at 256: %.4f vs %.4f (%+.1f%%)", kw256, 2 * kE + 1, 100 * (kw256 / (2 * kE + 1) - 1)));
    r.check(std::abs(kb256 / (kE - 1) - 1) <= kC2Rel,
            fmt("K_b at 256: %.4f vs %.4f (%+.1f%%)", kb256, kE - 1, 100 * (kb256 / (kE - 1) - 1)));
    bool shrink = true, closer = true;
    for (std::size_t i = 1; i < spreads.size(); ++i) {
        shrink = shrink && spreads[i] < spreads[i - 1];
        closer = closer && gaps[i] < gaps[i - 1];
    }
    r.check(shrink, "per-draw spread decreases monotonically in L=D");
    r.check(closer, fmt("|mean total - 3e| decreases monotonically (last %.4f)", gaps.back()));
}

// ---- 3 ---------------------------------------------------------------------

void c3(Report& r) {
    const OdeParams tanh_p{1.0, 0.0, 1.0, 1.0};
    struct Start {
        double m0, q0, m0b, q0b, lambda0;
    };
    const Start starts[] = {{0, 1, 1, 2, 0}, {0.5, 2, -0.2, 1.5, 0.3}, {0, 0, 0, 0, 0}};
    double worst = 0;
    for (const Start& s : starts) {
        const MomentTrajectory tr =
            integrate_moments(MomentState::pair(s.m0, s.q0, s.m0b, s.q0b, s.lambda0), tanh_p, 1.0, kC3Step);
        for (std::size_t k = 0; k < tr.t.size(); ++k) {
            const MomentTriple c = closed_form_nonexplosive(s.m0, s.q0, s.lambda0, tanh_p, tr.t[k]);
            const MomentState& st = tr.states[k];
            worst = std::max({worst, std::abs(st.m(0) - c.m), std::abs(st.q(0) - c.q), std::abs(st.lambda(0, 1) - c.lambda)});
        }
    }
    r.check(worst <= kC3TolSmooth, fmt("tanh: max |RK4 - closed form| on [0,1] = %.3e", worst));

    const OdeParams sw{0.5, 0.5, 1.0, 1.0};
    const ExplosiveConstants c = fit_explosive_constants(1.0, 1.0, sw);
    const std::optional<double> ts = explosion_time(c);
    if (!ts) {
        r.check(false, "swish: no explosion time from the closed form");
        return;
    }
    const double horizon = kC3Frac * *ts;
    const MomentTrajectory tr = integrate_moments(MomentState::single(1.0, 1.0), sw, horizon, kC3Step);
    double abs_err = 0, rel_err = 0;
    for (std::size_t k = 0; k < tr.t.size(); ++k) {
        const auto [m, q] = closed_form_explosive(c, tr.t[k]);
        const MomentState& st = tr.states[k];
        abs_err = std::max({abs_err, std::abs(st.m(0) - m), std::abs(st.q(0) - q)});
        rel_err = std::max({rel_err, std::abs(st.m(0) - m) / std::max(1.0, std::abs(m)),
                            std::abs(st.q(0) - q) / std::max(1.0, std::abs(q))});
    }
    r.note(fmt("swish: T* = %.6f, horizon %.6f, q there %.4f, max relative error %.3e", *ts, horizon,
               tr.states.back().q(0), rel_err));
    r.check(abs_err <= kC3TolExplosive, fmt("swish: max |RK4 - closed form| on [0, 0.9 T*] = %.3e", abs_err));
}

// ---- 4 ---------------------------------------------------------------------

void c4(Report& r) {
    const OdeParams sw{0.5, 0.5, 1.0, 1.0};
    const ExplosiveConstants c = fit_explosive_constants(1.0, 1.0, sw);
    const std::optional<double> tf = explosion_time(c);
    const std::optional<double> tr = rk4_blowup_time(1.0, 1.0, sw, kC4Step, kC4Threshold, 100.0);
    r.note(fmt("C = %.6g", c.C));
    if (!tf || !tr) {
        r.check(false, "explosion time missing from formula or RK4");
        return;
    }
    r.check(std::abs(*tf - *tr) <= kC4Tol, fmt("T* formula %.6f, RK4 (q > 1e6) %.6f, |diff| %.2e", *tf, *tr, std::abs(*tf - *tr)));
}

// ---- 5 ---------------------------------------------------------------------

SdeSimConfig jac_cfg(int D, int steps) {
    SdeSimConfig c;
    c.D = D;
    c.steps = steps;
    c.phi = Activation(ActKind::tanh);
    c.scheme = ParamScheme::full_iid(D, 1.0, 1.0);
    return c;
}

double spectral_norm(const MatrixXd& g) { return Eigen::JacobiSVD<MatrixXd>(g).singularValues()(0); }

void c5(Report& r) {
    double defect[2];
    for (int k = 0; k < 2; ++k) {
        const int L = kC5Depth << k;
        std::vector<double> d(kC5Draws);
        parallel_for(kC5Draws, g_threads, [&](int i) {
            Rng rng = Rng::substream(505, static_cast<std::uint64_t>(L), static_cast<std::uint64_t>(i));
            const JacobianPath p = simulate_jacobian_sde(jac_cfg(kC5Width, L), VectorXd::Ones(kC5Width), rng, true);
            d[static_cast<std::size_t>(i)] =
                (p.g_T() * p.ginv_T() - MatrixXd::Identity(kC5Width, kC5Width)).norm() / std::sqrt(double(kC5Width));
        });
        defect[k] = mean(d);
    }
    r.check(defect[0] <= kC5Defect, fmt("D=64, L=1000: mean ||g g^-1 - I||/sqrt(D) = %.4f", defect[0]));
    r.check(defect[1] < defect[0], fmt("L=2000: %.4f (ratio %.3f)", defect[1], defect[1] / defect[0]));

    std::vector<double> tr(kC5TraceDraws);
    parallel_for(kC5TraceDraws, g_threads, [&](int i) {
        Rng rng = Rng::substream(506, static_cast<std::uint64_t>(i));
        const JacobianPath p =
            simulate_jacobian_sde(jac_cfg(kC5TraceWidth, kC5TraceWidth), VectorXd::Ones(kC5TraceWidth), rng, false);
        tr[static_cast<std::size_t>(i)] = p.g_T().squaredNorm() / kC5TraceWidth;
    });
    const double t = mean(tr);
    r.check(std::abs(t / kE - 1) <= kC5TraceRel,
            fmt("D=256: mean trace(g^T g)/D = %.4f vs e (%+.2f%%)", t, 100 * (t / kE - 1)));

    const int depths[] = {100, 1000, 10000};
    std::vector<double> mx;
    for (int L : depths) {
        std::vector<double> n(kC5NormDraws);
        parallel_for(kC5NormDraws, g_threads, [&](int i) {
            Rng rng = Rng::substream(507, static_cast<std::uint64_t>(L), static_cast<std::uint64_t>(i));
            const JacobianPath p = simulate_jacobian_sde(jac_cfg(kC5Width, L), VectorXd::Ones(kC5Width), rng, false);
            n[static_cast<std::size_t>(i)] = spectral_norm(p.g_T());
        });
        mx.push_back(*std::max_element(n.begin(), n.end()));
        r.note(fmt("L=%d: max spectral norm of g_T over %d draws %.4f", L, kC5NormDraws, mx.back()));
    }
    const VectorXd lx = (VectorXd(3) << 2, 3, 4).finished();
    const VectorXd ly = (VectorXd(3) << std::log(mx[0]), std::log(mx[1]), std::log(mx[2])).finished();
    const double xm = lx.mean(), ym = ly.mean();
    const double slope = (lx.array() - xm).matrix().dot((ly.array() - ym).matrix()) / (lx.array() - xm).square().sum();
    r.check(mx[1] / mx[0] <= kC5NormRatio && mx[2] / mx[0] <= kC5NormRatio,
            fmt("max-norm ratios to L=100: %.3f, %.3f", mx[1] / mx[0], mx[2] / mx[0]));
    r.check(slope <= kC5NormSlope, fmt("slope of log max-norm per decade of L: %.4f", slope));
}

// ---- 6 ---------------------------------------------------------------------

// Streaming first and second moments of y = dx / sqrt(dt).
struct Moments {
    VectorXd s1;
    MatrixXd s2;
    VectorXd s4diag;  // for SE of variances
    MatrixXd s22;     // sum of (y_a y_b)^2 for SE of covariances
    long n = 0;
    explicit Moments(int k) : s1(VectorXd::Zero(k)), s2(MatrixXd::Zero(k, k)), s4diag(VectorXd::Zero(k)), s22(MatrixXd::Zero(k, k)) {}
    void add(const VectorXd& y) {
        s1 += y;
        const MatrixXd o = y * y.transpose();
        s2 += o;
        s22 += o.cwiseAbs2();
        s4diag += y.array().pow(4).matrix();
        ++n;
    }
    void merge(const Moments& m) {
        s1 += m.s1;
        s2 += m.s2;
        s4diag += m.s4diag;
        s22 += m.s22;
        n += m.n;
    }
};

struct OneStep {
    VectorXd mu;      // drift
    MatrixXd sigma2;  // diffusion covariance
};

// Compares the sampled one-step moments against drift and diffusion; `full_cov`
// also checks off-diagonal covariance entries.
void compare_one_step(Report& r, const std::string& name, const Moments& m, const OneStep& th, bool full_cov) {
    const double n = static_cast<double>(m.n);
    const VectorXd ybar = m.s1 / n;
    const MatrixXd ey2 = m.s2 / n;
    double worst_mean = 0, worst_cov = 0, worst_rel = 0;
    int worst_a = 0, worst_b = 0;
    const int k = static_cast<int>(ybar.size());
    for (int a = 0; a < k; ++a) {
        // E[dx]/dt = ybar / sqrt(dt); SE from the sample variance
        const double var_a = ey2(a, a) - ybar(a) * ybar(a);
        const double est = ybar(a) / std::sqrt(kC6Dt);
        const double se = std::sqrt(var_a / n) / std::sqrt(kC6Dt);
        worst_mean = std::max(worst_mean, std::abs(est - th.mu(a)) / se);
        for (int b = full_cov ? 0 : a; b <= a; ++b) {
            const double cov = ey2(a, b) - ybar(a) * ybar(b);
            const double se_c = std::sqrt(std::max(0.0, m.s22(a, b) / n - ey2(a, b) * ey2(a, b)) / n);
            const double zc = std::abs(cov - th.sigma2(a, b)) / se_c;
            if (zc > worst_cov) {
                worst_cov = zc;
                worst_a = a;
                worst_b = b;
                worst_rel = cov / th.sigma2(a, b) - 1;
            }
        }
    }
    r.check(worst_mean <= kC6Se, fmt("%s: drift, worst deviation %.2f SE over %d coordinates", name.c_str(), worst_mean, k));
    r.check(worst_cov <= kC6Se,
            fmt("%s: %s, worst deviation %.2f SE at (%d, %d), relative %+.2e, sigma^2 %.3g, drift %.3g", name.c_str(),
                full_cov ? "diffusion covariance" : "diffusion variances", worst_cov, worst_a, worst_b, worst_rel,
                th.sigma2(worst_a, worst_a), th.mu(worst_a)));
}

MatrixXd spd(int n, Rng& rng, double floor) {
    const MatrixXd A = rng.normals(n, n);
    return A * A.transpose() / n + floor * MatrixXd::Identity(n, n);
}

void run_samples(Moments& total, int dims, const std::function<VectorXd(Rng&)>& draw, std::uint64_t tag) {
    constexpr int chunks = 100;
    std::vector<Moments> parts(chunks, Moments(dims));
    parallel_for(chunks, g_threads, [&](int c) {
        Rng rng = Rng::substream(606, tag, static_cast<std::uint64_t>(c));
        for (long s = 0; s < kC6Samples / chunks; ++s) parts[static_cast<std::size_t>(c)].add(draw(rng));
    });
    for (const Moments& p : parts) total.merge(p);
}

void c6(Report& r) {
    const Activation phi(ActKind::swish), psi(ActKind::identity);
    const double p1 = phi.phi1_at_0(), p2 = phi.phi2_at_0();
    const double sq = std::sqrt(kC6Dt);
    Rng setup(600);

    // fully connected, D = 3
    const int D = 3;
    const VectorXd x = (VectorXd(3) << 0.8, -1.1, 0.4).finished();
    struct Named {
        std::string name;
        ParamScheme s;
    };
    const MatrixXd so = spd(D, setup, 0.3), si = spd(D, setup, 0.3), sb = spd(D, setup, 0.2);
    const MatrixXd mw = setup.normals(D, D), sw = spd(D * D, setup, 0.2);
    const VectorXd mb = setup.normals(D);
    std::vector<Named> fc = {{"full_iid", ParamScheme::full_iid(D, 1.2, 0.7)},
                             {"matrix_gaussian", ParamScheme::matrix_gaussian(mw, mb, so, si, sb)},
                             {"general_gaussian", ParamScheme::general_gaussian(mw, mb, sw, sb)}};
    std::uint64_t tag = 0;
    for (const Named& n : fc) {
        const VectorXd u = psi.apply(x);
        const MatrixXd S = n.s.block_cross_cov(u, u);
        OneStep th{p1 * n.s.mean_preactivation(u) + 0.5 * p2 * S.diagonal(), p1 * p1 * S};
        Moments m(D);
        run_samples(m, D, [&](Rng& rng) {
            const Increments inc = n.s.sample_increments(kC6Dt, rng);
            return VectorXd((fc_step(x, inc.dW, inc.db, phi, psi) - x) / sq);
        }, ++tag);
        compare_one_step(r, n.name + " (D=3)", m, th, true);
    }

    // convolutional, D = 4 channels on a 3x3 grid, K = 3
    const int C = 4, K = 3;
    const CnnGeometry g{3, 3};
    const MatrixXd X = setup.normals(C, g.P());
    const MatrixXd cmw = 0.3 * setup.normals(C, K * K * C);
    const VectorXd cmb = setup.normals(C);
    // separate statements: argument evaluation order is unspecified
    // spatial factors scaled down: at fixed dt the variance estimate carries a
    // bias of about phi''(0)^2 sigma^4 dt / 2, which must stay below the SE
    const MatrixXd to = spd(C, setup, 0.3), tu = spd(K, setup, 0.3) / 3, tv = spd(K, setup, 0.3) / 3;
    const MatrixXd ti = spd(C, setup, 0.3), tb = spd(C, setup, 0.2);
    std::vector<Named> cnn = {{"cnn_full_iid", ParamScheme::cnn_full_iid(C, K, 1.1, 0.5)},
                              {"cnn_tensor_gaussian", ParamScheme::cnn_tensor_gaussian(cmw, cmb, to, tu, tv, ti, tb)}};
    const MatrixXd PX = psi.apply(X);
    for (const Named& n : cnn) {
        const int k = C * g.P();
        OneStep th{VectorXd(k), MatrixXd::Zero(k, k)};
        for (int u = 0; u < g.U; ++u)
            for (int v = 0; v < g.V; ++v) {
                const int p = u * g.V + v;
                const VectorXd patch = extract_patch(PX, g, u, v, K);
                const MatrixXd S = n.s.block_cross_cov(patch, patch);
                th.mu.segment(p * C, C) = p1 * n.s.mean_preactivation(patch) + 0.5 * p2 * S.diagonal();
                th.sigma2.block(p * C, p * C, C, C) = p1 * p1 * S;
            }
        Moments m(k);
        run_samples(m, k, [&](Rng& rng) {
            const Increments inc = n.s.sample_increments(kC6Dt, rng);
            const MatrixXd dx = (cnn_step(X, g, inc.dW, inc.db, phi, psi) - X) / sq;
            return VectorXd(Eigen::Map<const VectorXd>(dx.data(), k));
        }, ++tag);
        compare_one_step(r, n.name + " (D=4, 3x3, K=3)", m, th, false);
    }
}

// ---- 7, 8 ------------------------------------------------------------------

struct MnistSplits {
    Dataset train_full, test;
};

const MnistSplits& mnist() {
    static MnistSplits m = [] {
        const std::string dir = default_data_dir();
        const IdxDataset tr = load_mnist(dir, "train"), te = load_mnist(dir, "t10k", kNTest);
        return MnistSplits{Dataset::from_labels(tr.images, tr.labels, 10, Dataset::Split::train),
                           Dataset::from_labels(te.images, te.labels, 10, Dataset::Split::test)};
    }();
    return m;
}

KernelSpec completed_ntk_spec() {
    KernelSpec k;
    k.family = KernelFamily::completed_ntk;
    k.phi1 = 1.0;
    k.sigw2 = 1.0;
    k.sigb2 = 0.01;
    k.sigz2 = 1.0 / 784;
    k.sigy2 = 1.0;
    k.T = 1.0;
    return k;
}

Dataset train_subset(int n) {
    const Dataset& full = mnist().train_full;
    // same derivation as `resdiff regress --seed 1`
    return full.subset(random_subset(static_cast<int>(full.size()), n, substream_seed(kSubsetSeed, 1)));
}

std::string read_baseline() {
    std::ifstream in(RESDIFF_BASELINE_FILE);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void c7(Report& r, bool long_run) {
    if (long_run) {
        const KrrResult k = kernel_regression(completed_ntk_spec(), train_subset(kNTrainLong), mnist().test);
        r.note(fmt("n=%d, jitter %.2e, relative residual %.2e", kNTrainLong, k.jitter, k.relative_residual));
        r.check(std::abs(k.accuracy - kC7LongTarget) <= kC7LongTol,
                fmt("full scale: accuracy %.4f vs %.4f +- %.3f", k.accuracy, kC7LongTarget, kC7LongTol));
        return;
    }
    const KrrResult k = kernel_regression(completed_ntk_spec(), train_subset(kNTrain), mnist().test);
    std::istringstream base(read_baseline());
    for (std::string line; std::getline(base, line);)
        if (!line.empty() && line[0] != '#') r.note("recorded baseline: " + line);
    r.note(fmt("jitter %.2e, relative residual %.2e", k.jitter, k.relative_residual));
    r.check(k.accuracy >= kC7Threshold,
            fmt("n=%d random subset: test accuracy %.4f (threshold %.2f)", kNTrain, k.accuracy, kC7Threshold));
}

void c8(Report& r) {
    const Dataset tr = train_subset(kNTrain);
    const KrrResult k = kernel_regression(completed_ntk_spec(), tr, mnist().test);
    CompletedNetSpec s;
    s.D = kC8Width;
    s.L = kC8Width;
    s.sigz2 = 1.0 / 784;
    Rng rng(808);
    CompletedModel m = CompletedModel::init(s, rng);
    TrainConfig c;
    c.opt = OptKind::gd;
    c.lr = kC8Lr;
    c.epochs = kC8Epochs;
    c.seed = 808;
    std::vector<EpochMetrics> h;
    try {
        h = train(m, tr, mnist().test, c);
    } catch (const TrainingDiverged& e) {
        r.check(false, e.what());
        return;
    }
    for (int e : {0, 10, 30, 60, kC8Epochs})
        r.note(fmt("epoch %3d: train loss %.5f, test accuracy %.4f", e, h[static_cast<std::size_t>(e)].train_loss,
                   h[static_cast<std::size_t>(e)].test_accuracy));
    const double acc = h.back().test_accuracy;
    r.check(h.back().train_loss < h.front().train_loss, "training loss decreased");
    r.check(std::abs(acc - k.accuracy) <= kC8Gap,
            fmt("trained %.4f vs kernel regression %.4f (gap %.4f)", acc, k.accuracy, std::abs(acc - k.accuracy)));
}

// ---- 9 ---------------------------------------------------------------------

void c9(Report& r) {
    const VectorXd z = linspace(-2, 2, kC9Points);
    GridConfig g;
    g.model.mode = SampleMode::sde;
    g.model.D = kC9Width;
    g.model.L = kC9Width;
    g.draws = kC9Draws;
    g.seed = 909;
    g.threads = g_threads;
    const CorrelationGrid cg = correlation_grid(g, z);
    MatrixXd expect(kC9Points, kC9Points);
    for (int i = 0; i < kC9Points; ++i)
        for (int j = 0; j < kC9Points; ++j)
            expect(i, j) = (z(i) * z(j) + 1) / std::sqrt((z(i) * z(i) + 1) * (z(j) * z(j) + 1));
    r.note(fmt("overlay vs closed-form surface: max |diff| %.2e", (cg.analytic - expect).cwiseAbs().maxCoeff()));
    const double dev = (cg.empirical - expect).cwiseAbs().maxCoeff();
    r.check(cg.exploded == 0 && dev <= kC9Tol,
            fmt("tanh SDE, D=%d, %ld samples: max |empirical - analytic| %.4f", kC9Width, cg.samples, dev));

    GridConfig f;
    f.model.mode = SampleMode::feedforward;
    f.model.phi = Activation(ActKind::relu);
    f.model.D = kC9ReluWidth;
    f.model.L = kC9ReluWidth;
    f.model.sigw2 = kC9ReluSigw2;
    f.model.sigb2 = kC9ReluSigb2;
    f.draws = kC9ReluDraws;
    f.seed = 910;
    f.threads = g_threads;
    const CorrelationGrid fg = correlation_grid(f, z);
    double lo = 1;
    for (int i = 0; i < kC9Points; ++i)
        for (int j = 0; j < kC9Points; ++j)
            if (i != j) lo = std::min(lo, fg.empirical(i, j));
    r.check(lo >= kC9ReluFloor, fmt("relu feedforward (sigw2=%g, sigb2=%g), D=L=%d: min off-diagonal %.4f",
                                    kC9ReluSigw2, kC9ReluSigb2, kC9ReluWidth, lo));
}

// ---- 10 --------------------------------------------------------------------

void c10(Report& r) {
    const std::string cmd = std::string(RESDIFF_INVARIANT_SUITE) + " --gtest_brief=1";
    const int st = std::system(cmd.c_str());
    r.check(WIFEXITED(st) && WEXITSTATUS(st) == 0, "invariant suite exit status " + std::to_string(WEXITSTATUS(st)));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    int only = 0;
    bool long_run = false;
    app.add_option("--only", only, "run a single criterion (1-10)")->check(CLI::Range(0, 10));
    app.add_flag("--long", long_run, "criterion 7 at full scale");
    app.add_option("--threads", g_threads, "worker threads")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    const std::map<int, std::pair<std::string, std::function<void(Report&)>>> criteria = {
        {1, {"three-mode agreement", c1}},
        {2, {"NTK convergence", c2}},
        {3, {"moment ODE vs closed forms", c3}},
        {4, {"explosion time", c4}},
        {5, {"Jacobian invertibility and non-explosion", c5}},
        {6, {"one-step moment oracle", c6}},
        {7, {long_run ? "kernel regression, full scale" : "kernel regression, desk scale",
             [&](Report& r) { c7(r, long_run); }}},
        {8, {"training vs kernel regression", c8}},
        {9, {"correlation heatmap", c9}},
        {10, {"invariant suite", c10}},
    };
    bool all = true;
    for (const auto& [id, c] : criteria) {
        if (only != 0 && id != only) continue;
        Report r;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            c.second(r);
        } catch (const std::exception& e) {
            r.check(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << "C" << id << " " << (r.pass ? "PASS" : "FAIL") << " " << c.first << " (" << fmt("%.1f", secs)
                  << " s)\n"
                  << r.detail.str() << std::flush;
        all = all && r.pass;
    }
    return all ? 0 : 1;
}
