#include "resdiff/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "resdiff/moments_ode.hpp"
#include "resdiff/resnet_forward.hpp"
#include "resdiff/sde_engine.hpp"

namespace resdiff {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

long Histogram::total() const {
    long t = 0;
    for (long c : counts) t += c;
    return t;
}

Histogram histogram(const VectorXd& x, int bins, double lo, double hi) {
    if (bins < 1) throw std::invalid_argument("histogram: bins must be positive");
    if (!(hi >= lo)) throw std::invalid_argument("histogram: hi < lo");
    Histogram h;
    h.edges = VectorXd::LinSpaced(bins + 1, lo, hi);
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    const double w = (hi - lo) / bins;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        int b = w > 0 ? static_cast<int>(std::floor((x(i) - lo) / w)) : 0;
        b = std::clamp(b, 0, bins - 1);
        ++h.counts[static_cast<std::size_t>(b)];
    }
    return h;
}

Histogram histogram(const VectorXd& x, int bins) {
    if (x.size() == 0) return histogram(x, bins, 0.0, 1.0);
    return histogram(x, bins, x.minCoeff(), x.maxCoeff());
}

SummaryStats summarize(const MatrixXd& samples, int bins) {
    const long n = static_cast<long>(samples.rows());
    if (n < 2) throw std::invalid_argument("summarize: need at least two draws");
    const Eigen::Index d = samples.cols();
    SummaryStats s;
    s.n = n;
    s.mean = samples.colwise().mean().transpose();
    const MatrixXd c = samples.rowwise() - s.mean.transpose();
    const MatrixXd cov = (c.transpose() * c) / static_cast<double>(n - 1);
    s.var = cov.diagonal();
    s.se_mean = (s.var / static_cast<double>(n)).cwiseSqrt();
    s.se_var.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        const double m2 = c.col(j).squaredNorm() / n;
        const double m4 = c.col(j).array().pow(4).sum() / n;
        s.se_var(j) = std::sqrt(std::max(0.0, m4 - m2 * m2) / n);
    }
    s.corr.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) {
            const double den = std::sqrt(s.var(i) * s.var(j));
            s.corr(i, j) = den > 0 ? std::clamp(cov(i, j) / den, -1.0, 1.0) : kNaN;
        }
    if (bins > 0)
        for (Eigen::Index j = 0; j < d; ++j) s.hist.push_back(histogram(samples.col(j), bins));
    return s;
}

double ks_statistic(VectorXd a, VectorXd b) {
    if (a.size() == 0 || b.size() == 0) throw std::invalid_argument("ks_statistic: empty sample");
    std::sort(a.data(), a.data() + a.size());
    std::sort(b.data(), b.data() + b.size());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    Eigen::Index i = 0, j = 0;
    double d = 0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a(i), b(j));
        while (i < a.size() && a(i) == v) ++i;
        while (j < b.size() && b(j) == v) ++j;
        d = std::max(d, std::abs(i / na - j / nb));
    }
    return d;
}

double ks_critical(long n, long m, double alpha) {
    double c;
    if (alpha == 0.1) c = 1.224;
    else if (alpha == 0.05) c = 1.358;
    else if (alpha == 0.01) c = 1.628;
    else if (alpha == 0.001) c = 1.949;
    else c = std::sqrt(-0.5 * std::log(alpha / 2.0));
    return c * std::sqrt(static_cast<double>(n + m) / (static_cast<double>(n) * m));
}

double quantile(VectorXd x, double p) {
    if (x.size() == 0) throw std::invalid_argument("quantile: empty sample");
    if (!(p >= 0 && p <= 1)) throw std::invalid_argument("quantile: p outside [0, 1]");
    std::sort(x.data(), x.data() + x.size());
    const double h = (x.size() - 1) * p;
    const auto lo = static_cast<Eigen::Index>(std::floor(h));
    const Eigen::Index hi = std::min<Eigen::Index>(lo + 1, x.size() - 1);
    return x(lo) + (h - lo) * (x(hi) - x(lo));
}

double linear_fit_r2(const VectorXd& x, const VectorXd& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("linear_fit_r2: bad sizes");
    const VectorXd xc = x.array() - x.mean();
    const VectorXd yc = y.array() - y.mean();
    const double sxx = xc.squaredNorm(), syy = yc.squaredNorm(), sxy = xc.dot(yc);
    if (syy == 0) return 1.0;
    if (sxx == 0) return 0.0;
    return sxy * sxy / (sxx * syy);
}

VectorXd linspace(double a, double b, int n) {
    if (n < 1) throw std::invalid_argument("linspace: n must be positive");
    if (n == 1) return VectorXd::Constant(1, a);
    return VectorXd::LinSpaced(n, a, b);
}

// ---------------------------------------------------------------------------

SampleMode sample_mode_by_name(const std::string& name) {
    if (name == "resnet") return SampleMode::resnet;
    if (name == "sde") return SampleMode::sde;
    if (name == "analytic") return SampleMode::analytic;
    if (name == "feedforward") return SampleMode::feedforward;
    throw std::invalid_argument("unknown mode '" + name + "' (resnet, sde, analytic, feedforward)");
}

const char* sample_mode_name(SampleMode m) {
    switch (m) {
        case SampleMode::resnet: return "resnet";
        case SampleMode::sde: return "sde";
        case SampleMode::analytic: return "analytic";
        case SampleMode::feedforward: return "feedforward";
    }
    return "?";
}

void ModelConfig::validate() const {
    if (D < 1 || L < 1 || steps < 0 || !(T > 0)) throw std::invalid_argument("ModelConfig: bad sizes");
    if (sigw2 < 0 || sigb2 < 0 || sigz2 < 0) throw std::invalid_argument("ModelConfig: negative variance");
    if (mode != SampleMode::feedforward) require_smooth(phi, "ModelConfig");
}

GaussianLaw analytic_law(const ModelConfig& cfg, const VectorXd& z) {
    const OdeParams p{cfg.phi.phi1_at_0(), cfg.phi.phi2_at_0(), cfg.sigw2, cfg.sigb2};
    MomentState s0;
    if (cfg.adapt) {
        s0.m = VectorXd::Zero(z.size());
        s0.lambda = cfg.sigz2 * z * z.transpose();
    } else {
        s0.m = z;
        s0.lambda = z * z.transpose();
    }
    MomentState sT;
    if (p.phi2 == 0.0) {
        sT.m = s0.m;
        sT.lambda.resize(z.size(), z.size());
        for (Eigen::Index i = 0; i < z.size(); ++i)
            for (Eigen::Index j = 0; j < z.size(); ++j)
                sT.lambda(i, j) = closed_form_nonexplosive(0.0, 0.0, s0.lambda(i, j), p, cfg.T).lambda;
    } else {
        const MomentTrajectory tr = integrate_moments(s0, p, cfg.T, 1e-3 * cfg.T);
        if (tr.exploded) throw std::domain_error("analytic_law: moments explode before T");
        sT = tr.states.back();
    }
    // a coordinate of x_T is x_0 plus an independent Gaussian increment; both
    // the copied and the adapted start reduce to (m_T, lambda_T - m_T m_T^T)
    GaussianLaw law;
    law.mean = sT.m;
    law.cov = sT.lambda - sT.m * sT.m.transpose();
    law.cov = 0.5 * (law.cov + law.cov.transpose()).eval();
    return law;
}

ModelSampler::ModelSampler(const ModelConfig& cfg, const VectorXd& z) : cfg_(cfg), z_(z) {
    cfg_.validate();
    if (z.size() < 1) throw std::invalid_argument("ModelSampler: no inputs");
    if (cfg_.mode == SampleMode::analytic) {
        const GaussianLaw law = analytic_law(cfg_, z);
        law_mean_ = law.mean;
        law_factor_ = psd_sqrt(law.cov).S;
    }
}

MatrixXd ModelSampler::draw(std::uint64_t seed, std::uint64_t d, bool* exploded) const {
    const int D = cfg_.D;
    const double sw = std::sqrt(cfg_.sigw2), sb = std::sqrt(cfg_.sigb2);
    MatrixXd X0;
    if (cfg_.adapt) {
        Rng ra = Rng::substream(seed, d, 0xada);
        X0 = (ra.normals(D) * std::sqrt(cfg_.sigz2)) * z_.transpose();
    } else {
        X0 = copy_inputs(z_, D);
    }
    Rng rng = Rng::substream(seed, d, static_cast<std::uint64_t>(cfg_.mode) + 1);
    LayerPath path;
    switch (cfg_.mode) {
        case SampleMode::resnet: {
            NetConfig nc;
            nc.D = D;
            nc.L = cfg_.L;
            nc.T = cfg_.T;
            nc.phi = cfg_.phi;
            nc.scheme = ParamScheme::full_iid(D, sw, sb);
            path = fc_forward(nc, X0, rng);
            break;
        }
        case SampleMode::sde: {
            SdeSimConfig sc;
            sc.steps = cfg_.steps > 0 ? cfg_.steps : default_steps(cfg_.L);
            sc.D = D;
            sc.T = cfg_.T;
            sc.phi = cfg_.phi;
            sc.scheme = ParamScheme::full_iid(D, sw, sb);
            path = simulate_fc_iid_joint(sc, X0, rng);
            break;
        }
        case SampleMode::analytic: {
            // coordinates are independent in the limit; the law does not see x_0
            // beyond its moments, so the draw ignores the adapter sample
            MatrixXd out(D, z_.size());
            for (int k = 0; k < D; ++k) out.row(k) = (law_mean_ + law_factor_ * rng.normals(z_.size())).transpose();
            if (exploded) *exploded = false;
            return out;
        }
        case SampleMode::feedforward:
            path = feedforward_baseline(D, cfg_.L, cfg_.sigw2, cfg_.sigb2, cfg_.phi, X0, rng);
            break;
    }
    if (exploded) *exploded = path.exploded;
    return path.terminal();
}

// ---------------------------------------------------------------------------

bool AgreementReport::all_ok() const {
    for (const auto& m : modes)
        if (m.exploded > 0) return false;
    for (const auto& d : deviations)
        if (!d.ok) return false;
    for (const auto& k : ks)
        if (!k.ok) return false;
    return true;
}

namespace {

Deviation make_dev(const std::string& a, const std::string& b, const char* stat, int i, int j, double diff,
                   double se, double thr) {
    Deviation d{a, b, stat, i, j, diff, se, 0.0, true};
    if (se > 0) {
        d.z = diff / se;
        d.ok = std::abs(d.z) <= thr;
    } else {
        d.z = std::abs(diff) <= 1e-12 ? 0.0 : std::numeric_limits<double>::infinity();
        d.ok = std::abs(diff) <= 1e-12;
    }
    return d;
}

ModeResult run_mode(const ModelConfig& mc, const VectorXd& z, int draws, std::uint64_t seed, int threads,
                    int coord) {
    const ModelSampler sampler(mc, z);
    std::vector<VectorXd> rows(static_cast<std::size_t>(draws));
    std::vector<char> bad(static_cast<std::size_t>(draws), 0);
    parallel_for(draws, threads, [&](int d) {
        bool ex = false;
        const MatrixXd out = sampler.draw(seed, static_cast<std::uint64_t>(d), &ex);
        rows[static_cast<std::size_t>(d)] = out.row(coord).transpose();
        bad[static_cast<std::size_t>(d)] = ex || !out.row(coord).allFinite();
    });
    ModeResult r;
    r.mode = mc.mode;
    long good = 0;
    for (char b : bad) good += !b;
    r.exploded = draws - good;
    r.samples.resize(good, z.size());
    long k = 0;
    for (int d = 0; d < draws; ++d)
        if (!bad[static_cast<std::size_t>(d)]) r.samples.row(k++) = rows[static_cast<std::size_t>(d)].transpose();
    if (good >= 2) r.stats = summarize(r.samples);
    return r;
}

}  // namespace

AgreementReport compare_modes(const CompareConfig& cfg, const VectorXd& z) {
    if (cfg.draws < 2) throw std::invalid_argument("compare_modes: need at least two draws");
    if (cfg.coordinate < 0 || cfg.coordinate >= cfg.model.D)
        throw std::invalid_argument("compare_modes: coordinate out of range");
    AgreementReport rep;
    rep.theory = analytic_law(cfg.model, z);
    const SampleMode order[3] = {SampleMode::resnet, SampleMode::sde, SampleMode::analytic};
    for (int k = 0; k < 3; ++k) {
        ModelConfig mc = cfg.model;
        mc.mode = order[k];
        if (order[k] == SampleMode::sde) {
            if (cfg.sde_sigw2 >= 0) mc.sigw2 = cfg.sde_sigw2;
            if (cfg.sde_sigb2 >= 0) mc.sigb2 = cfg.sde_sigb2;
        }
        rep.modes.push_back(run_mode(mc, z, cfg.draws, substream_seed(cfg.seed, 0xc0de, static_cast<std::uint64_t>(k)),
                                     cfg.threads, cfg.coordinate));
    }
    const int n = static_cast<int>(z.size());
    const double thr = cfg.threshold_se;
    const VectorXd th_sd = rep.theory.cov.diagonal().cwiseSqrt();
    for (const auto& m : rep.modes) {
        if (m.samples.rows() < 2) continue;
        const std::string name = sample_mode_name(m.mode);
        const SummaryStats& s = m.stats;
        for (int i = 0; i < n; ++i) {
            rep.deviations.push_back(make_dev(name, "theory", "mean", i, i, s.mean(i) - rep.theory.mean(i),
                                              s.se_mean(i), thr));
            rep.deviations.push_back(make_dev(name, "theory", "var", i, i, s.var(i) - rep.theory.cov(i, i),
                                              s.se_var(i), thr));
            for (int j = i + 1; j < n; ++j) {
                const double rt = rep.theory.cov(i, j) / (th_sd(i) * th_sd(j));
                if (std::isnan(rt) || std::isnan(s.corr(i, j))) continue;
                rep.deviations.push_back(make_dev(name, "theory", "corr", i, j, s.corr(i, j) - rt,
                                                  corr_se(s.corr(i, j), s.n), thr));
            }
        }
    }
    for (std::size_t a = 0; a < rep.modes.size(); ++a)
        for (std::size_t b = a + 1; b < rep.modes.size(); ++b) {
            const ModeResult& A = rep.modes[a];
            const ModeResult& B = rep.modes[b];
            if (A.samples.rows() < 2 || B.samples.rows() < 2) continue;
            const std::string na = sample_mode_name(A.mode), nb = sample_mode_name(B.mode);
            const SummaryStats &sa = A.stats, &sb = B.stats;
            auto comb = [](double x, double y) { return std::sqrt(x * x + y * y); };
            for (int i = 0; i < n; ++i) {
                rep.deviations.push_back(make_dev(na, nb, "mean", i, i, sa.mean(i) - sb.mean(i),
                                                  comb(sa.se_mean(i), sb.se_mean(i)), thr));
                rep.deviations.push_back(make_dev(na, nb, "var", i, i, sa.var(i) - sb.var(i),
                                                  comb(sa.se_var(i), sb.se_var(i)), thr));
                for (int j = i + 1; j < n; ++j) {
                    if (std::isnan(sa.corr(i, j)) || std::isnan(sb.corr(i, j))) continue;
                    rep.deviations.push_back(make_dev(na, nb, "corr", i, j, sa.corr(i, j) - sb.corr(i, j),
                                                      comb(corr_se(sa.corr(i, j), sa.n), corr_se(sb.corr(i, j), sb.n)),
                                                      thr));
                }
                KsResult k;
                k.a = na;
                k.b = nb;
                k.input = i;
                k.statistic = ks_statistic(A.samples.col(i), B.samples.col(i));
                k.critical = ks_critical(sa.n, sb.n, cfg.ks_alpha);
                k.ok = k.statistic <= k.critical;
                rep.ks.push_back(k);
            }
        }
    return rep;
}

// ---------------------------------------------------------------------------

CorrelationGrid correlation_grid(const GridConfig& cfg, const VectorXd& z) {
    if (cfg.draws < 1) throw std::invalid_argument("correlation_grid: need draws");
    const ModelSampler sampler(cfg.model, z);
    const Eigen::Index n = z.size();
    struct Acc {
        VectorXd sum;
        MatrixXd outer;
        long count = 0;
        bool exploded = false;
    };
    std::vector<Acc> acc(static_cast<std::size_t>(cfg.draws));
    parallel_for(cfg.draws, cfg.threads, [&](int d) {
        Acc& a = acc[static_cast<std::size_t>(d)];
        bool ex = false;
        const MatrixXd out = sampler.draw(cfg.seed, static_cast<std::uint64_t>(d), &ex);
        if (ex || !out.allFinite()) {
            a.exploded = true;
            return;
        }
        const MatrixXd rows = cfg.pool_coordinates ? out : MatrixXd(out.topRows(1));
        a.sum = rows.colwise().sum().transpose();
        a.outer = rows.transpose() * rows;
        a.count = static_cast<long>(rows.rows());
    });
    VectorXd sum = VectorXd::Zero(n);
    MatrixXd outer = MatrixXd::Zero(n, n);
    CorrelationGrid g;
    g.z = z;
    for (const Acc& a : acc) {
        if (a.exploded) {
            ++g.exploded;
            continue;
        }
        sum += a.sum;
        outer += a.outer;
        g.samples += a.count;
    }
    if (g.samples < 2) throw std::runtime_error("correlation_grid: fewer than two finite samples");
    const double N = static_cast<double>(g.samples);
    const VectorXd mean = sum / N;
    MatrixXd cov = (outer - N * mean * mean.transpose()) / (N - 1.0);
    cov = 0.5 * (cov + cov.transpose()).eval();
    g.empirical.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            const double den = std::sqrt(cov(i, i) * cov(j, j));
            g.empirical(i, j) = i == j ? (cov(i, i) > 0 ? 1.0 : kNaN)
                                       : (den > 0 ? std::clamp(cov(i, j) / den, -1.0, 1.0) : kNaN);
        }
    g.analytic = MatrixXd::Constant(n, n, kNaN);
    if (cfg.model.mode != SampleMode::feedforward && cfg.model.phi.phi2_at_0() == 0.0) {
        const GaussianLaw law = analytic_law(cfg.model, z);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) {
                const double den = std::sqrt(law.cov(i, i) * law.cov(j, j));
                g.analytic(i, j) = i == j ? 1.0 : (den > 0 ? law.cov(i, j) / den : kNaN);
            }
    }
    return g;
}

FunctionSamples function_samples(const GridConfig& cfg, const VectorXd& z) {
    if (cfg.draws < 1) throw std::invalid_argument("function_samples: need draws");
    const ModelSampler sampler(cfg.model, z);
    std::vector<VectorXd> rows(static_cast<std::size_t>(cfg.draws));
    std::vector<char> bad(static_cast<std::size_t>(cfg.draws), 0);
    parallel_for(cfg.draws, cfg.threads, [&](int d) {
        bool ex = false;
        const MatrixXd out = sampler.draw(cfg.seed, static_cast<std::uint64_t>(d), &ex);
        rows[static_cast<std::size_t>(d)] = out.row(0).transpose();
        bad[static_cast<std::size_t>(d)] = ex || !out.row(0).allFinite();
    });
    FunctionSamples f;
    f.z = z;
    long good = 0;
    for (char b : bad) good += !b;
    f.exploded = cfg.draws - good;
    f.samples.resize(good, z.size());
    long k = 0;
    for (int d = 0; d < cfg.draws; ++d)
        if (!bad[static_cast<std::size_t>(d)]) f.samples.row(k++) = rows[static_cast<std::size_t>(d)].transpose();
    const Eigen::Index n = z.size();
    f.q05 = f.q50 = f.q95 = VectorXd::Constant(n, kNaN);
    if (good > 0)
        for (Eigen::Index i = 0; i < n; ++i) {
            f.q05(i) = quantile(f.samples.col(i), 0.05);
            f.q50(i) = quantile(f.samples.col(i), 0.50);
            f.q95(i) = quantile(f.samples.col(i), 0.95);
        }
    return f;
}

}  // namespace resdiff
