#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "config_file.hpp"
#include "resdiff/csv.hpp"
#include "resdiff/idx.hpp"
#include "resdiff/inference.hpp"
#include "resdiff/kernels.hpp"
#include "resdiff/moments_ode.hpp"
#include "resdiff/resnet_forward.hpp"
#include "resdiff/sde_engine.hpp"
#include "resdiff/stats.hpp"

namespace resdiff::cli {

namespace {

constexpr const char* kVersion = "0.1.0";

struct Common {
    std::uint64_t seed = 1;
    std::string out = ".";
    int threads = 1;
    std::string config;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--seed", c.seed, "master seed")->capture_default_str();
    sub->add_option("--out", c.out, "output directory")->capture_default_str();
    sub->add_option("--threads", c.threads, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--config", c.config, "key = value file; command-line flags take precedence");
}

std::string out_path(const Common& c, const std::string& name) {
    std::filesystem::create_directories(c.out);
    return (std::filesystem::path(c.out) / name).string();
}

void write_manifest(const Common& c, CLI::App* sub, double wall) {
    std::ofstream m(out_path(c, "manifest.txt"));
    m << "# resolved configuration\n";
    m << "subcommand = \"" << sub->get_name() << "\"\n";
    m << "version = \"" << kVersion << "\"\n";
    m << "wall_time_s = " << format_number(wall) << "\n";
    m << sub->config_to_str(true, false);
    if (!m) throw std::runtime_error("cannot write manifest in " + c.out);
}

// ---- shared network options ----------------------------------------------

struct NetOpts {
    int D = 100;
    int L = 100;
    int steps = 0;
    double T = 1.0;
    std::string phi = "tanh";
    std::string psi = "identity";
    double sigw2 = 1.0;
    double sigb2 = 1.0;
};

void add_net(CLI::App* sub, NetOpts& o, bool with_steps) {
    sub->add_option("--width", o.D, "width D")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--depth", o.L, "depth L")->capture_default_str()->check(CLI::PositiveNumber);
    if (with_steps)
        sub->add_option("--steps", o.steps, "SDE steps (0: max(L, 200))")->capture_default_str()->check(
            CLI::NonNegativeNumber);
    sub->add_option("--T", o.T, "terminal time")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--phi", o.phi, "residual activation")->capture_default_str();
    sub->add_option("--sigw2", o.sigw2, "weight variance sigma_w^2")->capture_default_str()->check(
        CLI::NonNegativeNumber);
    sub->add_option("--sigb2", o.sigb2, "bias variance sigma_b^2")->capture_default_str()->check(
        CLI::NonNegativeNumber);
}

ModelConfig model_config(const NetOpts& o, const std::string& mode) {
    ModelConfig m;
    m.mode = sample_mode_by_name(mode);
    m.D = o.D;
    m.L = o.L;
    m.steps = o.steps;
    m.T = o.T;
    m.phi = Activation::by_name(o.phi);
    m.sigw2 = o.sigw2;
    m.sigb2 = o.sigb2;
    return m;
}

OdeParams ode_from(double phi1, double phi2, double sigw2, double sigb2) { return {phi1, phi2, sigw2, sigb2}; }

void write_samples(const std::string& path, const std::vector<MatrixXd>& draws) {
    CsvWriter w(path, {"draw_id", "input_id", "dim", "value"});
    for (std::size_t d = 0; d < draws.size(); ++d)
        for (Eigen::Index i = 0; i < draws[d].cols(); ++i)
            for (Eigen::Index k = 0; k < draws[d].rows(); ++k)
                w.row({double(d), double(i), double(k), draws[d](k, i)});
}

// ---- simulate-resnet / simulate-sde --------------------------------------

struct SimOpts {
    NetOpts net;
    std::vector<double> inputs{0.0, 1.0};
    int draws = 10;
    bool explicit_weights = false;
    bool cnn = false;
    int U = 4, V = 4, K = 3;
};

void add_sim(CLI::App* sub, SimOpts& o, bool sde) {
    add_net(sub, o.net, sde);
    sub->add_option("--psi", o.net.psi, "activation inside the residual block")->capture_default_str();
    sub->add_option("--inputs", o.inputs, "scalar inputs copied across coordinates")->delimiter(',')
        ->capture_default_str();
    sub->add_option("--draws", o.draws, "independent networks / paths")->capture_default_str()->check(
        CLI::PositiveNumber);
    if (!sde) sub->add_flag("--explicit-weights", o.explicit_weights, "materialise every weight increment");
    sub->add_flag("--cnn", o.cnn, "convolutional variant");
    sub->add_option("--height", o.U, "CNN spatial height")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--image-width", o.V, "CNN spatial width")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--kernel-size", o.K, "CNN filter size (odd)")->capture_default_str();
}

MatrixXd sim_inputs(const SimOpts& o, const CnnGeometry& g) {
    VectorXd z = Eigen::Map<const VectorXd>(o.inputs.data(), static_cast<Eigen::Index>(o.inputs.size()));
    if (!o.cnn) return copy_inputs(z, o.net.D);
    MatrixXd X(o.net.D, z.size() * g.P());
    for (Eigen::Index n = 0; n < z.size(); ++n) X.middleCols(n * g.P(), g.P()).setConstant(z(n));
    return X;
}

void run_simulate(const SimOpts& o, const Common& c, bool sde) {
    if (o.inputs.empty()) throw std::invalid_argument("--inputs must not be empty");
    const CnnGeometry g{o.U, o.V};
    const MatrixXd X0 = sim_inputs(o, g);
    const double sw = std::sqrt(o.net.sigw2), sb = std::sqrt(o.net.sigb2);
    const ParamScheme scheme = o.cnn ? ParamScheme::cnn_full_iid(o.net.D, o.K, sw, sb)
                                     : ParamScheme::full_iid(o.net.D, sw, sb);
    std::vector<MatrixXd> out(static_cast<std::size_t>(o.draws));
    std::vector<char> exploded(static_cast<std::size_t>(o.draws), 0);
    parallel_for(o.draws, c.threads, [&](int d) {
        Rng rng = Rng::substream(c.seed, static_cast<std::uint64_t>(d));
        LayerPath p;
        if (sde) {
            SdeSimConfig s;
            s.steps = o.net.steps > 0 ? o.net.steps : default_steps(o.net.L);
            s.D = o.net.D;
            s.T = o.net.T;
            s.phi = Activation::by_name(o.net.phi);
            s.psi = Activation::by_name(o.net.psi);
            s.scheme = scheme;
            p = o.cnn ? simulate_cnn_iid_joint(s, g, X0, rng) : simulate_fc_iid_joint(s, X0, rng);
        } else {
            NetConfig n;
            n.D = o.net.D;
            n.L = o.net.L;
            n.T = o.net.T;
            n.phi = Activation::by_name(o.net.phi);
            n.psi = Activation::by_name(o.net.psi);
            n.scheme = scheme;
            ForwardOptions fo;
            fo.explicit_weights = o.explicit_weights;
            p = o.cnn ? cnn_forward(n, g, X0, rng, fo) : fc_forward(n, X0, rng, fo);
        }
        exploded[static_cast<std::size_t>(d)] = p.exploded;
        MatrixXd x = p.terminal();
        if (o.cnn) {  // one column per input, dims ordered (position, channel)
            const Eigen::Index P = g.P();
            MatrixXd y(x.rows() * P, x.cols() / P);
            for (Eigen::Index n = 0; n < y.cols(); ++n)
                y.col(n) = Eigen::Map<const VectorXd>(x.middleCols(n * P, P).eval().data(), x.rows() * P);
            x = y;
        }
        out[static_cast<std::size_t>(d)] = x;
    });
    write_samples(out_path(c, "samples.csv"), out);
    long nex = 0;
    for (char e : exploded) nex += e;
    std::cout << o.draws << " draws written to " << out_path(c, "samples.csv") << "; exploded: " << nex << "\n";
}

// ---- solve-ode / explosion-time ---------------------------------------------

struct OdeOpts {
    double phi1 = 1.0, phi2 = 0.0, sigw2 = 1.0, sigb2 = 1.0;
    double m0 = 0.0, q0 = 1.0, m0b = 0.0, q0b = 1.0, lambda0 = 1.0;
    double T = 1.0, step = 1e-3;
};

void add_ode_params(CLI::App* sub, OdeOpts& o) {
    sub->add_option("--phi1", o.phi1, "phi'(0)")->capture_default_str();
    sub->add_option("--phi2", o.phi2, "phi''(0)")->capture_default_str();
    sub->add_option("--sigw2", o.sigw2, "sigma_w^2")->capture_default_str()->check(CLI::NonNegativeNumber);
    sub->add_option("--sigb2", o.sigb2, "sigma_b^2")->capture_default_str()->check(CLI::NonNegativeNumber);
    sub->add_option("--m0", o.m0, "initial mean")->capture_default_str();
    sub->add_option("--q0", o.q0, "initial second moment")->capture_default_str()->check(CLI::NonNegativeNumber);
    sub->add_option("--step", o.step, "RK4 step")->capture_default_str()->check(CLI::PositiveNumber);
}

void run_solve_ode(const OdeOpts& o, const Common& c) {
    const OdeParams p = ode_from(o.phi1, o.phi2, o.sigw2, o.sigb2);
    const MomentState s0 = MomentState::pair(o.m0, o.q0, o.m0b, o.q0b, o.lambda0);
    const MomentTrajectory tr = integrate_moments(s0, p, o.T, o.step);
    CsvWriter w(out_path(c, "trajectory.csv"), {"t", "m", "q", "lambda"});
    for (std::size_t i = 0; i < tr.t.size(); ++i)
        w.row({tr.t[i], tr.states[i].m(0), tr.states[i].q(0), tr.states[i].lambda(0, 1)});
    const MomentState& last = tr.states.back();
    std::cout << "t = " << format_number(tr.t.back()) << ": m = " << format_number(last.m(0))
              << ", q = " << format_number(last.q(0)) << ", lambda = " << format_number(last.lambda(0, 1)) << "\n";
    if (tr.exploded) std::cout << "moments exploded after t = " << format_number(tr.last_valid_t) << "\n";
}

void run_explosion_time(const OdeOpts& o, double threshold, double t_max, const Common& c) {
    const OdeParams p = ode_from(o.phi1, o.phi2, o.sigw2, o.sigb2);
    const ExplosiveConstants k = fit_explosive_constants(o.m0, o.q0, p);
    const auto tf = explosion_time(k);
    const auto tr = rk4_blowup_time(o.m0, o.q0, p, o.step, threshold, t_max);
    const double nan = std::nan("");
    CsvWriter w(out_path(c, "explosion.csv"), {"C", "T_formula", "T_rk4"});
    w.row({k.C, tf ? *tf : nan, tr ? *tr : nan});
    std::cout << "C = " << format_number(k.C) << "\nT* (formula) = " << (tf ? format_number(*tf) : "none")
              << "\nT* (RK4, q > " << format_number(threshold) << ") = " << (tr ? format_number(*tr) : "none")
              << "\n";
}

// ---- kernels ----------------------------------------------------------------

struct KernelOpts {
    std::string action;
    std::string family = "ntk";
    double phi1 = 1.0, sigw2 = 1.0, sigb2 = 1.0, T = 1.0, sigz2 = 1.0, sigy2 = 1.0;
    std::vector<double> inner{0.0, 1.0};
};

KernelSpec kernel_spec(const KernelOpts& o) {
    KernelSpec k;
    k.family = kernel_family_by_name(o.family);
    k.phi1 = o.phi1;
    k.sigw2 = o.sigw2;
    k.sigb2 = o.sigb2;
    k.T = o.T;
    k.sigz2 = o.sigz2;
    k.sigy2 = o.sigy2;
    return k;
}

void run_kernel(const KernelOpts& o, const Common& c) {
    const KernelSpec k = kernel_spec(o);
    CsvWriter w(out_path(c, "kernel.csv"), {"inner", "value"});
    for (double v : o.inner) {
        w.row({v, k(v)});
        std::cout << "k(" << format_number(v) << ") = " << format_number(k(v)) << "\n";
    }
}

struct NtkOpts {
    NetOpts net;
    double z1 = 1.0, z2 = 2.0;
    int draws = 20;
};

void run_ntk_empirical(const NtkOpts& o, const Common& c) {
    NetConfig cfg;
    cfg.D = o.net.D;
    cfg.L = o.net.L;
    cfg.T = o.net.T;
    cfg.phi = Activation::by_name(o.net.phi);
    cfg.scheme = ParamScheme::full_iid(o.net.D, std::sqrt(o.net.sigw2), std::sqrt(o.net.sigb2));
    const VectorXd x1 = VectorXd::Constant(o.net.D, o.z1), x2 = VectorXd::Constant(o.net.D, o.z2);
    std::vector<EmpiricalNtk> res(static_cast<std::size_t>(o.draws));
    parallel_for(o.draws, c.threads, [&](int d) {
        res[static_cast<std::size_t>(d)] = empirical_ntk(cfg, NetworkDraw{c.seed, static_cast<std::uint64_t>(d)}, x1, x2);
    });
    CsvWriter w(out_path(c, "ntk.csv"), {"draw_id", "K_W", "K_b"});
    double mw = 0, mb = 0;
    for (std::size_t d = 0; d < res.size(); ++d) {
        w.row({double(d), res[d].K_W, res[d].K_b});
        mw += res[d].K_W / o.draws;
        mb += res[d].K_b / o.draws;
    }
    KernelSpec k;
    k.phi1 = cfg.phi.phi1_at_0();
    k.sigw2 = o.net.sigw2;
    k.sigb2 = o.net.sigb2;
    k.T = o.net.T;
    const NtkValue lim = ntk_kernel(o.z1 * o.z2, k);
    std::cout << "mean K_W = " << format_number(mw) << " (limit " << format_number(lim.K_W) << ")\n"
              << "mean K_b = " << format_number(mb) << " (limit " << format_number(lim.K_b) << ")\n";
    if (!res.empty() && res[0].flagged_phi2) std::cout << "warning: phi''(0) != 0, limit formulas do not apply\n";
}

// ---- statistics -------------------------------------------------------------

struct CompareOpts {
    NetOpts net;
    std::vector<double> inputs{0.0, 1.0};
    int draws = 1000;
    double sde_sigw2 = -1, sde_sigb2 = -1;
    int bins = 40;
};

void run_compare(const CompareOpts& o, const Common& c) {
    CompareConfig cc;
    cc.model = model_config(o.net, "resnet");
    cc.draws = o.draws;
    cc.seed = c.seed;
    cc.threads = c.threads;
    cc.sde_sigw2 = o.sde_sigw2;
    cc.sde_sigb2 = o.sde_sigb2;
    const VectorXd z = Eigen::Map<const VectorXd>(o.inputs.data(), static_cast<Eigen::Index>(o.inputs.size()));
    const AgreementReport rep = compare_modes(cc, z);

    CsvWriter dev(out_path(c, "deviations.csv"), {"mode_a", "mode_b", "statistic", "i", "j", "diff", "se", "z", "ok"});
    for (const auto& d : rep.deviations)
        dev.text_row({d.a, d.b, d.statistic, std::to_string(d.i), std::to_string(d.j), format_number(d.diff),
                      format_number(d.se), format_number(d.z), d.ok ? "1" : "0"});
    CsvWriter ks(out_path(c, "ks.csv"), {"mode_a", "mode_b", "input_id", "statistic", "critical", "ok"});
    for (const auto& k : rep.ks)
        ks.text_row({k.a, k.b, std::to_string(k.input), format_number(k.statistic), format_number(k.critical),
                     k.ok ? "1" : "0"});
    CsvWriter h(out_path(c, "histogram.csv"), {"mode", "input_id", "bin_lo", "bin_hi", "count"});
    for (const auto& m : rep.modes) {
        std::cout << sample_mode_name(m.mode) << ": " << m.samples.rows() << " finite draws, " << m.exploded
                  << " exploded\n";
        if (m.samples.rows() < 2) continue;
        for (Eigen::Index i = 0; i < m.samples.cols(); ++i) {
            std::cout << "  input " << i << ": mean " << format_number(m.stats.mean(i)) << " var "
                      << format_number(m.stats.var(i)) << "\n";
            const Histogram hist = histogram(m.samples.col(i), o.bins);
            for (int b = 0; b < o.bins; ++b)
                h.text_row({sample_mode_name(m.mode), std::to_string(i), format_number(hist.edges(b)),
                            format_number(hist.edges(b + 1)), std::to_string(hist.counts[static_cast<std::size_t>(b)])});
        }
    }
    long bad = 0;
    for (const auto& d : rep.deviations) bad += !d.ok;
    for (const auto& k : rep.ks) bad += !k.ok;
    std::cout << "agreement: " << (rep.all_ok() ? "PASS" : "FAIL") << " (" << bad << " flagged of "
              << rep.deviations.size() + rep.ks.size() << ")\n";
}

struct GridOpts {
    NetOpts net;
    std::string mode = "sde";
    double a = -2.0, b = 2.0;
    int n = 20;
    int draws = 200;
    bool adapt = false;
    double sigz2 = 1.0;
    bool no_pool = false;
};

void add_grid(CLI::App* sub, GridOpts& o) {
    add_net(sub, o.net, true);
    sub->add_option("--mode", o.mode, "resnet, sde, analytic or feedforward")->capture_default_str();
    sub->add_option("--from", o.a, "grid start")->capture_default_str();
    sub->add_option("--to", o.b, "grid end")->capture_default_str();
    sub->add_option("--points", o.n, "grid points")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--draws", o.draws, "independent networks")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_flag("--adapt", o.adapt, "x_0 = a z with a ~ N(0, sigz2 I) instead of copied inputs");
    sub->add_option("--sigz2", o.sigz2, "adapter variance")->capture_default_str();
    sub->add_flag("--no-pool", o.no_pool, "use only coordinate 0 of each draw");
}

GridConfig grid_config(const GridOpts& o, const Common& c) {
    GridConfig g;
    g.model = model_config(o.net, o.mode);
    g.model.adapt = o.adapt;
    g.model.sigz2 = o.sigz2;
    g.draws = o.draws;
    g.seed = c.seed;
    g.threads = c.threads;
    g.pool_coordinates = !o.no_pool;
    return g;
}

void run_grid(const GridOpts& o, const Common& c) {
    const CorrelationGrid g = correlation_grid(grid_config(o, c), linspace(o.a, o.b, o.n));
    CsvWriter w(out_path(c, "grid.csv"), {"z_i", "z_j", "rho_empirical", "rho_analytic"});
    double worst = 0;
    for (Eigen::Index i = 0; i < g.z.size(); ++i)
        for (Eigen::Index j = 0; j < g.z.size(); ++j) {
            w.row({g.z(i), g.z(j), g.empirical(i, j), g.analytic(i, j)});
            if (!std::isnan(g.analytic(i, j))) worst = std::max(worst, std::abs(g.empirical(i, j) - g.analytic(i, j)));
        }
    std::cout << g.samples << " samples, " << g.exploded << " exploded draws; max |empirical - analytic| = "
              << format_number(worst) << "\n";
}

void run_function_samples(const GridOpts& o, const Common& c) {
    const FunctionSamples f = function_samples(grid_config(o, c), linspace(o.a, o.b, o.n));
    CsvWriter s(out_path(c, "samples.csv"), {"draw_id", "input_id", "dim", "value"});
    for (Eigen::Index d = 0; d < f.samples.rows(); ++d)
        for (Eigen::Index i = 0; i < f.samples.cols(); ++i) s.row({double(d), double(i), 0.0, f.samples(d, i)});
    CsvWriter q(out_path(c, "quantiles.csv"), {"z", "q05", "q50", "q95"});
    for (Eigen::Index i = 0; i < f.z.size(); ++i) q.row({f.z(i), f.q05(i), f.q50(i), f.q95(i)});
    if (f.z.size() >= 2)
        std::cout << "R^2 of a linear fit to the median: " << format_number(linear_fit_r2(f.z, f.q50)) << "\n";
}

// ---- MNIST ------------------------------------------------------------------

struct DataOpts {
    std::string dir;
    int n_train = 2000;
    int n_test = 10000;
    std::string subset = "random";
};

void add_data(CLI::App* sub, DataOpts& o) {
    o.dir = default_data_dir();
    sub->add_option("--data-dir", o.dir, "MNIST IDX directory (env RESDIFF_DATA_DIR)")->capture_default_str();
    sub->add_option("--n-train", o.n_train, "training points")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--n-test", o.n_test, "test points")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--subset", o.subset, "random or first")->capture_default_str()->check(
        CLI::IsMember({"random", "first"}));
}

std::pair<Dataset, Dataset> load_data(const DataOpts& o, std::uint64_t seed) {
    auto pick = [&](const std::string& split, int n, std::uint64_t salt) {
        const IdxDataset raw = load_mnist(o.dir, split, o.subset == "first" ? n : -1);
        Dataset all = Dataset::from_labels(raw.images, raw.labels, 10,
                                           split == "train" ? Dataset::Split::train : Dataset::Split::test);
        if (n > all.size()) throw std::invalid_argument("requested more " + split + " points than available");
        if (o.subset == "first" || n == all.size()) return all;
        return all.subset(random_subset(static_cast<int>(all.size()), n, substream_seed(seed, salt)));
    };
    return {pick("train", o.n_train, 1), pick("t10k", o.n_test, 2)};
}

struct RegressOpts {
    DataOpts data;
    KernelOpts kern;
    double jitter = -1;
};

void run_regress(const RegressOpts& o, const Common& c) {
    auto [train, test] = load_data(o.data, c.seed);
    KernelSpec k = kernel_spec(o.kern);
    if (k.sigz2 < 0) k.sigz2 = 1.0 / static_cast<double>(train.inputs.cols());
    const KrrResult r = kernel_regression(k, train, test, o.jitter);
    CsvWriter w(out_path(c, "regress.csv"), {"n_train", "n_test", "jitter", "accuracy", "relative_residual"});
    w.row({double(train.size()), double(test.size()), r.jitter, r.accuracy, r.relative_residual});
    CsvWriter p(out_path(c, "predictions.csv"), {"test_id", "label", "predicted"});
    for (std::size_t i = 0; i < r.predicted.size(); ++i) p.row({double(i), double(test.labels[i]), double(r.predicted[i])});
    std::cout << "test accuracy " << format_number(r.accuracy) << " (jitter " << format_number(r.jitter)
              << ", relative residual " << format_number(r.relative_residual) << ")\n";
}

struct TrainOpts {
    DataOpts data;
    NetOpts net;
    double sigz2 = -1, sigy2 = 1;
    std::string opt = "gd";
    double lr = 0;
    int epochs = 120;
    int batch = 200;
    bool cnn = false;
    int K = 3;
};

void run_train(const TrainOpts& o, const Common& c) {
    auto [train_set, test_set] = load_data(o.data, c.seed);
    CompletedNetSpec s;
    s.D = o.net.D;
    s.L = o.net.L;
    s.T = o.net.T;
    s.phi = Activation::by_name(o.net.phi);
    s.psi = Activation::by_name(o.net.psi);
    s.sigw2 = o.net.sigw2;
    s.sigb2 = o.net.sigb2;
    s.sigz2 = o.sigz2;
    s.sigy2 = o.sigy2;
    s.cnn = o.cnn;
    s.K = o.K;
    if (o.cnn) {
        s.Z = 1;
        s.geom = CnnGeometry{28, 28};
    } else {
        s.Z = static_cast<int>(train_set.inputs.cols());
    }
    Rng init = Rng::substream(c.seed, 0x1417);
    CompletedModel model = CompletedModel::init(s, init);
    TrainConfig tc;
    tc.opt = opt_by_name(o.opt);
    tc.lr = o.lr;
    tc.epochs = o.epochs;
    tc.batch = o.batch;
    tc.seed = c.seed;
    CsvWriter w(out_path(c, "metrics.csv"), {"epoch", "train_loss", "test_accuracy"});
    train(model, train_set, test_set, tc, [&](const EpochMetrics& m) {
        w.row({double(m.epoch), m.train_loss, m.test_accuracy});
        std::cout << "epoch " << m.epoch << " loss " << format_number(m.train_loss) << " acc "
                  << format_number(m.test_accuracy) << "\n";
    });
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Diffusion limits of residual networks: simulation, kernels and regression"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    Common common;
    std::vector<std::pair<CLI::App*, std::function<void()>>> actions;
    auto sub = [&](const char* name, const char* desc, std::function<void()> fn) {
        CLI::App* s = app.add_subcommand(name, desc);
        add_common(s, common);
        actions.emplace_back(s, std::move(fn));
        return s;
    };

    SimOpts rs, ss;
    add_sim(sub("simulate-resnet", "sample terminal states of the discrete network", [&] { run_simulate(rs, common, false); }),
            rs, false);
    add_sim(sub("simulate-sde", "sample terminal states of the diffusion limit", [&] { run_simulate(ss, common, true); }),
            ss, true);

    OdeOpts ode;
    {
        CLI::App* s = sub("solve-ode", "integrate the moment ODEs with RK4", [&] { run_solve_ode(ode, common); });
        add_ode_params(s, ode);
        s->add_option("--m0b", ode.m0b, "second input: initial mean")->capture_default_str();
        s->add_option("--q0b", ode.q0b, "second input: initial second moment")->capture_default_str();
        s->add_option("--lambda0", ode.lambda0, "initial inner product")->capture_default_str();
        s->add_option("--T", ode.T, "terminal time")->capture_default_str()->check(CLI::PositiveNumber);
    }
    OdeOpts ex;
    ex.phi1 = 0.5;
    ex.phi2 = 0.5;
    ex.m0 = 1.0;
    double ex_threshold = 1e6, ex_tmax = 100.0;
    {
        CLI::App* s = sub("explosion-time", "explosion time of the moment ODEs (phi''(0) != 0)",
                          [&] { run_explosion_time(ex, ex_threshold, ex_tmax, common); });
        add_ode_params(s, ex);
        s->add_option("--threshold", ex_threshold, "RK4 blow-up threshold on q")->capture_default_str();
        s->add_option("--t-max", ex_tmax, "RK4 search horizon")->capture_default_str();
    }

    KernelOpts kern;
    {
        CLI::App* s = sub("kernel", "evaluate a limiting kernel on inner products", [&] { run_kernel(kern, common); });
        s->add_option("action", kern.action, "optional 'eval'")->check(CLI::IsMember({"eval"}));
        s->add_option("--family", kern.family, "weak, ntk, completed-weak, completed-ntk")->capture_default_str();
        s->add_option("--phi1", kern.phi1, "phi'(0)")->capture_default_str();
        s->add_option("--sigw2", kern.sigw2)->capture_default_str();
        s->add_option("--sigb2", kern.sigb2)->capture_default_str();
        s->add_option("--T", kern.T)->capture_default_str();
        s->add_option("--sigz2", kern.sigz2, "input adapter variance")->capture_default_str();
        s->add_option("--sigy2", kern.sigy2, "readout variance")->capture_default_str();
        s->add_option("--inner", kern.inner, "lambda_0 or <z, z'> values")->delimiter(',')->capture_default_str();
    }

    NtkOpts ntk;
    ntk.net.D = 64;
    ntk.net.L = 64;
    {
        CLI::App* s = sub("ntk-empirical", "empirical NTK of finite networks on copied inputs",
                          [&] { run_ntk_empirical(ntk, common); });
        add_net(s, ntk.net, false);
        s->add_option("--z1", ntk.z1)->capture_default_str();
        s->add_option("--z2", ntk.z2)->capture_default_str();
        s->add_option("--draws", ntk.draws)->capture_default_str()->check(CLI::PositiveNumber);
    }

    CompareOpts cmp;
    {
        CLI::App* s = sub("compare-modes", "discrete network vs SDE vs transition density",
                          [&] { run_compare(cmp, common); });
        add_net(s, cmp.net, true);
        s->add_option("--inputs", cmp.inputs, "scalar inputs copied across coordinates")->delimiter(',')
            ->capture_default_str();
        s->add_option("--draws", cmp.draws)->capture_default_str()->check(CLI::PositiveNumber);
        s->add_option("--sde-sigw2", cmp.sde_sigw2, "override sigma_w^2 in the SDE mode (negative control)")
            ->capture_default_str();
        s->add_option("--sde-sigb2", cmp.sde_sigb2, "override sigma_b^2 in the SDE mode")->capture_default_str();
        s->add_option("--bins", cmp.bins, "histogram bins")->capture_default_str()->check(CLI::PositiveNumber);
    }

    GridOpts grid, fs;
    add_grid(sub("correlation-grid", "output correlation over a grid of inputs", [&] { run_grid(grid, common); }),
             grid);
    fs.n = 41;
    add_grid(sub("function-samples", "function draws and pointwise quantiles", [&] { run_function_samples(fs, common); }),
             fs);

    RegressOpts reg;
    reg.kern.family = "completed-ntk";
    reg.kern.sigb2 = 0.01;
    reg.kern.sigz2 = -1;
    {
        CLI::App* s = sub("regress", "kernel regression on MNIST", [&] { run_regress(reg, common); });
        add_data(s, reg.data);
        s->add_option("--family", reg.kern.family)->capture_default_str();
        s->add_option("--phi1", reg.kern.phi1)->capture_default_str();
        s->add_option("--sigw2", reg.kern.sigw2)->capture_default_str();
        s->add_option("--sigb2", reg.kern.sigb2)->capture_default_str();
        s->add_option("--T", reg.kern.T)->capture_default_str();
        s->add_option("--sigz2", reg.kern.sigz2, "negative: 1/Z")->capture_default_str();
        s->add_option("--sigy2", reg.kern.sigy2)->capture_default_str();
        s->add_option("--jitter", reg.jitter, "negative: 1/n_train")->capture_default_str();
    }

    TrainOpts tr;
    tr.net.D = 32;
    tr.net.L = 32;
    tr.net.sigb2 = 0.01;
    {
        CLI::App* s = sub("train", "train the completed network on MNIST", [&] { run_train(tr, common); });
        add_data(s, tr.data);
        add_net(s, tr.net, false);
        s->add_option("--psi", tr.net.psi)->capture_default_str();
        s->add_option("--sigz2", tr.sigz2, "negative: 1/Z")->capture_default_str();
        s->add_option("--sigy2", tr.sigy2)->capture_default_str();
        s->add_option("--opt", tr.opt)->capture_default_str()->check(CLI::IsMember({"gd", "sgd", "adam"}));
        s->add_option("--lr", tr.lr, "learning rate")->required();
        s->add_option("--epochs", tr.epochs)->capture_default_str()->check(CLI::NonNegativeNumber);
        s->add_option("--batch", tr.batch, "minibatch size (sgd, adam)")->capture_default_str();
        s->add_flag("--cnn", tr.cnn, "convolutional network on 28x28 images");
        s->add_option("--kernel-size", tr.K)->capture_default_str();
    }

    std::vector<std::string> args(argv, argv + argc);
    try {
        args = expand_config(args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    for (auto& [s, fn] : actions) {
        if (!s->parsed()) continue;
        try {
            const auto t0 = std::chrono::steady_clock::now();
            fn();
            const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            write_manifest(common, s, wall);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 1;
        }
        return 0;
    }
    return 2;
}

}  // namespace resdiff::cli
