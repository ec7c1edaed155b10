#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "resdiff/activations.hpp"
#include "resdiff/paramdist.hpp"
#include "resdiff/rng.hpp"

namespace resdiff {

struct Histogram {
    VectorXd edges;  // bins + 1
    std::vector<long> counts;
    long total() const;
};

// Values outside [lo, hi] land in the end bins, so counts always sum to N.
Histogram histogram(const VectorXd& x, int bins, double lo, double hi);
Histogram histogram(const VectorXd& x, int bins);  // range [min, max]

struct SummaryStats {
    long n = 0;
    VectorXd mean, var;        // unbiased variance
    VectorXd se_mean, se_var;  // sd/sqrt(N); sqrt((m4 - var^2)/N)
    MatrixXd corr;             // NaN where a marginal is constant
    std::vector<Histogram> hist;
};

// samples: draws x dims. bins > 0 adds one histogram per marginal.
SummaryStats summarize(const MatrixXd& samples, int bins = 0);

// Approximate standard error of a sample correlation.
inline double corr_se(double r, long n) { return (1.0 - r * r) / std::sqrt(static_cast<double>(n - 1)); }

double ks_statistic(VectorXd a, VectorXd b);
// Two-sample critical value c(alpha) sqrt((n + m)/(n m)); alpha in {0.1, 0.05, 0.01, 0.001}.
double ks_critical(long n, long m, double alpha = 0.01);

// Linear interpolation of order statistics (h = (N - 1) p).
double quantile(VectorXd x, double p);

// Coefficient of determination of the least-squares line through (x, y).
double linear_fit_r2(const VectorXd& x, const VectorXd& y);

// ---- sampling models over one-dimensional inputs --------------------------

enum class SampleMode { resnet, sde, analytic, feedforward };
SampleMode sample_mode_by_name(const std::string& name);
const char* sample_mode_name(SampleMode m);

struct ModelConfig {
    SampleMode mode = SampleMode::resnet;
    int D = 100;
    int L = 100;
    int steps = 0;  // SDE steps; 0 mirrors default_steps(L)
    double T = 1.0;
    Activation phi{ActKind::tanh};
    double sigw2 = 1.0;
    double sigb2 = 1.0;
    bool adapt = false;  // x_0 = a z with a ~ N(0, sigz2 I) per draw instead of z 1
    double sigz2 = 1.0;

    void validate() const;
};

// Draws terminal states for a fixed input vector z; draw d only depends on
// (seed, d). The analytic mode samples the limiting Gaussian law coordinatewise.
class ModelSampler {
public:
    ModelSampler(const ModelConfig& cfg, const VectorXd& z);
    // D x n terminal state; `exploded` reports a diverged path.
    MatrixXd draw(std::uint64_t seed, std::uint64_t d, bool* exploded = nullptr) const;
    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    VectorXd z_;
    VectorXd law_mean_;
    MatrixXd law_factor_;
};

// Limiting joint law of one output coordinate over copied inputs.
struct GaussianLaw {
    VectorXd mean;
    MatrixXd cov;
};
GaussianLaw analytic_law(const ModelConfig& cfg, const VectorXd& z);

// ---- three-mode agreement -------------------------------------------------

struct CompareConfig {
    ModelConfig model;  // mode field ignored
    int draws = 1000;
    std::uint64_t seed = 1;
    int threads = 1;
    int coordinate = 0;
    double sde_sigw2 = -1.0;  // >= 0: deliberate override for the SDE mode only
    double sde_sigb2 = -1.0;
    double threshold_se = 4.0;
    double ks_alpha = 0.01;
};

struct ModeResult {
    SampleMode mode;
    MatrixXd samples;  // finite draws x inputs
    long exploded = 0;
    SummaryStats stats;
};

struct Deviation {
    std::string a, b;       // mode names ("theory" for the limiting law)
    std::string statistic;  // mean, var, corr
    int i = 0, j = 0;
    double diff = 0, se = 0, z = 0;
    bool ok = true;
};

struct KsResult {
    std::string a, b;
    int input = 0;
    double statistic = 0, critical = 0;
    bool ok = true;
};

struct AgreementReport {
    std::vector<ModeResult> modes;
    GaussianLaw theory;
    std::vector<Deviation> deviations;
    std::vector<KsResult> ks;
    bool all_ok() const;
};

AgreementReport compare_modes(const CompareConfig& cfg, const VectorXd& z);

// ---- function-space diagnostics -------------------------------------------

struct GridConfig {
    ModelConfig model;
    int draws = 200;
    std::uint64_t seed = 1;
    int threads = 1;
    bool pool_coordinates = true;  // every coordinate of a draw is one sample
};

struct CorrelationGrid {
    VectorXd z;
    MatrixXd empirical;  // exactly symmetric, unit diagonal
    MatrixXd analytic;   // NaN unless phi''(0) = 0 and the mode has a diffusion limit
    long samples = 0;
    long exploded = 0;
};

CorrelationGrid correlation_grid(const GridConfig& cfg, const VectorXd& z);

struct FunctionSamples {
    VectorXd z;
    MatrixXd samples;  // draws x inputs, output coordinate 0
    VectorXd q05, q50, q95;
    long exploded = 0;
};

FunctionSamples function_samples(const GridConfig& cfg, const VectorXd& z);

VectorXd linspace(double a, double b, int n);

}  // namespace resdiff
