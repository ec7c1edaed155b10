#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "resdiff/activations.hpp"
#include "resdiff/kernels.hpp"
#include "resdiff/resnet_forward.hpp"
#include "resdiff/rng.hpp"

namespace resdiff {

struct Dataset {
    enum class Split { train, test };
    MatrixXd inputs;   // N x Z
    MatrixXd targets;  // N x Y one-hot
    std::vector<int> labels;
    Split split = Split::train;

    static Dataset from_labels(MatrixXd inputs, const std::vector<int>& labels, int classes, Split split);
    Eigen::Index size() const { return inputs.rows(); }
    int classes() const { return static_cast<int>(targets.cols()); }
    Dataset subset(const std::vector<int>& idx) const;
    void validate() const;
};

// n distinct indices out of [0, N), sorted, reproducible from the seed.
std::vector<int> random_subset(int N, int n, std::uint64_t seed);

class CholeskyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GramMatrix {
    MatrixXd G;  // without jitter
    double jitter = 0.0;
};

// jitter < 0 selects the default 1/N.
GramMatrix build_gram(const KernelSpec& k, const MatrixXd& inputs, double jitter = -1.0);
// test x train
MatrixXd cross_gram(const KernelSpec& k, const MatrixXd& train, const MatrixXd& test);

// K_cross (G + jitter I)^{-1} Y by Cholesky.
MatrixXd krr_predict(const GramMatrix& gram, const MatrixXd& Y, const MatrixXd& cross);

// Row argmax; ties go to the lowest class index.
std::vector<int> classify(const MatrixXd& scores);
double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels);

struct KrrResult {
    double accuracy = 0;
    double jitter = 0;
    double relative_residual = 0;  // ||(G + jitter I) alpha - Y|| / ||Y||
    std::vector<int> predicted;
};

// Memory-lean pipeline for large N: the Gram is factorised in place and test
// predictions are formed in chunks of cross-Gram rows.
KrrResult kernel_regression(const KernelSpec& k, const Dataset& train, const Dataset& test,
                            double jitter = -1.0, Eigen::Index chunk = 1000);

// ---- full training of the completed network -------------------------------

struct CompletedNetSpec {
    int Z = 784;   // input features (FC) / input channels (CNN)
    int D = 32;
    int L = 32;
    int Y = 10;
    double T = 1.0;
    Activation phi{ActKind::tanh};
    Activation psi{ActKind::identity};
    double sigw2 = 1.0;
    double sigb2 = 0.01;
    double sigz2 = -1.0;  // < 0: 1/Z
    double sigy2 = 1.0;
    bool cnn = false;
    CnnGeometry geom;     // CNN only
    int K = 3;            // CNN only
};

// Completed ResNet y = G x_T, x_0 = A z, trained in the standardised
// parametrisation: every trainable entry is N(0, 1) at initialisation.
class CompletedModel {
public:
    static CompletedModel init(const CompletedNetSpec& spec, Rng& rng);

    // inputs: samples as columns (FC: Z x N; CNN: N images of Z*U*V values,
    // channel fastest). Returns Y x N.
    MatrixXd predict(const MatrixXd& inputs) const;
    // mean over samples and outputs of squared error; fills grads if non-null
    double loss(const MatrixXd& inputs, const MatrixXd& targets, std::vector<MatrixXd>* grads) const;

    std::vector<MatrixXd>& params() { return params_; }
    const std::vector<MatrixXd>& params() const { return params_; }
    const CompletedNetSpec& spec() const { return spec_; }

private:
    CompletedNetSpec spec_;
    std::vector<MatrixXd> params_;  // eps_A, eps_W[0..L), eps_b[0..L), eps_G
    double cz_ = 0, cw_ = 0, cb_ = 0, cy_ = 0;

    const MatrixXd& eA() const { return params_[0]; }
    const MatrixXd& eW(int l) const { return params_[1 + l]; }
    const MatrixXd& eb(int l) const { return params_[1 + spec_.L + l]; }
    const MatrixXd& eG() const { return params_.back(); }
    MatrixXd embed(const MatrixXd& inputs) const;
    double run(const MatrixXd& inputs, const MatrixXd* targets, std::vector<MatrixXd>* grads,
               MatrixXd* out) const;
};

enum class OptKind { gd, sgd, adam };
OptKind opt_by_name(const std::string& name);

struct TrainConfig {
    OptKind opt = OptKind::gd;
    double lr = 0.0;  // required; no default learning rate
    int epochs = 120;
    int batch = 200;  // ignored by gd
    std::uint64_t seed = 1;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    Eigen::Index eval_chunk = 2000;
};

struct EpochMetrics {
    int epoch;
    double train_loss;
    double test_accuracy;
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(int epoch, const std::string& what) : std::runtime_error(what), epoch(epoch) {}
    int epoch;
};

// Model inputs as columns, see CompletedModel::predict.
MatrixXd model_inputs(const Dataset& d);

double test_accuracy(const CompletedModel& m, const Dataset& test, Eigen::Index chunk = 2000);

// Epoch 0 is the initial state; every later entry follows one pass over the data.
std::vector<EpochMetrics> train(CompletedModel& model, const Dataset& train_set, const Dataset& test_set,
                                const TrainConfig& cfg,
                                const std::function<void(const EpochMetrics&)>& on_epoch = {});

// Plain parameter update with state; exposed for tests.
class Optimizer {
public:
    Optimizer(const TrainConfig& cfg, const std::vector<MatrixXd>& shapes);
    void step(std::vector<MatrixXd>& params, const std::vector<MatrixXd>& grads);

private:
    TrainConfig cfg_;
    std::vector<MatrixXd> m_, v_;
    long t_ = 0;
};

}  // namespace resdiff
