#include "resdiff/activations.hpp"

#include <cmath>
#include <stdexcept>

namespace resdiff {

namespace {

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double tanh_d(double x, int order) {
    const double t = std::tanh(x);
    const double s = 1.0 - t * t;
    switch (order) {
        case 0: return t;
        case 1: return s;
        case 2: return -2.0 * t * s;
        default: return -2.0 * s * (1.0 - 3.0 * t * t);
    }
}

// phi = x*s with s = sigmoid(x), s' = s(1-s)
double swish_d(double x, int order) {
    const double s = sigmoid(x);
    const double sp = s * (1.0 - s);
    switch (order) {
        case 0: return x * s;
        case 1: return s + x * sp;
        case 2: return sp * (2.0 + x * (1.0 - 2.0 * s));
        default: return sp * (3.0 * (1.0 - 2.0 * s) + x * (1.0 - 6.0 * s + 6.0 * s * s));
    }
}

}  // namespace

Activation::Activation(ActKind kind) : kind_(kind) {
    switch (kind) {
        case ActKind::tanh: name_ = "tanh"; break;
        case ActKind::swish: name_ = "swish"; break;
        case ActKind::identity: name_ = "identity"; break;
        case ActKind::relu: name_ = "relu"; break;
    }
    if (smooth()) {
        phi1_ = eval(0.0, 1);
        phi2_ = eval(0.0, 2);
        phi3_ = eval(0.0, 3);
    } else {
        // one-sided values; relu has no second derivative at 0
        phi1_ = 0.0;
        phi2_ = phi3_ = 0.0;
    }
    zero_at_origin_ = std::abs(eval(0.0, 0)) <= 1e-14;
}

Activation Activation::by_name(const std::string& name) {
    if (name == "tanh") return Activation(ActKind::tanh);
    if (name == "swish") return Activation(ActKind::swish);
    if (name == "identity" || name == "linear") return Activation(ActKind::identity);
    if (name == "relu") return Activation(ActKind::relu);
    throw std::invalid_argument("unknown activation '" + name + "'");
}

double Activation::eval(double x, int order) const {
    if (order < 0 || order > 3)
        throw std::invalid_argument("activation derivative order must be in 0..3");
    switch (kind_) {
        case ActKind::tanh: return tanh_d(x, order);
        case ActKind::swish: return swish_d(x, order);
        case ActKind::identity: return order == 0 ? x : (order == 1 ? 1.0 : 0.0);
        case ActKind::relu:
            if (order == 0) return x > 0 ? x : 0.0;
            if (order == 1) return x > 0 ? 1.0 : 0.0;
            return 0.0;
    }
    return 0.0;
}

Eigen::MatrixXd Activation::apply(const Eigen::MatrixXd& x, int order) const {
    if (order < 0 || order > 3)
        throw std::invalid_argument("activation derivative order must be in 0..3");
    if (kind_ == ActKind::identity) {
        if (order == 0) return x;
        return Eigen::MatrixXd::Constant(x.rows(), x.cols(), order == 1 ? 1.0 : 0.0);
    }
    if (kind_ == ActKind::tanh && order <= 1) {
        Eigen::MatrixXd t = x.array().tanh().matrix();
        if (order == 0) return t;
        return (1.0 - t.array().square()).matrix();
    }
    Eigen::MatrixXd out(x.rows(), x.cols());
    const double* in = x.data();
    double* o = out.data();
    const Eigen::Index n = x.size();
    for (Eigen::Index i = 0; i < n; ++i) o[i] = eval(in[i], order);
    return out;
}

AdmissibilityReport check_admissible(const Activation& a) {
    return {a.zero_at_origin(), a.smooth() && a.phi2_at_0() == 0.0, a.smooth()};
}

void require_smooth(const Activation& a, const char* who) {
    if (!a.smooth())
        throw std::invalid_argument(std::string(who) + ": activation '" + a.name() +
                                    "' is not smooth; only the feedforward baseline accepts it");
}

}  // namespace resdiff
