#pragma once

#include <string>

#include <Eigen/Dense>

namespace resdiff {

enum class ActKind { tanh, swish, identity, relu };

// Scalar activation with analytic derivatives up to order 3.
class Activation {
public:
    explicit Activation(ActKind kind = ActKind::identity);
    static Activation by_name(const std::string& name);

    double eval(double x, int order) const;
    double value(double x) const { return eval(x, 0); }
    double d1(double x) const { return eval(x, 1); }
    double d2(double x) const { return eval(x, 2); }
    double d3(double x) const { return eval(x, 3); }

    // elementwise order-th derivative
    Eigen::MatrixXd apply(const Eigen::MatrixXd& x, int order = 0) const;

    double phi1_at_0() const { return phi1_; }
    double phi2_at_0() const { return phi2_; }
    double phi3_at_0() const { return phi3_; }
    bool zero_at_origin() const { return zero_at_origin_; }
    bool smooth() const { return kind_ != ActKind::relu; }
    bool is_identity() const { return kind_ == ActKind::identity; }
    ActKind kind() const { return kind_; }
    const std::string& name() const { return name_; }

private:
    ActKind kind_;
    std::string name_;
    double phi1_ = 0, phi2_ = 0, phi3_ = 0;
    bool zero_at_origin_ = true;
};

struct AdmissibilityReport {
    bool zero_at_origin;
    bool phi2_zero;   // non-explosive regime
    bool smooth;
};

AdmissibilityReport check_admissible(const Activation& a);

// Throws std::invalid_argument unless a is smooth; `who` names the caller.
void require_smooth(const Activation& a, const char* who);

}  // namespace resdiff
