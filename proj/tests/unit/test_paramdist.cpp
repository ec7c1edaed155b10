#include <cmath>

#include <gtest/gtest.h>

#include "resdiff/paramdist.hpp"

using namespace resdiff;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Sample covariance of two columns with its Monte Carlo standard error.
struct CovEst {
    double cov, se;
};

CovEst cov_est(const VectorXd& a, const VectorXd& b) {
    const double n = static_cast<double>(a.size());
    const VectorXd ac = a.array() - a.mean(), bc = b.array() - b.mean();
    const VectorXd prod = ac.cwiseProduct(bc);
    const double c = prod.sum() / (n - 1);
    const double v = (prod.array() - prod.mean()).square().sum() / (n - 1);
    return {c, std::sqrt(v / n)};
}

MatrixXd random_spd(int n, std::uint64_t seed) {
    Rng r(seed);
    const MatrixXd m = r.normals(n, n);
    return m * m.transpose() / n + 0.1 * MatrixXd::Identity(n, n);
}

}  // namespace

TEST(PsdSqrt, Identity) {
    const PsdFactor f = psd_sqrt(MatrixXd::Identity(3, 3));
    EXPECT_LE((f.S * f.S.transpose() - MatrixXd::Identity(3, 3)).norm(), 1e-14);
    EXPECT_EQ(f.method, PsdFactor::Method::cholesky);
}

TEST(PsdSqrt, Diagonal) {
    MatrixXd s(2, 2);
    s << 4, 0, 0, 9;
    const PsdFactor f = psd_sqrt(s);
    EXPECT_LE((f.S * f.S.transpose() - s).norm(), 1e-14);
}

TEST(PsdSqrt, RandomReconstruction) {
    Rng r(5);
    const MatrixXd m = r.normals(5, 5);
    const MatrixXd s = m * m.transpose();
    EXPECT_LE((psd_sqrt(s).S * psd_sqrt(s).S.transpose() - s).norm(), 1e-8);
}

TEST(PsdSqrt, RankDeficientFallsBackToEigen) {
    VectorXd v(3);
    v << 1, 2, 3;
    const MatrixXd s = v * v.transpose();
    const PsdFactor f = psd_sqrt(s);
    EXPECT_EQ(f.method, PsdFactor::Method::eigen_clipped);
    EXPECT_LE((f.S * f.S.transpose() - s).norm(), 1e-10);
}

TEST(PsdSqrt, ZeroMatrix) { EXPECT_EQ(psd_sqrt(MatrixXd::Zero(3, 3)).S.norm(), 0.0); }

TEST(PsdSqrt, RejectsIndefinite) {
    MatrixXd s(2, 2);
    s << 1, 0, 0, -1;
    EXPECT_THROW(psd_sqrt(s), NotPsdError);
}

TEST(Kron, SmallExample) {
    MatrixXd a(2, 2), b(1, 2);
    a << 1, 2, 3, 4;
    b << 5, 6;
    MatrixXd expect(2, 4);
    expect << 5, 6, 10, 12, 15, 18, 20, 24;
    EXPECT_EQ(kron(a, b), expect);
}

TEST(FullIid, ScalarVariance) {
    const ParamScheme s = ParamScheme::full_iid(1, 1.0, 1.0);
    Rng r(1);
    const int n = 1000000;
    VectorXd w(n), b(n);
    for (int i = 0; i < n; ++i) {
        const Increments inc = s.sample_increments(0.01, r);
        w(i) = inc.dW(0, 0);
        b(i) = inc.db(0);
    }
    const CovEst cw = cov_est(w, w), cb = cov_est(b, b);
    EXPECT_LE(std::abs(cw.cov - 0.01), 4 * cw.se);
    EXPECT_LE(std::abs(cb.cov - 0.01), 4 * cb.se);
}

TEST(FullIid, HalvingDtHalvesVariance) {
    const ParamScheme s = ParamScheme::full_iid(4, 1.3, 0.0);
    const int n = 40000;
    auto sample = [&](double dt) {
        Rng r(9);
        VectorXd w(n);
        for (int i = 0; i < n; ++i) w(i) = s.sample_increments(dt, r).dW(1, 2);
        return cov_est(w, w);
    };
    const CovEst a = sample(0.02), b = sample(0.01);
    const double expect_a = 1.69 * 0.02 / 4, expect_b = 1.69 * 0.01 / 4;
    EXPECT_LE(std::abs(a.cov - expect_a), 4 * a.se);
    EXPECT_LE(std::abs(b.cov - expect_b), 4 * b.se);
}

TEST(Schemes, DegenerateIsZero) {
    const int D = 3;
    const MatrixXd Z = MatrixXd::Zero(D, D);
    Rng r(2);
    for (const ParamScheme& s :
         {ParamScheme::full_iid(D, 0, 0), ParamScheme::matrix_gaussian(Z, VectorXd::Zero(D), Z, Z, Z),
          ParamScheme::general_gaussian(Z, VectorXd::Zero(D), MatrixXd::Zero(D * D, D * D), Z)}) {
        const Increments inc = s.sample_increments(0.1, r);
        EXPECT_EQ(inc.dW.norm(), 0.0);
        EXPECT_EQ(inc.db.norm(), 0.0);
    }
}

TEST(MatrixGaussian, CovarianceFactorizes) {
    MatrixXd so(2, 2), si(2, 2);
    so << 1.0, 0.5, 0.5, 2.0;
    si << 2.0, 0.3, 0.3, 1.0;
    const ParamScheme s =
        ParamScheme::matrix_gaussian(MatrixXd::Zero(2, 2), VectorXd::Zero(2), so, si, MatrixXd::Identity(2, 2));
    const int n = 200000;
    MatrixXd eps(n, 4);  // row-major vec of eps^W
    Rng r(4);
    for (int k = 0; k < n; ++k) {
        const MatrixXd w = s.sample_increments(1.0, r).dW;
        eps.row(k) << w(0, 0), w(0, 1), w(1, 0), w(1, 1);
    }
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
            const double expect = so(a / 2, b / 2) * si(a % 2, b % 2);
            const CovEst c = cov_est(eps.col(a), eps.col(b));
            EXPECT_LE(std::abs(c.cov - expect), 4 * c.se) << a << "," << b;
        }
}

TEST(MatrixGaussian, MatchesFullIidMoments) {
    const int D = 3;
    const double sw = 1.2, sb = 0.7;
    const ParamScheme iid = ParamScheme::full_iid(D, sw, sb);
    const ParamScheme mg = ParamScheme::matrix_gaussian(MatrixXd::Zero(D, D), VectorXd::Zero(D), MatrixXd::Identity(D, D),
                                                        (sw * sw / D) * MatrixXd::Identity(D, D),
                                                        (sb * sb) * MatrixXd::Identity(D, D));
    const int n = 100000;
    auto moments = [&](const ParamScheme& s, std::uint64_t seed) {
        Rng r(seed);
        MatrixXd out(n, 3);
        for (int k = 0; k < n; ++k) {
            const Increments inc = s.sample_increments(0.5, r);
            out.row(k) << inc.dW(0, 1), inc.dW(2, 2), inc.db(1);
        }
        return out;
    };
    const MatrixXd a = moments(iid, 1), b = moments(mg, 2);
    for (int j = 0; j < 3; ++j) {
        const CovEst ca = cov_est(a.col(j), a.col(j)), cb = cov_est(b.col(j), b.col(j));
        EXPECT_LE(std::abs(ca.cov - cb.cov), 4 * std::hypot(ca.se, cb.se));
        EXPECT_LE(std::abs(a.col(j).mean() - b.col(j).mean()), 4 * std::sqrt((ca.cov + cb.cov) / n));
    }
}

TEST(BlockCrossCov, FullIidUnitNorm) {
    const int D = 5;
    const ParamScheme s = ParamScheme::full_iid(D, std::sqrt(2.0), std::sqrt(0.5));
    const VectorXd u = VectorXd::Ones(D);  // |u|^2 = D
    EXPECT_LE((s.block_cross_cov(u, u) - 2.5 * MatrixXd::Identity(D, D)).norm(), 1e-14);
}

TEST(BlockCrossCov, MatrixGaussianHandExample) {
    MatrixXd si(2, 2);
    si << 2, 0, 0, 1;
    const ParamScheme s = ParamScheme::matrix_gaussian(MatrixXd::Zero(2, 2), VectorXd::Zero(2), MatrixXd::Identity(2, 2),
                                                       si, MatrixXd::Zero(2, 2));
    const VectorXd u = VectorXd::Ones(2);
    EXPECT_LE((s.block_cross_cov(u, u) - 3 * MatrixXd::Identity(2, 2)).norm(), 1e-14);
}

TEST(BlockCrossCov, GeneralGaussianMonteCarlo) {
    const int D = 3;
    const MatrixXd sw = random_spd(D * D, 17);
    const MatrixXd sb = random_spd(D, 18);
    const ParamScheme s = ParamScheme::general_gaussian(MatrixXd::Zero(D, D), VectorXd::Zero(D), sw, sb);
    Rng r(19);
    const VectorXd u = r.normals(D), v = r.normals(D);
    const MatrixXd expect = s.block_cross_cov(u, v);
    const int n = 200000;
    MatrixXd hu(n, D), hv(n, D);
    for (int k = 0; k < n; ++k) {
        const Increments inc = s.sample_increments(1.0, r);
        hu.row(k) = (inc.dW * u + inc.db).transpose();
        hv.row(k) = (inc.dW * v + inc.db).transpose();
    }
    for (int a = 0; a < D; ++a)
        for (int b = 0; b < D; ++b) {
            const CovEst c = cov_est(hu.col(a), hv.col(b));
            EXPECT_LE(std::abs(c.cov - expect(a, b)), 4 * c.se) << a << "," << b;
        }
}

TEST(CnnTensor, CovarianceFactorizes) {
    const int D = 2, K = 3;
    const MatrixXd so = random_spd(D, 1), su = random_spd(K, 2), sv = random_spd(K, 3), si = random_spd(D, 4);
    const ParamScheme s = ParamScheme::cnn_tensor_gaussian(MatrixXd::Zero(D, K * K * D), VectorXd::Zero(D), so, su, sv,
                                                           si, MatrixXd::Identity(D, D));
    const int n = 100000;
    const int width = K * K * D;
    MatrixXd eps(n, D * width);
    Rng r(8);
    for (int k = 0; k < n; ++k) {
        const MatrixXd w = s.sample_increments(1.0, r).dW;
        for (int o = 0; o < D; ++o) eps.block(k, o * width, 1, width) = w.row(o);
    }
    // entry (o, a, b, i) sits at column o*width + (a*K + b)*D + i
    Rng pick(21);
    for (int t = 0; t < 40; ++t) {
        const int c1 = static_cast<int>(pick.next_u64() % (D * width));
        const int c2 = static_cast<int>(pick.next_u64() % (D * width));
        auto split = [&](int c, int& o, int& a, int& b, int& i) {
            o = c / width;
            const int rem = c % width;
            i = rem % D;
            a = (rem / D) / K;
            b = (rem / D) % K;
        };
        int o1, a1, b1, i1, o2, a2, b2, i2;
        split(c1, o1, a1, b1, i1);
        split(c2, o2, a2, b2, i2);
        const double expect = so(o1, o2) * su(a1, a2) * sv(b1, b2) * si(i1, i2);
        const CovEst c = cov_est(eps.col(c1), eps.col(c2));
        EXPECT_LE(std::abs(c.cov - expect), 4 * c.se) << c1 << "," << c2;
    }
}

TEST(CnnIid, EntryVariance) {
    const ParamScheme s = ParamScheme::cnn_full_iid(4, 3, 2.0, 1.0);
    EXPECT_EQ(s.in_width(), 36);
    Rng r(3);
    const int n = 50000;
    VectorXd w(n);
    for (int k = 0; k < n; ++k) w(k) = s.sample_increments(1.0, r).dW(1, 20);
    const CovEst c = cov_est(w, w);
    EXPECT_LE(std::abs(c.cov - 4.0 / 4), 4 * c.se);
}

TEST(Projection, ExactInLawForIidAndKronecker) {
    // Cov of H = dW Psi + db 1^T entries is Sigma_b + Sigma_O (psi_m^T Sigma_I psi_n)
    const int D = 4;
    Rng init(12);
    const MatrixXd Psi = init.normals(D, 2);
    MatrixXd so = random_spd(D, 30), si = random_spd(D, 31), sb = random_spd(D, 32);
    const ParamScheme mg = ParamScheme::matrix_gaussian(MatrixXd::Zero(D, D), VectorXd::Zero(D), so, si, sb);
    const ParamScheme iid = ParamScheme::full_iid(D, 1.1, 0.4);
    for (const ParamScheme* s : {&iid, &mg}) {
        const int n = 60000;
        MatrixXd h(n, 4);
        Rng r(13);
        for (int k = 0; k < n; ++k) {
            const MatrixXd H = s->sample_preactivation(Psi, 0.5, r);
            h.row(k) << H(0, 0), H(1, 0), H(0, 1), H(3, 1);
        }
        const MatrixXd c00 = s->block_cross_cov(Psi.col(0), Psi.col(0)) * 0.5;
        const MatrixXd c01 = s->block_cross_cov(Psi.col(0), Psi.col(1)) * 0.5;
        const MatrixXd c11 = s->block_cross_cov(Psi.col(1), Psi.col(1)) * 0.5;
        const CovEst e1 = cov_est(h.col(0), h.col(0)), e2 = cov_est(h.col(0), h.col(1)),
                     e3 = cov_est(h.col(0), h.col(2)), e4 = cov_est(h.col(1), h.col(3)),
                     e5 = cov_est(h.col(3), h.col(3));
        EXPECT_LE(std::abs(e1.cov - c00(0, 0)), 4 * e1.se);
        EXPECT_LE(std::abs(e2.cov - c00(0, 1)), 4 * e2.se);
        EXPECT_LE(std::abs(e3.cov - c01(0, 0)), 4 * e3.se);
        EXPECT_LE(std::abs(e4.cov - c01(1, 3)), 4 * e4.se);
        EXPECT_LE(std::abs(e5.cov - c11(3, 3)), 4 * e5.se);
    }
}

TEST(Schemes, RejectInvalid) {
    EXPECT_THROW(ParamScheme::cnn_full_iid(2, 2, 1, 1), std::invalid_argument);
    MatrixXd bad(2, 2);
    bad << 1, 0, 0, -1;
    EXPECT_THROW(ParamScheme::matrix_gaussian(MatrixXd::Zero(2, 2), VectorXd::Zero(2), bad, MatrixXd::Identity(2, 2),
                                              MatrixXd::Identity(2, 2)),
                 std::exception);
    EXPECT_THROW(ParamScheme::general_gaussian(MatrixXd::Zero(65, 65), VectorXd::Zero(65),
                                               MatrixXd::Zero(1, 1), MatrixXd::Zero(65, 65)),
                 std::invalid_argument);
}
