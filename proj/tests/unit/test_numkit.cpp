#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "lorasc/errors.hpp"
#include "lorasc/numkit/matrix.hpp"
#include "lorasc/numkit/rng.hpp"
#include "lorasc/numkit/svd.hpp"
#include "lorasc/numkit/tape.hpp"
#include "oracles.hpp"

using namespace lorasc;

namespace {

MatrixD random_d(std::size_t r, std::size_t c, std::uint64_t seed) {
    Rng rng(seed, 77);
    return sample_uniform<double>(r, c, -1.0, 1.0, rng);
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
    auto m = MatrixD::from_rows({{1.5, -2.0}, {0.25, 7.0}});
    EXPECT_TRUE(bit_equal(matmul(MatrixD::identity(2), m), m));
}

TEST(Matmul, OuterProductByHand) {
    auto b = MatrixD::from_rows({{1}, {2}});
    auto a = MatrixD::from_rows({{3, 4}});
    EXPECT_EQ(matmul(b, a), MatrixD::from_rows({{3, 4}, {6, 8}}));
}

TEST(Matmul, MatchesTripleLoop) {
    auto a = random_d(8, 3, 1);
    auto b = random_d(3, 5, 2);
    auto want = oracle::matmul(oracle::rows_of(a), oracle::rows_of(b));
    auto got = matmul(a, b);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 5; ++j) EXPECT_LT(oracle::rel_err(got(i, j), want[i][j]), 1e-6);
}

TEST(Matmul, TransposedVariantsAgree) {
    auto a = random_d(4, 6, 3);
    auto b = random_d(5, 6, 4);
    EXPECT_LT(max_abs_diff(matmul_nt(a, b), matmul(a, transpose(b))), 1e-14);
    auto c = random_d(4, 2, 5);
    EXPECT_LT(max_abs_diff(matmul_tn(a, c), matmul(transpose(a), c)), 1e-14);
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
    try {
        matmul(MatrixD(2, 3), MatrixD(4, 2));
        FAIL();
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
        EXPECT_NE(msg.find("4x2"), std::string::npos) << msg;
    }
}

TEST(Matmul, AssociativeOnRandomTriples) {
    for (std::uint64_t s = 0; s < 20; ++s) {
        auto a = random_d(5, 7, 10 + s), b = random_d(7, 4, 40 + s), c = random_d(4, 6, 70 + s);
        auto l = matmul(matmul(a, b), c), r = matmul(a, matmul(b, c));
        EXPECT_LT(max_abs_diff(l, r) / std::max(1.0, max_abs(l)), 1e-10);
        auto lf = matmul(matmul(a.cast<float>(), b.cast<float>()), c.cast<float>());
        auto rf = matmul(a.cast<float>(), matmul(b.cast<float>(), c.cast<float>()));
        EXPECT_LT(max_abs_diff(lf, rf) / std::max(1.0, max_abs(lf)), 1e-5);
    }
}

TEST(StdAll, ZeroMatrix) { EXPECT_EQ(std_all(MatrixD(3, 3)), 0.0); }

TEST(StdAll, SymmetricSigns) { EXPECT_DOUBLE_EQ(std_all(MatrixD::from_rows({{1, 1}, {-1, -1}})), 1.0); }

TEST(StdAll, ConstantMatrixIsExactlyZero) { EXPECT_EQ(std_all(MatrixF(5, 3, 0.1f)), 0.0); }

TEST(StdAll, MatchesTwoPassOracle) {
    auto m = random_d(4, 4, 9);
    EXPECT_NEAR(std_all(m), oracle::two_pass_std(m), 1e-10);
}

TEST(StdAll, EmptyIsShapeError) { EXPECT_THROW(std_all(MatrixD()), ShapeError); }

TEST(Finite, NonFiniteIsReported) {
    MatrixD m(2, 2);
    m(1, 0) = std::nan("");
    EXPECT_FALSE(all_finite(m));
    EXPECT_THROW(check_finite(m, "probe"), NumericError);
}

TEST(SampleUniform, DegenerateIntervalIsZero) {
    Rng rng(1);
    EXPECT_EQ(sample_uniform<double>(3, 4, 0.0, 0.0, rng), MatrixD(3, 4));
}

TEST(SampleUniform, MomentsOfUnitInterval) {
    Rng rng(2);
    auto m = sample_uniform<double>(1000, 100, -0.5, 0.5, rng);
    EXPECT_NEAR(sum_all(m) / m.size(), 0.0, 0.01);
    EXPECT_NEAR(oracle::two_pass_std(m), 1.0 / std::sqrt(12.0), 0.01);
}

TEST(SampleUniform, SameSeedIsBitIdentical) {
    Rng a(5, 3), b(5, 3);
    EXPECT_TRUE(bit_equal(sample_uniform<float>(7, 7, -1, 2, a), sample_uniform<float>(7, 7, -1, 2, b)));
    EXPECT_EQ(a.counter(), b.counter());
}

TEST(SampleUniform, BoundsOverAMillionDraws) {
    Rng rng(11);
    for (int rep = 0; rep < 2; ++rep) {
        auto d = sample_uniform<double>(1000, 500, -0.05, 0.05, rng);
        for (double v : d.values()) ASSERT_TRUE(v >= -0.05 && v < 0.05);
        auto f = sample_uniform<float>(1000, 500, -0.05, 0.05, rng);
        for (float v : f.values()) ASSERT_TRUE(v >= -0.05f && v < 0.05f);
    }
}

TEST(SampleUniform, InvertedBoundsRejected) {
    Rng rng(0);
    EXPECT_THROW(sample_uniform<double>(1, 1, 1.0, 0.0, rng), ArgumentError);
}

TEST(Rng, StreamsAreIndependentAndCounterResumes) {
    Rng a(3, 1);
    Rng b(3, 2);
    EXPECT_NE(a.next_u64(), b.next_u64());
    Rng c(3, 1);
    c.next_u64();
    Rng d(3, 1);
    d.set_counter(c.counter());
    EXPECT_EQ(c.next_u64(), d.next_u64());
}

TEST(Backward, LinearSumHasOuterProductGradient) {
    Tape<double> tape;
    auto x = MatrixD::from_rows({{1, 2, 3}, {-1, 0, 4}});
    auto w = tape.parameter(random_d(2, 3, 12));
    auto loss = ad::sum(ad::matmul_nt(tape.constant(x), w));
    auto g = tape.backward(loss);
    // d/dW sum_n sum_o x_n . W_o = column sums of x for every output row
    for (std::size_t o = 0; o < 2; ++o) {
        EXPECT_DOUBLE_EQ(g[0](o, 0), 0.0);
        EXPECT_DOUBLE_EQ(g[0](o, 1), 2.0);
        EXPECT_DOUBLE_EQ(g[0](o, 2), 7.0);
    }
}

TEST(Backward, UnusedParameterGetsExactZeros) {
    Tape<double> tape;
    auto used = tape.parameter(random_d(2, 2, 1));
    auto unused = tape.parameter(random_d(3, 3, 2));
    auto g = tape.backward(ad::sum(ad::tanh(used)));
    EXPECT_TRUE(bit_equal(g[1], MatrixD(3, 3)));
}

TEST(Backward, NonScalarLossIsContractError) {
    Tape<double> tape;
    auto p = tape.parameter(random_d(2, 2, 1));
    EXPECT_THROW(tape.backward(p), ContractError);
}

TEST(Backward, VisitsEachNodeOnceAndTapeIsReusable) {
    Tape<double> tape;
    auto p = tape.parameter(random_d(2, 2, 1));
    auto t = ad::tanh(p);
    auto loss = ad::sum(ad::add(t, t));
    tape.backward(loss);
    EXPECT_EQ(tape.last_backward_visits(), 4u);
    tape.reset();
    EXPECT_EQ(tape.size(), 0u);
    auto q = tape.parameter(MatrixD::from_rows({{2.0}}));
    auto g = tape.backward(ad::sum(ad::mul(q, q)));
    EXPECT_DOUBLE_EQ(g[0](0, 0), 4.0);
}

TEST(Backward, EveryPrimitiveMatchesFiniteDifferences) {
    auto x0 = random_d(6, 4, 21), w0 = random_d(4, 4, 22), r0 = random_d(1, 4, 23);
    auto g0 = random_d(1, 4, 24), b0 = random_d(1, 4, 25);
    std::vector<int> labels = {0, 3, 1, 2, 3, 0};
    std::vector<std::size_t> ids = {1, 0, 3, 3, 2, 1};
    auto build = [&](Tape<double>& t, std::span<const MatrixD> p) {
        auto x = t.parameter(p[0]), w = t.parameter(p[1]), r = t.parameter(p[2]);
        auto gain = t.parameter(p[3]), bias = t.parameter(p[4]);
        auto h = ad::add_row(ad::matmul_nt(x, w), r);
        h = ad::layer_norm_rows(ad::gelu(h), gain, bias);
        auto e = ad::gather_rows(ad::slice_rows(h, 0, 4), std::span<const std::size_t>(ids));
        auto att = ad::matmul(ad::softmax_rows(ad::matmul_nt(e, e)), ad::tanh(e));
        std::vector<Var<double>> cols = {ad::slice_cols(att, 0, 2), ad::slice_cols(ad::sub(att, h), 2, 2)};
        auto c = ad::concat_cols(std::span<const Var<double>>(cols));
        std::vector<Var<double>> rows = {c, ad::scale(h, 0.5)};
        auto all = ad::concat_rows(std::span<const Var<double>>(rows));
        auto pooled = ad::mean_pool_rows(all, 2);
        auto ce = ad::cross_entropy(pooled, std::span<const int>(labels));
        return ad::add(ce, ad::mse_loss(ad::mul(pooled, pooled), MatrixD(6, 4, 0.1)));
    };
    std::vector<MatrixD> params = {x0, w0, r0, g0, b0};
    Tape<double> tape;
    auto grads = tape.backward(build(tape, params));
    auto f = [&](std::span<const MatrixD> p) {
        Tape<double> t;
        return build(t, p).value()(0, 0);
    };
    auto fd = finite_diff_grad<double>(f, params, 1e-5);
    for (std::size_t i = 0; i < params.size(); ++i)
        for (std::size_t j = 0; j < params[i].size(); ++j) {
            const double a = grads[i].values()[j], n = fd[i].values()[j];
            EXPECT_LT(std::abs(a - n) / std::max(1e-4, std::abs(n)), 1e-6) << i << "," << j;
        }
}

TEST(FiniteDiff, SquareAtThree) {
    auto g = finite_diff_grad<double>([](std::span<const MatrixD> p) { return p[0](0, 0) * p[0](0, 0); },
                                      {MatrixD::from_rows({{3.0}})}, 1e-5);
    EXPECT_NEAR(g[0](0, 0), 6.0, 1e-8);
}

TEST(FiniteDiff, ConstantFunctionHasZeroGradient) {
    auto g = finite_diff_grad<double>([](std::span<const MatrixD>) { return 4.2; }, {random_d(3, 2, 1)}, 1e-5);
    EXPECT_TRUE(bit_equal(g[0], MatrixD(3, 2)));
}

TEST(FiniteDiff, QuadraticForm) {
    auto r = random_d(4, 4, 3);
    auto q = add(r, transpose(r));
    auto x = random_d(4, 1, 4);
    auto f = [&](std::span<const MatrixD> p) { return matmul(transpose(p[0]), matmul(q, p[0]))(0, 0); };
    auto g = finite_diff_grad<double>(f, {x}, 1e-5);
    auto want = scale(matmul(q, x), 2.0);
    EXPECT_LT(max_abs_diff(g[0], want), 1e-6);
}

TEST(FiniteDiff, NonFiniteEvaluationIsNumericError) {
    auto f = [](std::span<const MatrixD>) { return std::numeric_limits<double>::infinity(); };
    EXPECT_THROW(finite_diff_grad<double>(f, {MatrixD(1, 1)}, 1e-5), NumericError);
}

TEST(FiniteDiff, RestoresParametersBitExactly) {
    auto p = random_d(3, 3, 8);
    auto copy = p;
    finite_diff_grad<double>([&](std::span<const MatrixD> q) { return sum_all(q[0]); }, {p}, 1e-3);
    EXPECT_TRUE(bit_equal(p, copy));
}

TEST(Svd, IdentityGivesOnes) {
    auto s = singular_values(MatrixD::identity(5));
    ASSERT_EQ(s.size(), 5u);
    for (double v : s) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Svd, RankOneOuterProduct) {
    auto u = random_d(6, 1, 1), v = random_d(4, 1, 2);
    auto s = singular_values(matmul(u, transpose(v)));
    ASSERT_EQ(s.size(), 4u);
    EXPECT_LT(oracle::rel_err(s[0], frobenius_norm(u) * frobenius_norm(v)), 1e-10);
    for (std::size_t i = 1; i < s.size(); ++i) EXPECT_LT(s[i], 1e-10);
}

TEST(Svd, FrobeniusIdentity) {
    auto m = random_d(8, 8, 5);
    double ss = 0;
    for (double v : singular_values(m)) ss += v * v;
    const double f = frobenius_norm(m);
    EXPECT_LT(oracle::rel_err(ss, f * f), 1e-8);
}

TEST(Svd, MatchesEigenOnRectangularAndLarge) {
    for (auto [r, c] : {std::pair<std::size_t, std::size_t>{7, 3}, {3, 9}, {64, 48}, {256, 256}}) {
        auto m = random_d(r, c, r * 1000 + c);
        Eigen::MatrixXd e(r, c);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) e(i, j) = m(i, j);
        Eigen::VectorXd want = Eigen::JacobiSVD<Eigen::MatrixXd>(e).singularValues();
        auto got = singular_values(m);
        ASSERT_EQ(got.size(), static_cast<std::size_t>(want.size()));
        for (std::size_t i = 0; i < got.size(); ++i) {
            if (i > 0) EXPECT_GE(got[i - 1], got[i]);
            EXPECT_LT(oracle::rel_err(got[i], want(i)), 1e-8) << r << "x" << c << " i=" << i;
        }
    }
}

TEST(Svd, IterationCapIsReported) {
    try {
        singular_values(random_d(16, 16, 3), 1);
        FAIL();
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
    }
}
