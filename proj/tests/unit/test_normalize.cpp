#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "scaleformer/error.hpp"
#include "scaleformer/normalize.hpp"

using namespace scaleformer;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> n(3.0, 4.0);
    Matrix m(rows, cols);
    for (double& x : m.data()) x = n(rng);
    return m;
}

}  // namespace

TEST(CrossScaleStats, MeanOfConcatenation) {
    const auto s = cross_scale_stats(Matrix::column({1, 3}), Matrix::column({2}), NormMode::mean);
    EXPECT_DOUBLE_EQ(s.mean[0], 2.0);
    EXPECT_FALSE(s.stdev.has_value());
    EXPECT_EQ(apply_norm(Matrix::column({1, 3}), s), Matrix::column({-1, 1}));
}

TEST(CrossScaleStats, ConstantInputsHitTheFloor) {
    const Matrix c(3, 2, 4.25);
    const auto s = cross_scale_stats(c, c, NormMode::mean_std);
    EXPECT_DOUBLE_EQ(s.mean[0], 4.25);
    ASSERT_TRUE(s.stdev.has_value());
    EXPECT_DOUBLE_EQ((*s.stdev)[1], kStdevFloor);
}

TEST(CrossScaleStats, NoneModeIsIdentity) {
    std::mt19937_64 rng(1);
    const Matrix x = random_matrix(5, 2, rng);
    const auto s = cross_scale_stats(x, x, NormMode::none);
    EXPECT_EQ(s.mean, (std::vector<double>{0.0, 0.0}));
    EXPECT_EQ(apply_norm(x, s), x);
    EXPECT_EQ(remove_norm(x, s), x);
}

TEST(CrossScaleStats, WidthMismatch) {
    EXPECT_THROW(cross_scale_stats(Matrix(2, 2), Matrix(2, 3), NormMode::mean), ShapeError);
    const auto s = cross_scale_stats(Matrix(2, 2), Matrix(2, 2), NormMode::mean);
    EXPECT_THROW(apply_norm(Matrix(1, 3), s), ShapeError);
}

TEST(RemoveNorm, Examples) {
    NormStats s{NormMode::mean, {2.0}, std::nullopt};
    EXPECT_EQ(remove_norm(Matrix::column({0, 0}), s), Matrix::column({2, 2}));
    NormStats st{NormMode::mean_std, {0.0}, std::vector<double>{2.0}};
    EXPECT_EQ(remove_norm(Matrix::column({1}), st), Matrix::column({2}));
    EXPECT_EQ(apply_norm(Matrix::column({2, 2}), s), Matrix::column({0, 0}));
}

TEST(Normalize, ZeroMeanAndRoundTripProperties) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t d = 1 + rng() % 3;
        const Matrix enc = random_matrix(1 + rng() % 20, d, rng);
        const Matrix dec = random_matrix(1 + rng() % 20, d, rng);
        for (NormMode mode : {NormMode::mean, NormMode::mean_std}) {
            const auto s = cross_scale_stats(enc, dec, mode);
            const Matrix all = vstack(apply_norm(enc, s), apply_norm(dec, s));
            for (std::size_t c = 0; c < d; ++c) {
                double m = 0.0;
                for (std::size_t r = 0; r < all.rows(); ++r) m += all(r, c);
                EXPECT_NEAR(m / static_cast<double>(all.rows()), 0.0, 1e-9);
            }
            EXPECT_LT(max_abs_diff(remove_norm(apply_norm(enc, s), s), enc), 1e-12);
        }
    }
}

TEST(Normalize, ShiftAbsorption) {
    std::mt19937_64 rng(3);
    const Matrix enc = random_matrix(8, 2, rng);
    const Matrix dec = random_matrix(4, 2, rng);
    Matrix enc2 = enc, dec2 = dec;
    for (double& v : enc2.data()) v += 7.5;
    for (double& v : dec2.data()) v += 7.5;
    const auto a = cross_scale_stats(enc, dec, NormMode::mean);
    const auto b = cross_scale_stats(enc2, dec2, NormMode::mean);
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(b.mean[c] - a.mean[c], 7.5, 1e-12);
    EXPECT_LT(max_abs_diff(apply_norm(enc, a), apply_norm(enc2, b)), 1e-12);
    EXPECT_LT(max_abs_diff(apply_norm(dec, a), apply_norm(dec2, b)), 1e-12);
}

TEST(Normalize, GraphFormMatchesMatrixForm) {
    std::mt19937_64 rng(4);
    const Matrix enc = random_matrix(6, 2, rng);
    const Matrix dec = random_matrix(3, 2, rng);
    for (NormMode mode : {NormMode::none, NormMode::mean, NormMode::mean_std}) {
        ad::Graph g;
        const ad::Var e = g.constant(Tensor::from_matrix(enc));
        const ad::Var d = g.constant(Tensor::from_matrix(dec));
        const NormNodes nodes = cross_scale_stats(e, d, mode);
        const NormStats ref = cross_scale_stats(enc, dec, mode);
        EXPECT_LT(max_abs_diff(apply_norm(e, nodes).value().matrix(), apply_norm(enc, ref)), 1e-12);
        EXPECT_LT(max_abs_diff(remove_norm(d, nodes).value().matrix(), remove_norm(dec, ref)), 1e-12);
    }
}

TEST(NormMode, Parse) {
    EXPECT_EQ(parse_norm_mode("mean_std"), NormMode::mean_std);
    EXPECT_EQ(to_string(NormMode::none), "none");
    EXPECT_THROW(parse_norm_mode("zscore"), ConfigError);
}
