#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "scaleformer/checkpoint.hpp"
#include "scaleformer/error.hpp"
#include "scaleformer/optim.hpp"
#include "scaleformer/stats.hpp"

using namespace scaleformer;
namespace fs = std::filesystem;

namespace {

double t_density(double t, double nu) {
    const double k = std::tgamma((nu + 1) / 2) / (std::sqrt(nu * std::numbers::pi) * std::tgamma(nu / 2));
    return k * std::pow(1 + t * t / nu, -(nu + 1) / 2);
}

// Two-sided p value by Simpson integration of the density over [0, |t|].
double p_oracle(double t, double nu) {
    const std::size_t n = 20000;
    const double h = std::abs(t) / n;
    double s = t_density(0, nu) + t_density(std::abs(t), nu);
    for (std::size_t i = 1; i < n; ++i) s += t_density(h * static_cast<double>(i), nu) * (i % 2 ? 4.0 : 2.0);
    return 1.0 - 2.0 * s * h / 3.0;
}

}  // namespace

TEST(TTest, HandExample) {
    const double a[] = {1, 2, 3}, b[] = {4, 5, 6};
    const TTestResult r = t_test(a, b);
    EXPECT_NEAR(r.t, -3.0 / std::sqrt(2.0 / 3.0), 1e-12);
    EXPECT_NEAR(r.t, -3.674, 1e-3);
    EXPECT_EQ(r.df, 4.0);
    EXPECT_NEAR(r.p_two_sided, p_oracle(r.t, 4), 1e-9);
    EXPECT_NEAR(r.p_two_sided, 0.0213, 1e-3);
    EXPECT_NEAR(r.p_less, r.p_two_sided / 2, 1e-12);
    EXPECT_NEAR(r.p_greater, 1 - r.p_two_sided / 2, 1e-12);
}

TEST(TTest, SymmetryAndDegenerateCases) {
    const double a[] = {1, 2, 3}, b[] = {4, 5, 6};
    EXPECT_EQ(t_test(b, a).t, -t_test(a, b).t);
    EXPECT_EQ(t_test(b, a).p_two_sided, t_test(a, b).p_two_sided);
    const TTestResult same = t_test(a, a);
    EXPECT_EQ(same.t, 0.0);
    EXPECT_EQ(same.p_two_sided, 1.0);
    const double c[] = {2, 2}, d[] = {2, 2, 2}, e[] = {3, 3};
    EXPECT_EQ(t_test(c, d).p_two_sided, 1.0);
    const TTestResult deg = t_test(c, e);
    EXPECT_TRUE(deg.degenerate);
    EXPECT_EQ(deg.p_two_sided, 0.0);
    EXPECT_EQ(deg.p_less, 0.0);
    const double one[] = {1};
    EXPECT_THROW(t_test(one, a), DomainError);
}

TEST(TTest, RandomPairsMatchQuadrature) {
    std::mt19937_64 rng(2022);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> a(2 + rng() % 6), b(2 + rng() % 6);
        const double shift = n(rng);
        for (double& v : a) v = n(rng);
        for (double& v : b) v = n(rng) + shift;
        const TTestResult r = t_test(a, b);
        EXPECT_EQ(r.df, static_cast<double>(a.size() + b.size() - 2));
        EXPECT_NEAR(r.p_two_sided, p_oracle(r.t, r.df), 1e-3);
    }
}

TEST(SampleStats, Values) {
    const double v[] = {4, 1, 3, 2};
    EXPECT_EQ(sample_mean(v), 2.5);
    EXPECT_NEAR(sample_stdev(v), std::sqrt(5.0 / 3.0), 1e-15);
    EXPECT_EQ(sample_median(v), 2.5);
    const double w[] = {7};
    EXPECT_EQ(sample_stdev(w), 0.0);
    EXPECT_EQ(sample_median(w), 7.0);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    ParameterSet ps;
    Parameter& p = ps.add("p", Tensor(Shape{1, 1, 3}, {1.0, -2.0, 0.5}));
    ps.zero_grad();
    p.grad = Tensor(Shape{1, 1, 3}, {0.3, -4.0, 0.0});
    Adam opt;
    opt.add_group(ps, 0.01);
    opt.step();
    // Bias correction makes the first update lr * g / (|g| + eps').
    EXPECT_NEAR(p.value[0], 1.0 - 0.01 * 0.3 / (0.3 + 1e-8), 1e-12);
    EXPECT_NEAR(p.value[1], -2.0 + 0.01 * 4.0 / (4.0 + 1e-8), 1e-12);
    EXPECT_EQ(p.value[2], 0.5);
    EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, MatchesReferenceRecursion) {
    ParameterSet ps;
    Parameter& p = ps.add("p", Tensor::scalar(0.0));
    Adam opt;
    opt.add_group(ps, 0.1);
    double x = 0.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 20; ++t) {
        const double g = 2.0 * (p.value[0] - 3.0);
        ps.zero_grad();
        p.grad[0] = g;
        opt.step();
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        x -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
        EXPECT_NEAR(p.value[0], x, 1e-12);
    }
}

TEST(Adam, GroupsUseTheirOwnRates) {
    ParameterSet a, b;
    Parameter& pa = a.add("a", Tensor::scalar(0.0));
    Parameter& pb = b.add("b", Tensor::scalar(0.0));
    a.zero_grad();
    b.zero_grad();
    pa.grad[0] = 1.0;
    pb.grad[0] = 1.0;
    Adam opt;
    opt.add_group(a, 1e-4);
    opt.add_group(b, 1e-3);
    opt.step();
    EXPECT_NEAR(pa.value[0], -1e-4, 1e-10);
    EXPECT_NEAR(pb.value[0], -1e-3, 1e-10);
}

TEST(GradClip, JointNorm) {
    ParameterSet a, b;
    a.add("a", Tensor::scalar(0.0)).grad = Tensor::scalar(3.0);
    b.add("b", Tensor::scalar(0.0)).grad = Tensor::scalar(4.0);
    std::vector<ParameterSet*> sets{&a, &b};
    EXPECT_DOUBLE_EQ(grad_norm(sets), 5.0);
    EXPECT_DOUBLE_EQ(clip_grad_norm(sets, 10.0), 5.0);
    EXPECT_DOUBLE_EQ(a.at("a").grad[0], 3.0);
    EXPECT_DOUBLE_EQ(clip_grad_norm(sets, 1.0), 5.0);
    EXPECT_NEAR(a.at("a").grad[0], 0.6, 1e-15);
    EXPECT_NEAR(b.at("b").grad[0], 0.8, 1e-15);
}

TEST(EarlyStopper, PatienceAndBest) {
    EarlyStopper s(2);
    EXPECT_TRUE(s.update(1.0));
    EXPECT_TRUE(s.update(0.5));
    EXPECT_FALSE(s.update(0.5));  // ties are not improvements
    EXPECT_FALSE(s.should_stop());
    EXPECT_FALSE(s.update(0.7));
    EXPECT_TRUE(s.should_stop());
    EXPECT_EQ(s.best(), 0.5);
    EXPECT_EQ(s.best_epoch(), 2u);
}

TEST(EarlyStopper, BestNeverWorsens) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    EarlyStopper s(1000);
    double running = 1e300;
    for (int i = 0; i < 200; ++i) {
        const double v = u(rng);
        s.update(v);
        running = std::min(running, v);
        EXPECT_EQ(s.best(), running);
    }
}

TEST(Checkpoint, RoundTripIsExact) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1e3);
    ParameterSet ps;
    Tensor a(Shape{2, 3, 4});
    for (double& v : a.data()) v = n(rng);
    a[0] = -0.0;
    a[1] = 1e-310;
    ps.add("enc.w", a);
    ps.add("scalar", Tensor::scalar(std::numbers::pi));
    const fs::path p = fs::temp_directory_path() / "scaleformer_test_ckpt.bin";
    save_checkpoint(p, ps, {{"note", "x"}});
    const Checkpoint c = load_checkpoint(p);
    EXPECT_EQ(c.meta["note"], "x");
    ASSERT_EQ(c.params.size(), 2u);
    EXPECT_EQ(c.params.at("enc.w").value, a);
    EXPECT_TRUE(std::signbit(c.params.at("enc.w").value[0]));
    EXPECT_EQ(c.params.at("scalar").value.item(), std::numbers::pi);

    ParameterSet dst;
    dst.add("enc.w", Tensor(Shape{2, 3, 4}));
    dst.add("scalar", Tensor::scalar(0));
    assign_parameters(dst, c.params);
    EXPECT_EQ(dst.at("enc.w").value, a);
    ParameterSet wrong;
    wrong.add("enc.w", Tensor(Shape{1, 3, 4}));
    EXPECT_THROW(assign_parameters(wrong, c.params), CheckpointError);
    ParameterSet missing;
    missing.add("other", Tensor::scalar(0));
    EXPECT_THROW(assign_parameters(missing, c.params), CheckpointError);
}

TEST(Checkpoint, RejectsCorruptFiles) {
    const fs::path dir = fs::temp_directory_path();
    std::ofstream(dir / "scaleformer_bad1.bin") << "not-a-checkpoint\n{}\n";
    EXPECT_THROW(load_checkpoint(dir / "scaleformer_bad1.bin"), CheckpointError);
    std::ofstream(dir / "scaleformer_bad2.bin") << "scaleformer-ckpt-v1\n{not json\n";
    EXPECT_THROW(load_checkpoint(dir / "scaleformer_bad2.bin"), CheckpointError);

    ParameterSet ps;
    ps.add("w", Tensor(Shape{1, 4, 4}, 1.0));
    const fs::path p = dir / "scaleformer_trunc.bin";
    save_checkpoint(p, ps, nlohmann::json::object());
    fs::resize_file(p, fs::file_size(p) - 8);
    EXPECT_THROW(load_checkpoint(p), CheckpointError);
    EXPECT_THROW(load_checkpoint(dir / "scaleformer_missing.bin"), CheckpointError);
}
