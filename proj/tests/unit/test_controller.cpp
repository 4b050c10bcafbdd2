#include <gtest/gtest.h>

#include <cmath>

#include "sdfc/controller.hpp"

using namespace sdfc;

TEST(ControlError, SquaredErrorZeroAtTarget) {
    const Vec t = Vec::Constant(3, 0.4);
    EXPECT_EQ(control_error(SquaredError{}, t, t).norm(), 0.0);
}

TEST(ControlError, SoftmaxUniformCase) {
    // two logits at zero give a uniform softmax; soft target mass 0.99 on class 0
    const Vec target = make_soft_target(2, 0, 0.99);
    const Vec e = control_error(SoftmaxCrossEntropy{0.99}, target, Vec::Zero(2));
    EXPECT_NEAR(e[0], 0.49, 1e-15);
    EXPECT_NEAR(e[1], -0.49, 1e-15);
}

TEST(ControlError, SoftmaxMatchesCombinedLossGradient) {
    const Vec target = make_soft_target(4, 1, 0.99);
    Vec out(4);
    out << 0.3, -1.2, 0.7, 0.05;
    const Vec e = control_error(SoftmaxCrossEntropy{0.99}, target, out);
    const double h = 1e-6;
    for (int j = 0; j < 4; ++j) {
        Vec p = out, m = out;
        p[j] += h;
        m[j] -= h;
        const double fd = (loss_value(SoftmaxCrossEntropy{0.99}, target, p) -
                           loss_value(SoftmaxCrossEntropy{0.99}, target, m)) /
                          (2 * h);
        EXPECT_NEAR(e[j], -fd, 1e-6);
    }
}

TEST(Softmax, LargeLogitsStayFinite) {
    Vec big(2);
    big << 1000.0, 1000.0;
    const Vec p = softmax(big);
    EXPECT_NEAR(p[0], 0.5, 1e-12);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
}

TEST(SoftTarget, MassPlacement) {
    const Vec p = make_soft_target(5, 3, 0.9);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    EXPECT_NEAR(p[3], 0.9, 1e-15);
    EXPECT_NEAR(p[0], 0.025, 1e-15);
    EXPECT_THROW(make_soft_target(5, 7, 0.9), ShapeError);
    EXPECT_THROW(make_soft_target(5, 1, 1.5), ConfigError);
}

TEST(Controller, ZeroErrorIsFixedPoint) {
    ControllerState s{Vec::Zero(2), Vec::Zero(2)};
    const ControllerState next = controller_step(s, Vec::Zero(2), 0.02, 1.0, 1e-3, 0.0);
    EXPECT_EQ(next.u.norm(), 0.0);
    EXPECT_EQ(next.u_int.norm(), 0.0);
}

TEST(Controller, IntegralConvergesToErrorOverLeak) {
    const Vec e = Vec::Constant(2, 0.3);
    ControllerState s{Vec::Zero(2), Vec::Zero(2)};
    for (int m = 0; m < 300000; ++m) s = controller_step(s, e, 0.02, 1.0, 0.05, 0.0);
    EXPECT_NEAR((s.u - e / 0.05).norm(), 0.0, 1e-8);
}

TEST(Controller, ProportionalPathReachesLeakBalance) {
    const Vec e = Vec::Constant(3, -0.8);
    ControllerState s{Vec::Zero(3), Vec::Zero(3)};
    for (int m = 0; m < 300000; ++m) s = controller_step(s, e, 0.02, 1.0, 0.1, 2.0);
    EXPECT_LT((e - 0.1 * s.u).norm(), 1e-8);
}

TEST(TargetMode, StrongUsesTrueLabel) {
    const Vec label = Vec::Constant(2, 0.9);
    const Vec ff = Vec::Constant(2, 0.1);
    const ControlTarget t = resolve_target(StrongTrue{}, SquaredError{}, label, ff);
    EXPECT_FALSE(t.through_softmax);
    EXPECT_EQ((t.value - label).norm(), 0.0);
}

TEST(TargetMode, WeakNudgeShiftsFeedforwardOutput) {
    const Vec label = Vec::Constant(2, 0.9);
    const Vec ff = Vec::Constant(2, 0.1);
    const ControlTarget t = resolve_target(WeakNudged{0.1}, SquaredError{}, label, ff);
    // ff output nudged along the negative loss gradient: ff + lambda*2*(label-ff)
    const Vec expect = ff + 0.1 * 2.0 * (label - ff);
    EXPECT_NEAR((t.value - expect).norm(), 0.0, 1e-15);
    EXPECT_FALSE(t.through_softmax);
    // the induced error is small compared to the strong-target error
    const Vec e_weak = control_error(t, ff);
    const Vec e_strong = control_error(resolve_target(StrongTrue{}, SquaredError{}, label, ff), ff);
    EXPECT_LT(e_weak.norm(), 0.3 * e_strong.norm());
}

TEST(LossValue, CrossEntropyManualCheck) {
    Vec out(3);
    out << 0.2, -0.4, 1.1;
    const Vec p = make_soft_target(3, 2, 0.99);
    const double lz = std::log(std::exp(0.2) + std::exp(-0.4) + std::exp(1.1));
    double expect = 0;
    for (int j = 0; j < 3; ++j) expect -= p[j] * (out[j] - lz);
    EXPECT_NEAR(loss_value(SoftmaxCrossEntropy{0.99}, p, out), expect, 1e-12);
}

TEST(LossValue, NonFiniteOutputThrows) {
    Vec out = Vec::Constant(2, std::numeric_limits<double>::quiet_NaN());
    EXPECT_THROW(control_error(SquaredError{}, Vec::Zero(2), out), NumericError);
}
