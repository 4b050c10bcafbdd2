#pragma once

#include <cmath>
#include <variant>

#include "sdfc/network.hpp"

namespace sdfc {

/* Output-target policy. StrongTrue drives the output all the way to the
 * supervised label; WeakNudged reproduces the weak-feedback baseline whose
 * target is the feedforward output nudged along the negative loss gradient. */
struct StrongTrue {};
struct WeakNudged {
    double lambda = 0.1;
};
using TargetMode = std::variant<StrongTrue, WeakNudged>;

struct SquaredError {};
struct SoftmaxCrossEntropy {
    double soft_target_mass = 0.99;  // probability mass on the label entry
};
using LossKind = std::variant<SquaredError, SoftmaxCrossEntropy>;

inline bool is_cross_entropy(const LossKind& k) {
    return std::holds_alternative<SoftmaxCrossEntropy>(k);
}

inline Vec softmax(const Vec& z) {
    const Vec shifted = (z.array() - z.maxCoeff()).matrix();
    Vec e = shifted.array().exp().matrix();
    return e / e.sum();
}

/* Soft target distribution: mass a on the label, (1-a)/(n-1) elsewhere. */
inline Vec make_soft_target(int n, int label, double a) {
    if (label < 0 || label >= n) throw ShapeError("label out of range");
    if (a <= 1.0 / n || a >= 1.0) throw ConfigError("soft-target mass must be in (1/n, 1)");
    Vec p = Vec::Constant(n, (1.0 - a) / (n - 1));
    p[label] = a;
    return p;
}

/* Per-sample loss. Squared error: ||target - out||^2. Cross-entropy is the
 * combined form with the softmax absorbed: -p*^T log softmax(out). */
inline double loss_value(const LossKind& loss, const Vec& target, const Vec& output) {
    if (std::holds_alternative<SquaredError>(loss)) return (target - output).squaredNorm();
    const Vec shifted = (output.array() - output.maxCoeff()).matrix();
    const double logz = std::log(shifted.array().exp().sum());
    return -(target.array() * (shifted.array() - logz)).sum();
}

/* Controller error signal. For cross-entropy this is the negative gradient
 * of the combined loss, p* - softmax(out); for squared error, target - out. */
struct ControlTarget {
    Vec value;
    bool through_softmax = false;
};

inline Vec control_error(const ControlTarget& t, const Vec& output) {
    if (!output.allFinite()) throw NumericError("control_error: non-finite network output");
    return t.through_softmax ? Vec(t.value - softmax(output)) : Vec(t.value - output);
}

inline Vec control_error(const LossKind& loss, const Vec& target, const Vec& output) {
    return control_error(ControlTarget{target, is_cross_entropy(loss)}, output);
}

/* Fix the controller target for one sample. WeakNudged computes the nudged
 * target once from the controller-free output and the error is then a plain
 * output-space difference; StrongTrue keeps the supervised target itself. */
inline ControlTarget resolve_target(const TargetMode& mode, const LossKind& loss,
                                    const Vec& target, const Vec& output_ff) {
    if (std::holds_alternative<StrongTrue>(mode)) return {target, is_cross_entropy(loss)};
    const double lambda = std::get<WeakNudged>(mode).lambda;
    Vec nudge = std::holds_alternative<SquaredError>(loss)
                    ? Vec(2.0 * (target - output_ff))
                    : Vec(target - softmax(output_ff));
    return {output_ff + lambda * nudge, false};
}

/* Proportional-integral controller, leak-parametrized:
 *   u_int[m+1] = u_int[m] + (dt/tau_u)(e[m] - alpha_tilde * u[m])
 *   u[m+1]     = u_int[m+1] + k e[m]
 * so u - u_int = k*e holds after every step. */
struct ControllerState {
    Vec u;
    Vec u_int;
};

inline ControllerState controller_step(const ControllerState& s, const Vec& e, double dt,
                                       double tau_u, double alpha_tilde, double k) {
    ControllerState out;
    out.u_int = s.u_int + (dt / tau_u) * (e - alpha_tilde * s.u);
    out.u = out.u_int + k * e;
    return out;
}

}  // namespace sdfc
