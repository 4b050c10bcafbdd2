#pragma once

#include <Eigen/Eigenvalues>
#include <cmath>
#include <vector>

#include "sdfc/simulate.hpp"

namespace sdfc {

inline LayerActivations acts_of(const SimState& s) { return LayerActivations{s.r0, s.v, s.r}; }

inline Mat stack_feedback(const NetworkParams& params) {
    Mat Q(params.total_units(), params.output_dim());
    const auto off = params.unit_offsets();
    for (int i = 0; i < params.depth(); ++i)
        Q.middleRows(off[i], params.layers[i].W.rows()) = params.layers[i].Q;
    return Q;
}

/* Noiseless, plasticity-free run to the controlled fixed point. The
 * converged state is dt-independent (it solves the equilibrium equations
 * exactly), so callers may use coarse dt for speed. */
inline SimResult equilibrium(const NetworkParams& params, const Sample& sample, SimConfig cfg,
                             double residual_tol = 1e-7) {
    cfg.sigma = 0.0;
    cfg.record_trajectory = false;
    SimResult res = simulate_sample(params, sample.x, sample.target, cfg);
    if (res.diag.fixed_point_residual > residual_tol * (1.0 + res.diag.u_ss.norm()))
        throw NumericError("equilibrium not converged: residual " +
                           std::to_string(res.diag.fixed_point_residual) +
                           " (increase m_max or reduce dt)");
    return res;
}

/* H = mean over the batch of 0.5*||Q u_ss||^2 — the control effort the
 * network needs to hold every output at its target. */
inline double surrogate_loss(const NetworkParams& params, const Batch& batch,
                             const SimConfig& cfg) {
    double h = 0;
    for (const auto& s : batch) h += equilibrium(params, s, cfg).diag.h_contribution;
    return h / double(batch.size());
}

/* Mean loss of the controller-free network over a batch. */
inline double training_loss(const NetworkParams& params, const Batch& batch,
                            const LossKind& loss) {
    double total = 0;
    for (const auto& s : batch)
        total += loss_value(loss, s.target, forward_ss(params, s.x).r.back());
    return total / double(batch.size());
}

/* Fraction of argmax mispredictions; batch must carry class labels. */
inline double error_rate(const NetworkParams& params, const Batch& batch) {
    long wrong = 0;
    for (const auto& s : batch) {
        Eigen::Index pred;
        forward_ss(params, s.x).r.back().maxCoeff(&pred);
        if (static_cast<int>(pred) != s.label) ++wrong;
    }
    return double(wrong) / double(batch.size());
}

/* Total derivative of H w.r.t. each W_i through the steady-state map:
 *   dH/dW_i = -J_i^T (J Q + at*I)^{-T} Q^T Q u_ss r_{i-1}^T  (mean over batch)
 * with every factor evaluated at the controlled steady state. */
inline std::vector<Mat> grad_H_analytic(const NetworkParams& params, const Batch& batch,
                                        const SimConfig& cfg, double residual_tol = 1e-7) {
    const int L = params.depth();
    const int n_out = params.output_dim();
    const auto off = params.unit_offsets();
    const Mat Qcat = stack_feedback(params);
    std::vector<Mat> g;
    for (const auto& l : params.layers) g.push_back(Mat::Zero(l.W.rows(), l.W.cols()));

    for (const auto& sample : batch) {
        const SimResult res = equilibrium(params, sample, cfg, residual_tol);
        const SimState& s = res.state;
        const Mat J = jacobian(params, acts_of(s));
        const Mat A = J * Qcat + cfg.alpha_tilde * Mat::Identity(n_out, n_out);
        Eigen::PartialPivLU<Mat> lu(A.transpose());
        const double rc = lu.rcond();
        if (!(rc > 1e-13))
            throw NumericError("gradient solve is near-singular (rcond " + std::to_string(rc) +
                               "); alpha_tilde too small for this feedback configuration?");
        const Vec y = lu.solve(Qcat.transpose() * (Qcat * s.ctrl.u));
        for (int i = 0; i < L; ++i) {
            const Vec& pre = (i == 0) ? s.r0 : s.r[i - 1];
            const int n_i = static_cast<int>(params.layers[i].W.rows());
            g[i].noalias() -= (J.middleCols(off[i], n_i).transpose() * y) * pre.transpose();
        }
    }
    for (auto& gi : g) gi /= double(batch.size());
    return g;
}

/* Brute-force reference: central differences of surrogate_loss, re-solving
 * the equilibrium at every perturbed weight. O(#weights) simulations — for
 * small verification nets only. */
inline std::vector<Mat> grad_H_oracle(const NetworkParams& params, const Batch& batch,
                                      const SimConfig& cfg, double h = 1e-4) {
    if (h <= 0) throw ConfigError("finite-difference step must be positive");
    std::vector<Mat> g;
    NetworkParams work = params;
    for (int i = 0; i < params.depth(); ++i) {
        Mat gi(params.layers[i].W.rows(), params.layers[i].W.cols());
        for (int a = 0; a < gi.rows(); ++a) {
            for (int b = 0; b < gi.cols(); ++b) {
                const double orig = work.layers[i].W(a, b);
                work.layers[i].W(a, b) = orig + h;
                const double hp = surrogate_loss(work, batch, cfg);
                work.layers[i].W(a, b) = orig - h;
                const double hm = surrogate_loss(work, batch, cfg);
                work.layers[i].W(a, b) = orig;
                gi(a, b) = (hp - hm) / (2.0 * h);
            }
        }
        g.push_back(std::move(gi));
    }
    return g;
}

/* Feedback weights equal to the transposed output Jacobian at the given
 * activations: Q_i = (dr_L/dv_i)^T. */
inline std::vector<Mat> ideal_feedback(const NetworkParams& params, const LayerActivations& acts) {
    const Mat J = jacobian(params, acts);
    const auto off = params.unit_offsets();
    std::vector<Mat> q;
    for (int i = 0; i < params.depth(); ++i) {
        const int n_i = static_cast<int>(params.layers[i].W.rows());
        q.push_back(J.middleCols(off[i], n_i).transpose());
    }
    return q;
}

/* Fixed point of Q <- J(v_ss(Q))^T for one sample: ideal feedback evaluated
 * at the steady state the ideal feedback itself produces. Seeded from the
 * feedforward-state Jacobian; converges in a few sweeps on the small nets
 * the theory checks use. */
inline NetworkParams self_consistent_ideal_feedback(NetworkParams params, const Sample& sample,
                                                    const SimConfig& cfg, int max_iters = 40,
                                                    double rel_tol = 1e-12);

inline void set_feedback(NetworkParams& params, const std::vector<Mat>& q) {
    for (int i = 0; i < params.depth(); ++i) {
        if (q[i].rows() != params.layers[i].Q.rows() || q[i].cols() != params.layers[i].Q.cols())
            throw ShapeError("feedback replacement has wrong shape at layer " +
                             std::to_string(i + 1));
        params.layers[i].Q = q[i];
    }
}

inline NetworkParams self_consistent_ideal_feedback(NetworkParams params, const Sample& sample,
                                                    const SimConfig& cfg, int max_iters,
                                                    double rel_tol) {
    std::vector<Mat> q = ideal_feedback(params, forward_ss(params, sample.x));
    set_feedback(params, q);
    for (int iter = 0; iter < max_iters; ++iter) {
        const SimResult res = equilibrium(params, sample, cfg);
        const std::vector<Mat> q_new = ideal_feedback(params, acts_of(res.state));
        double delta = 0, norm = 0;
        for (size_t i = 0; i < q.size(); ++i) {
            delta += (q_new[i] - q[i]).squaredNorm();
            norm += q_new[i].squaredNorm();
        }
        q = q_new;
        set_feedback(params, q);
        if (std::sqrt(delta) <= rel_tol * std::sqrt(norm)) return params;
    }
    throw NumericError("ideal-feedback fixed point did not settle");
}

/* ||P Q||_F / ||Q||_F with P the orthogonal projector onto Row(J); 1 exactly
 * when Col(Q) lies inside Row(J). Falls back to a ridge inverse when J J^T
 * is numerically singular (flagged through *ridged). */
inline double condition1_ratio(const NetworkParams& params, const LayerActivations& acts,
                               bool* ridged = nullptr) {
    const Mat Qcat = stack_feedback(params);
    const double qn = Qcat.norm();
    if (qn == 0) throw NumericError("condition-1 ratio undefined for zero feedback weights");
    const Mat J = jacobian(params, acts);
    Mat G = J * J.transpose();
    Eigen::LDLT<Mat> ldlt(G);
    bool used_ridge = false;
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
        G += 1e-10 * Mat::Identity(G.rows(), G.cols());
        ldlt.compute(G);
        used_ridge = true;
    }
    if (ridged) *ridged = used_ridge;
    const Mat PQ = J.transpose() * ldlt.solve(J * Qcat);
    return PQ.norm() / qn;
}

struct StabilityReport {
    Eigen::VectorXcd reduced_eigs;  // spectrum of -J_ss Q
    Eigen::VectorXcd full_eigs;     // spectrum of the coupled linearization
    double max_re_reduced = 0;
    double max_re_full = 0;
    bool condition2_ok = false;
};

/* Reduced-system check: every eigenvalue of -J_ss Q must have real part
 * below alpha for the controlled fixed point to attract. */
inline StabilityReport condition2_check(const NetworkParams& params, const LayerActivations& acts,
                                        double alpha) {
    const Mat J = jacobian(params, acts);
    const Mat JQ = J * stack_feedback(params);
    Eigen::EigenSolver<Mat> es(-JQ, false);
    if (es.info() != Eigen::Success) throw NumericError("eigensolver failed on -JQ");
    StabilityReport rep;
    rep.reduced_eigs = es.eigenvalues();
    rep.max_re_reduced = rep.reduced_eigs.real().maxCoeff();
    rep.condition2_ok = rep.max_re_reduced < alpha;
    return rep;
}

/* Jacobian of the coupled (v, u) dynamics the integrator actually runs:
 *   dv = (1/tau_v)(-(I - W phi')v-part + Q u-part)
 *   du = (1/tau_u)(e - at*u) + k de/dt,  e-linearization -S phi'
 * Reduces at k = 0 to [[-(I-Wphi')/tau_v, Q/tau_v], [-Sphi'/tau_u, -at/tau_u]].
 * Valid for the squared-error controller error. */
inline StabilityReport full_stability_jacobian(const NetworkParams& params,
                                               const LayerActivations& acts,
                                               const SimConfig& cfg) {
    const BlockMatrices bm = block_matrices(params, acts);
    const int N = params.total_units();
    const int n = params.output_dim();
    const Mat Qcat = stack_feedback(params);
    const Mat IWP = Mat::Identity(N, N) - bm.W_block * bm.phi_prime;
    const Mat SP = bm.S * bm.phi_prime;

    Mat A(N + n, N + n);
    A.topLeftCorner(N, N) = -IWP / cfg.tau_v;
    A.topRightCorner(N, n) = Qcat / cfg.tau_v;
    A.bottomLeftCorner(n, N) = -SP / cfg.tau_u + (cfg.k / cfg.tau_v) * SP * IWP;
    A.bottomRightCorner(n, n) = -(cfg.alpha_tilde / cfg.tau_u) * Mat::Identity(n, n) -
                                (cfg.k / cfg.tau_v) * SP * Qcat;

    Eigen::EigenSolver<Mat> es(A, false);
    if (es.info() != Eigen::Success) throw NumericError("eigensolver failed on full jacobian");
    StabilityReport rep = condition2_check(params, acts, cfg.alpha_tilde);
    rep.full_eigs = es.eigenvalues();
    rep.max_re_full = rep.full_eigs.real().maxCoeff();
    return rep;
}

/* Max elementwise gap in the rescaled-Jacobian identity
 *   J (aI - W phi')^{-1} (I - W phi') = [a^{-L} J_1, ..., a^{-1} J_L]. */
inline double scaled_jacobian_identity(const NetworkParams& params, const LayerActivations& acts,
                                       double a) {
    if (a == 0) throw ConfigError("scale factor a must be nonzero");
    const BlockMatrices bm = block_matrices(params, acts);
    const int N = params.total_units();
    const Mat J = jacobian(params, acts);
    const Mat lhs = J * (a * Mat::Identity(N, N) - bm.W_block * bm.phi_prime)
                            .partialPivLu()
                            .solve(Mat::Identity(N, N) - bm.W_block * bm.phi_prime);
    Mat rhs = J;
    const auto off = params.unit_offsets();
    const int L = params.depth();
    for (int i = 0; i < L; ++i)
        rhs.middleCols(off[i], params.layers[i].W.rows()) *= std::pow(a, -double(L - i));
    return (lhs - rhs).cwiseAbs().maxCoeff();
}

/* ||(JQ + at*I)^{-1} J - Q^+||_F — vanishes as at -> 0 when the feedback
 * spans align (the local-update limit). */
inline double pinv_limit_gap(const NetworkParams& params, const LayerActivations& acts,
                             double alpha_tilde) {
    const Mat J = jacobian(params, acts);
    const Mat Qcat = stack_feedback(params);
    const int n = params.output_dim();
    const Mat lhs =
        (J * Qcat + alpha_tilde * Mat::Identity(n, n)).partialPivLu().solve(J);
    const Mat pinv = Qcat.completeOrthogonalDecomposition().pseudoInverse();
    return (lhs - pinv).norm();
}

/* Comparison report between two per-layer gradient (or update) stacks. */
struct GradReport {
    std::vector<Mat> analytic;
    std::vector<Mat> oracle;
    std::vector<double> layer_rel_error;
    double max_rel_error = 0;
    double angle_deg = 0;  // angle between the concatenated vectorizations
};

inline double concat_angle_deg(const std::vector<Mat>& a, const std::vector<Mat>& b) {
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += (a[i].array() * b[i].array()).sum();
        na += a[i].squaredNorm();
        nb += b[i].squaredNorm();
    }
    if (na == 0 || nb == 0) throw NumericError("angle undefined for zero vector");
    const double c = std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
    return std::acos(c) * 180.0 / 3.14159265358979323846;
}

inline GradReport compare_gradients(std::vector<Mat> analytic, std::vector<Mat> oracle) {
    GradReport rep;
    for (size_t i = 0; i < analytic.size(); ++i) {
        const double on = oracle[i].norm();
        const double diff = (analytic[i] - oracle[i]).norm();
        rep.layer_rel_error.push_back(on > 0 ? diff / on : (diff > 0 ? INFINITY : 0.0));
        rep.max_rel_error = std::max(rep.max_rel_error, rep.layer_rel_error.back());
    }
    rep.angle_deg = concat_angle_deg(analytic, oracle);
    rep.analytic = std::move(analytic);
    rep.oracle = std::move(oracle);
    return rep;
}

}  // namespace sdfc
