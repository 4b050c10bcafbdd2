#pragma once

#include <cmath>
#include <vector>

#include "sdfc/dynamics.hpp"
#include "sdfc/network.hpp"

namespace sdfc {

/* Per-layer increment accumulator. Increments are summed over the simulation
 * steps of a sample and divided by the step count at finalize(); merged
 * across samples in fixed order by the harness. */
struct UpdateBuffer {
    std::vector<Mat> dW;
    std::vector<Vec> db;
    std::vector<Mat> dQ;
    long steps_accumulated = 0;
    bool finalized = false;

    static UpdateBuffer zeroed(const NetworkParams& params) {
        UpdateBuffer b;
        for (const auto& l : params.layers) {
            b.dW.push_back(Mat::Zero(l.W.rows(), l.W.cols()));
            b.db.push_back(Vec::Zero(l.b.size()));
            b.dQ.push_back(Mat::Zero(l.Q.rows(), l.Q.cols()));
        }
        return b;
    }

    void merge(const UpdateBuffer& o) {
        for (size_t i = 0; i < dW.size(); ++i) {
            dW[i] += o.dW[i];
            db[i] += o.db[i];
            dQ[i] += o.dQ[i];
        }
        steps_accumulated += o.steps_accumulated;
    }

    void scale(double c) {
        for (size_t i = 0; i < dW.size(); ++i) {
            dW[i] *= c;
            db[i] *= c;
            dQ[i] *= c;
        }
    }

    void finalize() {
        if (finalized) throw StaleStateError("buffer already finalized");
        if (steps_accumulated > 0) scale(1.0 / double(steps_accumulated));
        finalized = true;
    }
};

/* Forward-weight increment for one layer:
 *   dW_i = (phi(v_i) - phi(v_i^ff)) * pre^T,
 * pre = r_{i-1} raw, or its low-pass when debiasing (the raw rule picks up a
 * noise-correlation bias; filtering the pre-synaptic factor removes it). */
inline Mat forward_increment_layer(const SimState& s, const NetworkParams& params, int i,
                                   bool debias) {
    const auto& layer = params.layers[i];
    const Vec post = activate(layer.activation, s.v[i]) - activate(layer.activation, s.v_ff[i]);
    const Vec& pre = (i == 0) ? s.r0 : (debias ? s.r_lp[i - 1] : s.r[i - 1]);
    return post * pre.transpose();
}

inline Vec bias_increment_layer(const SimState& s, const NetworkParams& params, int i) {
    const auto& layer = params.layers[i];
    return s.r[i] - activate(layer.activation, s.v_ff[i]);
}

inline std::vector<Mat> forward_increment(const SimState& s, const NetworkParams& params,
                                          bool debias) {
    std::vector<Mat> out;
    out.reserve(params.layers.size());
    for (int i = 0; i < params.depth(); ++i)
        out.push_back(forward_increment_layer(s, params, i, debias));
    return out;
}

/* Anti-Hebbian feedback increment for layer i (0-based):
 *   dQ_i = -(1 + tau_v/tau_eps)^{L-1-i} * v_fb_i * (u - u_lp)^T - beta * Q_i.
 * The exponential factor undoes the per-layer attenuation of the
 * noise-correlation signal on its way to the output. Must be evaluated with
 * v_fb_i still at the previous step and the controller already advanced. */
inline Mat feedback_increment(const SimState& s, const NetworkParams& params, int i, double tau_v,
                              double tau_eps, double beta, bool scaled = true) {
    if (!s.u_lp_warm) throw StaleStateError("feedback increment before u low-pass is warm");
    const int L = params.depth();
    const double factor = scaled ? std::pow(1.0 + tau_v / tau_eps, double(L - 1 - i)) : 1.0;
    const Vec u_hp = s.ctrl.u - s.u_lp;
    return -factor * s.v_fb[i] * u_hp.transpose() - beta * params.layers[i].Q;
}

/* Idealized update from a converged noiseless state:
 *   dW_i = (v_i - v_i^ff) r_{i-1}^T,  db_i = v_i - v_i^ff,
 * which equals Q_i u_ss (r_{i-1})^T at equilibrium. Refuses stale states. */
inline UpdateBuffer steady_state_update(const NetworkParams& params, const SimState& s,
                                        double alpha_tilde, double tol = 1e-6) {
    const Vec e = control_error(s.target, s.r.back());
    const double resid = (e - alpha_tilde * s.ctrl.u).norm();
    if (resid > tol * (1.0 + s.ctrl.u.norm()))
        throw StaleStateError("steady-state update from unconverged state, residual " +
                              std::to_string(resid));
    UpdateBuffer b = UpdateBuffer::zeroed(params);
    for (int i = 0; i < params.depth(); ++i) {
        const Vec delta = s.v[i] - s.v_ff[i];
        const Vec& pre = (i == 0) ? s.r0 : s.r[i - 1];
        b.dW[i] = delta * pre.transpose();
        b.db[i] = delta;
    }
    b.finalized = true;
    return b;
}

struct OptimizerConfig {
    enum class Kind { PlainSGD, SGDMomentum };
    Kind kind = Kind::PlainSGD;
    double mu = 0.9;  // momentum coefficient, used by SGDMomentum only
    double lr_forward = 1e-3;
    double lr_feedback = 1e-2;

    /* velocity state, lazily shaped on first apply */
    std::vector<Mat> vW, vQ;
    std::vector<Vec> vb;

    void validate() const {
        if (lr_forward <= 0 || lr_feedback <= 0) throw ConfigError("optimizer: lr must be > 0");
        if (mu < 0 || mu >= 1) throw ConfigError("optimizer: momentum must be in [0,1)");
    }
};

/* W <- W + lr_forward * (optimizer-transformed dW); likewise b, and Q with
 * lr_feedback. Functional: returns new params, original untouched. */
inline NetworkParams apply_updates(const NetworkParams& params, const UpdateBuffer& buffer,
                                   OptimizerConfig& opt) {
    if (!buffer.finalized) throw StaleStateError("apply_updates needs a finalized buffer");
    const bool momentum = opt.kind == OptimizerConfig::Kind::SGDMomentum;
    if (momentum && opt.vW.empty()) {
        for (const auto& l : params.layers) {
            opt.vW.push_back(Mat::Zero(l.W.rows(), l.W.cols()));
            opt.vb.push_back(Vec::Zero(l.b.size()));
            opt.vQ.push_back(Mat::Zero(l.Q.rows(), l.Q.cols()));
        }
    }
    NetworkParams out = params;
    for (int i = 0; i < params.depth(); ++i) {
        Mat stepW = buffer.dW[i];
        Vec stepb = buffer.db[i];
        Mat stepQ = buffer.dQ[i];
        if (momentum) {
            opt.vW[i] = opt.mu * opt.vW[i] + stepW;
            opt.vb[i] = opt.mu * opt.vb[i] + stepb;
            opt.vQ[i] = opt.mu * opt.vQ[i] + stepQ;
            stepW = opt.vW[i];
            stepb = opt.vb[i];
            stepQ = opt.vQ[i];
        }
        out.layers[i].W += opt.lr_forward * stepW;
        out.layers[i].b += opt.lr_forward * stepb;
        out.layers[i].Q += opt.lr_feedback * stepQ;
        if (!out.layers[i].W.allFinite() || !out.layers[i].b.allFinite() ||
            !out.layers[i].Q.allFinite())
            throw NumericError("non-finite parameter after update in layer " + std::to_string(i + 1));
    }
    return out;
}

}  // namespace sdfc
