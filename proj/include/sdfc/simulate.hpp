#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "sdfc/dynamics.hpp"
#include "sdfc/plasticity.hpp"

namespace sdfc {

struct PlasticityOpts {
    bool forward = false;
    bool feedback = false;
    bool debias = true;
    double beta = 1e-4;           // feedback weight decay
    bool feedback_scaling = true; // (1 + tau_v/tau_eps)^{L-1-i} factor
};

struct SimOptions {
    PlasticityOpts plasticity;
    std::uint64_t sample_index = 0;   // keys the per-sample noise stream
    const SimState* resume = nullptr; // continue a previous run of the same sample
};

struct SampleDiagnostics {
    Vec e_ss, u_ss;
    double h_contribution = 0;       // 0.5*||Q u_ss||^2
    double fixed_point_residual = 0; // ||e_ss - alpha_tilde * u_ss||
    double fb_ff_ratio = 0;          // ||Qu||_F / ||Wr||_F at the final state
};

struct SimResult {
    SimState state;
    UpdateBuffer buffer;
    SampleDiagnostics diag;
    Trajectory trajectory;
};

/* Integrate one sample for cfg.m_max Euler-Maruyama steps.
 *
 * Step order within one iteration (the layered structure of the update):
 *   1. e from the current output rate
 *   2. controller integrates e (so u is at step m+1), u low-pass follows
 *   3. layers in order 1..L: feedback increment first (pairing the previous
 *      step's v_fb with the fresh high-passed u), then OU noise, feedback
 *      and feedforward compartments, membrane update, rate, rate low-pass
 *      (layer i reads layer i-1's already-updated rate)
 *   4. forward/bias increments from the fully updated state
 *
 * State starts at the feedforward prediction with all controller and filter
 * variables cold, or continues from opts.resume. Buffers come back divided
 * by the step count of this call. */
inline SimResult simulate_sample(const NetworkParams& params, const Vec& x, const Vec& target,
                                 const SimConfig& cfg, const SimOptions& opts = {}) {
    cfg.validate();
    const int L = params.depth();
    const int n_out = params.output_dim();
    if (target.size() != n_out) throw ShapeError("target dimension does not match output layer");

    SimResult res;
    SimState& s = res.state;
    if (opts.resume) {
        if (opts.resume->step == 0) throw StaleStateError("resume state has no steps taken");
        if ((opts.resume->r0 - x).norm() != 0.0)
            throw StaleStateError("resume state belongs to a different input");
        s = *opts.resume;
    } else {
        const LayerActivations acts = forward_ss(params, x);
        s.r0 = x;
        s.v = acts.v;
        s.r = acts.r;
        s.v_ff = acts.v;
        s.target = resolve_target(cfg.target_mode, cfg.loss, target, acts.r.back());
        s.ctrl.u = Vec::Zero(n_out);
        s.ctrl.u_int = Vec::Zero(n_out);
        s.u_lp = Vec::Zero(n_out);
        for (int i = 0; i < L; ++i) {
            const int n_i = static_cast<int>(params.layers[i].W.rows());
            s.v_fb.push_back(Vec::Zero(n_i));
            s.eps.push_back(Vec::Zero(n_i));
            s.r_lp.push_back(s.r[i]);
        }
    }

    res.buffer = UpdateBuffer::zeroed(params);
    const PlasticityOpts& pl = opts.plasticity;
    const double dt = cfg.dt;

    for (long m = 1; m <= cfg.m_max; ++m) {
        const Vec e = control_error(s.target, s.r[L - 1]);
        if (s.step == 0) {
            /* cold start: u begins on its proportional path, feedback
             * compartments see that initial u, noise starts at zero */
            s.ctrl.u = cfg.k * e;
            for (int i = 0; i < L; ++i) s.v_fb[i].noalias() = params.layers[i].Q * s.ctrl.u;
        }
        s.ctrl = controller_step(s.ctrl, e, dt, cfg.tau_u, cfg.alpha_tilde, cfg.k);
        if (!s.u_lp_warm) {
            s.u_lp = s.ctrl.u;
            s.u_lp_warm = true;
        } else {
            s.u_lp = lowpass_step(s.u_lp, s.ctrl.u, dt, cfg.tau_f);
        }

        for (int i = 0; i < L; ++i) {
            const auto& layer = params.layers[i];
            if (pl.feedback)
                res.buffer.dQ[i] +=
                    feedback_increment(s, params, i, cfg.tau_v, cfg.tau_eps, pl.beta,
                                       pl.feedback_scaling);
            if (cfg.sigma > 0) {
                Vec dbeta(s.eps[i].size());
                for (Eigen::Index j = 0; j < dbeta.size(); ++j)
                    dbeta[j] = keyed_gaussian(cfg.noise_seed, opts.sample_index,
                                              std::uint64_t(i), std::uint64_t(s.step + 1),
                                              std::uint64_t(j));
                s.eps[i] = ou_step(s.eps[i], dt, cfg.tau_eps, dbeta);
            }
            s.v_fb[i].noalias() = layer.Q * s.ctrl.u;
            if (cfg.sigma > 0) s.v_fb[i] += cfg.sigma * s.eps[i];
            const Vec& pre = (i == 0) ? s.r0 : s.r[i - 1];
            s.v_ff[i].noalias() = layer.W * pre;
            s.v_ff[i] += layer.b;
            s.v[i] += (dt / cfg.tau_v) * (s.v_ff[i] + s.v_fb[i] - s.v[i]);
            s.r[i] = activate(layer.activation, s.v[i]);
            s.r_lp[i] = lowpass_step(s.r_lp[i], s.r[i], dt, cfg.tau_f);
        }

        if (pl.forward) {
            for (int i = 0; i < L; ++i) {
                res.buffer.dW[i] += forward_increment_layer(s, params, i, pl.debias);
                res.buffer.db[i] += bias_increment_layer(s, params, i);
            }
        }
        res.buffer.steps_accumulated++;
        s.step++;

        for (int i = 0; i < L; ++i)
            if (!s.v[i].allFinite() || s.v[i].cwiseAbs().maxCoeff() > cfg.blowup)
                throw DivergenceError("layer " + std::to_string(i + 1) + " state diverged",
                                      s.step);
        if (!s.ctrl.u.allFinite()) throw DivergenceError("controller state diverged", s.step);

        if (cfg.record_trajectory) {
            TrajectoryRow row;
            row.step = s.step;
            double h = 0;
            for (int i = 0; i < L; ++i) {
                row.v_norms.push_back(s.v[i].norm());
                h += (params.layers[i].Q * s.ctrl.u).squaredNorm();
            }
            row.u_norm = s.ctrl.u.norm();
            row.e_norm = e.norm();
            row.h_integrand = 0.5 * h;
            res.trajectory.rows.push_back(row);
        }

        if (cfg.settle_tol > 0) {
            const Vec e_now = control_error(s.target, s.r[L - 1]);
            double resid = (e_now - cfg.alpha_tilde * s.ctrl.u).norm() /
                           (1.0 + s.ctrl.u.norm());
            for (int i = 0; i < L; ++i)
                resid = std::max(resid, (s.v_ff[i] + s.v_fb[i] - s.v[i]).norm() /
                                            (1.0 + s.v[i].norm()));
            if (resid < cfg.settle_tol) break;
        }
    }

    res.buffer.finalize();

    const Vec e_final = control_error(s.target, s.r[L - 1]);
    res.diag.e_ss = e_final;
    res.diag.u_ss = s.ctrl.u;
    res.diag.fixed_point_residual = (e_final - cfg.alpha_tilde * s.ctrl.u).norm();
    double fb2 = 0, ff2 = 0;
    for (int i = 0; i < L; ++i) {
        fb2 += (params.layers[i].Q * s.ctrl.u).squaredNorm();
        const Vec& pre = (i == 0) ? s.r0 : s.r[i - 1];
        ff2 += (params.layers[i].W * pre).squaredNorm();
    }
    res.diag.h_contribution = 0.5 * fb2;
    res.diag.fb_ff_ratio = ff2 > 0 ? std::sqrt(fb2 / ff2) : std::numeric_limits<double>::quiet_NaN();
    return res;
}

}  // namespace sdfc
