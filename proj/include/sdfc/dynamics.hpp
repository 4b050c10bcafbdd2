#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <vector>

#include "sdfc/controller.hpp"
#include "sdfc/network.hpp"
#include "sdfc/rng.hpp"

namespace sdfc {

struct SimConfig {
    double dt = 0.02;
    long m_max = 1000;
    double tau_v = 0.2;
    double tau_u = 1.0;
    double tau_eps = 0.2;
    double tau_f = 10.0;
    double sigma = 0.0;
    double k = 0.0;             // proportional gain
    double alpha_tilde = 1e-3;  // effective controller leak
    TargetMode target_mode = StrongTrue{};
    LossKind loss = SquaredError{};
    std::uint64_t noise_seed = 0;
    bool record_trajectory = false;
    double blowup = 1e6;    // ||v||_inf above this counts as divergence
    double settle_tol = 0;  // >0: stop early once controller and membrane residuals
                            // drop below this (relative); deterministic runs only

    void validate() const {
        if (dt <= 0 || tau_v <= 0 || tau_u <= 0 || tau_eps <= 0 || tau_f <= 0)
            throw ConfigError("sim: dt and all time constants must be positive");
        if (m_max < 1) throw ConfigError("sim: m_max must be >= 1");
        if (sigma < 0 || alpha_tilde < 0 || k < 0)
            throw ConfigError("sim: sigma, alpha_tilde, k must be >= 0");
        if (settle_tol < 0) throw ConfigError("sim: settle_tol must be >= 0");
        if (settle_tol > 0 && sigma > 0)
            throw ConfigError("sim: settle_tol requires sigma = 0 (noisy runs need the full window)");
        if (dt > 0.5 * std::min(tau_v, tau_eps))
            std::cerr << "warning: dt = " << dt << " is coarse for tau_v/tau_eps = "
                      << std::min(tau_v, tau_eps) << "; integration may be inaccurate\n";
    }
};

/* Full per-sample simulation state. After every step: r_i = phi(v_i),
 * v_fb_i = Q_i u + sigma*eps_i, and ctrl.u = ctrl.u_int + k*e. */
struct SimState {
    Vec r0;  // clamped input
    std::vector<Vec> v, r, v_ff, v_fb;
    std::vector<Vec> eps;
    ControllerState ctrl;
    Vec u_lp;                 // low-pass of u (the subtracted average)
    std::vector<Vec> r_lp;    // low-pass of r, per layer
    ControlTarget target;
    long step = 0;            // absolute steps taken (survives resume)
    bool u_lp_warm = false;   // u_lp initializes to the first post-step u
};

struct TrajectoryRow {
    long step;
    std::vector<double> v_norms;
    double u_norm;
    double e_norm;
    double h_integrand;  // 0.5*||Q u||^2 at this step
};

struct Trajectory {
    std::vector<TrajectoryRow> rows;

    void write_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw Error("cannot open trajectory file " + path);
        out << "step";
        const size_t L = rows.empty() ? 0 : rows.front().v_norms.size();
        for (size_t i = 1; i <= L; ++i) out << ",v" << i << "_norm";
        out << ",u_norm,e_norm,h_integrand\n";
        const auto cell = [&out](double v) {
            char buf[32];
            std::snprintf(buf, sizeof buf, ",%.12g", v);
            out << buf;
        };
        for (const auto& row : rows) {
            out << row.step;
            for (double vn : row.v_norms) cell(vn);
            cell(row.u_norm);
            cell(row.e_norm);
            cell(row.h_integrand);
            out << '\n';
        }
    }
};

/* One Euler-Maruyama step of the OU noise:
 *   eps[m+1] = eps[m] + (1/tau_eps)(-eps[m]*dt + sqrt(dt)*dbeta).
 * dbeta must be unit gaussians; stationary variance approaches 1/(2 tau_eps). */
inline Vec ou_step(const Vec& eps, double dt, double tau_eps, const Vec& dbeta) {
    return eps + (1.0 / tau_eps) * (-eps * dt + std::sqrt(dt) * dbeta);
}

inline Vec ou_step(const Vec& eps, double dt, double tau_eps, Rng& rng) {
    Vec dbeta(eps.size());
    for (Eigen::Index i = 0; i < dbeta.size(); ++i) dbeta[i] = rng.gaussian();
    return ou_step(eps, dt, tau_eps, dbeta);
}

/* Exponential moving average: ybar += (dt/tau_f)(y_new - ybar). */
inline Vec lowpass_step(const Vec& ybar, const Vec& y_new, double dt, double tau_f) {
    return ybar + (dt / tau_f) * (y_new - ybar);
}

}  // namespace sdfc
