#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "sdfc/config.hpp"
#include "sdfc/data.hpp"
#include "sdfc/simulate.hpp"
#include "sdfc/theory.hpp"

namespace sdfc {

enum class Method { StrongDFC, StrongDFCTwoPhase, StrongDFCIdeal, DFC, BP, BPShallow };

inline Method parse_method(const std::string& s) {
    if (s == "strong_dfc") return Method::StrongDFC;
    if (s == "strong_dfc_two_phase") return Method::StrongDFCTwoPhase;
    if (s == "strong_dfc_ideal") return Method::StrongDFCIdeal;
    if (s == "dfc") return Method::DFC;
    if (s == "bp") return Method::BP;
    if (s == "bp_shallow") return Method::BPShallow;
    throw ConfigError("unknown method `" + s + "`");
}

inline bool uses_dynamics(Method m) { return m != Method::BP && m != Method::BPShallow; }

enum class DivergencePolicy { Abort, Skip };

struct RunConfig {
    Method method = Method::StrongDFCIdeal;
    long epochs = 10;
    long batch_size = 32;
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    long metric_cadence = 1;
    long probe_samples = 64;
    long probe_m_max = 0;  // 0 = 4 * sim.m_max
    DivergencePolicy policy = DivergencePolicy::Abort;

    enum class DataKind { Teacher, Idx } data_kind = DataKind::Teacher;
    long n_samples = 500;
    long n_heldout = 500;
    bool regenerate_per_epoch = false;
    TeacherSpec teacher;
    long val_count = 5000;
    std::string train_images, train_labels, test_images, test_labels;

    std::vector<int> arch{30, 50, 50, 50, 5};
    ActivationKind hidden_activation = ActivationKind::Tanh;

    SimConfig sim;
    OptimizerConfig opt;
    PlasticityOpts plasticity;

    long pretrain_epochs = 0;
    double pretrain_alpha_tilde = 1.0;
    double pretrain_sigma = 0.05;
    double pretrain_threshold = 0.9;

    double train_ss_tol = 1e-3;  // staleness bound for training-time updates

    static RunConfig from_config(Config& c) {
        RunConfig r;
        r.method = parse_method(c.require_string("run.method"));
        r.epochs = c.get_long("run.epochs", r.epochs);
        r.batch_size = c.get_long("run.batch_size", r.batch_size);
        r.seed = std::uint64_t(c.get_long("run.seed", 1));
        r.out_dir = c.get_string("run.out_dir", r.out_dir);
        r.metric_cadence = c.get_long("run.metric_cadence", r.metric_cadence);
        r.probe_samples = c.get_long("run.probe_samples", r.probe_samples);
        r.probe_m_max = c.get_long("run.probe_m_max", 0);
        const std::string pol = c.get_string("run.divergence_policy", "auto");
        if (pol == "abort")
            r.policy = DivergencePolicy::Abort;
        else if (pol == "skip")
            r.policy = DivergencePolicy::Skip;
        else if (pol == "auto")
            r.policy = (r.method == Method::StrongDFC || r.method == Method::StrongDFCTwoPhase ||
                        r.method == Method::DFC)
                           ? DivergencePolicy::Skip
                           : DivergencePolicy::Abort;
        else
            throw ConfigError("run.divergence_policy must be abort, skip, or auto");

        const std::string kind = c.get_string("data.kind", "teacher");
        if (kind == "teacher")
            r.data_kind = DataKind::Teacher;
        else if (kind == "idx")
            r.data_kind = DataKind::Idx;
        else
            throw ConfigError("data.kind must be teacher or idx");
        r.n_samples = c.get_long("data.n_samples", r.n_samples);
        r.n_heldout = c.get_long("data.n_heldout", r.n_heldout);
        r.regenerate_per_epoch = c.get_bool("data.regenerate_per_epoch", false);
        r.val_count = c.get_long("data.val_count", r.val_count);
        r.train_images = c.get_string("data.train_images", "");
        r.train_labels = c.get_string("data.train_labels", "");
        r.test_images = c.get_string("data.test_images", "");
        r.test_labels = c.get_string("data.test_labels", "");
        r.teacher.sizes = c.get_sizes("teacher.sizes", r.teacher.sizes);
        r.teacher.seed = std::uint64_t(c.get_long("teacher.seed", 1));
        r.teacher.gain = c.get_double("teacher.gain", r.teacher.gain);

        r.arch = c.get_sizes("arch.sizes", r.arch);
        const std::string act = c.get_string("arch.hidden_activation", "tanh");
        if (act == "tanh")
            r.hidden_activation = ActivationKind::Tanh;
        else if (act == "linear")
            r.hidden_activation = ActivationKind::Linear;
        else
            throw ConfigError("arch.hidden_activation must be tanh or linear");

        r.sim.dt = c.get_double("sim.dt", r.sim.dt);
        r.sim.m_max = c.get_long("sim.m_max", r.sim.m_max);
        r.sim.tau_v = c.get_double("sim.tau_v", r.sim.tau_v);
        r.sim.tau_u = c.get_double("sim.tau_u", r.sim.tau_u);
        r.sim.tau_eps = c.get_double("sim.tau_eps", r.sim.tau_eps);
        r.sim.tau_f = c.get_double("sim.tau_f", r.sim.tau_f);
        r.sim.sigma = c.get_double("sim.sigma", r.sim.sigma);
        r.sim.k = c.get_double("sim.k", r.sim.k);
        r.sim.alpha_tilde = c.get_double("sim.alpha_tilde", r.sim.alpha_tilde);
        r.sim.blowup = c.get_double("sim.blowup", r.sim.blowup);
        r.sim.settle_tol = c.get_double("sim.settle_tol", r.sim.settle_tol);
        r.sim.record_trajectory = c.get_bool("sim.record_trajectory", false);
        r.sim.noise_seed = std::uint64_t(c.get_long("sim.noise_seed",
                                                    long(mix_key(r.seed, 0x6e6f697365ull))));

        const std::string lk = c.get_string("loss.kind", "squared_error");
        const double mass = c.get_double("loss.soft_target_mass", 0.99);
        if (lk == "squared_error")
            r.sim.loss = SquaredError{};
        else if (lk == "softmax_ce")
            r.sim.loss = SoftmaxCrossEntropy{mass};
        else
            throw ConfigError("loss.kind must be squared_error or softmax_ce");
        const double lambda = c.get_double("loss.lambda", 0.1);
        r.sim.target_mode =
            (r.method == Method::DFC) ? TargetMode(WeakNudged{lambda}) : TargetMode(StrongTrue{});

        const std::string ok = c.get_string("opt.kind", "sgd");
        if (ok == "sgd")
            r.opt.kind = OptimizerConfig::Kind::PlainSGD;
        else if (ok == "momentum")
            r.opt.kind = OptimizerConfig::Kind::SGDMomentum;
        else
            throw ConfigError("opt.kind must be sgd or momentum");
        r.opt.mu = c.get_double("opt.momentum", r.opt.mu);
        r.opt.lr_forward = c.get_double("opt.lr_forward", r.opt.lr_forward);
        r.opt.lr_feedback = c.get_double("opt.lr_feedback", r.opt.lr_feedback);

        r.pretrain_epochs = c.get_long("pretrain.epochs", 0);
        r.pretrain_alpha_tilde = c.get_double("pretrain.alpha_tilde", 1.0);
        r.pretrain_sigma = c.get_double("pretrain.sigma", 0.05);
        r.pretrain_threshold = c.get_double("pretrain.threshold", 0.9);

        r.plasticity.beta = c.get_double("plasticity.beta", 1e-4);
        r.plasticity.debias = c.get_bool("plasticity.debias", true);
        r.plasticity.feedback_scaling = c.get_bool("plasticity.feedback_scaling", true);

        c.reject_unknown_keys();
        r.validate();
        return r;
    }

    void validate() const {
        if (epochs < 0 || batch_size < 1 || metric_cadence < 1 || probe_samples < 1)
            throw ConfigError("run: nonsensical loop sizes");
        sim.validate();
        opt.validate();
        if (data_kind == DataKind::Idx && (train_images.empty() || train_labels.empty()))
            throw ConfigError("data.kind = idx requires data.train_images and data.train_labels");
    }

    long effective_probe_m_max() const { return probe_m_max > 0 ? probe_m_max : 4 * sim.m_max; }

    Dataset build_dataset() const {
        if (data_kind == DataKind::Teacher)
            return generate_student_teacher(teacher, n_samples, mix_key(seed, 0x64617461ull),
                                            regenerate_per_epoch, n_heldout);
        Dataset ds;
        ds.train = load_idx(train_images, train_labels);
        if (!test_images.empty()) ds.test = load_idx(test_images, test_labels);
        if (val_count > 0) apply_validation_split(ds, val_count);
        return ds;
    }

    NetworkParams init_student() const {
        return init_network(arch, hidden_activation, ActivationKind::Linear,
                            mix_key(seed, 0x696e6974ull));
    }
};

/* Fill classification targets in place for the configured loss: one-hot for
 * squared error, the soft distribution for cross-entropy. */
inline void prepare_targets(Batch& batch, const LossKind& loss, int n_out) {
    for (auto& s : batch) {
        if (s.label < 0 || s.target.size() != 0) continue;
        if (is_cross_entropy(loss)) {
            s.target = make_soft_target(n_out, s.label,
                                        std::get<SoftmaxCrossEntropy>(loss).soft_target_mass);
        } else {
            s.target = Vec::Zero(n_out);
            s.target[s.label] = 1.0;
        }
    }
}

/* Exact batch-loss gradients for the backprop baselines, returned as a
 * descent-direction buffer (already negated). shallow freezes everything
 * but the output layer. */
inline UpdateBuffer bp_update(const NetworkParams& params, const Batch& batch,
                              const LossKind& loss, bool shallow) {
    UpdateBuffer buf = UpdateBuffer::zeroed(params);
    const int L = params.depth();
    for (const auto& s : batch) {
        const LayerActivations acts = forward_ss(params, s.x);
        Vec dLdr = is_cross_entropy(loss) ? Vec(softmax(acts.r[L - 1]) - s.target)
                                          : Vec(2.0 * (acts.r[L - 1] - s.target));
        Vec delta =
            (dLdr.array() * activate_prime(params.layers[L - 1].activation, acts.v[L - 1]).array())
                .matrix();
        for (int i = L - 1; i >= 0; --i) {
            const Vec& pre = (i == 0) ? acts.r0 : acts.r[i - 1];
            buf.dW[i].noalias() -= delta * pre.transpose();
            buf.db[i] -= delta;
            if (i > 0)
                delta = (params.layers[i].W.transpose() * delta).array() *
                        activate_prime(params.layers[i - 1].activation, acts.v[i - 1]).array();
        }
    }
    buf.scale(1.0 / double(batch.size()));
    if (shallow) {
        for (int i = 0; i < L - 1; ++i) {
            buf.dW[i].setZero();
            buf.db[i].setZero();
        }
    }
    buf.finalized = true;
    return buf;
}

struct DiagnosticsRecord {
    long epoch = 0;
    double train_loss = NAN, val_loss = NAN, train_err = NAN, val_err = NAN;
    double H = NAN, angle_deg = NAN, fb_ff_ratio = NAN, con1_ratio = NAN, max_re_eig = NAN;
    long diverged = 0;
};

class MetricsWriter {
  public:
    explicit MetricsWriter(const std::string& path) : out_(path) {
        if (!out_) throw Error("cannot open metrics file " + path);
        out_ << "epoch,train_loss,val_loss,train_err,val_err,H,angle_deg,fb_ff_ratio,con1_ratio,"
                "max_re_eig,diverged\n";
        out_.flush();
    }

    void write(const DiagnosticsRecord& r) {
        out_ << r.epoch;
        for (double v : {r.train_loss, r.val_loss, r.train_err, r.val_err, r.H, r.angle_deg,
                         r.fb_ff_ratio, r.con1_ratio, r.max_re_eig})
            out_ << ',' << fmt(v);
        out_ << ',' << r.diverged << '\n';
        out_.flush();
    }

  private:
    static std::string fmt(double v) {
        if (std::isnan(v)) return "NaN";
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.12g", v);
        return buf;
    }

    std::ofstream out_;
};

struct PretrainResult {
    NetworkParams params;
    long epochs_used = 0;
    double final_ratio = 0;
    bool reached_threshold = false;
};

namespace detail {

inline double probe_ratio(const NetworkParams& params, const Batch& probe, long n = 8) {
    double total = 0;
    long used = std::min<long>(n, probe.size());
    for (long i = 0; i < used; ++i)
        total += condition1_ratio(params, forward_ss(params, probe[i].x));
    return total / double(used);
}

}  // namespace detail

/* Feedback-only training at high leak: simulate each sample with the
 * anti-Hebbian rule active, apply dQ per batch, stop once the span-overlap
 * ratio on a probe subset clears the threshold (checked before each epoch). */
inline PretrainResult pretrain_feedback(const RunConfig& cfg, NetworkParams params,
                                        const Dataset& ds) {
    PretrainResult res;
    SimConfig sim = cfg.sim;
    sim.alpha_tilde = cfg.pretrain_alpha_tilde;
    sim.sigma = cfg.pretrain_sigma;
    sim.settle_tol = 0;  // noise averaging needs the full window
    PlasticityOpts pl = cfg.plasticity;
    pl.forward = false;
    pl.feedback = true;
    OptimizerConfig opt = cfg.opt;

    const Batch probe(ds.train.begin(),
                      ds.train.begin() + std::min<long>(cfg.probe_samples, ds.train.size()));
    long diverged = 0;
    for (long epoch = 0;; ++epoch) {
        res.final_ratio = detail::probe_ratio(params, probe);
        res.epochs_used = epoch;
        if (res.final_ratio >= cfg.pretrain_threshold) {
            res.reached_threshold = true;
            break;
        }
        if (epoch >= cfg.pretrain_epochs) break;

        const Batch& train = ds.train;
        for (size_t start = 0; start < train.size(); start += cfg.batch_size) {
            const size_t stop = std::min(train.size(), start + cfg.batch_size);
            UpdateBuffer merged = UpdateBuffer::zeroed(params);
            long ok = 0;
            for (size_t idx = start; idx < stop; ++idx) {
                SimOptions opts;
                opts.plasticity = pl;
                opts.sample_index = mix_key(0x707265ull + epoch, idx);
                try {
                    merged.merge(
                        simulate_sample(params, train[idx].x, train[idx].target, sim, opts)
                            .buffer);
                    ++ok;
                } catch (const DivergenceError&) {
                    if (cfg.policy == DivergencePolicy::Abort) throw;
                    ++diverged;
                }
            }
            if (ok == 0) continue;
            merged.scale(1.0 / double(ok));
            merged.finalized = true;
            params = apply_updates(params, merged, opt);
        }
    }
    if (!res.reached_threshold)
        std::cerr << "warning: feedback pre-training stopped at ratio " << res.final_ratio
                  << " after " << res.epochs_used << " epochs (threshold "
                  << cfg.pretrain_threshold << " not reached)\n";
    res.params = std::move(params);
    return res;
}

class Trainer {
  public:
    explicit Trainer(RunConfig cfg) : cfg_(std::move(cfg)), opt_(cfg_.opt) {}

    /* Full training run; returns the metrics CSV path. */
    std::string run() {
        ds_ = cfg_.build_dataset();
        const int n_out = cfg_.arch.back();
        prepare_targets(ds_.train, cfg_.sim.loss, n_out);
        prepare_targets(ds_.val, cfg_.sim.loss, n_out);
        prepare_targets(ds_.test, cfg_.sim.loss, n_out);
        if (!ds_.train.empty() && ds_.train.front().x.size() != cfg_.arch.front())
            throw ConfigError("arch.sizes input width does not match the dataset");
        params_ = cfg_.init_student();
        probe_.assign(ds_.train.begin(),
                      ds_.train.begin() + std::min<long>(cfg_.probe_samples, ds_.train.size()));

        const bool learned_q = cfg_.method == Method::StrongDFC ||
                               cfg_.method == Method::StrongDFCTwoPhase ||
                               cfg_.method == Method::DFC;
        if (learned_q && cfg_.pretrain_epochs > 0)
            params_ = pretrain_feedback(cfg_, params_, ds_).params;

        std::filesystem::create_directories(cfg_.out_dir);
        const std::string path = cfg_.out_dir + "/metrics.csv";
        MetricsWriter mw(path);
        mw.write(diagnostics(0));
        for (long epoch = 1; epoch <= cfg_.epochs; ++epoch) {
            epoch_diverged_ = 0;
            run_epoch(epoch);
            if (epoch % cfg_.metric_cadence == 0 || epoch == cfg_.epochs)
                mw.write(diagnostics(epoch));
        }
        return path;
    }

    const NetworkParams& params() const { return params_; }
    DiagnosticsRecord snapshot(long epoch) { return diagnostics(epoch); }

  private:
    void run_epoch(long epoch) {
        Batch train = ds_.epoch_train(epoch - 1);
        prepare_targets(train, cfg_.sim.loss, cfg_.arch.back());
        std::vector<size_t> order(train.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(mix_key(cfg_.seed ^ 0x73687566ull, std::uint64_t(epoch)));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        if (cfg_.method == Method::StrongDFCTwoPhase) {
            pass(train, order, epoch, Phase::Feedback);
            pass(train, order, epoch, Phase::Forward);
        } else {
            pass(train, order, epoch, Phase::Single);
        }
    }

    enum class Phase { Single, Feedback, Forward };

    void pass(const Batch& train, const std::vector<size_t>& order, long epoch, Phase phase) {
        for (size_t start = 0; start < order.size(); start += cfg_.batch_size) {
            const size_t stop = std::min(order.size(), start + cfg_.batch_size);
            step_batch(train, order, start, stop, epoch, phase);
        }
    }

    void step_batch(const Batch& train, const std::vector<size_t>& order, size_t start,
                    size_t stop, long epoch, Phase phase) {
        if (!uses_dynamics(cfg_.method)) {
            Batch mb;
            for (size_t j = start; j < stop; ++j) mb.push_back(train[order[j]]);
            const UpdateBuffer buf =
                bp_update(params_, mb, cfg_.sim.loss, cfg_.method == Method::BPShallow);
            last_update_ = buf.dW;
            params_ = apply_updates(params_, buf, opt_);
            return;
        }

        SimConfig sim = cfg_.sim;
        PlasticityOpts pl = cfg_.plasticity;
        switch (cfg_.method) {
            case Method::StrongDFCIdeal:
                sim.sigma = 0;
                pl.forward = pl.feedback = false;
                break;
            case Method::StrongDFC:
                pl.forward = pl.feedback = true;
                break;
            case Method::DFC:
                pl.forward = true;
                pl.feedback = false;
                break;
            case Method::StrongDFCTwoPhase:
                if (phase == Phase::Feedback) {
                    sim.alpha_tilde = cfg_.pretrain_alpha_tilde;
                    sim.sigma = cfg_.pretrain_sigma;
                    pl.forward = false;
                    pl.feedback = true;
                } else {
                    sim.sigma = 0;
                    pl.forward = true;
                    pl.feedback = false;
                }
                break;
            default:
                break;
        }

        UpdateBuffer merged = UpdateBuffer::zeroed(params_);
        long ok = 0;
        for (size_t j = start; j < stop; ++j) {
            const Sample& s = train[order[j]];
            try {
                if (cfg_.method == Method::StrongDFCIdeal) {
                    merged.merge(ideal_sample_update(s, sim));
                } else {
                    SimOptions opts;
                    opts.plasticity = pl;
                    opts.sample_index = mix_key(std::uint64_t(epoch) << 8 | unsigned(phase),
                                                order[j]);
                    merged.merge(simulate_sample(params_, s.x, s.target, sim, opts).buffer);
                }
                ++ok;
            } catch (const DivergenceError&) {
                if (cfg_.policy == DivergencePolicy::Abort) throw;
                ++epoch_diverged_;
            }
        }
        if (ok == 0) return;
        merged.scale(1.0 / double(ok));
        merged.finalized = true;
        if (pl.forward || cfg_.method == Method::StrongDFCIdeal) last_update_ = merged.dW;
        params_ = apply_updates(params_, merged, opt_);
    }

    /* One idealized sample update: transplant Q = J^T at the feedforward
     * state, settle the noiseless controlled dynamics, take Eq.-style
     * steady-state increments. */
    UpdateBuffer ideal_sample_update(const Sample& s, const SimConfig& sim) {
        NetworkParams p = params_;
        set_feedback(p, ideal_feedback(p, forward_ss(p, s.x)));
        const SimResult res = simulate_sample(p, s.x, s.target, sim);
        return steady_state_update(p, res.state, sim.alpha_tilde, cfg_.train_ss_tol);
    }

    DiagnosticsRecord diagnostics(long epoch) {
        DiagnosticsRecord rec;
        rec.epoch = epoch;
        rec.diverged = epoch_diverged_;
        rec.train_loss = training_loss(params_, ds_.train, cfg_.sim.loss);
        if (!ds_.val.empty()) rec.val_loss = training_loss(params_, ds_.val, cfg_.sim.loss);
        const bool classify = !ds_.train.empty() && ds_.train.front().label >= 0;
        if (classify) {
            rec.train_err = error_rate(params_, ds_.train);
            if (!ds_.val.empty()) rec.val_err = error_rate(params_, ds_.val);
        }
        if (!uses_dynamics(cfg_.method)) return rec;

        try {
            probe_metrics(rec);
        } catch (const Error&) {
            /* diagnostics must never kill a run; missing values stay NaN */
        }
        return rec;
    }

    void probe_metrics(DiagnosticsRecord& rec) {
        SimConfig pcfg = cfg_.sim;
        pcfg.m_max = cfg_.effective_probe_m_max();
        pcfg.sigma = 0;
        pcfg.record_trajectory = false;
        pcfg.settle_tol = 0;  // diagnostics want fully settled equilibria
        const bool ideal = cfg_.method == Method::StrongDFCIdeal;
        const long eig_samples = std::min<long>(8, probe_.size());

        double h = 0, fb = 0, con1 = 0;
        double max_re = -INFINITY;
        std::vector<Mat> grad, update;
        for (size_t i = 0; i < probe_.size(); ++i) {
            NetworkParams p = params_;
            if (ideal) set_feedback(p, ideal_feedback(p, forward_ss(p, probe_[i].x)));
            const SimResult res = equilibrium(p, probe_[i], pcfg, 1e-3);
            h += res.diag.h_contribution;
            fb += res.diag.fb_ff_ratio;
            if (long(i) < eig_samples) {
                const LayerActivations ss = acts_of(res.state);
                con1 += condition1_ratio(p, ss);
                max_re = std::max(max_re,
                                  condition2_check(p, ss, pcfg.alpha_tilde).max_re_reduced);
            }
            if (!last_update_.empty() && !is_cross_entropy(cfg_.sim.loss)) {
                const Batch one{probe_[i]};
                const auto g = grad_H_analytic(p, one, pcfg, 1e-4);
                if (grad.empty()) {
                    grad = g;
                } else {
                    for (size_t l = 0; l < g.size(); ++l) grad[l] += g[l];
                }
            }
        }
        rec.H = h / double(probe_.size());
        rec.fb_ff_ratio = fb / double(probe_.size());
        rec.con1_ratio = con1 / double(eig_samples);
        rec.max_re_eig = max_re;
        if (!grad.empty()) {
            for (auto& g : grad) g *= -1.0 / double(probe_.size());
            rec.angle_deg = concat_angle_deg(last_update_, grad);
        }
    }

    RunConfig cfg_;
    Dataset ds_;
    Batch probe_;
    NetworkParams params_;
    OptimizerConfig opt_;
    std::vector<Mat> last_update_;
    long epoch_diverged_ = 0;
};

inline std::string train(const RunConfig& cfg) { return Trainer(cfg).run(); }

}  // namespace sdfc
