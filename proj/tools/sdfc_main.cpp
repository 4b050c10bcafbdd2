#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "sdfc/training.hpp"
#include "sdfc/verify.hpp"

namespace {

sdfc::RunConfig load_run_config(const std::string& path) {
    sdfc::Config c = sdfc::Config::from_file(path);
    c.apply_env_overrides();
    return sdfc::RunConfig::from_config(c);
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
    sdfc::RunConfig cfg = load_run_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    const std::string metrics = sdfc::train(cfg);
    std::cout << metrics << "\n";
    return 0;
}

int cmd_pretrain(const std::string& config_path) {
    sdfc::RunConfig cfg = load_run_config(config_path);
    if (cfg.pretrain_epochs == 0) cfg.pretrain_epochs = 10;
    sdfc::Dataset ds = cfg.build_dataset();
    sdfc::prepare_targets(ds.train, cfg.sim.loss, cfg.arch.back());
    const sdfc::PretrainResult res = sdfc::pretrain_feedback(cfg, cfg.init_student(), ds);
    std::printf("pretrain: epochs_used=%ld condition1_ratio=%.6f threshold=%s\n",
                res.epochs_used, res.final_ratio,
                res.reached_threshold ? "reached" : "NOT reached");
    return res.reached_threshold ? 0 : 1;
}

int cmd_verify(const std::string& config_path, bool corrupt_gradient) {
    sdfc::VerifyOptions opts;
    opts.corrupt_gradient = corrupt_gradient;
    if (!config_path.empty()) {
        sdfc::Config c = sdfc::Config::from_file(config_path);
        c.apply_env_overrides();
        opts.report_path = c.get_string("verify.report", opts.report_path);
    }
    const sdfc::VerifyReport rep = sdfc::run_verify(opts);
    for (const auto& chk : rep.checks)
        std::printf("[%s] %-34s measured=%-12.6g tolerance=%g\n",
                    chk.passed ? "PASS" : "FAIL", chk.check.c_str(), chk.measured,
                    chk.tolerance);
    std::cout << "report: " << opts.report_path << "\n";
    if (!rep.all_passed) {
        std::cerr << "verify failed:";
        for (const auto& chk : rep.checks)
            if (!chk.passed) std::cerr << " " << chk.check;
        std::cerr << "\n";
        return 1;
    }
    return 0;
}

int cmd_gen_data(long teacher_seed, long samples, const std::string& out_path) {
    sdfc::TeacherSpec spec;
    spec.seed = static_cast<std::uint64_t>(teacher_seed);
    const sdfc::Dataset ds = sdfc::generate_student_teacher(
        spec, samples, sdfc::mix_key(spec.seed, 0x73616d70ull), false, 0);
    std::FILE* f = std::fopen(out_path.c_str(), "w");
    if (!f) throw sdfc::Error("cannot open output file " + out_path);
    const int d = static_cast<int>(ds.train.front().x.size());
    const int k = static_cast<int>(ds.train.front().target.size());
    for (int j = 0; j < d; ++j) std::fprintf(f, "%sx%d", j ? "," : "", j);
    for (int j = 0; j < k; ++j) std::fprintf(f, ",y%d", j);
    std::fprintf(f, "\n");
    for (const auto& s : ds.train) {
        for (int j = 0; j < d; ++j) std::fprintf(f, "%s%.12g", j ? "," : "", s.x[j]);
        for (int j = 0; j < k; ++j) std::fprintf(f, ",%.12g", s.target[j]);
        std::fprintf(f, "\n");
    }
    std::fclose(f);
    std::cout << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"strong feedback-control training toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir, out_path;
    bool corrupt_gradient = false;
    long teacher_seed = 1, samples = 500;

    auto* train = app.add_subcommand("train", "train a network per a config file");
    train->add_option("--config", config_path, "config file path")->required();
    train->add_option("--out", out_dir, "output directory (overrides run.out_dir)");

    auto* pretrain = app.add_subcommand("pretrain", "feedback-only pre-training report");
    pretrain->add_option("--config", config_path, "config file path")->required();

    auto* verify = app.add_subcommand("verify", "run the seeded invariant suite");
    verify->add_option("--config", config_path, "optional config (verify.report=PATH)");
    verify->add_flag("--corrupt-gradient", corrupt_gradient,
                     "test hook: sabotage the analytic gradient")
        ->group("");  // hidden

    auto* gen = app.add_subcommand("gen-data", "emit a teacher-generated dataset as CSV");
    gen->add_option("--teacher-seed", teacher_seed, "teacher weight seed")->required();
    gen->add_option("--samples", samples, "number of samples")->required();
    gen->add_option("--out", out_path, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(config_path, out_dir);
        if (pretrain->parsed()) return cmd_pretrain(config_path);
        if (verify->parsed()) return cmd_verify(config_path, corrupt_gradient);
        if (gen->parsed()) return cmd_gen_data(teacher_seed, samples, out_path);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    }
    return 0;
}
