#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "sdfc/network.hpp"
#include "sdfc/rng.hpp"

namespace sdfc {

/* Random tanh teacher whose pre-nonlinearity output defines the regression
 * target; the output layer is linear so v_L = r_L. gain 2.5 keeps per-dim
 * target variance O(1) at the default 30-10-10-10-5 shape. */
struct TeacherSpec {
    std::vector<int> sizes{30, 10, 10, 10, 5};
    ActivationKind activation = ActivationKind::Tanh;
    std::uint64_t seed = 1;
    double gain = 2.5;
};

inline NetworkParams make_teacher(const TeacherSpec& spec) {
    if (spec.sizes.size() < 2) throw ConfigError("teacher needs at least 2 layer sizes");
    return init_network(spec.sizes, spec.activation, ActivationKind::Linear, spec.seed,
                        spec.gain);
}

struct Dataset {
    Batch train, val, test;

    /* teacher-stream regeneration: when set, each epoch draws a fresh,
     * disjoint batch instead of reusing train */
    bool regenerate_per_epoch = false;
    TeacherSpec teacher;
    std::uint64_t sample_seed = 0;
    long n_per_epoch = 0;

    Batch epoch_train(long epoch) const;
};

namespace detail {

inline Batch draw_teacher_batch(const NetworkParams& teacher, long n, std::uint64_t seed) {
    Rng rng(seed);
    Batch batch;
    const int d = teacher.input_dim();
    for (long s = 0; s < n; ++s) {
        Sample smp;
        smp.x = Vec(d);
        for (int j = 0; j < d; ++j) smp.x[j] = rng.gaussian();
        smp.target = forward_ss(teacher, smp.x).v.back();
        batch.push_back(std::move(smp));
    }
    return batch;
}

}  // namespace detail

inline Batch Dataset::epoch_train(long epoch) const {
    if (!regenerate_per_epoch || epoch == 0) return train;
    return detail::draw_teacher_batch(make_teacher(teacher), n_per_epoch,
                                      mix_key(sample_seed, std::uint64_t(epoch)));
}

/* Teacher-student regression set: x ~ N(0, I), target = teacher v_L. val
 * and test are fixed fresh draws from sibling streams. */
inline Dataset generate_student_teacher(const TeacherSpec& spec, long n_samples,
                                        std::uint64_t seed, bool regenerate_per_epoch = false,
                                        long n_heldout = 500) {
    if (n_samples <= 0) throw ConfigError("n_samples must be positive");
    const NetworkParams teacher = make_teacher(spec);
    Dataset ds;
    ds.train = detail::draw_teacher_batch(teacher, n_samples, mix_key(seed, 0));
    ds.val = detail::draw_teacher_batch(teacher, n_heldout, mix_key(seed, 0x76616cull));
    ds.test = detail::draw_teacher_batch(teacher, n_heldout, mix_key(seed, 0x74657374ull));
    ds.regenerate_per_epoch = regenerate_per_epoch;
    ds.teacher = spec;
    ds.sample_seed = seed;
    ds.n_per_epoch = n_samples;
    return ds;
}

namespace detail {

inline std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::uint64_t off,
                               const std::string& what) {
    if (off + 4 > buf.size()) throw ParseError(what + ": file truncated", off);
    return (std::uint32_t(buf[off]) << 24) | (std::uint32_t(buf[off + 1]) << 16) |
           (std::uint32_t(buf[off + 2]) << 8) | std::uint32_t(buf[off + 3]);
}

inline std::vector<unsigned char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                      std::istreambuf_iterator<char>());
}

}  // namespace detail

/* IDX image+label pair (the MNIST distribution format): big-endian headers,
 * magic 0x803 / 0x801, 28x28 unsigned bytes scaled to [0,1]. Targets are
 * left empty — the harness shapes them per loss. */
inline Batch load_idx(const std::string& images_path, const std::string& labels_path) {
    using detail::read_be32;
    const auto img = detail::slurp(images_path);
    const auto lab = detail::slurp(labels_path);

    if (read_be32(img, 0, images_path) != 0x803u)
        throw ParseError(images_path + ": bad image-file magic", 0);
    const std::uint64_t n = read_be32(img, 4, images_path);
    const std::uint32_t rows = read_be32(img, 8, images_path);
    const std::uint32_t cols = read_be32(img, 12, images_path);
    if (rows != 28 || cols != 28)
        throw ParseError(images_path + ": expected 28x28 images, got " + std::to_string(rows) +
                             "x" + std::to_string(cols),
                         8);
    if (img.size() != 16 + n * 784)
        throw ParseError(images_path + ": image payload truncated", img.size());

    if (read_be32(lab, 0, labels_path) != 0x801u)
        throw ParseError(labels_path + ": bad label-file magic", 0);
    const std::uint64_t n_lab = read_be32(lab, 4, labels_path);
    if (n_lab != n)
        throw ParseError(labels_path + ": label count " + std::to_string(n_lab) +
                             " does not match image count " + std::to_string(n),
                         4);
    if (lab.size() != 8 + n) throw ParseError(labels_path + ": label payload truncated", lab.size());

    Batch batch(n);
    for (std::uint64_t s = 0; s < n; ++s) {
        batch[s].x = Vec(784);
        const std::uint64_t base = 16 + s * 784;
        for (int j = 0; j < 784; ++j) batch[s].x[j] = double(img[base + j]) / 255.0;
        batch[s].label = int(lab[8 + s]);
        if (batch[s].label > 9) throw ParseError(labels_path + ": label out of range", 8 + s);
    }
    return batch;
}

/* Standard split: the last `count` training points become validation. */
inline void apply_validation_split(Dataset& ds, long count = 5000) {
    if (count < 0 || count >= long(ds.train.size()))
        throw ConfigError("validation split larger than the training set");
    ds.val.assign(ds.train.end() - count, ds.train.end());
    ds.train.erase(ds.train.end() - count, ds.train.end());
}

}  // namespace sdfc
