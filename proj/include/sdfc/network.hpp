#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sdfc/errors.hpp"
#include "sdfc/rng.hpp"

namespace sdfc {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class ActivationKind { Tanh, Linear };

inline Vec activate(ActivationKind k, const Vec& v) {
    return k == ActivationKind::Tanh ? v.array().tanh().matrix() : v;
}

inline Vec activate_prime(ActivationKind k, const Vec& v) {
    if (k == ActivationKind::Linear) return Vec::Ones(v.size());
    return (1.0 - v.array().tanh().square()).matrix();
}

/* One layer: forward weights W (n_i x n_{i-1}), bias b (n_i), feedback
 * weights Q (n_i x n_L). */
struct LayerParams {
    Mat W;
    Vec b;
    Mat Q;
    ActivationKind activation = ActivationKind::Tanh;
};

struct NetworkParams {
    std::vector<LayerParams> layers;

    int depth() const { return static_cast<int>(layers.size()); }
    int input_dim() const { return static_cast<int>(layers.front().W.cols()); }
    int output_dim() const { return static_cast<int>(layers.back().W.rows()); }

    int total_units() const {
        int n = 0;
        for (const auto& l : layers) n += static_cast<int>(l.W.rows());
        return n;
    }

    /* Start index of each layer's units in the concatenated state vector. */
    std::vector<int> unit_offsets() const {
        std::vector<int> off(layers.size());
        int n = 0;
        for (size_t i = 0; i < layers.size(); ++i) {
            off[i] = n;
            n += static_cast<int>(layers[i].W.rows());
        }
        return off;
    }

    void validate() const {
        if (layers.empty()) throw ShapeError("network has no layers");
        const int n_out = output_dim();
        for (size_t i = 0; i < layers.size(); ++i) {
            const auto& l = layers[i];
            const std::string at = "layer " + std::to_string(i + 1);
            if (l.b.size() != l.W.rows()) throw ShapeError(at + ": bias/weight row mismatch");
            if (l.Q.rows() != l.W.rows() || l.Q.cols() != n_out)
                throw ShapeError(at + ": feedback weights must be (n_i x n_L)");
            if (i > 0 && l.W.cols() != layers[i - 1].W.rows())
                throw ShapeError(at + ": input dim does not match previous layer width");
            if (!l.W.allFinite() || !l.b.allFinite() || !l.Q.allFinite())
                throw ShapeError(at + ": non-finite parameter entries");
        }
    }
};

/* Controller-free activations: v pre-nonlinearity, r = phi(v), r0 = input. */
struct LayerActivations {
    Vec r0;
    std::vector<Vec> v;
    std::vector<Vec> r;
};

/* One training example. target is whatever the loss consumes (regression
 * vector or soft class distribution); label keeps the raw class when there
 * is one, for error-rate reporting. */
struct Sample {
    Vec x;
    Vec target;
    int label = -1;
};

using Batch = std::vector<Sample>;

inline Mat uniform_matrix(Rng& rng, int rows, int cols, double half_width) {
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-half_width, half_width);
    return m;
}

/* Scaled-uniform init: W, Q ~ U[-gain/sqrt(fan_in), +gain/sqrt(fan_in)],
 * biases zero. Q's fan-in is the controller dimension n_L. */
inline NetworkParams init_network(const std::vector<int>& sizes, ActivationKind hidden,
                                  ActivationKind output, std::uint64_t seed, double gain = 1.0) {
    if (sizes.size() < 2) throw ShapeError("need at least input and output sizes");
    Rng rng(seed);
    NetworkParams net;
    const int L = static_cast<int>(sizes.size()) - 1;
    const int n_out = sizes.back();
    for (int i = 1; i <= L; ++i) {
        LayerParams l;
        l.W = uniform_matrix(rng, sizes[i], sizes[i - 1], gain / std::sqrt(double(sizes[i - 1])));
        l.b = Vec::Zero(sizes[i]);
        l.Q = uniform_matrix(rng, sizes[i], n_out, gain / std::sqrt(double(n_out)));
        l.activation = (i == L) ? output : hidden;
        net.layers.push_back(std::move(l));
    }
    net.validate();
    return net;
}

/* Controller-free steady state: v_i = W_i phi(v_{i-1}) + b_i, r_0 = x. */
inline LayerActivations forward_ss(const NetworkParams& params, const Vec& x) {
    if (x.size() != params.input_dim())
        throw ShapeError("input has dim " + std::to_string(x.size()) + ", network expects " +
                         std::to_string(params.input_dim()));
    LayerActivations acts;
    acts.r0 = x;
    const Vec* prev = &x;
    for (const auto& l : params.layers) {
        acts.v.push_back(l.W * (*prev) + l.b);
        acts.r.push_back(activate(l.activation, acts.v.back()));
        prev = &acts.r.back();
    }
    return acts;
}

/* J = [dr_L/dv_1, ..., dr_L/dv_L] (n_L x total_units) at the given
 * activations, chained backward from dr_L/dv_L = diag(phi'(v_L)). */
inline Mat jacobian(const NetworkParams& params, const LayerActivations& acts) {
    const int L = params.depth();
    if (static_cast<int>(acts.v.size()) != L) throw ShapeError("activations do not match depth");
    const int n_out = params.output_dim();
    const auto off = params.unit_offsets();
    Mat J(n_out, params.total_units());
    Mat chain = activate_prime(params.layers[L - 1].activation, acts.v[L - 1]).asDiagonal();
    J.middleCols(off[L - 1], n_out) = chain;
    for (int i = L - 2; i >= 0; --i) {
        chain = chain * params.layers[i + 1].W;
        chain = chain * activate_prime(params.layers[i].activation, acts.v[i]).asDiagonal();
        J.middleCols(off[i], static_cast<int>(params.layers[i].W.rows())) = chain;
    }
    return J;
}

/* Concatenated-state structure matrices: W_block carries W_{i+1} on the
 * subdiagonal blocks, S selects the output layer, phi_prime is diagonal. */
struct BlockMatrices {
    Mat W_block;
    Mat S;
    Mat phi_prime;
};

inline BlockMatrices block_matrices(const NetworkParams& params, const LayerActivations& acts) {
    const int N = params.total_units();
    const int n_out = params.output_dim();
    const auto off = params.unit_offsets();
    BlockMatrices bm;
    bm.W_block = Mat::Zero(N, N);
    bm.S = Mat::Zero(n_out, N);
    bm.phi_prime = Mat::Zero(N, N);
    for (int i = 0; i < params.depth(); ++i) {
        const int n_i = static_cast<int>(params.layers[i].W.rows());
        if (i > 0) {
            const int n_prev = static_cast<int>(params.layers[i - 1].W.rows());
            bm.W_block.block(off[i], off[i - 1], n_i, n_prev) = params.layers[i].W;
        }
        bm.phi_prime.block(off[i], off[i], n_i, n_i) =
            Mat(activate_prime(params.layers[i].activation, acts.v[i]).asDiagonal());
    }
    bm.S.rightCols(n_out) = Mat::Identity(n_out, n_out);
    return bm;
}

}  // namespace sdfc
