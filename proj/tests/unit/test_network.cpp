#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "sdfc/network.hpp"
#include "sdfc/rng.hpp"

using namespace sdfc;

namespace {

/* Independent scalar-loop forward pass: plain nested loops, no Eigen. */
std::vector<std::vector<double>> scalar_forward(const NetworkParams& net,
                                                const std::vector<double>& x) {
    std::vector<std::vector<double>> rates;
    std::vector<double> pre = x;
    for (int i = 0; i < net.depth(); ++i) {
        const auto& layer = net.layers[i];
        std::vector<double> v(layer.W.rows());
        for (int a = 0; a < layer.W.rows(); ++a) {
            double acc = layer.b[a];
            for (int c = 0; c < layer.W.cols(); ++c) acc += layer.W(a, c) * pre[c];
            v[a] = (layer.activation == ActivationKind::Tanh) ? std::tanh(acc) : acc;
        }
        rates.push_back(v);
        pre = v;
    }
    return rates;
}

/* Propagate a perturbed layer-i membrane potential to the output rate,
 * scalar loops only — the finite-difference base for the Jacobian check. */
Vec output_from_perturbed_v(const NetworkParams& net, const LayerActivations& acts, int layer,
                            int unit, double delta) {
    Vec v = acts.v[layer];
    v[unit] += delta;
    Vec r = activate(net.layers[layer].activation, v);
    for (int i = layer + 1; i < net.depth(); ++i) {
        const Vec vi = net.layers[i].W * r + net.layers[i].b;
        r = activate(net.layers[i].activation, vi);
    }
    return r;
}

}  // namespace

TEST(Forward, SingleLinearLayer) {
    NetworkParams net;
    net.layers.push_back({Mat::Constant(1, 1, 2.0), Vec::Zero(1), Mat::Zero(1, 1),
                          ActivationKind::Linear});
    const LayerActivations acts = forward_ss(net, Vec::Constant(1, 3.0));
    EXPECT_DOUBLE_EQ(acts.v[0][0], 6.0);
    EXPECT_DOUBLE_EQ(acts.r[0][0], 6.0);
}

TEST(Forward, ZeroWeightsGiveBiases) {
    NetworkParams net = init_network({3, 4, 2}, ActivationKind::Tanh, ActivationKind::Linear, 1);
    for (auto& l : net.layers) l.W.setZero();
    net.layers[0].b << 0.1, -0.2, 0.3, 0.0;
    net.layers[1].b << 0.5, -0.5;
    const LayerActivations acts = forward_ss(net, Vec::Constant(3, 9.0));
    EXPECT_NEAR((acts.v[0] - net.layers[0].b).norm(), 0.0, 1e-15);
    EXPECT_NEAR((acts.v[1] - net.layers[1].b).norm(), 0.0, 1e-15);
}

TEST(Forward, MatchesScalarReference) {
    NetworkParams net = init_network({4, 5, 3}, ActivationKind::Tanh, ActivationKind::Tanh, 17);
    Rng rng(5);
    std::vector<double> x(4);
    Vec xv(4);
    for (int i = 0; i < 4; ++i) xv[i] = x[i] = rng.gaussian();
    const auto ref = scalar_forward(net, x);
    const LayerActivations acts = forward_ss(net, xv);
    for (int i = 0; i < net.depth(); ++i)
        for (size_t j = 0; j < ref[i].size(); ++j)
            EXPECT_NEAR(acts.r[i][Eigen::Index(j)], ref[i][j], 1e-14);
}

TEST(Jacobian, SingleLinearLayerIsIdentity) {
    NetworkParams net;
    net.layers.push_back({Mat::Constant(1, 1, 2.0), Vec::Zero(1), Mat::Zero(1, 1),
                          ActivationKind::Linear});
    const LayerActivations acts = forward_ss(net, Vec::Constant(1, 3.0));
    const Mat J = jacobian(net, acts);
    ASSERT_EQ(J.rows(), 1);
    ASSERT_EQ(J.cols(), 1);
    EXPECT_DOUBLE_EQ(J(0, 0), 1.0);
}

TEST(Jacobian, DeepLinearBlocksAreWeightProducts) {
    NetworkParams net = init_network({3, 4, 3, 2}, ActivationKind::Linear,
                                     ActivationKind::Linear, 23);
    const LayerActivations acts = forward_ss(net, Vec::Constant(3, 0.5));
    const Mat J = jacobian(net, acts);
    const auto off = net.unit_offsets();
    const Mat& W2 = net.layers[1].W;
    const Mat& W3 = net.layers[2].W;
    EXPECT_NEAR((J.middleCols(off[0], 4) - W3 * W2).norm(), 0.0, 1e-14);
    EXPECT_NEAR((J.middleCols(off[1], 3) - W3).norm(), 0.0, 1e-14);
    EXPECT_NEAR((J.middleCols(off[2], 2) - Mat::Identity(2, 2)).norm(), 0.0, 1e-14);
}

TEST(Jacobian, MatchesFiniteDifferences) {
    NetworkParams net = init_network({3, 5, 4, 2}, ActivationKind::Tanh, ActivationKind::Tanh, 31);
    Rng rng(9);
    Vec x(3);
    for (int i = 0; i < 3; ++i) x[i] = rng.gaussian();
    const LayerActivations acts = forward_ss(net, x);
    const Mat J = jacobian(net, acts);
    const auto off = net.unit_offsets();
    const double h = 1e-5;
    for (int i = 0; i < net.depth(); ++i) {
        for (int j = 0; j < net.layers[i].W.rows(); ++j) {
            const Vec plus = output_from_perturbed_v(net, acts, i, j, h);
            const Vec minus = output_from_perturbed_v(net, acts, i, j, -h);
            const Vec fd = (plus - minus) / (2 * h);
            const Vec an = J.col(off[i] + j);
            EXPECT_LT((fd - an).norm() / std::max(1e-12, an.norm()), 1e-6)
                << "layer " << i << " unit " << j;
        }
    }
}

TEST(BlockMatrices, StructureAndSelector) {
    NetworkParams net = init_network({3, 4, 2}, ActivationKind::Tanh, ActivationKind::Linear, 3);
    const LayerActivations acts = forward_ss(net, Vec::Constant(3, 0.2));
    const BlockMatrices bm = block_matrices(net, acts);
    ASSERT_EQ(bm.W_block.rows(), 6);
    ASSERT_EQ(bm.W_block.cols(), 6);
    // W_2 sits in the subdiagonal block, everything else is zero
    EXPECT_NEAR((bm.W_block.block(4, 0, 2, 4) - net.layers[1].W).norm(), 0.0, 1e-15);
    Mat rest = bm.W_block;
    rest.block(4, 0, 2, 4).setZero();
    EXPECT_NEAR(rest.norm(), 0.0, 1e-15);
    // S selects the output block of the concatenated state
    Vec vcat(6);
    vcat << acts.v[0], acts.v[1];
    EXPECT_NEAR((bm.S * vcat - acts.v[1]).norm(), 0.0, 1e-15);
    // I - W_block phi' is unit lower-triangular, hence invertible
    const Mat M = Mat::Identity(6, 6) - bm.W_block * bm.phi_prime;
    EXPECT_NEAR(M.diagonal().minCoeff(), 1.0, 1e-15);
    EXPECT_NEAR(M.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().norm(), 0.0, 1e-15);
    EXPECT_GT(std::abs(M.determinant()), 0.5);
}

TEST(Init, BoundsAndDeterminism) {
    const NetworkParams a = init_network({6, 8, 4}, ActivationKind::Tanh,
                                         ActivationKind::Linear, 77);
    const NetworkParams b = init_network({6, 8, 4}, ActivationKind::Tanh,
                                         ActivationKind::Linear, 77);
    for (int i = 0; i < a.depth(); ++i) {
        EXPECT_EQ((a.layers[i].W - b.layers[i].W).norm(), 0.0);
        EXPECT_EQ((a.layers[i].Q - b.layers[i].Q).norm(), 0.0);
        EXPECT_EQ(a.layers[i].b.norm(), 0.0);
        const double w_bound = 1.0 / std::sqrt(double(a.layers[i].W.cols()));
        EXPECT_LE(a.layers[i].W.cwiseAbs().maxCoeff(), w_bound);
        const double q_bound = 1.0 / std::sqrt(double(a.output_dim()));
        EXPECT_LE(a.layers[i].Q.cwiseAbs().maxCoeff(), q_bound);
        EXPECT_EQ(a.layers[i].Q.cols(), a.output_dim());
    }
}

TEST(Validate, RejectsShapeMismatch) {
    NetworkParams net = init_network({3, 4, 2}, ActivationKind::Tanh, ActivationKind::Linear, 1);
    net.layers[1].W = Mat::Zero(2, 5);  // wrong fan-in
    EXPECT_THROW(net.validate(), ShapeError);
}
