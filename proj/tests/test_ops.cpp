#include <gtest/gtest.h>

#include "octconv/ops.hpp"
#include "octconv/oracle.hpp"
#include "test_util.hpp"

using namespace oct;
using testutil::bit_equal;
using testutil::max_rel_err;
using testutil::random_kernel;
using testutil::random_tensor;

TEST(Conv2d, FullOverlapCenterIsNine) {
    Tensor4<double> x(1, 1, 3, 3);
    x.fill(1.0);
    ConvKernel<double> w(1, 1, 3, 3);
    w.fill(1.0);
    const auto y = conv2d(x, w, 1, 1);
    EXPECT_DOUBLE_EQ(y.at(0, 0, 1, 1), 9.0);
}

TEST(Conv2d, IdentityKernelPreservesImpulse) {
    Tensor4<double> x(1, 1, 6, 7);
    x.at(0, 0, 2, 5) = 3.5;
    ConvKernel<double> w(1, 1, 1, 1);
    w.at(0, 0, 0, 0) = 1.0;
    EXPECT_TRUE(bit_equal(conv2d(x, w, 1, 0), x));
}

TEST(Conv2d, MatchesDirectOracle) {
    const auto x = random_tensor<double>(11, 2, 3, 8, 8);
    const auto w = random_kernel<double>(12, 4, 3, 3);
    EXPECT_LT(max_rel_err(conv2d(x, w, 1, 1), vanilla_ref(x, w, 1)), 1e-6);
}

TEST(Conv2d, Linearity) {
    const auto x = random_tensor<double>(21, 1, 2, 6, 6);
    const auto y = random_tensor<double>(22, 1, 2, 6, 6);
    const auto w = random_kernel<double>(23, 3, 2, 3);
    const double a = 1.7, b = -0.4;
    Tensor4<double> mix(1, 2, 6, 6);
    for (std::size_t i = 0; i < mix.size(); ++i)
        mix.buffer()[i] = a * x.buffer()[i] + b * y.buffer()[i];
    auto lhs = conv2d(mix, w, 1, 1);
    auto cx = conv2d(x, w, 1, 1);
    auto cy = conv2d(y, w, 1, 1);
    Tensor4<double> rhs(1, 3, 6, 6);
    for (std::size_t i = 0; i < rhs.size(); ++i)
        rhs.buffer()[i] = a * cx.buffer()[i] + b * cy.buffer()[i];
    EXPECT_LT(max_rel_err(lhs, rhs), 1e-6);
}

// A grouped kernel behaves like a dense kernel whose cross-group weights
// are zero.
TEST(Conv2d, GroupedEqualsBlockDiagonalDense) {
    const int c = 4, g = 2;
    const auto x = random_tensor<double>(31, 1, c, 6, 6);
    const auto wg = random_kernel<double>(32, c, c, 3, g);
    ConvKernel<double> dense(c, c, 3, 3, 1);
    const int cpg = c / g;
    for (int co = 0; co < c; ++co)
        for (int ci = 0; ci < cpg; ++ci)
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx)
                    dense.at(co, (co / cpg) * cpg + ci, ky, kx) = wg.at(co, ci, ky, kx);
    EXPECT_LT(max_rel_err(conv2d(x, wg, 1, 1), conv2d(x, dense, 1, 1)), 1e-12);
}

TEST(Conv2d, DeterministicAcrossRunsAndThreads) {
    const auto x = random_tensor<float>(41, 2, 4, 10, 10);
    const auto w = random_kernel<float>(42, 6, 4, 3);
    const auto a = conv2d(x, w, 1, 1);
    const auto b = conv2d(x, w, 1, 1);
    EXPECT_TRUE(bit_equal(a, b));
    set_num_threads(4);
    const auto c = conv2d(x, w, 1, 1);
    set_num_threads(1);
    EXPECT_TRUE(bit_equal(a, c));
}

TEST(Conv2d, ErrorPaths) {
    Tensor4<double> x(1, 2, 4, 4);
    EXPECT_THROW(conv2d(x, ConvKernel<double>(1, 3, 3, 3), 1, 1), ShapeError);
    EXPECT_THROW(ConvKernel<double>(1, 1, 2, 2), ConfigError);
    ConvKernel<double> big(1, 2, 5, 5);
    EXPECT_THROW(conv2d(x, big, 1, 0), ShapeError); // 4 - 5 + 1 = 0 rows
    EXPECT_THROW(Tensor4<double>(1, 0, 4, 4), ShapeError);
}

TEST(Conv2d, MacCounterCountsEveryTap) {
    Tensor4<float> x(1, 1, 4, 4);
    ConvKernel<float> w(1, 1, 3, 3);
    reset_mac_count();
    conv2d(x, w, 1, 1);
    EXPECT_EQ(mac_count(), 16u * 9u);
    reset_mac_count();
    EXPECT_EQ(mac_count(), 0u);
}

// Dot-product adjoint identities: <conv(x), gy> == <x, conv_bwd_input(gy)>
// and == <w, conv_bwd_weight(x, gy)> when gy probes the weight path.
TEST(Conv2d, BackwardIsTheExactAdjoint) {
    for (int stride : {1, 2}) {
        const auto x = random_tensor<double>(51 + stride, 2, 3, 8, 8);
        const auto w = random_kernel<double>(52 + stride, 4, 3, 3);
        const auto y = conv2d(x, w, stride, 1);
        const auto gy = random_tensor<double>(53 + stride, y.n(), y.c(), y.h(), y.w());

        double lhs = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) lhs += y.buffer()[i] * gy.buffer()[i];

        const auto gx = conv2d_backward_input(gy, w, 8, 8, stride, 1);
        double rhs_x = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) rhs_x += x.buffer()[i] * gx.buffer()[i];
        EXPECT_NEAR(lhs, rhs_x, 1e-9 * std::abs(lhs));

        const auto gw = conv2d_backward_weight(x, gy, w, stride, 1);
        double rhs_w = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) rhs_w += w.buffer()[i] * gw.buffer()[i];
        EXPECT_NEAR(lhs, rhs_w, 1e-9 * std::abs(lhs));
    }
}

TEST(AvgPool2, BlockMean) {
    Tensor4<double> x(1, 1, 2, 2);
    x.at(0, 0, 0, 0) = 1;
    x.at(0, 0, 0, 1) = 2;
    x.at(0, 0, 1, 0) = 3;
    x.at(0, 0, 1, 1) = 4;
    EXPECT_DOUBLE_EQ(avg_pool2(x).at(0, 0, 0, 0), 2.5);
}

TEST(AvgPool2, ConstantStaysConstant) {
    Tensor4<double> x(1, 2, 6, 6);
    x.fill(0.7);
    const auto y = avg_pool2(x);
    for (double v : y.buffer()) EXPECT_DOUBLE_EQ(v, 0.7);
}

TEST(AvgPool2, MatchesDirectIndexing) {
    const auto x = random_tensor<double>(61, 1, 2, 6, 6);
    const auto y = avg_pool2(x);
    for (int c = 0; c < 2; ++c)
        for (int oy = 0; oy < 3; ++oy)
            for (int ox = 0; ox < 3; ++ox) {
                const double want = (x.at(0, c, 2 * oy, 2 * ox) + x.at(0, c, 2 * oy, 2 * ox + 1) +
                                     x.at(0, c, 2 * oy + 1, 2 * ox) +
                                     x.at(0, c, 2 * oy + 1, 2 * ox + 1)) /
                                    4.0;
                EXPECT_DOUBLE_EQ(y.at(0, c, oy, ox), want);
            }
}

TEST(AvgPool2, OddDimsRejected) {
    EXPECT_THROW(avg_pool2(Tensor4<double>(1, 1, 5, 4)), ShapeError);
    EXPECT_THROW(max_pool2(Tensor4<double>(1, 1, 4, 5)), ShapeError);
}

TEST(MaxPool2, BlockMaxAndTieRouting) {
    Tensor4<double> x(1, 1, 2, 2);
    x.at(0, 0, 0, 0) = 1;
    x.at(0, 0, 0, 1) = 2;
    x.at(0, 0, 1, 0) = 3;
    x.at(0, 0, 1, 1) = 4;
    EXPECT_DOUBLE_EQ(max_pool2(x).at(0, 0, 0, 0), 4.0);

    Tensor4<double> tie(1, 1, 2, 2);
    tie.fill(1.5);
    Tensor4<double> g(1, 1, 1, 1);
    g.at(0, 0, 0, 0) = 1.0;
    const auto gx = max_pool2_backward(tie, g);
    EXPECT_DOUBLE_EQ(gx.at(0, 0, 0, 0), 1.0); // first occurrence wins
    EXPECT_DOUBLE_EQ(gx.at(0, 0, 0, 1), 0.0);
    EXPECT_DOUBLE_EQ(gx.at(0, 0, 1, 0), 0.0);
    EXPECT_DOUBLE_EQ(gx.at(0, 0, 1, 1), 0.0);
}

TEST(MaxPool2, MatchesDirectScan) {
    const auto x = random_tensor<double>(71, 1, 1, 4, 4);
    const auto y = max_pool2(x);
    for (int oy = 0; oy < 2; ++oy)
        for (int ox = 0; ox < 2; ++ox) {
            double want = x.at(0, 0, 2 * oy, 2 * ox);
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx)
                    want = std::max(want, x.at(0, 0, 2 * oy + dy, 2 * ox + dx));
            EXPECT_DOUBLE_EQ(y.at(0, 0, oy, ox), want);
        }
}

TEST(Upsample2, DuplicationPattern) {
    Tensor4<double> one(1, 1, 1, 1);
    one.at(0, 0, 0, 0) = 5.0;
    const auto up1 = upsample_nearest2(one);
    for (double v : up1.buffer()) EXPECT_DOUBLE_EQ(v, 5.0);

    Tensor4<double> x(1, 1, 2, 2);
    x.at(0, 0, 0, 0) = 1;
    x.at(0, 0, 0, 1) = 2;
    x.at(0, 0, 1, 0) = 3;
    x.at(0, 0, 1, 1) = 4;
    const auto up = upsample_nearest2(x);
    const double want[4][4] = {{1, 1, 2, 2}, {1, 1, 2, 2}, {3, 3, 4, 4}, {3, 3, 4, 4}};
    for (int y = 0; y < 4; ++y)
        for (int xx = 0; xx < 4; ++xx) EXPECT_DOUBLE_EQ(up.at(0, 0, y, xx), want[y][xx]);
}

TEST(Upsample2, PoolAfterUpsampleIsIdentity) {
    const auto x = random_tensor<double>(81, 2, 3, 5, 7);
    EXPECT_TRUE(bit_equal(avg_pool2(upsample_nearest2(x)), x));
}

TEST(PoolingAndUpsampling, PreserveGlobalMean) {
    const auto x = random_tensor<double>(91, 1, 1, 8, 8);
    auto mean = [](const Tensor4<double>& t) {
        double s = 0.0;
        for (double v : t.buffer()) s += v;
        return s / t.size();
    };
    EXPECT_NEAR(mean(avg_pool2(x)), mean(x), 1e-12);
    EXPECT_NEAR(mean(upsample_nearest2(x)), mean(x), 1e-12);
}

TEST(PoolingAdjoints, DotProductIdentity) {
    const auto x = random_tensor<double>(101, 1, 2, 6, 6);
    const auto gy = random_tensor<double>(102, 1, 2, 3, 3);
    auto dot = [](const Tensor4<double>& a, const Tensor4<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a.buffer()[i] * b.buffer()[i];
        return s;
    };
    EXPECT_NEAR(dot(avg_pool2(x), gy), dot(x, avg_pool2_backward(gy)), 1e-12);
    EXPECT_NEAR(dot(max_pool2(x), gy), dot(x, max_pool2_backward(x, gy)), 1e-12);

    const auto gu = random_tensor<double>(103, 1, 2, 12, 12);
    EXPECT_NEAR(dot(upsample_nearest2(x), gu), dot(x, upsample_nearest2_backward(gu)), 1e-12);
}
