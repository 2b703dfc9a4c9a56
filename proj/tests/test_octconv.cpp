#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "octconv/octconv.hpp"
#include "octconv/octconv_io.hpp"
#include "octconv/oracle.hpp"
#include "test_util.hpp"

using namespace oct;
using testutil::bit_equal;
using testutil::max_rel_err;
using testutil::random_oct_tensor;
using testutil::random_tensor;

TEST(ChannelSplit, FloorRule) {
    EXPECT_EQ(low_channels(8, 0.25), 2);
    EXPECT_EQ(low_channels(10, 0.125), 1);
    EXPECT_EQ(low_channels(10, 0.3), 3);
    EXPECT_EQ(low_channels(8, 0.0), 0);
    EXPECT_EQ(low_channels(8, 1.0), 8);
    EXPECT_THROW(low_channels(8, 1.5), ConfigError);
}

TEST(OctKernel, ParameterCountEqualsVanilla) {
    const auto k = make_oct_kernel<double>(16, 32, 3, 0.5, 0.5);
    EXPECT_EQ(k.param_count(), 32u * 16u * 9u);

    CounterRng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const int c_in = 1 + static_cast<int>(rng.below(4 * trial, 24));
        const int c_out = 1 + static_cast<int>(rng.below(4 * trial + 1, 24));
        const int kk = 1 + 2 * static_cast<int>(rng.below(4 * trial + 2, 3));
        const double a_in = rng.uniform(4 * trial + 3);
        const double a_out = rng.uniform(4 * trial + 2000);
        const auto kn = make_oct_kernel<double>(c_in, c_out, kk, a_in, a_out);
        EXPECT_EQ(kn.param_count(),
                  static_cast<std::size_t>(c_out) * c_in * kk * kk)
            << "c_in=" << c_in << " c_out=" << c_out << " k=" << kk << " a_in=" << a_in
            << " a_out=" << a_out;
    }
}

TEST(OctKernel, GroupedDivisibilityEnforced) {
    // 6 high-out channels split 3 ways is fine; cl_out = 2 channels are not.
    EXPECT_THROW(make_oct_kernel<double>(8, 8, 3, 0.25, 0.25, OctMode::Grouped, 5, 3),
                 ConfigError);
    EXPECT_NO_THROW(make_oct_kernel<double>(8, 8, 3, 0.5, 0.5, OctMode::Grouped, 5, 2));
}

TEST(OctKernel, DepthwiseHasNoExchangeBlocks) {
    const auto k = make_oct_kernel<double>(8, 8, 3, 0.5, 0.5, OctMode::Depthwise, 1);
    EXPECT_TRUE(k.w_hh.has_value());
    EXPECT_TRUE(k.w_ll.has_value());
    EXPECT_FALSE(k.w_lh.has_value());
    EXPECT_FALSE(k.w_hl.has_value());
    EXPECT_EQ(k.param_count(), 8u * 9u);
}

TEST(OctConvForward, DegeneratesToVanillaConvBitExact) {
    const auto k = make_oct_kernel<double>(3, 5, 3, 0.0, 0.0, OctMode::Dense, 17);
    const auto x = random_tensor<double>(18, 2, 3, 8, 8);
    const auto y = oct_conv_forward(from_vanilla(x), k);
    ASSERT_TRUE(y.high.has_value());
    EXPECT_FALSE(y.low.has_value());
    EXPECT_TRUE(bit_equal(*y.high, conv2d(x, *k.w_hh, 1, 1)));
}

TEST(OctConvForward, ZeroLowInputLeavesOnlyHighPaths) {
    const auto k = make_oct_kernel<double>(8, 8, 3, 0.5, 0.5, OctMode::Dense, 21);
    auto x = random_oct_tensor<double>(22, 1, 8, 8, 8, 0.5);
    x.low->fill(0.0);
    const auto y = oct_conv_forward(x, k);
    EXPECT_LT(max_rel_err(*y.high, conv2d(*x.high, *k.w_hh, 1, 1)), 1e-6);
    EXPECT_LT(max_rel_err(*y.low, conv2d(avg_pool2(*x.high), *k.w_hl, 1, 1)), 1e-6);
}

TEST(OctConvForward, MatchesFoldedOracle) {
    const auto k = make_oct_kernel<double>(8, 8, 3, 0.5, 0.5, OctMode::Dense, 31);
    const auto x = random_oct_tensor<double>(32, 1, 8, 8, 8, 0.5);
    const auto y = oct_conv_forward(x, k, DownsampleStrategy::AveragePool);
    EXPECT_LT(max_rel_err(*y.high, oct_high_ref(x, k)), 1e-5);
    EXPECT_LT(max_rel_err(*y.low, oct_low_ref(x, k, DownsampleStrategy::AveragePool)), 1e-5);
}

TEST(OctConvForward, StridedStrategyMatchesRoundedIndexOracle) {
    const auto k = make_oct_kernel<double>(6, 6, 3, 0.5, 0.5, OctMode::Dense, 41);
    const auto x = random_oct_tensor<double>(42, 2, 6, 8, 8, 0.5);
    const auto y = oct_conv_forward(x, k, DownsampleStrategy::StridedConv);
    EXPECT_LT(max_rel_err(*y.low, oct_low_ref(x, k, DownsampleStrategy::StridedConv)), 1e-6);
    // high path is unchanged by the down-sampling strategy
    EXPECT_TRUE(bit_equal(*y.high, *oct_conv_forward(x, k).high));
}

TEST(OctConvForward, LinearInInputAndWeights) {
    const auto k = make_oct_kernel<double>(8, 8, 3, 0.5, 0.5, OctMode::Dense, 51);
    const auto x = random_oct_tensor<double>(52, 1, 8, 8, 8, 0.5);
    OctTensor<double> x2 = x;
    const double s = -2.5;
    for (auto& v : x2.high->buffer()) v *= s;
    for (auto& v : x2.low->buffer()) v *= s;
    const auto y = oct_conv_forward(x, k);
    const auto y2 = oct_conv_forward(x2, k);
    Tensor4<double> scaled_h = *y.high;
    for (auto& v : scaled_h.buffer()) v *= s;
    Tensor4<double> scaled_l = *y.low;
    for (auto& v : scaled_l.buffer()) v *= s;
    EXPECT_LT(max_rel_err(*y2.high, scaled_h), 1e-12);
    EXPECT_LT(max_rel_err(*y2.low, scaled_l), 1e-12);

    OctKernel<double> k2 = k;
    for (auto& v : k2.w_hh->buffer()) v *= s;
    for (auto& v : k2.w_lh->buffer()) v *= s;
    for (auto& v : k2.w_hl->buffer()) v *= s;
    for (auto& v : k2.w_ll->buffer()) v *= s;
    const auto y3 = oct_conv_forward(x, k2);
    EXPECT_LT(max_rel_err(*y3.high, scaled_h), 1e-12);
    EXPECT_LT(max_rel_err(*y3.low, scaled_l), 1e-12);
}

TEST(OctConvForward, MaskedPathsContributeExactZero) {
    const auto k = make_oct_kernel<double>(8, 8, 3, 0.5, 0.5, OctMode::Dense, 61);
    const auto x = random_oct_tensor<double>(62, 1, 8, 8, 8, 0.5);
    PathMask no_l2h{false, true};
    const auto y = oct_conv_forward(x, k, DownsampleStrategy::AveragePool, no_l2h);
    EXPECT_TRUE(bit_equal(*y.high, conv2d(*x.high, *k.w_hh, 1, 1)));

    PathMask no_h2l{true, false};
    const auto y2 = oct_conv_forward(x, k, DownsampleStrategy::AveragePool, no_h2l);
    EXPECT_TRUE(bit_equal(*y2.low, conv2d(*x.low, *k.w_ll, 1, 1)));
}

TEST(OctConvForward, DepthwiseHasNoCrossFrequencyDependence) {
    const auto k = make_oct_kernel<double>(8, 8, 3, 0.5, 0.5, OctMode::Depthwise, 71);
    auto x = random_oct_tensor<double>(72, 1, 8, 8, 8, 0.5);
    const auto y = oct_conv_forward(x, k);
    x.low->fill_normal(CounterRng(321), 1.0); // perturb the low group only
    const auto y2 = oct_conv_forward(x, k);
    EXPECT_TRUE(bit_equal(*y.high, *y2.high));
    EXPECT_FALSE(bit_equal(*y.low, *y2.low));

    x.high->fill_normal(CounterRng(322), 1.0);
    const auto y3 = oct_conv_forward(x, k);
    EXPECT_TRUE(bit_equal(*y2.low, *y3.low));
}

TEST(OctConvForward, ShapeErrors) {
    const auto k = make_oct_kernel<double>(8, 8, 3, 0.5, 0.5);
    auto bad_split = random_oct_tensor<double>(81, 1, 8, 8, 8, 0.25);
    EXPECT_THROW(oct_conv_forward(bad_split, k), ShapeError);

    OctTensor<double> mismatched_halves;
    mismatched_halves.alpha = 0.5;
    mismatched_halves.high = Tensor4<double>(1, 4, 8, 8);
    mismatched_halves.low = Tensor4<double>(1, 4, 2, 2);
    EXPECT_THROW(oct_conv_forward(mismatched_halves, k), ShapeError);

    const auto k_entry = make_oct_kernel<double>(8, 8, 3, 0.0, 0.5);
    EXPECT_THROW(oct_conv_forward(from_vanilla(Tensor4<double>(1, 8, 5, 5)), k_entry),
                 ShapeError);
}

TEST(OctEntry, TwoPathForm) {
    const auto x = random_tensor<double>(91, 1, 4, 8, 8);

    const auto k0 = make_oct_kernel<double>(4, 6, 3, 0.0, 0.0, OctMode::Dense, 92);
    const auto plain = oct_entry(x, k0);
    EXPECT_TRUE(bit_equal(*plain.high, conv2d(x, *k0.w_hh, 1, 1)));

    const auto k1 = make_oct_kernel<double>(4, 6, 3, 0.0, 1.0, OctMode::Dense, 93);
    const auto all_low = oct_entry(x, k1);
    EXPECT_FALSE(all_low.high.has_value());
    EXPECT_TRUE(bit_equal(*all_low.low, conv2d(avg_pool2(x), *k1.w_hl, 1, 1)));

    const auto k2 = make_oct_kernel<double>(4, 8, 3, 0.0, 0.25, OctMode::Dense, 94);
    const auto y = oct_entry(x, k2);
    const auto y_ref = oct_conv_forward(from_vanilla(x), k2);
    EXPECT_TRUE(bit_equal(*y.high, *y_ref.high));
    EXPECT_TRUE(bit_equal(*y.low, *y_ref.low));

    const auto bad = make_oct_kernel<double>(4, 6, 3, 0.5, 0.5);
    OctTensor<double> xo = random_oct_tensor<double>(95, 1, 4, 8, 8, 0.5);
    EXPECT_THROW(oct_entry(x, bad), ConfigError);
    EXPECT_THROW(oct_exit(xo, bad), ConfigError);
}

TEST(OctExit, SingleOutputForm) {
    auto x = random_oct_tensor<double>(101, 1, 8, 8, 8, 0.5);
    const auto k = make_oct_kernel<double>(8, 6, 3, 0.5, 0.0, OctMode::Dense, 102);

    const auto y = oct_exit(x, k);
    const auto y_ref = oct_conv_forward(x, k);
    EXPECT_FALSE(y_ref.low.has_value());
    EXPECT_TRUE(bit_equal(y, *y_ref.high));

    auto x_zero_high = x;
    x_zero_high.high->fill(0.0);
    const auto y2 = oct_exit(x_zero_high, k);
    EXPECT_LT(max_rel_err(y2, upsample_nearest2(conv2d(*x.low, *k.w_lh, 1, 1))), 1e-12);
}

TEST(OctConvBackward, ZeroGradInZeroGradOut) {
    const auto k = make_oct_kernel<double>(8, 8, 3, 0.5, 0.5, OctMode::Dense, 111);
    const auto x = random_oct_tensor<double>(112, 1, 8, 8, 8, 0.5);
    OctTensor<double> gz;
    gz.alpha = 0.5;
    gz.high = Tensor4<double>(1, 4, 8, 8);
    gz.low = Tensor4<double>(1, 4, 4, 4);
    const auto g = oct_conv_backward(x, k, gz);
    for (double v : g.grad_x.high->buffer()) EXPECT_EQ(v, 0.0);
    for (double v : g.grad_x.low->buffer()) EXPECT_EQ(v, 0.0);
    for (double v : g.grad_k.w_hh->buffer()) EXPECT_EQ(v, 0.0);
    for (double v : g.grad_k.w_ll->buffer()) EXPECT_EQ(v, 0.0);
}

TEST(OctConvBackward, DegenerateAlphaZeroMatchesConvGradients) {
    const auto k = make_oct_kernel<double>(3, 5, 3, 0.0, 0.0, OctMode::Dense, 121);
    const auto x = random_tensor<double>(122, 2, 3, 8, 8);
    const auto gy = random_tensor<double>(123, 2, 5, 8, 8);
    const auto g = oct_conv_backward(from_vanilla(x), k, from_vanilla(gy));
    EXPECT_TRUE(bit_equal(*g.grad_x.high, conv2d_backward_input(gy, *k.w_hh, 8, 8, 1, 1)));
    const auto gw = conv2d_backward_weight(x, gy, *k.w_hh, 1, 1);
    EXPECT_TRUE(g.grad_k.w_hh->buffer() == gw.buffer());
}

TEST(OctKernelIo, RoundTripRestoresEveryBlockAndTheHeader) {
    const auto dir = std::filesystem::temp_directory_path();
    const auto p1 = (dir / "octconv_k1.octk").string();
    const auto p2 = (dir / "octconv_k2.octk").string();

    auto k = make_oct_kernel<double>(6, 10, 3, 0.5, 0.25, OctMode::Grouped, 123, 1);
    k.w_hh->at(0, 0, 1, 1) = 42.0; // post-init edit must survive the trip
    save_oct_kernel(p1, k);
    const auto back = load_oct_kernel<double>(p1);

    EXPECT_EQ(back.c_in, 6);
    EXPECT_EQ(back.c_out, 10);
    EXPECT_EQ(back.alpha_in, 0.5);
    EXPECT_EQ(back.alpha_out, 0.25);
    EXPECT_EQ(back.mode, OctMode::Grouped);
    EXPECT_EQ(back.seed, 123u);
    EXPECT_TRUE(k.w_hh->buffer() == back.w_hh->buffer());
    EXPECT_TRUE(k.w_lh->buffer() == back.w_lh->buffer());
    EXPECT_TRUE(k.w_hl->buffer() == back.w_hl->buffer());
    EXPECT_TRUE(k.w_ll->buffer() == back.w_ll->buffer());

    save_oct_kernel(p2, back);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    EXPECT_EQ(s1.str(), s2.str());

    EXPECT_THROW(load_oct_kernel<float>(p1), IoError); // dtype mismatch
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST(OctConvBackward, MaskedPathGradientsStayZero) {
    const auto k = make_oct_kernel<double>(8, 8, 3, 0.5, 0.5, OctMode::Dense, 131);
    const auto x = random_oct_tensor<double>(132, 1, 8, 8, 8, 0.5);
    OctTensor<double> gy;
    gy.alpha = 0.5;
    gy.high = random_tensor<double>(133, 1, 4, 8, 8);
    gy.low = random_tensor<double>(134, 1, 4, 4, 4);
    const auto g =
        oct_conv_backward(x, k, gy, DownsampleStrategy::AveragePool, PathMask{false, false});
    for (double v : g.grad_k.w_lh->buffer()) EXPECT_EQ(v, 0.0);
    for (double v : g.grad_k.w_hl->buffer()) EXPECT_EQ(v, 0.0);
}
