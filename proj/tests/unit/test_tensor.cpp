#include <gtest/gtest.h>

#include "generators.hpp"
#include "oracles.hpp"
#include "xood/error.hpp"
#include "xood/io.hpp"
#include "xood/tensor.hpp"

using namespace xood;

namespace {

void expect_close(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], tol) << "at " << i;
}

}  // namespace

TEST(Tensor, ShapeAndIndexing) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.item_size(), 12u);
  t.at({1, 2, 3}) = 5.0f;
  EXPECT_EQ(t[23], 5.0f);
  EXPECT_THROW(Tensor({2, 0}), DimensionError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<float>(3)), DimensionError);
}

TEST(Tensor, SliceAndConcatRoundTrip) {
  Rng rng(1);
  const auto t = gen::tensor(rng, {7, 2, 3});
  std::vector<Tensor> parts{t.slice(0, 3), t.slice(3, 7)};
  EXPECT_EQ(concat(parts), t);
}

TEST(Tensor, Conv2dMatchesNestedLoops) {
  Rng rng(2);
  for (int c = 0; c < 40; ++c) {
    const auto side = static_cast<std::uint32_t>(3 + rng.below(6));
    const auto ch = static_cast<std::uint32_t>(1 + rng.below(3));
    const auto f = static_cast<std::uint32_t>(1 + rng.below(4));
    const auto k = static_cast<std::uint32_t>(1 + rng.below(std::min<std::uint32_t>(side, 3)));
    const auto stride = static_cast<std::uint32_t>(1 + rng.below(2));
    const auto pad = static_cast<std::uint32_t>(rng.below(2));
    const auto in = gen::tensor(rng, {2, ch, side, side});
    const auto kernel = gen::tensor(rng, {f, ch, k, k});
    std::vector<float> bias(f);
    for (auto& b : bias) b = static_cast<float>(rng.uniform(-1, 1));
    expect_close(conv2d(in, kernel, bias, stride, pad), oracle::conv2d(in, kernel, bias, stride, pad), 1e-6);
  }
}

TEST(Tensor, DenseMatchesNestedLoops) {
  Rng rng(3);
  for (int c = 0; c < 40; ++c) {
    const auto n = static_cast<std::uint32_t>(1 + rng.below(5));
    const auto d = static_cast<std::uint32_t>(1 + rng.below(8));
    const auto k = static_cast<std::uint32_t>(1 + rng.below(8));
    const auto in = gen::tensor(rng, {n, d});
    const auto w = gen::tensor(rng, {d, k});
    std::vector<float> bias(k, 0.25f);
    expect_close(dense(in, w, bias), oracle::dense(in, w, bias), 1e-6);
  }
}

TEST(Tensor, MaxPoolMatchesNestedLoops) {
  Rng rng(4);
  for (int c = 0; c < 40; ++c) {
    const auto side = static_cast<std::uint32_t>(2 + rng.below(7));
    const auto window = static_cast<std::uint32_t>(1 + rng.below(std::min<std::uint32_t>(side, 3)));
    const auto stride = static_cast<std::uint32_t>(1 + rng.below(2));
    const auto in = gen::tensor(rng, {2, 2, side, side});
    expect_close(maxpool2d(in, window, stride), oracle::maxpool2d(in, window, stride), 0.0);
  }
}

TEST(Tensor, ReluIdempotent) {
  Rng rng(5);
  const auto t = gen::tensor(rng, {4, 16});
  const auto once = relu(t);
  EXPECT_EQ(relu(once), once);
  for (float v : once.storage()) EXPECT_GE(v, 0.0f);
}

TEST(Tensor, SoftmaxShiftInvariant) {
  Rng rng(6);
  auto t = gen::tensor(rng, {5, 7}, -4, 4);
  auto shifted = t;
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += static_cast<float>(3.5 + (i / 7));
  const auto a = softmax(t), b = softmax(shifted);
  expect_close(a, b, 1e-6);
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0;
    for (float v : a.item(r)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Tensor, SoftmaxHandlesLargeLogits) {
  Tensor t({1, 3}, std::vector<float>{1000.0f, 1000.0f, -1000.0f});
  const auto p = softmax(t);
  EXPECT_NEAR(p[0], 0.5f, 1e-6);
  EXPECT_NEAR(p[2], 0.0f, 1e-6);
}

TEST(Tensor, OperationsArePure) {
  Rng rng(7);
  const auto in = gen::tensor(rng, {2, 2, 6, 6});
  const auto k = gen::tensor(rng, {3, 2, 3, 3});
  std::vector<float> bias(3, 0.1f);
  EXPECT_EQ(conv2d(in, k, bias, 1, 1), conv2d(in, k, bias, 1, 1));
  EXPECT_EQ(maxpool2d(in, 2, 2), maxpool2d(in, 2, 2));
}

TEST(Tensor, ShapeMismatchThrows) {
  Tensor in({1, 2, 4, 4}), k({1, 3, 3, 3});
  std::vector<float> bias(1);
  EXPECT_THROW(conv2d(in, k, bias, 1, 0), DimensionError);
  EXPECT_THROW(dense(Tensor({2, 3}), Tensor({4, 2}), std::vector<float>(2)), DimensionError);
}

TEST(Xten, RoundTripIsBitExact) {
  Rng rng(8);
  const auto t = gen::tensor(rng, {3, 1, 5, 2});
  const auto bytes = encode_xten(t);
  ASSERT_EQ(bytes.size(), 7u + 4 * 4 + 4 * t.size());
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "XTEN");
  EXPECT_EQ(bytes[4], 0x01);
  EXPECT_EQ(bytes[5], 0x00);
  EXPECT_EQ(bytes[6], 4);
  EXPECT_EQ(decode_xten(bytes), t);
}

TEST(Xten, BadMagicReportsOffset) {
  Rng rng(9);
  auto bytes = encode_xten(gen::tensor(rng, {2, 2}));
  bytes[0] = 'Y';
  try {
    decode_xten(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  auto truncated = encode_xten(gen::tensor(rng, {2, 2}));
  truncated.resize(truncated.size() - 3);
  EXPECT_THROW(decode_xten(truncated), FormatError);
}
