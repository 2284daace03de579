#include <gtest/gtest.h>

#include <cmath>

#include "cxrnet/cxrnet.hpp"
#include "test_util.hpp"

using namespace cxrnet;

namespace {

Rng fixed_rng() { return Rng(42); }

Tensor<double> conv_forward(Conv2D<double>& conv, const Tensor<double>& x) {
  Rng rng = fixed_rng();
  return conv.forward(x, Mode::train, rng);
}

void set_param(Layer<double>& layer, const std::string& name, const std::vector<double>& values) {
  for (auto& p : layer.trainable()) {
    if (p.name == name) {
      ASSERT_EQ(p.value->numel(), static_cast<std::int64_t>(values.size()));
      for (std::size_t i = 0; i < values.size(); ++i) (*p.value)[static_cast<std::int64_t>(i)] = values[i];
      return;
    }
  }
  FAIL() << "no parameter named " << name;
}

}  // namespace

TEST(Conv2D, AllOnesKernelSamePadding) {
  Rng init = fixed_rng();
  Conv2D<double> conv("conv", 1, 1, init);
  set_param(conv, "kernel", std::vector<double>(9, 1.0));
  set_param(conv, "bias", {0.0});
  Tensor<double> x = Tensor<double>::full(Shape{1, 3, 3, 1}, 1.0);
  Tensor<double> y = conv_forward(conv, x);
  EXPECT_DOUBLE_EQ(y(0, 1, 1, 0), 9.0);  // center
  EXPECT_DOUBLE_EQ(y(0, 0, 0, 0), 4.0);  // corner
  EXPECT_DOUBLE_EQ(y(0, 0, 1, 0), 6.0);  // edge midpoint
  EXPECT_DOUBLE_EQ(y(0, 2, 2, 0), 4.0);
  EXPECT_DOUBLE_EQ(y(0, 1, 2, 0), 6.0);
}

TEST(Conv2D, TableInputShape) {
  Rng init = fixed_rng();
  Conv2D<double> conv("conv", 1, 32, init);
  Tensor<double> x(Shape{1, 150, 150, 1});
  EXPECT_EQ(conv_forward(conv, x).shape(), (Shape{1, 150, 150, 32}));
  EXPECT_EQ(conv.param_count(), 320);
}

TEST(Conv2D, ZeroKernelGivesConstantBias) {
  Rng init = fixed_rng();
  Conv2D<double> conv("conv", 2, 3, init);
  set_param(conv, "kernel", std::vector<double>(9 * 2 * 3, 0.0));
  set_param(conv, "bias", {1.5, -2.0, 0.25});
  Rng rng(7);
  Tensor<double> x = testutil::random_tensor(Shape{2, 4, 5, 2}, rng);
  Tensor<double> y = conv_forward(conv, x);
  for (std::int64_t n = 0; n < 2; ++n)
    for (std::int64_t i = 0; i < 4; ++i)
      for (std::int64_t j = 0; j < 5; ++j) {
        EXPECT_DOUBLE_EQ(y(n, i, j, 0), 1.5);
        EXPECT_DOUBLE_EQ(y(n, i, j, 1), -2.0);
        EXPECT_DOUBLE_EQ(y(n, i, j, 2), 0.25);
      }
}

TEST(Conv2D, ChannelMismatchIsAnError) {
  Rng init = fixed_rng();
  Conv2D<double> conv("conv", 3, 4, init);
  Tensor<double> x(Shape{1, 4, 4, 2});
  Rng rng = fixed_rng();
  EXPECT_THROW(conv.forward(x, Mode::train, rng), ShapeError);
}

TEST(Conv2D, LinearInInputWhenBiasZero) {
  Rng rng(21);
  Rng init = fixed_rng();
  Conv2D<double> conv("conv", 2, 3, init);
  set_param(conv, "bias", {0, 0, 0});
  Tensor<double> x = testutil::random_tensor(Shape{1, 6, 6, 2}, rng);
  const double alpha = 3.25;
  Tensor<double> lhs = conv_forward(conv, scale(x, alpha));
  Tensor<double> rhs = scale(conv_forward(conv, x), alpha);
  for (std::int64_t i = 0; i < lhs.numel(); ++i) EXPECT_NEAR(lhs[i], rhs[i], 1e-10);
}

TEST(Conv2D, MatchesNaiveOracleOnRandomShapes) {
  Rng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const std::int64_t h = 1 + static_cast<std::int64_t>(rng.below(12));
    const std::int64_t w = 1 + static_cast<std::int64_t>(rng.below(12));
    const std::int64_t cin = 1 + static_cast<std::int64_t>(rng.below(4));
    const std::int64_t cout = 1 + static_cast<std::int64_t>(rng.below(4));
    const std::int64_t batch = 1 + static_cast<std::int64_t>(rng.below(3));
    Rng init = fixed_rng();
    Conv2D<double> conv("conv", cin, cout, init);
    Tensor<double> kernel = testutil::random_tensor(Shape{3, 3, cin, cout}, rng);
    std::vector<double> bias;
    for (std::int64_t i = 0; i < cout; ++i) bias.push_back(rng.uniform(-1, 1));
    set_param(conv, "kernel", kernel.values());
    set_param(conv, "bias", bias);
    Tensor<double> x = testutil::random_tensor(Shape{batch, h, w, cin}, rng);
    Tensor<double> fast = conv_forward(conv, x);
    Tensor<double> slow = testutil::naive_conv2d(x, kernel, bias);
    ASSERT_EQ(fast.shape(), slow.shape());
    for (std::int64_t i = 0; i < fast.numel(); ++i) EXPECT_NEAR(fast[i], slow[i], 1e-10);
  }
}

TEST(MaxPool2D, BasicWindowAndShapes) {
  MaxPool2D<double> pool("pool");
  Rng rng = fixed_rng();
  Tensor<double> x(Shape{1, 2, 2, 1}, {1, 2, 3, 4});
  Tensor<double> y = pool.forward(x, Mode::train, rng);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(y[0], 4.0);

  EXPECT_EQ(pool.output_shape(Shape{1, 75, 75, 32}), (Shape{1, 38, 38, 32}));
}

TEST(MaxPool2D, CeilShapeRule) {
  for (std::int64_t h = 1; h <= 100; ++h) {
    EXPECT_EQ(MaxPool2D<double>::pooled_extent(h), (h + 1) / 2);
  }
  // The spatial chain the architecture steps through.
  std::int64_t extent = 150;
  for (std::int64_t expected : {75, 38, 19, 10, 5}) {
    extent = MaxPool2D<double>::pooled_extent(extent);
    EXPECT_EQ(extent, expected);
  }
}

TEST(MaxPool2D, EdgeTruncatedWindows) {
  MaxPool2D<double> pool("pool");
  Rng rng(23);
  Tensor<double> x = testutil::random_tensor(Shape{1, 5, 5, 1}, rng);
  Rng frng = fixed_rng();
  Tensor<double> y = pool.forward(x, Mode::train, frng);
  EXPECT_EQ(y.shape(), (Shape{1, 3, 3, 1}));
  // Bottom-right window is the single corner element.
  EXPECT_DOUBLE_EQ(y(0, 2, 2, 0), x(0, 4, 4, 0));
}

TEST(MaxPool2D, DominatesWindowOnRandomInputs) {
  Rng rng(24);
  for (int trial = 0; trial < 100; ++trial) {
    const std::int64_t h = 1 + static_cast<std::int64_t>(rng.below(12));
    const std::int64_t w = 1 + static_cast<std::int64_t>(rng.below(12));
    const std::int64_t ch = 1 + static_cast<std::int64_t>(rng.below(4));
    Tensor<double> x = testutil::random_tensor(Shape{2, h, w, ch}, rng);
    MaxPool2D<double> pool("pool");
    Rng frng = fixed_rng();
    Tensor<double> fast = pool.forward(x, Mode::train, frng);
    Tensor<double> slow = testutil::naive_maxpool(x);
    ASSERT_EQ(fast.shape(), slow.shape());
    for (std::int64_t i = 0; i < fast.numel(); ++i) EXPECT_DOUBLE_EQ(fast[i], slow[i]);
  }
}

TEST(MaxPool2D, BackwardRoutesToArgmax) {
  MaxPool2D<double> pool("pool");
  Rng rng = fixed_rng();
  Tensor<double> x(Shape{1, 2, 2, 1}, {1, 4, 3, 2});
  pool.forward(x, Mode::train, rng);
  Tensor<double> dy(Shape{1, 1, 1, 1}, {5});
  Tensor<double> dx = pool.backward(dy);
  EXPECT_EQ(dx.values(), (std::vector<double>{0, 5, 0, 0}));
}

TEST(BatchNorm, HandDerivedNormalization) {
  // (x - 2) / sqrt(2/3) for batch values {1, 2, 3}, epsilon 0.
  BatchNorm<double> bn("bn", 1, 0.0);
  Rng rng = fixed_rng();
  Tensor<double> x(Shape{3, 1, 1, 1}, {1, 2, 3});
  Tensor<double> y = bn.forward(x, Mode::train, rng);
  EXPECT_NEAR(y[0], -1.2247448713915890, 1e-12);
  EXPECT_NEAR(y[1], 0.0, 1e-12);
  EXPECT_NEAR(y[2], 1.2247448713915890, 1e-12);
}

TEST(BatchNorm, ConstantInputMapsToZero) {
  BatchNorm<double> bn("bn", 2);
  Rng rng = fixed_rng();
  Tensor<double> x = Tensor<double>::full(Shape{2, 2, 2, 2}, 3.7);
  Tensor<double> y = bn.forward(x, Mode::train, rng);
  for (std::int64_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y[i], 0.0, 1e-12);
}

TEST(BatchNorm, ReportedParameterCount) {
  BatchNorm<double> bn("bn", 32);
  EXPECT_EQ(bn.param_count(), 128);
}

TEST(BatchNorm, TrainModeStandardizes) {
  Rng rng(25);
  BatchNorm<double> bn("bn", 3);
  Tensor<double> x = testutil::random_tensor(Shape{4, 4, 4, 3}, rng, -3.0, 3.0);
  Rng frng = fixed_rng();
  Tensor<double> y = bn.forward(x, Mode::train, frng);
  const std::int64_t rows = y.numel() / 3;
  for (std::int64_t c = 0; c < 3; ++c) {
    double mean = 0;
    for (std::int64_t r = 0; r < rows; ++r) mean += y[r * 3 + c];
    mean /= static_cast<double>(rows);
    double var = 0;
    for (std::int64_t r = 0; r < rows; ++r) var += (y[r * 3 + c] - mean) * (y[r * 3 + c] - mean);
    var /= static_cast<double>(rows);
    EXPECT_LT(std::fabs(mean), 1e-6);
    EXPECT_NEAR(var, 1.0, 1e-3);
  }
}

TEST(BatchNorm, EvalBeforeStatsIsAnError) {
  BatchNorm<double> bn("bn", 1);
  Rng rng = fixed_rng();
  Tensor<double> x(Shape{2, 1, 1, 1}, {1, 2});
  EXPECT_THROW(bn.forward(x, Mode::eval, rng), StateError);
  bn.forward(x, Mode::train, rng);
  EXPECT_NO_THROW(bn.forward(x, Mode::eval, rng));
}

TEST(BatchNorm, MovingStatsConvergeToBatchStats) {
  BatchNorm<double> bn("bn", 1);
  Rng rng = fixed_rng();
  Tensor<double> x(Shape{4, 1, 1, 1}, {0, 2, 4, 6});  // mean 3, biased var 5
  for (int i = 0; i < 4000; ++i) bn.forward(x, Mode::train, rng);
  auto state = bn.state();
  EXPECT_NEAR((*state[0].value)[0], 3.0, 1e-6);
  EXPECT_NEAR((*state[1].value)[0], 5.0, 1e-5);
}

TEST(Dropout, IdentityCases) {
  Rng rng = fixed_rng();
  Tensor<double> x(Shape{4}, {1, -2, 3, 0.5});
  Dropout<double> none("drop", 0.0);
  EXPECT_EQ(none.forward(x, Mode::train, rng).values(), x.values());
  Dropout<double> evald("drop", 0.2);
  EXPECT_EQ(evald.forward(x, Mode::eval, rng).values(), x.values());
}

TEST(Dropout, SurvivorScaling) {
  Dropout<double> drop("drop", 0.2);
  Rng rng(26);
  Tensor<double> x = Tensor<double>::full(Shape{1000}, 1.0);
  Tensor<double> y = drop.forward(x, Mode::train, rng);
  bool saw_survivor = false, saw_zero = false;
  for (std::int64_t i = 0; i < y.numel(); ++i) {
    if (y[i] == 0.0) {
      saw_zero = true;
    } else {
      EXPECT_DOUBLE_EQ(y[i], 1.25);
      saw_survivor = true;
    }
  }
  EXPECT_TRUE(saw_survivor);
  EXPECT_TRUE(saw_zero);
}

TEST(Dropout, InvertedScalingPreservesExpectation) {
  Dropout<double> drop("drop", 0.2);
  Rng rng(27);
  Tensor<double> x(Shape{1}, {1.0});
  double sum = 0;
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) sum += drop.forward(x, Mode::train, rng)[0];
  EXPECT_NEAR(sum / trials, 1.0, 0.02);
}

TEST(Dropout, InvalidRateRejected) {
  EXPECT_THROW(Dropout<double>("drop", 1.0), ConfigError);
  EXPECT_THROW(Dropout<double>("drop", -0.1), ConfigError);
}

TEST(Dropout, BackwardAppliesSameMask) {
  Dropout<double> drop("drop", 0.5);
  Rng rng(28);
  Tensor<double> x = Tensor<double>::full(Shape{64}, 1.0);
  Tensor<double> y = drop.forward(x, Mode::train, rng);
  Tensor<double> dx = drop.backward(Tensor<double>::full(Shape{64}, 1.0));
  EXPECT_EQ(dx.values(), y.values());
}

TEST(Dense, IdentityAndHandValues) {
  Rng init = fixed_rng();
  Dense<double> ident("dense", 2, 2, Activation::none, init);
  set_param(ident, "kernel", {1, 0, 0, 1});
  set_param(ident, "bias", {0, 0});
  Rng rng = fixed_rng();
  Tensor<double> x(Shape{1, 2}, {3.5, -1.25});
  EXPECT_EQ(ident.forward(x, Mode::eval, rng).values(), x.values());

  Dense<double> d("dense", 2, 1, Activation::none, init);
  set_param(d, "kernel", {1, 1});
  set_param(d, "bias", {0.5});
  Tensor<double> x2(Shape{1, 2}, {1, 2});
  EXPECT_DOUBLE_EQ(d.forward(x2, Mode::eval, rng)[0], 3.5);

  EXPECT_THROW(d.forward(Tensor<double>(Shape{1, 3}), Mode::eval, rng), ShapeError);
}

TEST(Dense, TableParameterCount) {
  Rng init = fixed_rng();
  Dense<double> d("dense", 6400, 128, Activation::relu, init);
  EXPECT_EQ(d.param_count(), 819328);
}

TEST(Dense, BackwardThroughIdentity) {
  Rng init = fixed_rng();
  Dense<double> d("dense", 2, 2, Activation::none, init);
  set_param(d, "kernel", {1, 0, 0, 1});
  set_param(d, "bias", {0, 0});
  Rng rng = fixed_rng();
  Tensor<double> x(Shape{1, 2}, {0.3, 0.9});
  d.forward(x, Mode::train, rng);
  Tensor<double> dy(Shape{1, 2}, {1.5, -2.0});
  EXPECT_EQ(d.backward(dy).values(), dy.values());
}

TEST(Dense, ReluBackwardSubgradient) {
  // grad_out [1,1,1] against pre-activations [-3, 0, 4]: gradient at 0 is 0.
  Rng init = fixed_rng();
  Dense<double> d("dense", 3, 3, Activation::relu, init);
  set_param(d, "kernel", {1, 0, 0, 0, 1, 0, 0, 0, 1});
  set_param(d, "bias", {0, 0, 0});
  Rng rng = fixed_rng();
  Tensor<double> x(Shape{1, 3}, {-3, 0, 4});
  d.forward(x, Mode::train, rng);
  Tensor<double> dx = d.backward(Tensor<double>(Shape{1, 3}, {1, 1, 1}));
  EXPECT_EQ(dx.values(), (std::vector<double>{0, 0, 1}));
}

TEST(Activations, ReluValues) {
  Tensor<double> x(Shape{3}, {-3, 0, 4});
  EXPECT_EQ(relu(x).values(), (std::vector<double>{0, 0, 4}));
  Tensor<double> single(Shape{1}, {-1});
  EXPECT_EQ(relu(single).values(), (std::vector<double>{0}));
  // Idempotence on random inputs.
  Rng rng(29);
  Tensor<double> r = testutil::random_tensor(Shape{100}, rng, -5, 5);
  EXPECT_EQ(relu(relu(r)).values(), relu(r).values());
}

TEST(Activations, SigmoidValues) {
  Tensor<double> zero(Shape{1}, {0});
  EXPECT_DOUBLE_EQ(sigmoid(zero)[0], 0.5);
  Tensor<double> two(Shape{1}, {2});
  EXPECT_NEAR(sigmoid(two)[0], 0.8808, 5e-5);
  // Symmetry identity, and overflow-safe at extremes.
  Rng rng(30);
  for (int i = 0; i < 200; ++i) {
    const double v = rng.uniform(-700, 700);
    Tensor<double> a(Shape{1}, {v});
    Tensor<double> b(Shape{1}, {-v});
    EXPECT_NEAR(sigmoid(a)[0] + sigmoid(b)[0], 1.0, 1e-12);
  }
}

TEST(Activations, SoftmaxValues) {
  Tensor<double> pair(Shape{2}, {0, 0});
  EXPECT_DOUBLE_EQ(softmax(pair)[0], 0.5);
  EXPECT_DOUBLE_EQ(softmax(pair)[1], 0.5);
  Tensor<double> triple = Tensor<double>::full(Shape{3}, 4.2);
  for (std::int64_t i = 0; i < 3; ++i) EXPECT_NEAR(softmax(triple)[i], 1.0 / 3.0, 1e-15);

  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<double> x = testutil::random_tensor(Shape{7}, rng, -10, 10);
    Tensor<double> s = softmax(x);
    double sum = 0;
    for (std::int64_t i = 0; i < s.numel(); ++i) sum += s[i];
    EXPECT_NEAR(sum, 1.0, 1e-12);
    const double shift = rng.uniform(-100, 100);
    Tensor<double> shifted = softmax(add(x, Tensor<double>::full(x.shape(), shift)));
    for (std::int64_t i = 0; i < s.numel(); ++i) EXPECT_NEAR(shifted[i], s[i], 1e-12);
  }
}

TEST(Flatten, RowMajorPerSample) {
  Flatten<double> flat("flatten");
  Rng rng = fixed_rng();
  EXPECT_EQ(flat.output_shape(Shape{1, 5, 5, 256}), (Shape{1, 6400}));
  EXPECT_EQ(flat.output_shape(Shape{1, 1, 1, 1}), (Shape{1, 1}));

  Tensor<double> x(Shape{2, 2, 2, 1}, {1, 2, 3, 4, 5, 6, 7, 8});
  Tensor<double> y = flat.forward(x, Mode::train, rng);
  EXPECT_EQ(y.shape(), (Shape{2, 4}));
  EXPECT_EQ(y.values(), (std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8}));

  EXPECT_THROW(flat.output_shape(Shape{2, 4}), ShapeError);

  // Backward restores the NHWC shape.
  Tensor<double> dy(Shape{2, 4}, {8, 7, 6, 5, 4, 3, 2, 1});
  EXPECT_EQ(flat.backward(dy).shape(), x.shape());
}

TEST(Layers, BackwardWithoutForwardIsAnError) {
  MaxPool2D<double> pool("pool");
  EXPECT_THROW(pool.backward(Tensor<double>(Shape{1, 1, 1, 1})), StateError);
  Flatten<double> flat("flatten");
  EXPECT_THROW(flat.backward(Tensor<double>(Shape{1, 1})), StateError);
}
