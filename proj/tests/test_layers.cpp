#include <gtest/gtest.h>

#include "oracles.hpp"
#include "twsc/nn/adam.hpp"
#include "twsc/nn/sequential.hpp"

using namespace twsc;
using namespace twsc::nn;

namespace {

Tensor<double> random_tensor(Shape s, RngStream& rng) {
  Tensor<double> t(s);
  for (auto& v : t.storage()) v = rng.uniform(-1.0, 1.0);
  return t;
}

void randomize(Parameter<double>& p, RngStream& rng) {
  for (auto& v : p.value) v = rng.uniform(-0.5, 0.5);
}

/// Checks every parameter and input gradient of `layer` against central differences of the
/// scalar <forward(x), proj>.
void check_gradients(Layer<double>& layer, Tensor<double> x, RngStream& rng, double tol = 1e-6) {
  auto out = layer.forward(x);
  auto proj = random_tensor(out.shape(), rng);
  auto objective = [&] {
    auto o = layer.forward(x);
    double acc = 0;
    for (std::size_t i = 0; i < o.size(); ++i) acc += o.data()[i] * proj.data()[i];
    return acc;
  };
  for (auto* p : layer.parameters()) p->zero_grad();
  layer.forward(x);
  auto gin = layer.backward(proj, BackwardMode{});

  for (auto* p : layer.parameters()) {
    std::vector<double> fd(p->value.size());
    for (std::size_t i = 0; i < p->value.size(); ++i) fd[i] = oracle::central_difference(objective, p->value[i], 1e-5);
    EXPECT_LT(oracle::relative_error(p->grad, fd), tol) << layer.name() << " " << p->name;
  }
  std::vector<double> fd(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) fd[i] = oracle::central_difference(objective, x.storage()[i], 1e-5);
  EXPECT_LT(oracle::relative_error(gin.storage(), fd), tol) << layer.name() << " input";
}

}  // namespace

TEST(Conv2d, MatchesDirectConvolution) {
  RngStream rng(3, "test");
  for (auto [stride, size] : {std::pair{1, 7}, {2, 28}, {2, 7}}) {
    Conv2d<double> conv(3, 5, ConvGeometry{3, 3, stride, stride, 1, 1});
    randomize(conv.weight(), rng);
    randomize(conv.bias(), rng);
    auto x = random_tensor(Shape{3, 2, size, size}, rng);
    auto got = conv.forward(x);
    auto want = oracle::conv2d(x, conv.weight().value, conv.bias().value, 5, 3, 3, stride, stride, 1, 1);
    ASSERT_EQ(got.shape(), want.shape());
    EXPECT_LT(max_abs_difference(got, want), 1e-12);
  }
}

TEST(Conv2d, OneDimensionalSamePaddingKeepsLength) {
  RngStream rng(4, "test");
  Conv2d<double> conv(5, 4, ConvGeometry{1, 5, 1, 1, 0, 2});
  randomize(conv.weight(), rng);
  auto x = random_tensor(Shape{5, 3, 1, 16}, rng);
  auto got = conv.forward(x);
  EXPECT_EQ(got.shape(), (Shape{4, 3, 1, 16}));
  auto want = oracle::conv2d(x, conv.weight().value, conv.bias().value, 4, 1, 5, 1, 1, 0, 2);
  EXPECT_LT(max_abs_difference(got, want), 1e-12);
}

TEST(Conv2d, FloatForwardWithinTolerance) {
  RngStream rng(5, "test");
  Conv2d<float> conv(1, 4, ConvGeometry{});
  for (auto& v : conv.weight().value) v = static_cast<float>(rng.uniform(-1, 1));
  Tensor<float> x(Shape{1, 1, 28, 28});
  for (auto& v : x.storage()) v = static_cast<float>(rng.uniform());
  auto got = conv.forward(x);
  Storage<double> w(conv.weight().value.begin(), conv.weight().value.end());
  auto want = oracle::conv2d(x.cast<double>(), w, std::vector<double>(4, 0.0), 4, 3, 3, 1, 1, 1, 1);
  EXPECT_LT(max_abs_difference(got.cast<double>(), want), 1e-5);
}

TEST(ConvTranspose2d, MatchesScatterOracle) {
  RngStream rng(6, "test");
  struct Case { int in, stride, pad; };
  for (auto c : {Case{4, 1, 0}, Case{4, 2, 0}, Case{7, 2, 1}, Case{14, 2, 1}}) {
    ConvTranspose2d<double> t(3, 2, ConvGeometry{3, 3, c.stride, c.stride, 1, 1}, c.pad);
    randomize(t.weight(), rng);
    randomize(t.bias(), rng);
    auto x = random_tensor(Shape{3, 2, c.in, c.in}, rng);
    auto got = t.forward(x);
    auto want = oracle::conv_transpose2d(x, t.weight().value, t.bias().value, 2, 3, c.stride, 1, c.pad);
    ASSERT_EQ(got.shape(), want.shape());
    EXPECT_LT(max_abs_difference(got, want), 1e-12);
  }
}

TEST(ConvTranspose2d, OutputPaddingHitsTargetSizes) {
  ConvTranspose2d<float> up4to7(32, 32, ConvGeometry{3, 3, 2, 2, 1, 1}, 0);
  EXPECT_EQ(up4to7.output_shape(Shape{32, 1, 4, 4}).h, 7);
  ConvTranspose2d<float> up7to14(8, 8, ConvGeometry{3, 3, 2, 2, 1, 1}, 1);
  EXPECT_EQ(up7to14.output_shape(Shape{8, 1, 7, 7}).h, 14);
  EXPECT_THROW((ConvTranspose2d<float>(1, 1, ConvGeometry{3, 3, 2, 2, 1, 1}, 2)), ContractError);
}

TEST(Im2Col, ColToImIsTheAdjoint) {
  RngStream rng(7, "test");
  ConvGeometry g{3, 3, 2, 2, 1, 1};
  auto x = random_tensor(Shape{2, 3, 7, 7}, rng);
  RowMatrix<double> cols;
  detail::im2col(x, g, 4, 4, cols);
  RowMatrix<double> c = RowMatrix<double>::Random(cols.rows(), cols.cols());
  Tensor<double> back(x.shape());
  detail::col2im(c, g, 4, 4, back);
  double lhs = (cols.array() * c.array()).sum();
  double rhs = 0;
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x.data()[i] * back.data()[i];
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(Gradients, ConvolutionLayers) {
  RngStream rng(8, "test");
  Conv2d<double> conv(2, 3, ConvGeometry{3, 3, 2, 2, 1, 1});
  randomize(conv.weight(), rng);
  randomize(conv.bias(), rng);
  check_gradients(conv, random_tensor(Shape{2, 2, 5, 5}, rng), rng);

  ConvTranspose2d<double> tconv(2, 3, ConvGeometry{3, 3, 2, 2, 1, 1}, 1);
  randomize(tconv.weight(), rng);
  randomize(tconv.bias(), rng);
  check_gradients(tconv, random_tensor(Shape{2, 2, 3, 3}, rng), rng);

  Conv2d<double> conv1d(3, 2, ConvGeometry{1, 5, 1, 1, 0, 2});
  randomize(conv1d.weight(), rng);
  check_gradients(conv1d, random_tensor(Shape{3, 2, 1, 9}, rng), rng);
}

TEST(Gradients, DenseFlattenAndActivations) {
  RngStream rng(9, "test");
  Dense<double> dense(6, 4);
  randomize(dense.weight(), rng);
  randomize(dense.bias(), rng);
  check_gradients(dense, random_tensor(Shape{6, 3, 1, 1}, rng), rng);

  Flatten<double> flat;
  check_gradients(flat, random_tensor(Shape{2, 3, 2, 2}, rng), rng);

  for (auto kind : {Activation::elu, Activation::sigmoid, Activation::relu}) {
    ActivationLayer<double> act(kind);
    auto x = random_tensor(Shape{2, 2, 3, 3}, rng);
    // keep relu inputs away from its kink
    for (auto& v : x.storage()) if (std::abs(v) < 0.05) v += 0.1;
    check_gradients(act, x, rng);
  }
}

TEST(Activation, MatchesClosedForms) {
  ActivationLayer<double> elu(Activation::elu), sig(Activation::sigmoid), relu(Activation::relu);
  for (double v : {-3.0, -0.5, 0.0, 0.7, 4.0}) {
    EXPECT_DOUBLE_EQ(elu.apply(v), oracle::elu(v));
    EXPECT_NEAR(sig.apply(v), oracle::sigmoid(v), 1e-15);
    EXPECT_DOUBLE_EQ(relu.apply(v), oracle::relu(v));
  }
}

TEST(Flatten, OrdersFeaturesChannelMajor) {
  Tensor<float> x(Shape{2, 2, 1, 3});
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = static_cast<float>(i);
  Flatten<float> f;
  auto y = f.forward(x);
  EXPECT_EQ(y.shape(), (Shape{6, 2, 1, 1}));
  // item 1, channel 1, position 2 -> feature 5
  EXPECT_EQ(y.at(5, 1), x.at(1, 1, 0, 2));
}

TEST(Sequential, NonFiniteActivationNamesTheLayer) {
  Sequential<double> net("probe");
  auto& d = net.add<Dense<double>>(2, 2, "first");
  net.add<ActivationLayer<double>>(Activation::elu);
  d.weight().value = {1, 0, 0, 1};
  Tensor<double> x(Shape{2, 1, 1, 1});
  x.at(0, 0) = std::numeric_limits<double>::infinity();
  try {
    net.forward(x);
    FAIL() << "expected a numeric fault";
  } catch (const NumericFault& e) {
    EXPECT_NE(e.layer().find("first"), std::string::npos);
  }
}

TEST(Adam, FirstStepMovesEachWeightByTheLearningRate) {
  Parameter<double> p("w", 3);
  p.value = {1.0, -2.0, 0.5};
  p.grad = {0.3, -4.0, 1e-3};
  Adam<double> opt;
  opt.step({&p}, 0.01);
  // With bias correction the first step is lr * g / (|g| + eps) per entry.
  EXPECT_NEAR(p.value[0], 1.0 - 0.01, 1e-6);
  EXPECT_NEAR(p.value[1], -2.0 + 0.01, 1e-6);
  EXPECT_NEAR(p.value[2], 0.5 - 0.01 * 1e-3 / (1e-3 + 1e-7), 1e-9);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(Adam, ZeroGradientLeavesWeightsUntouched) {
  Parameter<float> p("w", 4);
  p.value = {1, 2, 3, 4};
  Adam<float> opt;
  for (int i = 0; i < 3; ++i) opt.step({&p}, 1e-3);
  EXPECT_EQ(p.value, (Storage<float>{1, 2, 3, 4}));
}
