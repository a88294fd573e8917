#include "haven/optim.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

using namespace haven;

TEST_CASE("clipping halves gradients with global norm 20 at clip 10", "[optim]") {
  Tensor a = Tensor::row({0.0, 0.0}, true);
  Tensor b = Tensor::row({0.0}, true);
  a.mutable_grad()[0] = 12.0;
  b.mutable_grad()[0] = 16.0;
  std::vector<Tensor> params{a, b};
  CHECK(global_grad_norm(params) == Catch::Approx(20.0));
  CHECK(clip_grad_norm(params, 10.0) == Catch::Approx(20.0));
  CHECK(a.grad()[0] == Catch::Approx(6.0));
  CHECK(b.grad()[0] == Catch::Approx(8.0));
}

TEST_CASE("clipped step uses the halved gradient", "[optim]") {
  Tensor w = Tensor::row({1.0, 1.0}, true);
  w.mutable_grad()[0] = 12.0;
  w.mutable_grad()[1] = 16.0;
  RmsProp opt({w});
  opt.step(10.0);
  const double acc0 = 0.01 * 36.0;
  CHECK(w.values()[0] == Catch::Approx(1.0 - 0.0005 * 6.0 / std::sqrt(acc0 + 1e-5)).epsilon(1e-14));
  CHECK(opt.accumulators()[0][1] == Catch::Approx(0.01 * 64.0));
  // Gradients are cleared after the step.
  CHECK_FALSE(w.has_grad());
}

TEST_CASE("zero gradient leaves parameters and decays the accumulator", "[optim]") {
  Tensor w = Tensor::row({0.5}, true);
  w.mutable_grad()[0] = 1.0;
  RmsProp opt({w});
  opt.step(10.0);
  const double after_first = w.values()[0];
  const double acc = opt.accumulators()[0][0];
  w.zero_grad();
  opt.step(10.0);
  CHECK(w.values()[0] == after_first);
  CHECK(opt.accumulators()[0][0] == Catch::Approx(0.99 * acc).epsilon(1e-15));
}

TEST_CASE("single-parameter RMSProp step", "[optim]") {
  Tensor w = Tensor::scalar(1.0, true);
  w.mutable_grad()[0] = 1.0;
  RmsProp opt({w}, RmsPropOptions{0.0005, 0.99, 1e-5});
  opt.step(10.0);
  CHECK(opt.accumulators()[0][0] == Catch::Approx(0.01).epsilon(1e-15));
  // 1 - 0.0005 / sqrt(0.01001), evaluated independently.
  CHECK(w.item() == Catch::Approx(0.99500250).margin(1e-8));
  CHECK(std::abs(w.item() - 0.995002) < 1e-6);
}

TEST_CASE("accumulators stay nonnegative", "[optim]") {
  Tensor w = Tensor::row({0.1, -0.2, 0.3}, true);
  RmsProp opt({w});
  for (int i = 0; i < 5; ++i) {
    w.mutable_grad()[0] = -3.0 * i;
    w.mutable_grad()[2] = 0.5;
    opt.step(10.0);
    for (double a : opt.accumulators()[0]) CHECK(a >= 0.0);
  }
}

TEST_CASE("NaN gradient signals divergence", "[optim]") {
  Tensor w = Tensor::row({1.0}, true);
  w.mutable_grad()[0] = std::numeric_limits<double>::quiet_NaN();
  RmsProp opt({w});
  CHECK_THROWS_AS(opt.step(10.0), DivergenceError);
  CHECK(w.values()[0] == 1.0);
}
