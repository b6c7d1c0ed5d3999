#include <doctest.h>

#include <cmath>

#include "av/autodiff.hpp"
#include "av/common.hpp"
#include "av/rng.hpp"

using namespace av;
using namespace av::ad;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * scale;
  return t;
}

}  // namespace

TEST_CASE("backward produces dL/dx for simple chains") {
  Var x = Var::leaf(Tensor::scalar(3.0), true);
  Var y = scale(x, 2.0);        // 6
  Var z = mul(y, y);            // 36
  Var loss = mean_all(z);
  CHECK(loss.value()[0] == doctest::Approx(36.0));
  GradMap gm = backward(loss);
  // d/dx (2x)^2 = 8x = 24
  CHECK((*gm.find(x))[0] == doctest::Approx(24.0));
}

TEST_CASE("repeated backward calls are independent") {
  Var x = Var::leaf(Tensor::scalar(2.0), true);
  Var loss = mul(x, x);
  GradMap a = backward(loss);
  GradMap b = backward(loss);
  CHECK((*a.find(x))[0] == doctest::Approx(4.0));
  CHECK((*b.find(x))[0] == doctest::Approx(4.0));
}

TEST_CASE("elementwise ops pass finite-difference checks") {
  Rng rng(101);
  Var a = Var::leaf(random_tensor({3, 4}, rng), true);
  Var b = Var::leaf(random_tensor({3, 4}, rng), true);
  Tensor target = random_tensor({3, 4}, rng);

  SUBCASE("add/sub/mul/scale") {
    auto f = [&] { return l1_mean(mul(add(a, b), sub(scale(a, 1.5), b)), target); };
    CHECK(gradcheck(f, {a, b}, 1e-6, 6) < 1e-6);
  }
  SUBCASE("relu and leaky relu") {
    auto f = [&] { return l1_mean(relu(a), target); };
    CHECK(gradcheck(f, {a}, 1e-6, 8) < 1e-5);
    auto g = [&] { return l1_mean(leaky_relu(a, 0.2), target); };
    CHECK(gradcheck(g, {a}, 1e-6, 8) < 1e-5);
  }
  SUBCASE("softplus") {
    auto f = [&] { return mean_all(softplus(a)); };
    CHECK(gradcheck(f, {a}, 1e-6, 8) < 1e-7);
  }
  SUBCASE("circular distance") {
    auto f = [&] { return circular_mean(a, target); };
    CHECK(gradcheck(f, {a}, 1e-6, 8) < 1e-7);
  }
}

TEST_CASE("concat splits gradients by channel") {
  Rng rng(102);
  Var a = Var::leaf(random_tensor({2, 3}, rng), true);
  Var b = Var::leaf(random_tensor({2, 5}, rng), true);
  Tensor target = random_tensor({2, 8}, rng);
  auto f = [&] { return l1_mean(concat_channels({a, b}), target); };
  CHECK(gradcheck(f, {a, b}, 1e-6, 6) < 1e-6);
}

TEST_CASE("convolutions pass finite-difference checks") {
  Rng rng(103);

  SUBCASE("conv1d strided") {
    Var x = Var::leaf(random_tensor({13, 2}, rng), true);
    Var w = Var::leaf(random_tensor({4, 2, 3}, rng, 0.5), true);
    Var b = Var::leaf(random_tensor({3}, rng, 0.1), true);
    Tensor target = random_tensor({4, 3}, rng);  // ceil(13/4) = 4
    auto f = [&] { return l1_mean(conv1d(x, w, b, 4), target); };
    CHECK(gradcheck(f, {x, w, b}, 1e-6, 8) < 1e-6);
  }

  SUBCASE("conv2d strided") {
    Var x = Var::leaf(random_tensor({7, 6, 2}, rng), true);
    Var w = Var::leaf(random_tensor({3, 3, 2, 4}, rng, 0.5), true);
    Var b = Var::leaf(random_tensor({4}, rng, 0.1), true);
    Tensor target = random_tensor({4, 3, 4}, rng);  // ceil(7/2)=4, ceil(6/2)=3
    auto f = [&] { return l1_mean(conv2d(x, w, b, 2, 2), target); };
    CHECK(gradcheck(f, {x, w, b}, 1e-6, 8) < 1e-6);
  }

  SUBCASE("conv3d strided") {
    Var x = Var::leaf(random_tensor({5, 6, 6, 2}, rng), true);
    Var w = Var::leaf(random_tensor({3, 3, 3, 2, 3}, rng, 0.3), true);
    Var b = Var::leaf(random_tensor({3}, rng, 0.1), true);
    Tensor target = random_tensor({3, 3, 3, 3}, rng);
    auto f = [&] { return l1_mean(conv3d(x, w, b, 2, 2, 2), target); };
    CHECK(gradcheck(f, {x, w, b}, 1e-6, 6) < 1e-6);
  }

  SUBCASE("kernel equal to input span collapses an axis exactly") {
    // kernel_f == stride_f == F gives a single unpadded output column.
    Var x = Var::leaf(random_tensor({6, 5, 2}, rng), true);
    Var w = Var::leaf(random_tensor({3, 5, 2, 4}, rng, 0.4), true);
    Var b = Var::leaf(random_tensor({4}, rng, 0.1), true);
    Var y = conv2d(x, w, b, 1, 5);
    CHECK(y.value().shape() == std::vector<int64_t>{6, 1, 4});
    Tensor target = random_tensor({6, 1, 4}, rng);
    auto f = [&] { return l1_mean(conv2d(x, w, b, 1, 5), target); };
    CHECK(gradcheck(f, {x, w, b}, 1e-6, 6) < 1e-6);
  }
}

TEST_CASE("pooling, tiling and reductions pass finite-difference checks") {
  Rng rng(104);

  SUBCASE("avg_pool3d ceil mode") {
    Var x = Var::leaf(random_tensor({5, 5, 5, 2}, rng), true);
    Tensor target = random_tensor({3, 3, 3, 2}, rng);
    auto f = [&] { return l1_mean(avg_pool3d(x, {2, 2, 2}, {2, 2, 2}), target); };
    CHECK(gradcheck(f, {x}, 1e-6, 8) < 1e-6);
  }

  SUBCASE("spatial_mean and tile_spatial") {
    Var x = Var::leaf(random_tensor({3, 4, 4, 2}, rng), true);
    Tensor t1 = random_tensor({3, 2}, rng);
    auto f = [&] { return l1_mean(spatial_mean(x), t1); };
    CHECK(gradcheck(f, {x}, 1e-6, 8) < 1e-6);

    Var y = Var::leaf(random_tensor({3, 2}, rng), true);
    Tensor t2 = random_tensor({3, 4, 4, 2}, rng);
    auto g = [&] { return l1_mean(tile_spatial(y, 4, 4), t2); };
    CHECK(gradcheck(g, {y}, 1e-6, 6) < 1e-6);
  }

  SUBCASE("tile_freq is constant along frequency") {
    Var y = Var::leaf(random_tensor({3, 2}, rng), true);
    Var tiled = tile_freq(y, 5);
    for (int64_t t = 0; t < 3; ++t)
      for (int64_t f = 0; f < 5; ++f)
        for (int64_t c = 0; c < 2; ++c)
          CHECK(tiled.value().at({t, f, c}) == y.value().at({t, c}));
    Tensor target = random_tensor({3, 5, 2}, rng);
    auto g = [&] { return l1_mean(tile_freq(y, 5), target); };
    CHECK(gradcheck(g, {y}, 1e-6, 6) < 1e-6);
  }

  SUBCASE("global mean and linear head") {
    Var x = Var::leaf(random_tensor({2, 3, 3, 4}, rng), true);
    Var w = Var::leaf(random_tensor({4, 2}, rng), true);
    Var b = Var::leaf(random_tensor({2}, rng), true);
    Tensor target = random_tensor({2}, rng);
    auto f = [&] { return l1_mean(linear(global_mean_keep_channels(x), w, b), target); };
    CHECK(gradcheck(f, {x, w, b}, 1e-6, 8) < 1e-6);
  }

  SUBCASE("upsample2x") {
    Var x = Var::leaf(random_tensor({3, 4, 2}, rng), true);
    Tensor target = random_tensor({5, 8, 2}, rng);
    auto f = [&] { return l1_mean(upsample2x_2d(x, 5, 8), target); };
    CHECK(gradcheck(f, {x}, 1e-6, 8) < 1e-6);
  }
}

TEST_CASE("linear time resampling") {
  Rng rng(105);

  SUBCASE("constant input stays constant") {
    Tensor v({4, 2});
    for (int64_t i = 0; i < 4; ++i) {
      v.at({i, 0}) = 2.5;
      v.at({i, 1}) = -1.0;
    }
    Var x = Var::leaf(v, false);
    const auto rows = make_linear_resample_rows(4, 2.0, 11, 5.5);
    Var y = time_resample_linear(x, rows);
    for (int64_t i = 0; i < 11; ++i) {
      CHECK(y.value().at({i, 0}) == doctest::Approx(2.5));
      CHECK(y.value().at({i, 1}) == doctest::Approx(-1.0));
    }
  }

  SUBCASE("unit impulse becomes a triangular profile") {
    // Upsampling by an integer factor turns one nonzero row into a linear
    // ramp up and down around the source position.
    Tensor v({5, 1});
    v.at({2, 0}) = 1.0;
    Var x = Var::leaf(v, false);
    const auto rows = make_linear_resample_rows(5, 1.0, 15, 3.0);
    Var y = time_resample_linear(x, rows);

    // Oracle: direct evaluation of the same center-aligned linear map.
    for (int64_t o = 0; o < 15; ++o) {
      const double p = (static_cast<double>(o) + 0.5) / 3.0 - 0.5;
      double expect = 0.0;
      if (p >= 1.0 && p <= 3.0) expect = 1.0 - std::fabs(p - 2.0);
      CHECK(y.value().at({o, 0}) == doctest::Approx(expect).epsilon(1e-12));
    }
    // Peak at the source position, symmetric shoulders.
    CHECK(y.value().at({7, 0}) == doctest::Approx(1.0));
    CHECK(y.value().at({6, 0}) == doctest::Approx(y.value().at({8, 0})));
  }

  SUBCASE("gradients flow through the interpolation") {
    Var x = Var::leaf(random_tensor({6, 3}, rng), true);
    const auto rows = make_linear_resample_rows(6, 3.0, 4, 2.0);
    Tensor target = random_tensor({4, 3}, rng);
    auto f = [&] { return l1_mean(time_resample_linear(x, rows), target); };
    CHECK(gradcheck(f, {x}, 1e-6, 8) < 1e-6);
  }
}

TEST_CASE("softmax cross entropy") {
  Rng rng(106);
  Var logits = Var::leaf(random_tensor({5}, rng), true);

  auto f = [&] { return softmax_cross_entropy(logits, 2); };
  CHECK(gradcheck(f, {logits}, 1e-6, 5) < 1e-7);

  // Uniform logits give ln(C).
  Var uniform = Var::leaf(Tensor({5}), true);
  CHECK(softmax_cross_entropy(uniform, 1).value()[0] == doctest::Approx(std::log(5.0)));
}

TEST_CASE("zeros_like blocks gradient flow") {
  Var x = Var::leaf(Tensor::scalar(4.0), true);
  Var z = zeros_like(x);
  CHECK(z.value()[0] == 0.0);
  CHECK_FALSE(z.needs_grad());
}

TEST_CASE("l1 between two vars is antisymmetric in gradients") {
  Rng rng(107);
  Var a = Var::leaf(random_tensor({4}, rng), true);
  Var b = Var::leaf(random_tensor({4}, rng), true);
  auto f = [&] { return l1_mean_vv(a, b); };
  CHECK(gradcheck(f, {a, b}, 1e-6, 4) < 1e-6);
}

TEST_CASE("parameter store") {
  ParamStore store;
  Rng rng(108);
  store.add("w", random_tensor({2, 2}, rng));
  store.add("b", random_tensor({2}, rng));
  CHECK(store.total_size() == 6);
  CHECK(store.find("w") != nullptr);
  CHECK(store.find("missing") == nullptr);
  CHECK_THROWS_AS(store.add("w", Tensor({1})), ConfigError);

  ParamStore other;
  other.add("w", Tensor({2, 2}, 1.0));
  other.add("b", Tensor({2}, 2.0));
  other.add("extra", Tensor({3}, 3.0));
  store.load_values_from(other);
  CHECK(store.find("w")->value()[0] == 1.0);
  CHECK(store.find("b")->value()[1] == 2.0);
}
