#include <cmath>
#include <vector>

#include "doctest.h"
#include "lucid/rng.hpp"
#include "lucid/tensor.hpp"

using namespace lucid;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  SplitMix64 rng(seed);
  std::vector<float> data(shape_numel(shape));
  for (float& f : data) f = lo + (hi - lo) * rng.uniform01();
  return Tensor::from_data(std::move(shape), std::move(data));
}

// Max relative error between analytic and finite-difference gradients, with a
// scale-aware floor so near-zero entries compare absolutely.
double max_rel_err(std::span<const float> analytic, const std::vector<double>& fd) {
  double gmax = 0.0;
  for (float a : analytic) gmax = std::max(gmax, std::abs(double(a)));
  for (double f : fd) gmax = std::max(gmax, std::abs(f));
  const double floor = std::max(1e-4, 1e-2 * gmax);
  double worst = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    const double a = double(analytic[i]);
    const double denom = std::max({std::abs(a), std::abs(fd[i]), floor});
    worst = std::max(worst, std::abs(a - fd[i]) / denom);
  }
  return worst;
}

// Central finite differences (h=1e-3) of a scalar loss built from leaf x,
// against the analytic gradient from backward().
template <typename MakeLoss>
void gradcheck(Tensor x, MakeLoss make_loss, double tol = 1e-3) {
  x.set_requires_grad(true);
  x.zero_grad();
  Tensor loss = make_loss(x);
  backward(loss);
  std::vector<float> analytic(x.grad().begin(), x.grad().end());

  const double h = 1e-3;
  std::vector<double> fd(x.size());
  auto data = x.mutable_data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float keep = data[i];
    data[i] = keep + float(h);
    const double hi = double(make_loss(x).value());
    data[i] = keep - float(h);
    const double lo = double(make_loss(x).value());
    data[i] = keep;
    fd[i] = (hi - lo) / (2.0 * h);
  }
  CHECK(max_rel_err(analytic, fd) <= tol);
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("mirror_pad reflects without duplicating the edge") {
  // row [a,b,c] with pw=1 -> [b,a,b,c,b]
  Tensor row = Tensor::from_data({1, 3, 1}, {1.0f, 2.0f, 3.0f});
  Tensor padded = mirror_pad(row, 0, 1);
  CHECK(padded.shape() == Shape{1, 5, 1});
  const std::vector<float> want = {2.0f, 1.0f, 2.0f, 3.0f, 2.0f};
  for (int i = 0; i < 5; ++i) CHECK(padded.at({0, i, 0}) == want[std::size_t(i)]);
}

TEST_CASE("mirror_pad with zero padding is the identity") {
  Tensor x = random_tensor({3, 4, 2}, 7);
  Tensor padded = mirror_pad(x, 0, 0);
  CHECK(padded.shape() == x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(padded.data()[i] == x.data()[i]);
}

TEST_CASE("mirror_pad matches the index-mapping oracle on a 3x3 ramp") {
  std::vector<float> ramp(9);
  for (int i = 0; i < 9; ++i) ramp[std::size_t(i)] = float(i);
  Tensor x = Tensor::from_data({3, 3, 1}, ramp);
  Tensor padded = mirror_pad(x, 2, 2);
  auto reflect = [](int i, int n) { return i < 0 ? -i : (i >= n ? 2 * (n - 1) - i : i); };
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 7; ++c)
      CHECK(padded.at({r, c, 0}) == x.at({reflect(r - 2, 3), reflect(c - 2, 3), 0}));
}

TEST_CASE("mirror_pad rejects padding as large as the image") {
  Tensor x = random_tensor({3, 3, 1}, 1);
  CHECK_THROWS_AS(mirror_pad(x, 3, 0), ContractError);
  CHECK_THROWS_AS(mirror_pad(x, 0, 5), ContractError);
}

TEST_CASE("mirror_pad then center crop is the identity") {
  Tensor x = random_tensor({4, 5, 3}, 21);
  Tensor padded = mirror_pad(x, 2, 3);
  Tensor back = crop(padded, 2, 3, 4, 5);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(back.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d with a 1x1 identity kernel is the identity") {
  Tensor x = random_tensor({4, 4, 1}, 3);
  Tensor k = Tensor::from_data({1, 1, 1, 1}, {1.0f});
  Tensor out = conv2d(x, k, Tensor::zeros({1}));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(out.data()[i] == doctest::Approx(x.data()[i]));
}

TEST_CASE("conv2d of a constant image under an all-ones 3x3 kernel") {
  const float v = 0.37f;
  Tensor x = mirror_pad(Tensor::full({5, 5, 1}, v), 1, 1);
  Tensor k = Tensor::full({3, 3, 1, 1}, 1.0f);
  Tensor out = conv2d(x, k, Tensor::zeros({1}));
  CHECK(out.shape() == Shape{5, 5, 1});
  for (float o : out.data()) CHECK(o == doctest::Approx(9.0f * v).epsilon(1e-6));
}

TEST_CASE("conv2d matches the six-nested-loop oracle") {
  Tensor x = random_tensor({5, 5, 2}, 11);
  Tensor k = random_tensor({3, 3, 2, 3}, 12, -0.5f, 0.5f);
  Tensor b = random_tensor({3}, 13, -0.1f, 0.1f);
  Tensor out = conv2d(x, k, b);
  CHECK(out.shape() == Shape{3, 3, 3});
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      for (int f = 0; f < 3; ++f) {
        double acc = double(b.at({f}));
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            for (int ch = 0; ch < 2; ++ch)
              acc += double(x.at({r + i, c + j, ch})) * double(k.at({i, j, ch, f}));
        CHECK(std::abs(double(out.at({r, c, f})) - acc) < 1e-5);
      }
}

TEST_CASE("conv2d rejects channel mismatch and even kernels") {
  Tensor x = random_tensor({4, 4, 2}, 5);
  CHECK_THROWS_AS(conv2d(x, random_tensor({3, 3, 3, 1}, 6), Tensor::zeros({1})), ShapeError);
  CHECK_THROWS_AS(conv2d(x, random_tensor({2, 2, 2, 1}, 6), Tensor::zeros({1})), ContractError);
  CHECK_THROWS_AS(conv2d(x, random_tensor({3, 3, 2, 2}, 6), Tensor::zeros({1})), ShapeError);
}

TEST_CASE("avg_pool2 basics") {
  Tensor x = Tensor::from_data({2, 2, 1}, {1.0f, 2.0f, 3.0f, 4.0f});
  CHECK(avg_pool2(x).value() == doctest::Approx(2.5f));

  Tensor c = Tensor::full({6, 4, 2}, 0.83f);
  Tensor pooled = avg_pool2(c);
  CHECK(pooled.shape() == Shape{3, 2, 2});
  for (float v : pooled.data()) CHECK(v == doctest::Approx(0.83f));

  CHECK_THROWS_AS(avg_pool2(Tensor::zeros({3, 4, 1})), ShapeError);
}

TEST_CASE("avg_pool2 matches the windowed-mean oracle and preserves the mean") {
  Tensor x = random_tensor({4, 4, 1}, 17);
  Tensor out = avg_pool2(x);
  double in_mean = 0, out_mean = 0;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      const double mean = 0.25 * (double(x.at({2 * r, 2 * c, 0})) + x.at({2 * r, 2 * c + 1, 0}) +
                                  x.at({2 * r + 1, 2 * c, 0}) + x.at({2 * r + 1, 2 * c + 1, 0}));
      CHECK(double(out.at({r, c, 0})) == doctest::Approx(mean));
    }
  for (float v : x.data()) in_mean += v;
  for (float v : out.data()) out_mean += v;
  CHECK(in_mean / 16.0 == doctest::Approx(out_mean / 4.0).epsilon(1e-6));
}

TEST_CASE("relu forward and subgradient convention") {
  Tensor x = Tensor::from_data({3}, {-1.0f, 0.0f, 2.0f}, true);
  Tensor out = relu(x);
  CHECK(out.at({0}) == 0.0f);
  CHECK(out.at({1}) == 0.0f);
  CHECK(out.at({2}) == 2.0f);

  // gradient at 3 is 1 with upstream 1; at -3 (and exactly 0) it is 0
  Tensor y = Tensor::from_data({3}, {3.0f, -3.0f, 0.0f}, true);
  y.zero_grad();
  Tensor loss = pick(relu(y), 0);
  backward(loss);
  CHECK(y.grad()[0] == 1.0f);
  y.zero_grad();
  backward(pick(relu(y), 1));
  CHECK(y.grad()[1] == 0.0f);
  y.zero_grad();
  backward(pick(relu(y), 2));
  CHECK(y.grad()[2] == 0.0f);
}

TEST_CASE("relu of an all-negative tensor is zero with zero gradient") {
  Tensor x = random_tensor({2, 3, 1}, 23, -2.0f, -0.5f);
  x.set_requires_grad(true);
  x.zero_grad();
  Tensor loss = sum_squares(relu(x));
  CHECK(loss.value() == 0.0f);
  backward(loss);
  for (float g : x.grad()) CHECK(g == 0.0f);
}

TEST_CASE("dense against direct evaluation") {
  // identity weights, zero bias
  Tensor x = Tensor::from_data({2}, {0.3f, 0.7f});
  Tensor eye = Tensor::from_data({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
  Tensor out = dense(x, eye, Tensor::zeros({2}));
  CHECK(out.at({0}) == doctest::Approx(0.3f));
  CHECK(out.at({1}) == doctest::Approx(0.7f));

  // [1,2] * I + [1,1] = [2,3]
  Tensor x2 = Tensor::from_data({2}, {1.0f, 2.0f});
  Tensor out2 = dense(x2, eye, Tensor::full({2}, 1.0f));
  CHECK(out2.at({0}) == doctest::Approx(2.0f));
  CHECK(out2.at({1}) == doctest::Approx(3.0f));
}

TEST_CASE("dense matches the nested-loop product oracle") {
  Tensor x = random_tensor({8}, 31);
  Tensor w = random_tensor({8, 4}, 32, -1.0f, 1.0f);
  Tensor b = random_tensor({4}, 33, -1.0f, 1.0f);
  Tensor out = dense(x, w, b);
  for (int j = 0; j < 4; ++j) {
    double acc = double(b.at({j}));
    for (int i = 0; i < 8; ++i) acc += double(x.at({i})) * double(w.at({i, j}));
    CHECK(double(out.at({j})) == doctest::Approx(acc).epsilon(1e-6));
  }
  CHECK_THROWS_AS(dense(random_tensor({7}, 1), w, b), ShapeError);
}

TEST_CASE("backward computes d(sum x^2)/dx and treats constants as constants") {
  Tensor x = Tensor::from_data({2}, {1.0f, 2.0f}, true);
  x.zero_grad();
  backward(sum_squares(x));
  CHECK(x.grad()[0] == doctest::Approx(2.0f));
  CHECK(x.grad()[1] == doctest::Approx(4.0f));

  // a loss that never touches x leaves the zeroed gradient at zero
  x.zero_grad();
  Tensor constant = Tensor::scalar(5.0f);
  backward(constant);
  CHECK(x.grad()[0] == 0.0f);
  CHECK(x.grad()[1] == 0.0f);
}

TEST_CASE("backward requires a scalar root") {
  Tensor x = Tensor::from_data({2}, {1.0f, 2.0f}, true);
  CHECK_THROWS_AS(backward(relu(x)), ContractError);
}

TEST_CASE("gradients accumulate additively across uses") {
  Tensor x = Tensor::from_data({2}, {1.0f, 2.0f}, true);
  x.zero_grad();
  Tensor two_uses = add(sum_squares(x), sum_squares(x));
  backward(two_uses);
  CHECK(x.grad()[0] == doctest::Approx(4.0f));
  CHECK(x.grad()[1] == doctest::Approx(8.0f));
}

TEST_CASE("backward of a sum of losses equals the sum of gradients") {
  Tensor x = random_tensor({4, 4, 2}, 41);
  x.set_requires_grad(true);

  auto loss_a = [](const Tensor& t) { return sum_squares(relu(t)); };
  auto loss_b = [](const Tensor& t) { return scale(sum_squares(avg_pool2(t)), 0.5f); };

  x.zero_grad();
  backward(add(loss_a(x), loss_b(x)));
  std::vector<float> combined(x.grad().begin(), x.grad().end());

  x.zero_grad();
  backward(loss_a(x));
  std::vector<float> ga(x.grad().begin(), x.grad().end());
  x.zero_grad();
  backward(loss_b(x));
  for (std::size_t i = 0; i < combined.size(); ++i)
    CHECK(combined[i] == doctest::Approx(ga[i] + x.grad()[i]).epsilon(1e-5));
}

TEST_CASE("per-op gradients match central finite differences") {
  const double tol = 1e-3;
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    gradcheck(random_tensor({5, 5, 2}, seed), [](const Tensor& t) {
      return scale(sum_squares(mirror_pad(t, 1, 2)), 1.0f / 70.0f);
    }, tol);
    gradcheck(random_tensor({5, 5, 2}, seed + 10), [](const Tensor& t) {
      Tensor k = random_tensor({3, 3, 2, 3}, 99, -0.5f, 0.5f);
      Tensor b = random_tensor({3}, 98, -0.1f, 0.1f);
      return scale(sum_squares(conv2d(t, k, b)), 1.0f / 27.0f);
    }, tol);
    gradcheck(random_tensor({4, 4, 3}, seed + 20), [](const Tensor& t) {
      return sum_squares(avg_pool2(t));
    }, tol);
    gradcheck(random_tensor({4, 4, 1}, seed + 30, -1.0f, 1.0f), [](const Tensor& t) {
      return sum_squares(relu(t));
    }, tol);
    gradcheck(random_tensor({6}, seed + 40), [](const Tensor& t) {
      Tensor w = random_tensor({6, 3}, 97, -1.0f, 1.0f);
      Tensor b = random_tensor({3}, 96, -1.0f, 1.0f);
      return sum_squares(dense(t, w, b));
    }, tol);
    gradcheck(random_tensor({3, 4, 2}, seed + 50), [](const Tensor& t) {
      Tensor w = random_tensor({3, 4, 2}, 95);
      return weighted_sum_squares(t, w);
    }, tol);
    gradcheck(random_tensor({2, 2, 3}, seed + 60), [](const Tensor& t) {
      return pick(slice_channel(t, 1), 2);
    }, tol);
  }
}

TEST_CASE("adam with zero gradient leaves the parameter unchanged") {
  Tensor p = Tensor::from_data({3}, {0.1f, 0.5f, 0.9f}, true);
  p.zero_grad();
  AdamState s = AdamState::for_param(p, 0.1f);
  adam_step(p, s);
  adam_step(p, s);
  CHECK(s.t == 2);
  CHECK(p.at({0}) == 0.1f);
  CHECK(p.at({1}) == 0.5f);
  CHECK(p.at({2}) == 0.9f);
}

TEST_CASE("adam first step matches the hand-evaluated update") {
  // scalar 1.0, grad 1.0, lr 0.1: step = lr * 1 / (1 + eps) ~ 0.1
  Tensor p = Tensor::scalar(1.0f, true);
  p.zero_grad();
  {
    Tensor loss = pick(p, 0);  // dL/dp = 1
    backward(loss);
  }
  AdamState s = AdamState::for_param(p, 0.1f);
  adam_step(p, s);
  CHECK(s.t == 1);
  CHECK(double(p.value()) == doctest::Approx(0.9).epsilon(1e-5));
}

TEST_CASE("adam requires a gradient") {
  Tensor p = Tensor::scalar(1.0f, true);
  AdamState s = AdamState::for_param(p);
  CHECK_THROWS_AS(adam_step(p, s), ContractError);
}

TEST_CASE("adam runs are bit-identical for identical inputs") {
  auto run = [] {
    Tensor p = random_tensor({8}, 77);
    p.set_requires_grad(true);
    AdamState s = AdamState::for_param(p, 0.05f);
    for (int step = 0; step < 25; ++step) {
      p.zero_grad();
      Tensor loss = sum_squares(sub(p, Tensor::full({8}, 0.25f)));
      backward(loss);
      adam_step(p, s);
    }
    return std::vector<float>(p.data().begin(), p.data().end());
  };
  const auto a = run();
  const auto b = run();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("crop and paste_into are exact inverses on their window") {
  Tensor x = random_tensor({6, 7, 3}, 55);
  Tensor window = crop(x, 2, 3, 3, 4);
  Tensor y = clone(x);
  paste_into(y, window, 2, 3);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

}  // TEST_SUITE
