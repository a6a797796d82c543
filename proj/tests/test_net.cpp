#include <unistd.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "lucid/net.hpp"
#include "lucid/rng.hpp"
#include "refnet.hpp"

using namespace lucid;
namespace fs = std::filesystem;

namespace {

NetworkSpec tiny_spec() {
  NetworkSpec spec;
  spec.input_size = 8;
  spec.means = {0.5f, 0.4f, 0.3f};
  spec.layers = {LayerSpec::conv(3, 3, 4), LayerSpec::pool(), LayerSpec::flatten(),
                 LayerSpec::dense(4 * 4 * 4, 3)};
  return spec;
}

Tensor random_image(int size, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<float> data(std::size_t(size) * size * 3);
  for (float& f : data) f = rng.uniform01();
  return Tensor::from_data({size, size, 3}, std::move(data));
}

refnet::dvec as_dvec(const Tensor& t) {
  return refnet::dvec(t.data().begin(), t.data().end());
}

fs::path temp_dir() {
  static int counter = 0;
  fs::path dir = fs::temp_directory_path() /
                 ("lucid_net_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_SUITE("net") {

TEST_CASE("spec text round-trips through parse and format") {
  NetworkSpec spec = tiny_spec();
  NetworkSpec back = parse_network_spec(format_network_spec(spec));
  CHECK(back.input_size == spec.input_size);
  CHECK(back.means == spec.means);
  REQUIRE(back.layers.size() == spec.layers.size());
  CHECK(back.layers[0].kind == LayerSpec::Kind::Conv);
  CHECK(back.layers[0].ksize == 3);
  CHECK(back.layers[3].out_dim == 3);
  CHECK(back.class_count() == 3);
}

TEST_CASE("spec parser reports malformed input") {
  CHECK_THROWS_AS(parse_network_spec("input_size = 8\n"), ParseError);  // no means/layers
  CHECK_THROWS_AS(parse_network_spec("bogus = 3\n"), ParseError);
  CHECK_THROWS_AS(
      parse_network_spec("input_size = 8\nmeans = 0 0 0\nlayer = warp 1 2 3\n"), ParseError);
}

TEST_CASE("spec validation catches incompatible layer chains") {
  NetworkSpec s = tiny_spec();
  s.layers[0] = LayerSpec::conv(3, 4, 4);  // wrong input channels
  CHECK_THROWS_AS(s.validate(), ShapeError);

  s = tiny_spec();
  s.layers.insert(s.layers.begin() + 2, LayerSpec::flatten());
  CHECK_THROWS_AS(s.validate(), ContractError);  // two flattens

  s = tiny_spec();
  s.layers = {LayerSpec::dense(10, 3)};
  CHECK_THROWS_AS(s.validate(), ContractError);  // dense before flatten

  s = tiny_spec();
  s.input_size = 7;  // pool on odd dims
  CHECK_THROWS_AS(s.validate(), ShapeError);
}

TEST_CASE("shape inference agrees with actual forward shapes") {
  SplitMix64 rng(404);
  for (int trial = 0; trial < 8; ++trial) {
    NetworkSpec spec;
    spec.input_size = 8 << rng.below(2);  // 8 or 16
    spec.means = {0.5f, 0.5f, 0.5f};
    int ch = 3, size = spec.input_size;
    const int blocks = 1 + int(rng.below(2));
    for (int b = 0; b < blocks; ++b) {
      const int out = 2 + int(rng.below(4));
      spec.layers.push_back(LayerSpec::conv(3, ch, out));
      ch = out;
      spec.layers.push_back(LayerSpec::pool());
      size /= 2;
    }
    spec.layers.push_back(LayerSpec::flatten());
    spec.layers.push_back(LayerSpec::dense(size * size * ch, 2 + int(rng.below(5))));

    const auto shapes = spec.layer_shapes();
    Network net(spec, random_weights(spec, rng.next()));
    Tensor img = random_image(spec.input_size, rng.next());
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
      if (spec.layers[l].kind == LayerSpec::Kind::Conv ||
          spec.layers[l].kind == LayerSpec::Kind::Pool) {
        Tensor fm = net.forward_features(img, int(l), 0);
        CHECK(fm.dim(0) == shapes[l][0]);
        CHECK(fm.dim(1) == shapes[l][1]);
      }
    }
    CHECK(net.forward_logits(img).size() == std::size_t(spec.class_count()));
  }
}

TEST_CASE("weights round-trip bit-identically and reject mismatches") {
  NetworkSpec spec = tiny_spec();
  Weights w = random_weights(spec, 99);
  const auto bytes = encode_weights(spec, w);
  const auto again = encode_weights(spec, w);
  CHECK(bytes == again);  // deterministic byte output

  Weights back = decode_weights(spec, bytes);
  for (const auto& [layer, kernel] : w.kernels) {
    const auto& other = back.kernels.at(layer);
    REQUIRE(other.shape() == kernel.shape());
    for (std::size_t i = 0; i < kernel.size(); ++i)
      CHECK(std::memcmp(&other.data()[i], &kernel.data()[i], 4) == 0);
  }

  // saving weights whose shapes do not match the spec is a contract violation
  Weights bad = w;
  bad.kernels.at(0) = Tensor::zeros({3, 3, 3, 5});
  CHECK_THROWS_AS(encode_weights(spec, bad), ShapeError);
}

TEST_CASE("weights decoder distinguishes bad magic, truncation and shape mismatch") {
  NetworkSpec spec = tiny_spec();
  Weights w = random_weights(spec, 7);
  auto bytes = encode_weights(spec, w);

  auto corrupted = bytes;
  corrupted[0] = 'X';
  CHECK_THROWS_WITH_AS(decode_weights(spec, corrupted), doctest::Contains("bad magic"),
                       ParseError);

  auto truncated = bytes;
  truncated.resize(truncated.size() - 5);
  CHECK_THROWS_WITH_AS(decode_weights(spec, truncated), doctest::Contains("truncated"),
                       ParseError);

  NetworkSpec other = tiny_spec();
  other.layers[0] = LayerSpec::conv(3, 3, 5);
  other.layers[2] = LayerSpec::flatten();
  other.layers[3] = LayerSpec::dense(4 * 4 * 5, 3);
  CHECK_THROWS_AS(decode_weights(other, bytes), ShapeError);
}

TEST_CASE("a hand-assembled weights file decodes to exactly its float values") {
  // input 2x2x3, flatten, dense 12 -> 1: one kernel record, one bias record
  NetworkSpec spec;
  spec.input_size = 2;
  spec.means = {0, 0, 0};
  spec.layers = {LayerSpec::flatten(), LayerSpec::dense(12, 1)};

  std::vector<std::uint8_t> bytes = {'L', 'D', 'W', '1', 2, 0, 0, 0};
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(std::uint8_t(v >> (8 * i)));
  };
  auto f32 = [&](float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    u32(v);
  };
  // kernel: layer 1, role 0, rank 2, dims 12x1
  u32(1);
  bytes.push_back(0);
  bytes.push_back(2);
  u32(12);
  u32(1);
  for (int i = 0; i < 12; ++i) f32(0.25f * float(i) - 1.0f);
  // bias: layer 1, role 1, rank 1, dim 1
  u32(1);
  bytes.push_back(1);
  bytes.push_back(1);
  u32(1);
  f32(-2.75f);

  Weights w = decode_weights(spec, bytes);
  for (int i = 0; i < 12; ++i)
    CHECK(w.kernels.at(1).data()[std::size_t(i)] == 0.25f * float(i) - 1.0f);
  CHECK(w.biases.at(1).value() == -2.75f);

  // and the encoder reproduces the same bytes
  CHECK(encode_weights(spec, w) == bytes);
}

TEST_CASE("save_weights / load_weights round-trip through a file") {
  const fs::path dir = temp_dir();
  NetworkSpec spec = tiny_spec();
  Weights w = random_weights(spec, 2024);
  save_weights(dir / "w.ldw", spec, w);
  Weights back = load_weights(dir / "w.ldw", spec);
  CHECK(encode_weights(spec, back) == encode_weights(spec, w));
  CHECK_THROWS_AS(load_weights(dir / "absent.ldw", spec), MissingInputError);
  fs::remove_all(dir);
}

TEST_CASE("an identity conv feature map is the mean-subtracted channel") {
  NetworkSpec spec;
  spec.input_size = 4;
  spec.means = {0.5f, 0.25f, 0.0f};
  spec.layers = {LayerSpec::conv(1, 3, 3), LayerSpec::flatten(), LayerSpec::dense(48, 2)};
  Weights w = zero_weights(spec);
  {
    // 1x1 kernel = identity across channels
    std::vector<float> k(9, 0.0f);
    for (int ch = 0; ch < 3; ++ch) k[std::size_t(ch) * 3 + ch] = 1.0f;
    w.kernels.at(0) = Tensor::from_data({1, 1, 3, 3}, std::move(k));
  }
  Network net(spec, std::move(w));
  Tensor img = random_image(4, 5);
  Tensor fm = net.forward_features(img, 0, 0);
  REQUIRE(fm.shape() == Shape{4, 4});
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      CHECK(fm.at({r, c}) == doctest::Approx(img.at({r, c, 0}) - 0.5f).epsilon(1e-6));

  CHECK_THROWS_AS(net.forward_features(img, 0, 3), IndexError);   // map out of range
  CHECK_THROWS_AS(net.forward_features(img, 9, 0), IndexError);   // layer out of range
  CHECK_THROWS_AS(net.forward_features(img, 1, 0), IndexError);   // flatten is not a feature
}

TEST_CASE("a constant image through an all-ones conv gives the kernel-sum constant") {
  NetworkSpec spec;
  spec.input_size = 4;
  spec.means = {0.1f, 0.2f, 0.3f};
  spec.layers = {LayerSpec::conv(3, 3, 2), LayerSpec::flatten(), LayerSpec::dense(32, 2)};
  Weights w = zero_weights(spec);
  w.kernels.at(0) = Tensor::full({3, 3, 3, 2}, 1.0f);
  Network net(spec, std::move(w));

  const float v = 0.6f;
  Tensor img = Tensor::full({4, 4, 3}, v);
  // every window sums 9 copies of (v - mean_ch) over the three channels
  const double expect = 9.0 * ((v - 0.1) + (v - 0.2) + (v - 0.3));
  Tensor fm = net.forward_features(img, 0, 1);
  for (float f : fm.data()) CHECK(double(f) == doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("zero weights give zero logits") {
  NetworkSpec spec = tiny_spec();
  Network net(spec, zero_weights(spec));
  Tensor logits = net.forward_logits(random_image(8, 6));
  for (float l : logits.data()) CHECK(l == 0.0f);
}

TEST_CASE("forward_logits rejects wrong input sizes") {
  NetworkSpec spec = tiny_spec();
  Network net(spec, random_weights(spec, 1));
  CHECK_THROWS_AS(net.forward_logits(random_image(16, 1)), ShapeError);
  CHECK_THROWS_AS(net.forward_logits(Tensor::zeros({8, 8, 1})), ShapeError);
}

TEST_CASE("logits match the layer-by-layer double-precision oracle") {
  NetworkSpec spec = tiny_spec();
  Weights w = random_weights(spec, 31415);
  Network net(spec, w);
  Tensor img = random_image(8, 2718);

  const auto ours = net.forward_logits(img);
  const auto ref = refnet::logits(spec, w, as_dvec(img));
  REQUIRE(ours.size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i)
    CHECK(double(ours.data()[i]) == doctest::Approx(ref[i]).epsilon(1e-5));

  // feature maps come from the same activations
  const auto blocks = refnet::run_layers(spec, w, as_dvec(img));
  Tensor fm = net.forward_features(img, 0, 2);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c)
      CHECK(double(fm.at({r, c})) ==
            doctest::Approx(blocks[0].data[(std::size_t(r) * 8 + c) * 4 + 2]).epsilon(1e-5));
}

TEST_CASE("gradient of a logit w.r.t. the image matches finite differences") {
  NetworkSpec spec = tiny_spec();
  Weights w = random_weights(spec, 555);
  Network net(spec, w);
  Tensor img = random_image(8, 556);
  img.set_requires_grad(true);
  img.zero_grad();

  const int cls = 1;
  backward(pick(net.forward_logits(img), cls));
  const auto analytic = img.grad();

  const auto fd = refnet::finite_diff(
      [&](const refnet::dvec& x) { return refnet::logits(spec, w, x)[cls]; }, as_dvec(img));

  double gmax = 0;
  for (double f : fd) gmax = std::max(gmax, std::abs(f));
  for (std::size_t i = 0; i < fd.size(); ++i) {
    const double denom = std::max({std::abs(double(analytic[i])), std::abs(fd[i]), 1e-2 * gmax});
    CHECK(std::abs(double(analytic[i]) - fd[i]) / denom <= 1e-3);
  }
}

TEST_CASE("logits are linear in the final dense bias") {
  NetworkSpec spec = tiny_spec();
  Weights w = zero_weights(spec);
  Network zero_net(spec, w);
  Tensor img = random_image(8, 777);
  CHECK(zero_net.forward_logits(img).at({2}) == 0.0f);

  w.biases.at(3) = Tensor::from_data({3}, {0.0f, 0.0f, 1.25f});
  Network biased(spec, w);
  CHECK(biased.forward_logits(img).at({2}) == 1.25f);  // exact: accumulator starts at bias

  Weights wr = random_weights(spec, 888);
  Network base(spec, wr);
  const float before = base.forward_logits(img).at({1});
  auto shifted = wr;
  std::vector<float> b(shifted.biases.at(3).data().begin(), shifted.biases.at(3).data().end());
  b[1] += 0.5f;
  shifted.biases.at(3) = Tensor::from_data({3}, std::move(b));
  Network bumped(spec, shifted);
  CHECK(bumped.forward_logits(img).at({1}) ==
        doctest::Approx(before + 0.5f).epsilon(1e-6));
}

}  // TEST_SUITE
