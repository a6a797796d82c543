#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lucid/tensor.hpp"

namespace lucid {

// One layer of the feature network. Conv layers are 'same' convolutions:
// the input is mirror-padded by (ksize-1)/2 before the kernel is applied, so
// spatial size is preserved. ReLU is implicit: a conv layer's recorded output
// is the raw convolution (that is what feature extraction sees), and the
// activation is applied when feeding the next layer. Dense layers behave the
// same way except that the final dense layer's raw output is the logits and
// never passes through an activation.
struct LayerSpec {
  enum class Kind { Conv, Pool, Flatten, Dense };
  Kind kind = Kind::Conv;
  int ksize = 0;    // conv
  int in_ch = 0;    // conv
  int out_ch = 0;   // conv
  int in_dim = 0;   // dense
  int out_dim = 0;  // dense

  static LayerSpec conv(int ksize, int in_ch, int out_ch);
  static LayerSpec pool();
  static LayerSpec flatten();
  static LayerSpec dense(int in_dim, int out_dim);
  bool parameterized() const { return kind == Kind::Conv || kind == Kind::Dense; }
};

// Architecture description: ordered layers over a T x T x 3 input, plus the
// per-channel means subtracted before the first layer ([0,1] pixel units).
struct NetworkSpec {
  int input_size = 0;
  std::array<float, 3> means{0.0f, 0.0f, 0.0f};
  std::vector<LayerSpec> layers;

  int class_count() const;
  // Walks the layer list and checks every consecutive shape constraint
  // (channel counts, even pooling dims, single flatten, dense-after-flatten,
  // dense final layer). Throws ShapeError / ContractError on violation.
  void validate() const;
  // Output shape of each layer for a valid spec, in forward order.
  std::vector<Shape> layer_shapes() const;
};

// Parameters for every conv/dense layer, keyed by layer index in the spec.
struct Weights {
  std::map<int, Tensor> kernels;
  std::map<int, Tensor> biases;
};

// ---- spec file (structured text) -------------------------------------------
//
//   input_size = 32
//   means = 0.5 0.5 0.5
//   layer = conv 3 3 8
//   layer = pool
//   layer = flatten
//   layer = dense 2048 8
//
// '#' starts a comment; keys may repeat only for "layer".
NetworkSpec parse_network_spec(const std::string& text);
std::string format_network_spec(const NetworkSpec& spec);
NetworkSpec load_network_spec(const std::filesystem::path& path);
void save_network_spec(const NetworkSpec& spec, const std::filesystem::path& path);

// ---- weights file (binary, little-endian) -----------------------------------
//
//   magic "LDW1"
//   u32 record count
//   per record: u32 layer index, u8 role (0 kernel, 1 bias), u8 rank,
//               u32 dims[rank], float32 payload
std::vector<std::uint8_t> encode_weights(const NetworkSpec& spec, const Weights& weights);
Weights decode_weights(const NetworkSpec& spec, const std::vector<std::uint8_t>& bytes);
Weights load_weights(const std::filesystem::path& path, const NetworkSpec& spec);
void save_weights(const std::filesystem::path& path, const NetworkSpec& spec,
                  const Weights& weights);

// Uniform He-style init (kernels in +-sqrt(6/fan_in) * gain, zero biases),
// drawn from the library RNG so results are identical everywhere.
Weights random_weights(const NetworkSpec& spec, std::uint64_t seed, float gain = 1.0f);
Weights zero_weights(const NetworkSpec& spec);

// A validated, immutable (spec, weights) pair. Concurrent forward/backward
// evaluations against the same Network are safe.
class Network {
 public:
  Network(NetworkSpec spec, Weights weights);

  const NetworkSpec& spec() const { return spec_; }
  const Weights& weights() const { return weights_; }
  int input_size() const { return spec_.input_size; }
  int class_count() const { return spec_.class_count(); }

  // Pre-softmax class scores, differentiable w.r.t. image. No softmax exists
  // anywhere in this code base.
  Tensor forward_logits(const Tensor& image) const;

  // Feature map `map_index` of layer `layer` (conv or pool output), as an
  // HxW tensor, differentiable w.r.t. image.
  Tensor forward_features(const Tensor& image, int layer, int map_index) const;

 private:
  Tensor run_layers(const Tensor& image, int last_layer, bool want_logits) const;
  NetworkSpec spec_;
  Weights weights_;
};

}  // namespace lucid
