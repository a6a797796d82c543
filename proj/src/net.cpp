#include "lucid/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lucid/rng.hpp"

namespace lucid {

LayerSpec LayerSpec::conv(int ksize, int in_ch, int out_ch) {
  LayerSpec l;
  l.kind = Kind::Conv;
  l.ksize = ksize;
  l.in_ch = in_ch;
  l.out_ch = out_ch;
  return l;
}

LayerSpec LayerSpec::pool() {
  LayerSpec l;
  l.kind = Kind::Pool;
  return l;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec l;
  l.kind = Kind::Flatten;
  return l;
}

LayerSpec LayerSpec::dense(int in_dim, int out_dim) {
  LayerSpec l;
  l.kind = Kind::Dense;
  l.in_dim = in_dim;
  l.out_dim = out_dim;
  return l;
}

std::vector<Shape> NetworkSpec::layer_shapes() const {
  if (input_size <= 0) throw ContractError("network spec: input_size must be positive");
  if (layers.empty()) throw ContractError("network spec: no layers");
  std::vector<Shape> shapes;
  shapes.reserve(layers.size());
  Shape cur{input_size, input_size, 3};
  bool flattened = false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::string where = "layer " + std::to_string(i);
    switch (l.kind) {
      case LayerSpec::Kind::Conv: {
        if (flattened) throw ContractError(where + ": conv after flatten");
        if (l.ksize <= 0 || l.ksize % 2 == 0)
          throw ContractError(where + ": conv kernel size must be odd and positive");
        if (l.in_ch != cur[2])
          throw ShapeError(where + ": conv expects " + std::to_string(l.in_ch) +
                           " channels, input has " + std::to_string(cur[2]));
        if (l.out_ch <= 0) throw ContractError(where + ": conv out channels must be positive");
        if (l.ksize > cur[0] || l.ksize > cur[1])
          throw ShapeError(where + ": conv kernel larger than spatial dims");
        cur = {cur[0], cur[1], l.out_ch};
        break;
      }
      case LayerSpec::Kind::Pool: {
        if (flattened) throw ContractError(where + ": pool after flatten");
        if (cur[0] % 2 != 0 || cur[1] % 2 != 0)
          throw ShapeError(where + ": pool needs even spatial dims, got " + shape_str(cur));
        cur = {cur[0] / 2, cur[1] / 2, cur[2]};
        break;
      }
      case LayerSpec::Kind::Flatten: {
        if (flattened) throw ContractError(where + ": second flatten");
        flattened = true;
        cur = {int(shape_numel(cur))};
        break;
      }
      case LayerSpec::Kind::Dense: {
        if (!flattened) throw ContractError(where + ": dense before flatten");
        if (l.in_dim != cur[0])
          throw ShapeError(where + ": dense expects input " + std::to_string(l.in_dim) +
                           ", got " + std::to_string(cur[0]));
        if (l.out_dim <= 0) throw ContractError(where + ": dense output must be positive");
        cur = {l.out_dim};
        break;
      }
    }
    shapes.push_back(cur);
  }
  if (layers.back().kind != LayerSpec::Kind::Dense)
    throw ContractError("network spec: final layer must be dense (the logits)");
  return shapes;
}

void NetworkSpec::validate() const { (void)layer_shapes(); }

int NetworkSpec::class_count() const {
  if (layers.empty() || layers.back().kind != LayerSpec::Kind::Dense)
    throw ContractError("network spec: final layer must be dense (the logits)");
  return layers.back().out_dim;
}

// ---- spec text format -------------------------------------------------------

namespace {

std::string strip(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

NetworkSpec parse_network_spec(const std::string& text) {
  NetworkSpec spec;
  bool saw_input = false, saw_means = false;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = strip(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("network spec line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    std::istringstream v(value);
    if (key == "input_size") {
      if (!(v >> spec.input_size) || spec.input_size <= 0)
        throw ParseError("network spec line " + std::to_string(lineno) + ": bad input_size");
      saw_input = true;
    } else if (key == "means") {
      if (!(v >> spec.means[0] >> spec.means[1] >> spec.means[2]))
        throw ParseError("network spec line " + std::to_string(lineno) +
                         ": means needs three values");
      saw_means = true;
    } else if (key == "layer") {
      std::string kind;
      v >> kind;
      if (kind == "conv") {
        int k, ci, co;
        if (!(v >> k >> ci >> co))
          throw ParseError("network spec line " + std::to_string(lineno) +
                           ": conv needs ksize in_ch out_ch");
        spec.layers.push_back(LayerSpec::conv(k, ci, co));
      } else if (kind == "pool") {
        spec.layers.push_back(LayerSpec::pool());
      } else if (kind == "flatten") {
        spec.layers.push_back(LayerSpec::flatten());
      } else if (kind == "dense") {
        int di, dout;
        if (!(v >> di >> dout))
          throw ParseError("network spec line " + std::to_string(lineno) +
                           ": dense needs in_dim out_dim");
        spec.layers.push_back(LayerSpec::dense(di, dout));
      } else {
        throw ParseError("network spec line " + std::to_string(lineno) + ": unknown layer '" +
                         kind + "'");
      }
    } else {
      throw ParseError("network spec line " + std::to_string(lineno) + ": unknown key '" + key +
                       "'");
    }
  }
  if (!saw_input) throw ParseError("network spec: missing input_size");
  if (!saw_means) throw ParseError("network spec: missing means");
  spec.validate();
  return spec;
}

std::string format_network_spec(const NetworkSpec& spec) {
  char buf[128];
  std::string out;
  out += "input_size = " + std::to_string(spec.input_size) + "\n";
  std::snprintf(buf, sizeof buf, "means = %.9g %.9g %.9g\n", double(spec.means[0]),
                double(spec.means[1]), double(spec.means[2]));
  out += buf;
  for (const LayerSpec& l : spec.layers) {
    switch (l.kind) {
      case LayerSpec::Kind::Conv:
        out += "layer = conv " + std::to_string(l.ksize) + " " + std::to_string(l.in_ch) + " " +
               std::to_string(l.out_ch) + "\n";
        break;
      case LayerSpec::Kind::Pool:
        out += "layer = pool\n";
        break;
      case LayerSpec::Kind::Flatten:
        out += "layer = flatten\n";
        break;
      case LayerSpec::Kind::Dense:
        out += "layer = dense " + std::to_string(l.in_dim) + " " + std::to_string(l.out_dim) +
               "\n";
        break;
    }
  }
  return out;
}

NetworkSpec load_network_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("network spec file not found: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_network_spec(ss.str());
}

void save_network_spec(const NetworkSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path.string());
  out << format_network_spec(spec);
  if (!out) throw IoError("write failed: " + path.string());
}

// ---- weights binary format --------------------------------------------------

namespace {

constexpr char kMagic[4] = {'L', 'D', 'W', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 24));
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(out, v);
}

struct Reader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  std::uint32_t u32() {
    if (pos + 4 > bytes.size()) throw ParseError("weights file: truncated data");
    std::uint32_t v = std::uint32_t(bytes[pos]) | std::uint32_t(bytes[pos + 1]) << 8 |
                      std::uint32_t(bytes[pos + 2]) << 16 | std::uint32_t(bytes[pos + 3]) << 24;
    pos += 4;
    return v;
  }

  std::uint8_t u8() {
    if (pos + 1 > bytes.size()) throw ParseError("weights file: truncated data");
    return bytes[pos++];
  }

  float f32() {
    std::uint32_t v = u32();
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }
};

Shape kernel_shape(const LayerSpec& l) {
  if (l.kind == LayerSpec::Kind::Conv) return {l.ksize, l.ksize, l.in_ch, l.out_ch};
  return {l.in_dim, l.out_dim};
}

Shape bias_shape(const LayerSpec& l) {
  if (l.kind == LayerSpec::Kind::Conv) return {l.out_ch};
  return {l.out_dim};
}

void check_weights_complete(const NetworkSpec& spec, const Weights& w) {
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (!l.parameterized()) continue;
    auto k = w.kernels.find(int(i));
    auto b = w.biases.find(int(i));
    if (k == w.kernels.end() || b == w.biases.end())
      throw ShapeError("weights: layer " + std::to_string(i) + " has no parameters");
    if (k->second.shape() != kernel_shape(l))
      throw ShapeError("weights: layer " + std::to_string(i) + " kernel shape " +
                       shape_str(k->second.shape()) + " does not match spec " +
                       shape_str(kernel_shape(l)));
    if (b->second.shape() != bias_shape(l))
      throw ShapeError("weights: layer " + std::to_string(i) + " bias shape " +
                       shape_str(b->second.shape()) + " does not match spec");
  }
}

}  // namespace

std::vector<std::uint8_t> encode_weights(const NetworkSpec& spec, const Weights& weights) {
  check_weights_complete(spec, weights);
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  std::uint32_t records = 0;
  for (const LayerSpec& l : spec.layers)
    if (l.parameterized()) records += 2;
  put_u32(out, records);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (!spec.layers[i].parameterized()) continue;
    for (int role = 0; role < 2; ++role) {
      const Tensor& t =
          role == 0 ? weights.kernels.at(int(i)) : weights.biases.at(int(i));
      put_u32(out, std::uint32_t(i));
      out.push_back(std::uint8_t(role));
      out.push_back(std::uint8_t(t.rank()));
      for (int d : t.shape()) put_u32(out, std::uint32_t(d));
      for (float f : t.data()) put_f32(out, f);
    }
  }
  return out;
}

Weights decode_weights(const NetworkSpec& spec, const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw ParseError("weights file: bad magic");
  Reader r{bytes, 4};
  const std::uint32_t records = r.u32();
  Weights w;
  for (std::uint32_t rec = 0; rec < records; ++rec) {
    const std::uint32_t layer = r.u32();
    const std::uint8_t role = r.u8();
    const std::uint8_t rank = r.u8();
    if (role > 1) throw ParseError("weights file: unknown tensor role");
    if (rank == 0 || rank > 4) throw ParseError("weights file: unsupported tensor rank");
    Shape shape(rank);
    std::size_t count = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.u32();
      if (dim == 0 || dim > (1u << 24)) throw ParseError("weights file: bad dimension");
      shape[d] = int(dim);
      count *= dim;
    }
    std::vector<float> data(count);
    for (std::size_t i = 0; i < count; ++i) data[i] = r.f32();
    auto& dst = role == 0 ? w.kernels : w.biases;
    if (!dst.emplace(int(layer), Tensor::from_data(std::move(shape), std::move(data))).second)
      throw ParseError("weights file: duplicate record for layer " + std::to_string(layer));
  }
  if (r.pos != bytes.size()) throw ParseError("weights file: trailing bytes");
  check_weights_complete(spec, w);
  return w;
}

Weights load_weights(const std::filesystem::path& path, const NetworkSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("weights file not found: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_weights(spec, bytes);
}

void save_weights(const std::filesystem::path& path, const NetworkSpec& spec,
                  const Weights& weights) {
  const auto bytes = encode_weights(spec, weights);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Weights random_weights(const NetworkSpec& spec, std::uint64_t seed, float gain) {
  spec.validate();
  Weights w;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (!l.parameterized()) continue;
    SplitMix64 rng(derive_stream(seed, i));
    const Shape kshape = kernel_shape(l);
    const int fan_in = l.kind == LayerSpec::Kind::Conv ? l.ksize * l.ksize * l.in_ch : l.in_dim;
    const float limit = gain * std::sqrt(6.0f / float(fan_in));
    std::vector<float> kdata(shape_numel(kshape));
    for (float& f : kdata) f = rng.uniform_sym(limit);
    w.kernels.emplace(int(i), Tensor::from_data(kshape, std::move(kdata)));
    w.biases.emplace(int(i), Tensor::zeros(bias_shape(l)));
  }
  return w;
}

Weights zero_weights(const NetworkSpec& spec) {
  spec.validate();
  Weights w;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (!l.parameterized()) continue;
    w.kernels.emplace(int(i), Tensor::zeros(kernel_shape(l)));
    w.biases.emplace(int(i), Tensor::zeros(bias_shape(l)));
  }
  return w;
}

// ---- Network ----------------------------------------------------------------

Network::Network(NetworkSpec spec, Weights weights)
    : spec_(std::move(spec)), weights_(std::move(weights)) {
  spec_.validate();
  check_weights_complete(spec_, weights_);
}

Tensor Network::run_layers(const Tensor& image, int last_layer, bool want_logits) const {
  if (image.rank() != 3 || image.dim(0) != spec_.input_size ||
      image.dim(1) != spec_.input_size || image.dim(2) != 3)
    throw ShapeError("network input must be " + std::to_string(spec_.input_size) + "x" +
                     std::to_string(spec_.input_size) + "x3, got " + shape_str(image.shape()));
  Tensor cur = sub_channel_means(image, spec_.means);
  Tensor layer_out;  // raw (pre-activation) output of the layer just run
  for (int i = 0; i <= last_layer; ++i) {
    const LayerSpec& l = spec_.layers[std::size_t(i)];
    switch (l.kind) {
      case LayerSpec::Kind::Conv: {
        const int pad = (l.ksize - 1) / 2;
        layer_out = conv2d(mirror_pad(cur, pad, pad), weights_.kernels.at(i),
                           weights_.biases.at(i));
        cur = relu(layer_out);
        break;
      }
      case LayerSpec::Kind::Pool:
        layer_out = avg_pool2(cur);
        cur = layer_out;
        break;
      case LayerSpec::Kind::Flatten:
        layer_out = flatten(cur);
        cur = layer_out;
        break;
      case LayerSpec::Kind::Dense: {
        layer_out = dense(cur, weights_.kernels.at(i), weights_.biases.at(i));
        const bool final_layer = std::size_t(i) + 1 == spec_.layers.size();
        cur = final_layer ? layer_out : relu(layer_out);
        break;
      }
    }
  }
  return want_logits ? cur : layer_out;
}

Tensor Network::forward_logits(const Tensor& image) const {
  return run_layers(image, int(spec_.layers.size()) - 1, true);
}

Tensor Network::forward_features(const Tensor& image, int layer, int map_index) const {
  if (layer < 0 || layer >= int(spec_.layers.size()))
    throw IndexError("forward_features: layer " + std::to_string(layer) + " out of range");
  const LayerSpec& l = spec_.layers[std::size_t(layer)];
  if (l.kind != LayerSpec::Kind::Conv && l.kind != LayerSpec::Kind::Pool)
    throw IndexError("forward_features: layer " + std::to_string(layer) +
                     " is not a conv or pool layer");
  Tensor out = run_layers(image, layer, false);
  const int channels = out.dim(2);
  if (map_index < 0 || map_index >= channels)
    throw IndexError("forward_features: feature map " + std::to_string(map_index) +
                     " out of range (layer has " + std::to_string(channels) + ")");
  return slice_channel(out, map_index);
}

}  // namespace lucid
