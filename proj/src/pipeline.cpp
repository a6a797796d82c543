#include "lucid/pipeline.hpp"

#include <chrono>
#include <cstdio>

#include "lucid/config.hpp"

namespace lucid {

namespace {

EffectPreset base_preset(const std::string& name) {
  EffectPreset p;
  p.name = name;
  p.weights.alpha = 10000.0;
  p.k_base = 12;
  p.k_over = 30;
  return p;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

Tensor and_fields(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("mask fields disagree in shape");
  std::vector<float> out(a.size());
  const auto pa = a.data();
  const auto pb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (pa[i] != 0.0f && pb[i] != 0.0f) ? 1.0f : 0.0f;
  return Tensor::from_data(a.shape(), std::move(out));
}

}  // namespace

EffectPreset resolve_preset(const std::string& name) {
  if (name == "per_frame") {
    EffectPreset p = base_preset(name);
    p.k_over = p.k_base;  // nothing to over-hallucinate against
    return p;
  }
  if (name == "short_term") {
    EffectPreset p = base_preset(name);
    p.weights.beta = 300.0;
    p.offsets = {1};
    return p;
  }
  if (name == "long_term") {
    EffectPreset p = base_preset(name);
    p.weights.gamma = 1000.0;
    p.offsets = {1, 2, 4, 8, 16, 32};
    return p;
  }
  if (name == "trail") {
    EffectPreset p = base_preset(name);
    p.weights.beta = 1.0;
    p.weights.delta = 500.0;
    p.offsets = {1};
    p.init = EffectPreset::Init::WarpedPrevious;
    return p;
  }
  if (name == "decay") {
    EffectPreset p = base_preset(name);
    p.weights.beta = 3.0;
    p.offsets = {1};
    return p;
  }
  if (name == "trail_decay") {
    EffectPreset p = base_preset(name);
    p.weights.beta = 3.0;
    p.offsets = {1};
    p.init = EffectPreset::Init::WarpedPrevious;
    return p;
  }
  throw ContractError("unknown preset '" + name + "'");
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"per_frame", "short_term", "long_term",
                                                 "trail",     "decay",      "trail_decay"};
  return names;
}

std::string RunManifest::to_text() const {
  std::string out = "# lucid run manifest\n";
  out += "command = " + command + "\n";
  for (const auto& [key, value] : config) out += key + " = " + value + "\n";
  out += "frames = " + std::to_string(frames.size()) + "\n";
  for (const FrameRecord& f : frames) {
    out += "frame " + std::to_string(f.index) + " shot=" + (f.shot_change ? "1" : "0") +
           " k=" + std::to_string(f.iterations) + " loss=" + fmt_double(f.final_loss) + "\n";
  }
  return out;
}

FlowPair DirFlowSource::pair(int from_frame, int to_frame) const {
  const auto fwd = dir_ / forward_flo_name(from_frame, to_frame);
  const auto bwd = dir_ / backward_flo_name(to_frame, from_frame);
  if (!std::filesystem::exists(fwd))
    throw MissingInputError("missing flow for pair (" + std::to_string(from_frame) + "," +
                            std::to_string(to_frame) + "): " + fwd.string());
  if (!std::filesystem::exists(bwd))
    throw MissingInputError("missing flow for pair (" + std::to_string(from_frame) + "," +
                            std::to_string(to_frame) + "): " + bwd.string());
  FlowPair p;
  p.forward = read_flo_file(fwd);
  p.backward = read_flo_file(bwd);
  p.forward.source_frame = from_frame;
  p.forward.target_frame = to_frame;
  p.backward.source_frame = to_frame;
  p.backward.target_frame = from_frame;
  return p;
}

FlowPair TranslationFlowSource::pair(int from_frame, int to_frame) const {
  const float steps = float(to_frame - from_frame);
  FlowPair p = synth_translation(height_, width_, dx_ * steps, dy_ * steps);
  p.forward.source_frame = from_frame;
  p.forward.target_frame = to_frame;
  p.backward.source_frame = to_frame;
  p.backward.target_frame = from_frame;
  return p;
}

bool detect_shot_change(const ConsistencyMask& mask_j1, double threshold) {
  return inconsistency_fraction(mask_j1) >= threshold;
}

Tensor init_frame(const EffectPreset& preset, int frame_index, const Tensor& original,
                  const Tensor* previous_output, const FlowField* backward_flow,
                  bool shot_change) {
  if (frame_index <= 1 || shot_change || preset.init == EffectPreset::Init::OriginalContent)
    return clone(original);
  if (previous_output == nullptr || backward_flow == nullptr)
    throw ContractError("init_frame: warped_previous initialization needs the previous "
                        "output and the backward flow");
  WarpResult wr = warp(*previous_output, *backward_flow);
  // Newly revealed pixels have no warped history; they start from content.
  Tensor out = clone(wr.image);
  auto dst = out.mutable_data();
  const auto src = original.data();
  const int C = original.rank() == 3 ? original.dim(2) : 1;
  for (int r = 0; r < wr.valid.height; ++r)
    for (int c = 0; c < wr.valid.width; ++c)
      if (!wr.valid.at(r, c)) {
        const std::size_t base = (std::size_t(r) * wr.valid.width + c) * C;
        for (int ch = 0; ch < C; ++ch) dst[base + ch] = src[base + ch];
      }
  return out;
}

namespace {

FrameContext crop_context(const FrameContext& ctx, int row0, int col0, int size) {
  FrameContext out;
  out.offsets = ctx.offsets;
  out.warped.reserve(ctx.warped.size());
  out.masks.reserve(ctx.masks.size());
  out.lt_weights.reserve(ctx.lt_weights.size());
  for (const Tensor& w : ctx.warped) out.warped.push_back(crop(w, row0, col0, size, size));
  for (const Tensor& m : ctx.masks) out.masks.push_back(crop(m, row0, col0, size, size));
  for (const Tensor& w : ctx.lt_weights)
    out.lt_weights.push_back(crop(w, row0, col0, size, size));
  return out;
}

FrameContext roll_context(const FrameContext& ctx, int origin_row, int origin_col) {
  FrameContext out;
  out.offsets = ctx.offsets;
  for (const Tensor& w : ctx.warped) out.warped.push_back(roll(w, origin_row, origin_col));
  for (const Tensor& m : ctx.masks) out.masks.push_back(roll(m, origin_row, origin_col));
  for (const Tensor& w : ctx.lt_weights)
    out.lt_weights.push_back(roll(w, origin_row, origin_col));
  return out;
}

}  // namespace

Tensor hallucinate(const Tensor& x0, const Network& net, const DreamOptions& opt,
                   const FrameContext& ctx, int iterations, std::uint64_t frame_seed,
                   double* final_loss) {
  if (x0.rank() != 3 || x0.dim(2) != 3)
    throw ShapeError("hallucinate: expected an HxWx3 image, got " + shape_str(x0.shape()));
  const int T = net.input_size();
  const int H = x0.dim(0), W = x0.dim(1);
  if (H < T || W < T)
    throw ContractError("hallucinate: frame " + std::to_string(W) + "x" + std::to_string(H) +
                        " smaller than network input " + std::to_string(T));
  if (iterations < 0) throw ContractError("hallucinate: negative iteration count");

  Tensor x = clone(x0);
  if (final_loss) *final_loss = 0.0;
  if (iterations == 0) return x;

  const int n_origins = opt.origin_count > 0 ? opt.origin_count : iterations;
  const int n_steps = opt.step_count > 0 ? opt.step_count : iterations;
  SplitMix64 rng(frame_seed);

  double last_sum = 0.0;
  int last_count = 0;
  for (int pass = 0; pass < n_origins; ++pass) {
    TileSchedule sched = make_schedule(H, W, T, rng);
    const FrameContext rolled = roll_context(ctx, sched.origin_row, sched.origin_col);
    const bool last_pass = pass + 1 == n_origins;
    x = apply_tilewise(x, sched, [&](const Tensor& tile, int grid_r, int grid_c) {
      const FrameContext tctx = crop_context(rolled, grid_r * T, grid_c * T, T);
      Tensor param = clone(tile);
      param.set_requires_grad(true);
      AdamState adam = AdamState::for_param(param, opt.lr);
      double loss_value = 0.0;
      for (int step = 0; step < n_steps; ++step) {
        param.zero_grad();
        Tensor loss = total_loss(param, net, opt.class_index, opt.preset.weights, tctx,
                                 opt.trail_masked);
        loss_value = double(loss.value());
        backward(loss);
        adam_step(param, adam);
        clamp_(param, 0.0f, 1.0f);
      }
      if (last_pass) {
        last_sum += loss_value;
        ++last_count;
      }
      return param;
    });
  }
  if (final_loss && last_count > 0) *final_loss = last_sum / double(last_count);
  return x;
}

VideoResult process_video(const std::vector<Tensor>& frames, const FlowSource& flows,
                          const Network& net, const DreamOptions& opt) {
  if (frames.empty()) throw ContractError("process_video: no frames");
  const Shape shape = frames.front().shape();
  for (std::size_t i = 1; i < frames.size(); ++i)
    if (frames[i].shape() != shape)
      throw ShapeError("process_video: frame " + std::to_string(i + 1) + " is " +
                       shape_str(frames[i].shape()) + ", expected " + shape_str(shape));

  const std::vector<int>& J = opt.preset.offsets;
  const bool temporal = !J.empty();

  VideoResult result;
  result.manifest.command = "dream-video";
  result.outputs.reserve(frames.size());

  for (std::size_t i = 0; i < frames.size(); ++i) {
    const int frame_no = int(i) + 1;
    const auto t0 = std::chrono::steady_clock::now();

    bool shot = false;
    FrameContext ctx;
    std::optional<FlowPair> pair1;
    if (i > 0 && temporal) {
      pair1 = flows.pair(frame_no - 1, frame_no);
      if (pair1->backward.height != shape[0] || pair1->backward.width != shape[1])
        throw ShapeError("process_video: flow dimensions do not match the frames");
      ConsistencyMask m1 = consistency_mask(pair1->forward, pair1->backward, opt.consistency);
      shot = detect_shot_change(m1, opt.shot_threshold);
      if (!shot) {
        for (int j : J) {
          if (frame_no - j < 1) continue;  // the sum only runs over i - j >= 1
          FlowPair pj = j == 1 ? *pair1 : flows.pair(frame_no - j, frame_no);
          ConsistencyMask mj =
              j == 1 ? m1 : consistency_mask(pj.forward, pj.backward, opt.consistency);
          WarpResult wr = warp(result.outputs[i - std::size_t(j)], pj.backward);
          // A pixel that cannot be warped from the prior frame is not a
          // temporal constraint, whatever the flow check said.
          ctx.offsets.push_back(j);
          ctx.warped.push_back(std::move(wr.image));
          ctx.masks.push_back(and_fields(mj.as_field(), wr.valid.as_field()));
        }
        ctx.finalize();
      }
    }

    const int k = (i == 0 || shot) ? opt.preset.k_base : opt.preset.k_over;
    const Tensor* prev = i > 0 ? &result.outputs[i - 1] : nullptr;
    const FlowField* backward_flow = pair1 ? &pair1->backward : nullptr;
    Tensor x0 = init_frame(opt.preset, frame_no, frames[i], prev, backward_flow, shot);

    FrameRecord rec;
    rec.index = frame_no;
    rec.shot_change = shot;
    rec.iterations = k;
    result.outputs.push_back(hallucinate(x0, net, opt, ctx, k,
                                         derive_stream(opt.seed, std::uint64_t(frame_no)),
                                         &rec.final_loss));
    rec.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                     .count();
    result.manifest.frames.push_back(rec);
  }

  result.manifest.config = config_echo(opt);
  return result;
}

double flicker_metric(const std::vector<Tensor>& outputs,
                      const std::vector<FlowField>& backward_flows,
                      const std::vector<Tensor>& mask_fields) {
  if (outputs.size() < 2) throw ContractError("flicker_metric: needs at least two frames");
  if (backward_flows.size() != outputs.size() - 1 || mask_fields.size() != outputs.size() - 1)
    throw ContractError("flicker_metric: one flow and mask per consecutive pair required");
  double acc = 0.0;
  for (std::size_t i = 1; i < outputs.size(); ++i) {
    WarpResult wr = warp(outputs[i - 1], backward_flows[i - 1]);
    Tensor field = and_fields(broadcast_mask(mask_fields[i - 1], outputs[i]),
                              broadcast_mask(wr.valid.as_field(), outputs[i]));
    Tensor loss = temporal_loss(outputs[i], {wr.image}, {field}, outputs[i].size());
    acc += double(loss.value());
  }
  return acc / double(outputs.size() - 1);
}

}  // namespace lucid
