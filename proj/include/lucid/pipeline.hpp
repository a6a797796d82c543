#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lucid/flow.hpp"
#include "lucid/losses.hpp"
#include "lucid/net.hpp"
#include "lucid/tiler.hpp"

namespace lucid {

// A named bundle of loss weights, frame-offset set J, initialization policy
// and iteration counts.
struct EffectPreset {
  enum class Init { OriginalContent, WarpedPrevious };

  std::string name;
  LossWeights weights;
  std::vector<int> offsets;  // J, ascending
  Init init = Init::OriginalContent;
  int k_base = 12;  // first frame / shot change
  int k_over = 30;  // every other frame (over-hallucination)
};

// per_frame | short_term | long_term | trail | decay | trail_decay.
EffectPreset resolve_preset(const std::string& name);
const std::vector<std::string>& preset_names();

// Resolved runtime knobs for a dream run.
struct DreamOptions {
  EffectPreset preset;
  int class_index = 0;
  float lr = 0.02f;
  double shot_threshold = 0.85;
  ConsistencyParams consistency{};
  bool trail_masked = false;
  std::uint64_t seed = 0;
  // The tiling pass count and the Adam steps per tile both default to the
  // frame's resolved k; nonzero values here override them independently.
  int origin_count = 0;
  int step_count = 0;
};

struct FrameRecord {
  int index = 0;  // 1-based
  bool shot_change = false;
  int iterations = 0;
  double final_loss = 0.0;  // mean last-step objective over the final pass
  double millis = 0.0;      // wall clock; in-memory only, never serialized
};

// Everything needed to reproduce a run: the effective configuration and the
// per-frame decisions. Serialization is deterministic and excludes timing,
// so a manifest is a pure function of (inputs, config, seed).
struct RunManifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<FrameRecord> frames;

  std::string to_text() const;
};

// Supplies the flow pair between two 1-based frame indices: forward maps
// from_frame onto to_frame, backward the reverse.
class FlowSource {
 public:
  virtual ~FlowSource() = default;
  virtual FlowPair pair(int from_frame, int to_frame) const = 0;
};

// Reads forward_{from}_{to}.flo / backward_{to}_{from}.flo from a directory.
class DirFlowSource final : public FlowSource {
 public:
  explicit DirFlowSource(std::filesystem::path dir) : dir_(std::move(dir)) {}
  FlowPair pair(int from_frame, int to_frame) const override;

 private:
  std::filesystem::path dir_;
};

// Exact flows for content translating by (dx, dy) pixels per frame step.
class TranslationFlowSource final : public FlowSource {
 public:
  TranslationFlowSource(int height, int width, float dx, float dy)
      : height_(height), width_(width), dx_(dx), dy_(dy) {}
  FlowPair pair(int from_frame, int to_frame) const override;

 private:
  int height_, width_;
  float dx_, dy_;
};

// True iff the inconsistency fraction of the frame's j=1 mask reaches the
// threshold (inclusive). Shot-change frames run k_base iterations, drop all
// temporal terms and initialize from original content.
bool detect_shot_change(const ConsistencyMask& mask_j1, double threshold = 0.85);

// First frames and shot changes always start from the original content.
// warped_previous presets start from the previous output warped forward,
// with warp-invalid (newly revealed) pixels filled from the original.
Tensor init_frame(const EffectPreset& preset, int frame_index, const Tensor& original,
                  const Tensor* previous_output, const FlowField* backward_flow,
                  bool shot_change);

// Runs `iterations` random tiling passes; each pass performs `iterations`
// Adam steps on every tile of the combined loss restricted to that tile,
// clamping pixels to [0,1] after every step. Deterministic given frame_seed.
Tensor hallucinate(const Tensor& x0, const Network& net, const DreamOptions& opt,
                   const FrameContext& ctx, int iterations, std::uint64_t frame_seed,
                   double* final_loss = nullptr);

struct VideoResult {
  std::vector<Tensor> outputs;
  RunManifest manifest;
};

// Frame-by-frame orchestration: frame 1 runs k_base with no temporal terms;
// each later frame computes its masks, checks for a shot change, initializes
// per the preset and hallucinates with k_over (k_base on shot change).
// Offsets j with i - j < 1 are dropped.
VideoResult process_video(const std::vector<Tensor>& frames, const FlowSource& flows,
                          const Network& net, const DreamOptions& opt);

// Mean masked MSE between each output frame and its warped predecessor --
// the short-term temporal loss evaluated on final outputs. Low values mean
// little flicker.
double flicker_metric(const std::vector<Tensor>& outputs,
                      const std::vector<FlowField>& backward_flows,
                      const std::vector<Tensor>& mask_fields);

}  // namespace lucid
