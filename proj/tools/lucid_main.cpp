// lucid -- class-controlled dreaming for images and video, with optical-flow
// temporal consistency. See README.md for the file formats and presets.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lucid/config.hpp"
#include "lucid/flow.hpp"
#include "lucid/pipeline.hpp"
#include "lucid/ppm.hpp"
#include "lucid/rng.hpp"

namespace fs = std::filesystem;
using namespace lucid;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitMissingInput = 3;
constexpr int kExitFormat = 4;

std::string frame_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04d.ppm", index);
  return buf;
}

// Shared override flags; only flags the user passed end up set.
struct CliOverrides {
  Config cfg;
  std::string config_path;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value config file");
    cmd->add_option("--preset", cfg.preset, "effect preset (per_frame, short_term, long_term, trail, decay, trail_decay)");
    cmd->add_option("--class", cfg.class_index, "class index to hallucinate");
    cmd->add_option("--seed", cfg.seed, "global RNG seed");
    cmd->add_option("--alpha", cfg.alpha, "class-loss weight");
    cmd->add_option("--beta", cfg.beta, "short-term loss weight");
    cmd->add_option("--gamma", cfg.gamma, "long-term loss weight");
    cmd->add_option("--delta", cfg.delta, "flow-trail loss weight");
    cmd->add_option("--J", [this](const std::vector<std::string>& vals) {
      Config tmp = Config::from_text("J = " + vals.back());
      cfg.offsets = tmp.offsets;
      return true;
    }, "comma-separated frame offsets, e.g. 1,2,4");
    cmd->add_option("--k-base", cfg.k_base, "iterations for first/shot-change frames");
    cmd->add_option("--k-over", cfg.k_over, "iterations for other frames");
    cmd->add_option("--lr", cfg.lr, "Adam learning rate");
    cmd->add_option("--shot-threshold", cfg.shot_threshold, "inconsistency fraction that flags a shot change");
    cmd->add_option("--disagree-scale", cfg.disagree_scale, "flow disagreement test scale");
    cmd->add_option("--disagree-offset", cfg.disagree_offset, "flow disagreement test offset");
    cmd->add_option("--boundary-scale", cfg.boundary_scale, "motion boundary test scale");
    cmd->add_option("--boundary-offset", cfg.boundary_offset, "motion boundary test offset");
    cmd->add_flag("--trail-masked", [this](std::int64_t) { cfg.trail_masked = true; },
                  "mask the flow-trail residual instead of only normalizing by mask size");
    cmd->add_option("--net-spec", cfg.net_spec, "network spec file");
    cmd->add_option("--weights", cfg.weights, "network weights file (LDW1)");
    cmd->add_option("--out", cfg.out, "output directory");
  }

  Config merged() const {
    Config base;
    if (!config_path.empty()) base = Config::from_file(config_path);
    base.apply(cfg);  // command line wins over the file
    return base;
  }
};

Network load_network(const Config& cfg) {
  if (!cfg.net_spec) throw ContractError("--net-spec is required");
  if (!cfg.weights) throw ContractError("--weights is required");
  NetworkSpec spec = load_network_spec(*cfg.net_spec);
  Weights w = load_weights(*cfg.weights, spec);
  return Network(std::move(spec), std::move(w));
}

fs::path require_out(const Config& cfg) {
  if (!cfg.out) throw ContractError("--out is required");
  fs::path out = *cfg.out;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory: " + out.string());
  return out;
}

void write_manifest(const RunManifest& manifest, const fs::path& out) {
  std::ofstream f(out / "manifest.txt", std::ios::binary);
  if (!f) throw IoError("cannot write manifest");
  f << manifest.to_text();
}

int cmd_dream(const CliOverrides& cli) {
  const Config cfg = cli.merged();
  if (!cfg.image) throw ContractError("--image is required");
  DreamOptions opt = resolve_options(cfg);
  Network net = load_network(cfg);
  const fs::path out = require_out(cfg);

  Tensor image = read_ppm_file(*cfg.image).to_tensor();
  RunManifest manifest;
  manifest.command = "dream";
  manifest.config = config_echo(opt);
  manifest.config.emplace_back("image", *cfg.image);

  FrameRecord rec;
  rec.index = 1;
  rec.iterations = opt.preset.k_base;
  Tensor dreamed = hallucinate(image, net, opt, FrameContext{}, opt.preset.k_base,
                               derive_stream(opt.seed, 1), &rec.final_loss);
  manifest.frames.push_back(rec);

  write_ppm_file(PpmImage::from_tensor(dreamed), out / "output.ppm");
  write_manifest(manifest, out);
  std::cerr << "[lucid] dream: wrote " << (out / "output.ppm").string() << " (k="
            << opt.preset.k_base << ", loss=" << rec.final_loss << ")\n";
  return kExitOk;
}

int cmd_dream_video(const CliOverrides& cli) {
  const Config cfg = cli.merged();
  if (!cfg.frames) throw ContractError("--frames is required");
  DreamOptions opt = resolve_options(cfg);
  Network net = load_network(cfg);
  const fs::path out = require_out(cfg);

  std::vector<Tensor> frames;
  for (int i = 1;; ++i) {
    const fs::path p = fs::path(*cfg.frames) / frame_name(i);
    if (!fs::exists(p)) break;
    frames.push_back(read_ppm_file(p).to_tensor());
  }
  if (frames.empty())
    throw MissingInputError("no frames found in " + *cfg.frames + " (expected " +
                            frame_name(1) + ", ...)");

  const bool needs_flows = !opt.preset.offsets.empty() && frames.size() > 1;
  if (needs_flows && !cfg.flows)
    throw ContractError("--flows is required for temporal presets");
  DirFlowSource flows(cfg.flows ? fs::path(*cfg.flows) : fs::path());

  VideoResult result = process_video(frames, flows, net, opt);
  for (std::size_t i = 0; i < result.outputs.size(); ++i)
    write_ppm_file(PpmImage::from_tensor(result.outputs[i]), out / frame_name(int(i) + 1));
  result.manifest.config.emplace_back("frames_dir", *cfg.frames);
  if (cfg.flows) result.manifest.config.emplace_back("flows_dir", *cfg.flows);
  write_manifest(result.manifest, out);

  for (const FrameRecord& f : result.manifest.frames)
    std::cerr << "[lucid] frame " << f.index << "/" << result.manifest.frames.size()
              << " k=" << f.iterations << " shot=" << (f.shot_change ? 1 : 0)
              << " loss=" << f.final_loss << " (" << int(f.millis) << " ms)\n";
  return kExitOk;
}

int cmd_flow_inspect(const std::string& path) {
  FlowField f = read_flo_file(path);
  double umin = 0, umax = 0, usum = 0, vmin = 0, vmax = 0, vsum = 0;
  bool first = true;
  for (int r = 0; r < f.height; ++r)
    for (int c = 0; c < f.width; ++c) {
      const double u = f.u(r, c), v = f.v(r, c);
      if (first) {
        umin = umax = u;
        vmin = vmax = v;
        first = false;
      }
      umin = std::min(umin, u);
      umax = std::max(umax, u);
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
      usum += u;
      vsum += v;
    }
  const double n = double(f.height) * f.width;
  std::printf("width = %d\nheight = %d\n", f.width, f.height);
  std::printf("u: min=%.9g max=%.9g mean=%.9g\n", umin, umax, usum / n);
  std::printf("v: min=%.9g max=%.9g mean=%.9g\n", vmin, vmax, vsum / n);
  return kExitOk;
}

struct SynthArgs {
  std::string kind = "translation";
  double dx = 0, dy = 0, theta = 0;
  int height = 0, width = 0;
  int from = 1, to = 2;
  std::string dir;
};

int cmd_flow_synth(const SynthArgs& a) {
  if (a.height <= 0 || a.width <= 0)
    throw ContractError("--height and --width must be positive");
  if (a.dir.empty()) throw ContractError("--dir is required");
  FlowPair pair;
  if (a.kind == "translation")
    pair = synth_translation(a.height, a.width, float(a.dx), float(a.dy));
  else if (a.kind == "rotation")
    pair = synth_rotation(a.height, a.width, float(a.theta));
  else
    throw ContractError("unknown synth kind '" + a.kind + "'");
  std::error_code ec;
  fs::create_directories(a.dir, ec);
  const fs::path fwd = fs::path(a.dir) / forward_flo_name(a.from, a.to);
  const fs::path bwd = fs::path(a.dir) / backward_flo_name(a.to, a.from);
  write_flo_file(pair.forward, fwd);
  write_flo_file(pair.backward, bwd);
  std::cerr << "[lucid] wrote " << fwd.string() << " and " << bwd.string() << "\n";
  return kExitOk;
}

struct NetInitArgs {
  std::string spec;
  std::string out;
  std::uint64_t seed = 0;
  double gain = 1.0;
};

int cmd_net_init(const NetInitArgs& a) {
  if (a.spec.empty() || a.out.empty())
    throw ContractError("--spec and --out are required");
  NetworkSpec spec = load_network_spec(a.spec);
  Weights w = random_weights(spec, a.seed, float(a.gain));
  save_weights(a.out, spec, w);
  std::cerr << "[lucid] wrote " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lucid: class-controlled dreaming for images and video"};
  app.require_subcommand(1);

  CliOverrides dream_cli, video_cli;
  std::string dream_image;
  std::string inspect_path;
  SynthArgs synth_args;
  NetInitArgs net_init_args;

  CLI::App* dream = app.add_subcommand("dream", "hallucinate a class into one image");
  dream->add_option("--image", dream_image, "input image (binary PPM, P6)");
  dream_cli.attach(dream);

  CLI::App* video = app.add_subcommand("dream-video", "hallucinate a class into a frame sequence");
  video->add_option("--frames", video_cli.cfg.frames, "directory of frame_0001.ppm, ...");
  video->add_option("--flows", video_cli.cfg.flows, "directory of forward_*.flo / backward_*.flo");
  video_cli.attach(video);

  CLI::App* flow = app.add_subcommand("flow", "optical-flow utilities");
  flow->require_subcommand(1);
  CLI::App* inspect = flow->add_subcommand("inspect", "print dimensions and u/v statistics");
  inspect->add_option("file", inspect_path, "a .flo file")->required();
  CLI::App* synth = flow->add_subcommand("synth", "write an exact synthetic flow pair");
  synth->add_option("--kind", synth_args.kind, "translation | rotation");
  synth->add_option("--dx", synth_args.dx, "translation x (pixels per step)");
  synth->add_option("--dy", synth_args.dy, "translation y");
  synth->add_option("--theta", synth_args.theta, "rotation angle (radians)");
  synth->add_option("--height", synth_args.height, "field height")->required();
  synth->add_option("--width", synth_args.width, "field width")->required();
  synth->add_option("--from", synth_args.from, "earlier frame index (naming only)");
  synth->add_option("--to", synth_args.to, "later frame index (naming only)");
  synth->add_option("--dir", synth_args.dir, "output directory")->required();

  CLI::App* net = app.add_subcommand("net", "network utilities");
  net->require_subcommand(1);
  CLI::App* init = net->add_subcommand("init", "write randomly initialized weights for a spec");
  init->add_option("--spec", net_init_args.spec, "network spec file")->required();
  init->add_option("--out", net_init_args.out, "output weights file")->required();
  init->add_option("--seed", net_init_args.seed, "RNG seed");
  init->add_option("--gain", net_init_args.gain, "scale on the He-uniform init");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (dream->parsed()) {
      if (!dream_image.empty()) dream_cli.cfg.image = dream_image;
      return cmd_dream(dream_cli);
    }
    if (video->parsed()) return cmd_dream_video(video_cli);
    if (flow->parsed()) {
      if (inspect->parsed()) return cmd_flow_inspect(inspect_path);
      return cmd_flow_synth(synth_args);
    }
    if (net->parsed()) return cmd_net_init(net_init_args);
  } catch (const MissingInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMissingInput;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const Error& e) {  // shape / contract / index violations
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}
