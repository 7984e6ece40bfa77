// Copyright (c) the cvpp authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cvpp/checkpoint.h"
#include "cvpp/entropy.h"
#include "cvpp/frames.h"
#include "cvpp/metrics.h"
#include "cvpp/model.h"
#include "cvpp/pipeline.h"
#include "cvpp/training.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kBdMethodNote =
    "method: monotone piecewise-cubic Hermite fit of log10(bpp) over PSNR, "
    "integrated across the common PSNR range";

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                              std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return json::parse(in);
}

// Builds the model that the checkpoint was trained with (the architecture
// rides in the manifest) and fills in its weights.
std::unique_ptr<cvpp::VideoCodecModel> load_model(const std::string& ckpt,
                                                  json* manifest_out = nullptr) {
  json manifest = cvpp::read_manifest(ckpt);
  cvpp::ModelConfig cfg = manifest.contains("config")
                              ? cvpp::ModelConfig::from_json(manifest["config"])
                              : cvpp::ModelConfig{};
  auto model = std::make_unique<cvpp::VideoCodecModel>(cfg);
  std::vector<std::string> missing, unknown;
  cvpp::load_checkpoint(ckpt, model->ps, &missing, &unknown);
  if (!missing.empty())
    std::cerr << "warning: " << missing.size() << " parameters kept their initialization ("
              << missing.front() << ", ...)\n";
  if (manifest_out) *manifest_out = std::move(manifest);
  return model;
}

void check_lambda(const json& manifest, int lambda, const std::string& ckpt) {
  if (manifest.contains("lambda") && manifest["lambda"].is_number() &&
      manifest["lambda"].get<int>() != lambda)
    throw std::runtime_error("checkpoint/lambda mismatch: " + ckpt + " was trained for lambda " +
                             std::to_string(manifest["lambda"].get<int>()) + ", requested " +
                             std::to_string(lambda));
}

cvpp::Clip load_clip(const std::string& input, int raw_w, int raw_h, int max_frames) {
  cvpp::Clip clip;
  if (fs::is_directory(input)) {
    for (const std::string& f : cvpp::list_frame_files(input)) {
      clip.push_back(cvpp::load_frame(f));
      if (max_frames > 0 && static_cast<int>(clip.size()) >= max_frames) break;
    }
  } else {
    // Raw input: one file of concatenated interleaved RGB24 frames.
    if (raw_w <= 0 || raw_h <= 0)
      throw std::runtime_error("raw input needs --size WxH");
    std::vector<uint8_t> bytes = read_file(input);
    const size_t frame_bytes = static_cast<size_t>(raw_w) * raw_h * 3;
    if (frame_bytes == 0 || bytes.size() % frame_bytes != 0)
      throw std::runtime_error("raw input size is not a multiple of 3*W*H");
    const size_t n = bytes.size() / frame_bytes;
    for (size_t i = 0; i < n; ++i) {
      if (max_frames > 0 && static_cast<int>(clip.size()) >= max_frames) break;
      cvpp::Tensor t(3, raw_h, raw_w);
      const uint8_t* p = bytes.data() + i * frame_bytes;
      for (int y = 0; y < raw_h; ++y)
        for (int x = 0; x < raw_w; ++x)
          for (int c = 0; c < 3; ++c)
            t.at(c, y, x) = p[(static_cast<size_t>(y) * raw_w + x) * 3 + c] / 255.f;
      clip.emplace_back(std::move(t));
    }
  }
  if (clip.empty()) throw std::runtime_error("no frames found in " + input);
  return clip;
}

bool parse_size(const std::string& s, int* w, int* h) {
  return std::sscanf(s.c_str(), "%dx%d", w, h) == 2;
}

// Codes a sequence per lambda-indexed checkpoint and aggregates one RD point
// per rate level.
cvpp::RdCurve curve_from_checkpoints(const std::string& ckpt_pattern,
                                     const std::vector<int>& lambdas,
                                     const std::vector<cvpp::Clip>& clips, int gop,
                                     bool real_coding) {
  cvpp::RdCurve curve;
  for (int lambda : lambdas) {
    std::string path = ckpt_pattern;
    const std::string token = "{lambda}";
    if (auto pos = path.find(token); pos != std::string::npos)
      path.replace(pos, token.size(), std::to_string(lambda));
    if (!fs::exists(path)) throw std::runtime_error("ablate: missing checkpoint " + path);
    json manifest;
    auto model = load_model(path, &manifest);
    check_lambda(manifest, lambda, path);

    double bits = 0.0, pixels = 0.0, psnr_sum = 0.0;
    int frames = 0;
    for (const cvpp::Clip& clip : clips) {
      cvpp::EncodeResult enc = cvpp::encode_sequence(*model, clip, gop, lambda, real_coding);
      bits += enc.stats.total_bits;
      pixels += static_cast<double>(enc.stats.width) * enc.stats.height *
                enc.stats.frames.size();
      for (const auto& pf : enc.stats.frames) psnr_sum += pf.psnr;
      frames += static_cast<int>(enc.stats.frames.size());
    }
    curve.push_back({bits / pixels, psnr_sum / frames});
  }
  return curve;
}

std::vector<cvpp::Clip> dataset_from_config(const json& cfg) {
  if (cfg.contains("dataset") && cfg["dataset"].is_string()) {
    cvpp::Clip clip = load_clip(cfg["dataset"].get<std::string>(), 0, 0,
                                cfg.value("max_frames", 0));
    return {clip};
  }
  const json syn = cfg.value("synthetic", json::object());
  cvpp::Rng rng(syn.value("seed", uint64_t{7}));
  return cvpp::make_translating_dataset(syn.value("clips", 1), syn.value("frames", 8),
                                        syn.value("h", 64), syn.value("w", 64), rng);
}

int cmd_encode(const std::string& input, const std::string& size, const std::string& ckpt,
               int gop, int lambda, const std::string& out, bool no_arith, int max_frames) {
  cvpp::lambda_to_index(lambda);  // validates the rate level
  int rw = 0, rh = 0;
  if (!size.empty() && !parse_size(size, &rw, &rh))
    throw std::runtime_error("--size must look like 352x288");
  cvpp::Clip clip = load_clip(input, rw, rh, max_frames);

  json manifest;
  auto model = load_model(ckpt, &manifest);
  check_lambda(manifest, lambda, ckpt);

  cvpp::EncodeResult enc =
      cvpp::encode_sequence(*model, clip, gop, lambda, /*real_coding=*/!no_arith);
  write_file(out, enc.bitstream.serialize());
  {
    std::ofstream side(out + ".json");
    side << cvpp::stats_to_json(enc.stats).dump(2) << "\n";
  }
  if (no_arith)
    std::cout << "note: estimation-only stream (no payload); bits below are estimates\n";
  std::cout << "frames " << enc.stats.frames.size() << "  bits " << enc.stats.total_bits
            << "  bpp " << enc.stats.bpp << "  psnr " << enc.stats.avg_psnr << "\n"
            << "wrote " << out << " and " << out << ".json\n";
  return 0;
}

int cmd_decode(const std::string& in, const std::string& ckpt, const std::string& out_dir) {
  cvpp::Bitstream bs = cvpp::Bitstream::parse(read_file(in));
  json manifest;
  auto model = load_model(ckpt, &manifest);
  check_lambda(manifest, cvpp::kLambdaLevels[bs.lambda_idx], ckpt);

  std::vector<cvpp::Frame> frames = cvpp::decode_sequence(*model, bs);
  fs::create_directories(out_dir);
  for (size_t i = 0; i < frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04zu.png", i + 1);
    cvpp::save_frame(out_dir + "/" + name, frames[i]);
  }
  std::cout << "decoded " << frames.size() << " frames to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& init_ckpt, const std::string& out_dir) {
  json config = config_path.empty() ? json::object() : read_json_file(config_path);

  std::unique_ptr<cvpp::VideoCodecModel> model;
  if (!init_ckpt.empty()) {
    model = load_model(init_ckpt);
  } else {
    cvpp::ModelConfig cfg = config.contains("model_config")
                                ? cvpp::ModelConfig::from_json(config["model_config"])
                                : cvpp::ModelConfig::small();
    model = std::make_unique<cvpp::VideoCodecModel>(cfg, config.value("seed", uint64_t{0x5eed}));
  }

  std::vector<cvpp::Clip> dataset;
  const int clip_len = config.value("clip_len", 7);
  if (!data_dir.empty()) {
    std::vector<cvpp::Frame> frames;
    for (const std::string& f : cvpp::list_frame_files(data_dir))
      frames.push_back(cvpp::load_frame(f));
    if (frames.empty()) throw std::runtime_error("no frames in " + data_dir);
    cvpp::Rng rng(config.value("seed", uint64_t{0x5eed}) ^ 0xda7a);
    const int crop = std::min({config.value("crop", 64), frames[0].data.h, frames[0].data.w});
    dataset = cvpp::window_clips(frames, clip_len, crop, /*start_stride=*/1,
                                 /*allow_flip=*/true, rng);
  } else {
    cvpp::Rng rng(config.value("seed", uint64_t{0x5eed}) ^ 0xda7a);
    dataset = cvpp::make_translating_dataset(config.value("clips", 8), clip_len,
                                             config.value("h", 64), config.value("w", 64), rng);
  }
  if (dataset.empty()) throw std::runtime_error("dataset is empty");

  cvpp::run_training(*model, dataset, config, out_dir);
  std::cout << "training done; checkpoints and logs in " << out_dir << "\n";
  return 0;
}

int cmd_eval(const std::string& recon_dir, const std::string& orig_dir,
             const std::string& bits_path) {
  std::vector<std::string> recon = cvpp::list_frame_files(recon_dir);
  std::vector<std::string> orig = cvpp::list_frame_files(orig_dir);
  if (recon.size() != orig.size() || recon.empty())
    throw std::runtime_error("recon/orig frame counts differ or are empty");

  json bits_doc = read_json_file(bits_path);
  std::vector<double> bits;
  if (bits_doc.contains("frames"))
    for (const json& f : bits_doc["frames"]) bits.push_back(f.at("bits").get<double>());
  else
    for (const json& b : bits_doc.at("bits")) bits.push_back(b.get<double>());
  if (bits.size() != recon.size())
    throw std::runtime_error("bits json covers " + std::to_string(bits.size()) +
                             " frames, directories hold " + std::to_string(recon.size()));

  json out;
  out["frames"] = json::array();
  double total_bits = 0.0, psnr_sum = 0.0, pixels = 0.0;
  for (size_t i = 0; i < recon.size(); ++i) {
    cvpp::Frame r = cvpp::load_frame(recon[i]);
    cvpp::Frame o = cvpp::load_frame(orig[i]);
    const double psnr = cvpp::psnr_rgb(o.data, r.data);
    const double fbpp = cvpp::bpp(bits[i], o.data.h, o.data.w);
    json row = {{"index", i + 1}, {"bpp", fbpp}};
    if (std::isinf(psnr))
      row["psnr"] = "inf";
    else
      row["psnr"] = psnr;
    out["frames"].push_back(row);
    total_bits += bits[i];
    psnr_sum += psnr;
    pixels += static_cast<double>(o.data.h) * o.data.w;
  }
  out["bpp"] = total_bits / pixels;
  const double avg = psnr_sum / recon.size();
  if (std::isinf(avg))
    out["avg_psnr"] = "inf";
  else
    out["avg_psnr"] = avg;
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_bdrate(const std::string& anchor_path, const std::string& test_path) {
  cvpp::RdCurve anchor = cvpp::load_rd_csv(anchor_path);
  cvpp::RdCurve test = cvpp::load_rd_csv(test_path);
  const double r = cvpp::bd_rate(anchor, test);
  std::printf("bd-rate %+.2f%% (test vs anchor; negative = rate savings)\n%s\n", r,
              kBdMethodNote);
  return 0;
}

int cmd_ablate(const std::string& grid_path) {
  json grid = read_json_file(grid_path);
  const std::vector<int> lambdas =
      grid.value("lambdas", std::vector<int>{256, 512, 1024, 2048});
  const int gop = grid.value("gop", 8);
  const bool real_coding = grid.value("real_coding", true);
  const std::string out_dir = grid.value("out_dir", std::string{});
  if (!out_dir.empty()) fs::create_directories(out_dir);

  std::vector<cvpp::Clip> clips;  // built lazily; curve-only grids skip coding
  bool have_clips = false;

  struct Entry {
    std::string name;
    cvpp::RdCurve curve;
  };
  std::vector<Entry> entries;
  for (const json& s : grid.at("settings")) {
    Entry e;
    e.name = s.at("name").get<std::string>();
    if (s.contains("csv")) {
      e.curve = cvpp::load_rd_csv(s["csv"].get<std::string>());
    } else {
      if (!have_clips) {
        clips = dataset_from_config(grid);
        have_clips = true;
      }
      e.curve = curve_from_checkpoints(s.at("ckpt").get<std::string>(), lambdas, clips, gop,
                                       real_coding);
    }
    if (!out_dir.empty())
      cvpp::save_rd_csv(out_dir + "/" + e.name + ".csv", e.curve, lambdas);
    entries.push_back(std::move(e));
  }

  const std::string anchor_name = grid.value("anchor", entries.front().name);
  const cvpp::RdCurve* anchor = nullptr;
  for (const Entry& e : entries)
    if (e.name == anchor_name) anchor = &e.curve;
  if (!anchor) throw std::runtime_error("ablate: anchor setting not found: " + anchor_name);

  std::printf("%-24s %s\n", "setting", "bd-rate vs anchor");
  for (const Entry& e : entries)
    std::printf("%-24s %+.2f%%\n", e.name.c_str(), cvpp::bd_rate(*anchor, e.curve));
  std::printf("%s\n", kBdMethodNote);
  return 0;
}

int cmd_complexity(const std::string& ckpt, int width, int height) {
  auto model = load_model(ckpt);
  cvpp::ComplexityReport r = cvpp::complexity_report(*model, height, width);
  std::cout << cvpp::complexity_to_json(r).dump(2) << "\n";
  return 0;
}

int cmd_init_ckpt(const std::string& out, const std::string& preset, uint64_t seed) {
  cvpp::ModelConfig cfg;
  if (preset == "small")
    cfg = cvpp::ModelConfig::small();
  else if (preset != "full")
    throw std::runtime_error("--preset must be small or full");
  cvpp::VideoCodecModel model(cfg, seed);
  json manifest = {{"config", cfg.to_json()}, {"stage", 0}};
  cvpp::save_checkpoint(out, model.ps, manifest);
  std::cout << "wrote " << out << " (" << model.param_count() << " parameters)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cvpp: conditional P-frame video codec"};
  app.require_subcommand(1);

  // encode
  std::string in_path, size_str, ckpt, out_path;
  int gop = 32, lambda = 2048, max_frames = 0;
  bool no_arith = false;
  CLI::App* enc = app.add_subcommand("encode", "encode frames to a bitstream");
  enc->add_option("--input", in_path, "frame directory (png/ppm) or raw RGB24 file")
      ->required();
  enc->add_option("--size", size_str, "WxH of raw input frames");
  enc->add_option("--ckpt", ckpt, "model checkpoint")->required();
  enc->add_option("--gop", gop, "group-of-pictures length");
  enc->add_option("--lambda", lambda, "rate level: 256|512|1024|2048");
  enc->add_option("--out", out_path, "output bitstream path")->required();
  enc->add_option("--frames", max_frames, "cap the number of coded frames");
  enc->add_flag("--no-arith", no_arith, "skip entropy coding; report rate estimates");

  // decode
  std::string dec_in, dec_ckpt, dec_out;
  CLI::App* dec = app.add_subcommand("decode", "decode a bitstream to png frames");
  dec->add_option("--in", dec_in, "bitstream path")->required();
  dec->add_option("--ckpt", dec_ckpt, "model checkpoint")->required();
  dec->add_option("--out", dec_out, "output frame directory")->required();

  // train
  std::string train_cfg, train_data, train_init, train_out;
  CLI::App* tr = app.add_subcommand("train", "run the progressive training schedule");
  tr->add_option("--config", train_cfg, "json training config");
  tr->add_option("--data", train_data, "directory of frames (default: synthetic)");
  tr->add_option("--init", train_init, "warm-start checkpoint");
  tr->add_option("--out", train_out, "output directory")->required();

  // eval
  std::string ev_recon, ev_orig, ev_bits;
  CLI::App* ev = app.add_subcommand("eval", "psnr/bpp report from decoded frames");
  ev->add_option("--recon", ev_recon, "reconstructed frame directory")->required();
  ev->add_option("--orig", ev_orig, "original frame directory")->required();
  ev->add_option("--bits", ev_bits, "per-frame bits json (encode sidecar)")->required();

  // bdrate
  std::string bd_anchor, bd_test;
  CLI::App* bd = app.add_subcommand("bdrate", "delta rate between two rd csv curves");
  bd->add_option("--anchor", bd_anchor, "anchor csv (lambda,bpp,psnr)")->required();
  bd->add_option("--test", bd_test, "test csv (lambda,bpp,psnr)")->required();

  // ablate
  std::string grid_path;
  CLI::App* ab = app.add_subcommand("ablate", "bd-rate table over a setting grid");
  ab->add_option("--grid", grid_path, "grid config json")->required();

  // complexity
  std::string cx_ckpt;
  int cx_w = 1920, cx_h = 1080;
  CLI::App* cx = app.add_subcommand("complexity", "parameter/mac/buffer accounting");
  cx->add_option("--ckpt", cx_ckpt, "model checkpoint")->required();
  cx->add_option("--width", cx_w, "declared frame width");
  cx->add_option("--height", cx_h, "declared frame height");

  // init-ckpt
  std::string ic_out, ic_preset = "small";
  uint64_t ic_seed = 0x5eed;
  CLI::App* ic = app.add_subcommand("init-ckpt", "write a freshly initialized checkpoint");
  ic->add_option("--out", ic_out, "checkpoint path")->required();
  ic->add_option("--preset", ic_preset, "small|full");
  ic->add_option("--seed", ic_seed, "parameter seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (enc->parsed())
      return cmd_encode(in_path, size_str, ckpt, gop, lambda, out_path, no_arith, max_frames);
    if (dec->parsed()) return cmd_decode(dec_in, dec_ckpt, dec_out);
    if (tr->parsed()) return cmd_train(train_cfg, train_data, train_init, train_out);
    if (ev->parsed()) return cmd_eval(ev_recon, ev_orig, ev_bits);
    if (bd->parsed()) return cmd_bdrate(bd_anchor, bd_test);
    if (ab->parsed()) return cmd_ablate(grid_path);
    if (cx->parsed()) return cmd_complexity(cx_ckpt, cx_w, cx_h);
    if (ic->parsed()) return cmd_init_ckpt(ic_out, ic_preset, ic_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
