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

#include "cvpp/frames.h"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace cvpp {
namespace {

Frame from_rgb8(const std::vector<unsigned char>& rgb, int w, int h) {
  Tensor t(3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const unsigned char* px = &rgb[(static_cast<size_t>(y) * w + x) * 3];
      t.at(0, y, x) = px[0] / 255.f;
      t.at(1, y, x) = px[1] / 255.f;
      t.at(2, y, x) = px[2] / 255.f;
    }
  return Frame(std::move(t));
}

std::vector<unsigned char> to_rgb8(const Frame& f) {
  const int h = f.data.h, w = f.data.w;
  std::vector<unsigned char> rgb(static_cast<size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        float v = f.data.at(c, y, x);
        v = std::min(1.f, std::max(0.f, v));
        rgb[(static_cast<size_t>(y) * w + x) * 3 + c] =
            static_cast<unsigned char>(std::lround(v * 255.f));
      }
  return rgb;
}

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

Frame load_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  std::vector<png_bytep> rows;
  std::vector<unsigned char> rgb;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("corrupt PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int w = png_get_image_width(png, info);
  const int h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth > 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("unsupported bit depth (want 8-bit): " + path);
  }
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (depth < 8) png_set_expand(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);

  rgb.resize(static_cast<size_t>(h) * w * 3);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = rgb.data() + static_cast<size_t>(y) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return from_rgb8(rgb, w, h);
}

void save_png(const std::string& path, const Frame& f) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  std::vector<unsigned char> rgb = to_rgb8(f);
  std::vector<png_bytep> rows(f.data.h);
  for (int y = 0; y < f.data.h; ++y)
    rows[y] = rgb.data() + static_cast<size_t>(y) * f.data.w * 3;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, f.data.w, f.data.h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Binary PPM (P6), maxval 255.
Frame load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw std::runtime_error("not a P6 PPM: " + path);
  auto next_int = [&in, &path]() {
    // Skips whitespace and '#' comments between header fields.
    while (true) {
      int ch = in.peek();
      if (ch == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(ch)) {
        in.get();
      } else {
        break;
      }
    }
    int v = -1;
    in >> v;
    if (!in || v < 0) throw std::runtime_error("bad PPM header: " + path);
    return v;
  };
  const int w = next_int(), h = next_int(), maxval = next_int();
  if (maxval != 255) throw std::runtime_error("unsupported bit depth (want maxval 255)");
  in.get();  // single whitespace after maxval
  std::vector<unsigned char> rgb(static_cast<size_t>(h) * w * 3);
  in.read(reinterpret_cast<char*>(rgb.data()), rgb.size());
  if (static_cast<size_t>(in.gcount()) != rgb.size())
    throw std::runtime_error("truncated PPM: " + path);
  return from_rgb8(rgb, w, h);
}

void save_ppm(const std::string& path, const Frame& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P6\n" << f.data.w << " " << f.data.h << "\n255\n";
  std::vector<unsigned char> rgb = to_rgb8(f);
  out.write(reinterpret_cast<const char*>(rgb.data()), rgb.size());
}

bool has_suffix(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

}  // namespace

Frame load_frame(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw std::runtime_error("cannot open " + path);
  unsigned char sig[2] = {0, 0};
  probe.read(reinterpret_cast<char*>(sig), 2);
  probe.close();
  if (sig[0] == 0x89 && sig[1] == 'P') return load_png(path);
  if (sig[0] == 'P' && sig[1] == '6') return load_ppm(path);
  throw std::runtime_error("unsupported image format: " + path);
}

Frame load_raw_frame(const std::string& path, int w, int h) {
  if (w <= 0 || h <= 0) throw std::invalid_argument("raw frame needs positive size");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<unsigned char> rgb(static_cast<size_t>(h) * w * 3);
  in.read(reinterpret_cast<char*>(rgb.data()), rgb.size());
  if (static_cast<size_t>(in.gcount()) != rgb.size())
    throw std::runtime_error("raw frame shorter than declared size: " + path);
  return from_rgb8(rgb, w, h);
}

void save_frame(const std::string& path, const Frame& f) {
  if (has_suffix(path, ".ppm"))
    save_ppm(path, f);
  else
    save_png(path, f);
}

Frame pad_to_stride(const Frame& f, int stride) {
  if (stride < 1) throw std::invalid_argument("pad_to_stride: stride >= 1");
  const int h = f.data.h, w = f.data.w;
  const int h2 = (h + stride - 1) / stride * stride;
  const int w2 = (w + stride - 1) / stride * stride;
  if (h2 == h && w2 == w) return f;
  Tensor out(f.data.c, h2, w2);
  for (int c = 0; c < f.data.c; ++c)
    for (int y = 0; y < h2; ++y) {
      const int sy = std::min(y, h - 1);
      for (int x = 0; x < w2; ++x) out.at(c, y, x) = f.data.at(c, sy, std::min(x, w - 1));
    }
  return Frame(std::move(out), f.orig_h, f.orig_w);
}

Frame crop_to_original(const Frame& f) {
  const int h = f.orig_h, w = f.orig_w;
  if (h == f.data.h && w == f.data.w) return f;
  Tensor out(f.data.c, h, w);
  for (int c = 0; c < f.data.c; ++c)
    for (int y = 0; y < h; ++y)
      std::memcpy(&out.at(c, y, 0), &f.data.at(c, y, 0), sizeof(float) * w);
  return Frame(std::move(out), h, w);
}

std::vector<std::string> list_frame_files(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string p = e.path().string();
    if (has_suffix(p, ".png") || has_suffix(p, ".ppm")) out.push_back(p);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Frame flip_horizontal(const Frame& f) {
  Tensor out(f.data.c, f.data.h, f.data.w);
  for (int c = 0; c < f.data.c; ++c)
    for (int y = 0; y < f.data.h; ++y)
      for (int x = 0; x < f.data.w; ++x) out.at(c, y, x) = f.data.at(c, y, f.data.w - 1 - x);
  return Frame(std::move(out), f.orig_h, f.orig_w);
}

Frame crop_frame(const Frame& f, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > f.data.h || x0 + w > f.data.w)
    throw std::invalid_argument("crop_frame: window out of bounds");
  Tensor out(f.data.c, h, w);
  for (int c = 0; c < f.data.c; ++c)
    for (int y = 0; y < h; ++y)
      std::memcpy(&out.at(c, y, 0), &f.data.at(c, y0 + y, x0), sizeof(float) * w);
  return Frame(std::move(out));
}

std::vector<Clip> window_clips(const std::vector<Frame>& frames, int clip_len, int crop,
                               int start_stride, bool allow_flip, Rng& rng) {
  if (static_cast<int>(frames.size()) < clip_len)
    throw std::invalid_argument("window_clips: sequence shorter than clip length");
  if (start_stride < 1) throw std::invalid_argument("window_clips: stride >= 1");
  const int h = frames[0].data.h, w = frames[0].data.w;
  if (crop > h || crop > w) throw std::invalid_argument("window_clips: crop too large");
  std::vector<Clip> clips;
  for (size_t s = 0; s + clip_len <= frames.size(); s += start_stride) {
    const int y0 = crop < h ? static_cast<int>(rng.below(h - crop + 1)) : 0;
    const int x0 = crop < w ? static_cast<int>(rng.below(w - crop + 1)) : 0;
    const bool flip = allow_flip && rng.uniform() < 0.5;
    Clip clip;
    for (int i = 0; i < clip_len; ++i) {
      if (!frames[s + i].data.same_shape(frames[0].data))
        throw std::invalid_argument("window_clips: mixed frame sizes");
      Frame g = crop < h || crop < w ? crop_frame(frames[s + i], y0, x0, crop, crop)
                                     : frames[s + i];
      if (flip) g = flip_horizontal(g);
      clip.push_back(std::move(g));
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

}  // namespace cvpp
