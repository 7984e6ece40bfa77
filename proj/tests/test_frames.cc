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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cvpp/frames.h"
#include "test_util.h"

using namespace cvpp;
namespace fs = std::filesystem;

namespace {

Frame gradient_frame(int h, int w) {
  Tensor t(3, h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        t.at(c, y, x) = static_cast<float>((c * 37 + y * 11 + x * 3) % 256) / 255.f;
  return Frame(std::move(t));
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("cvpp_frames_XXXXXX" + std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("png save/load round trip is exact at 8 bits") {
  TempDir td;
  const std::string p = (td.path / "a.png").string();
  Frame f = gradient_frame(13, 17);
  save_frame(p, f);
  Frame g = load_frame(p);
  REQUIRE(g.data.same_shape(f.data));
  CHECK(g.orig_h == 13);
  CHECK(g.orig_w == 17);
  for (size_t i = 0; i < f.data.size(); ++i)
    CHECK(g.data.v[i] == doctest::Approx(f.data.v[i]).epsilon(1e-9));
}

TEST_CASE("ppm save/load round trip and endpoint scaling") {
  TempDir td;
  const std::string p = (td.path / "a.ppm").string();
  Frame f = gradient_frame(5, 4);
  f.data.at(0, 0, 0) = 1.f;   // 255 -> exactly 1.0
  f.data.at(1, 0, 0) = 0.f;   // 0 -> exactly 0.0
  f.data.at(2, 0, 0) = 128.f / 255.f;
  save_frame(p, f);
  Frame g = load_frame(p);
  CHECK(g.data.at(0, 0, 0) == 1.f);
  CHECK(g.data.at(1, 0, 0) == 0.f);
  CHECK(g.data.at(2, 0, 0) == doctest::Approx(128.0 / 255.0).epsilon(1e-6));
  for (size_t i = 0; i < f.data.size(); ++i)
    CHECK(g.data.v[i] == doctest::Approx(f.data.v[i]).epsilon(1e-9));
}

TEST_CASE("all-zero image loads as zeros") {
  TempDir td;
  const std::string p = (td.path / "zero.png").string();
  save_frame(p, Frame(Tensor(3, 6, 6)));
  Frame g = load_frame(p);
  for (float v : g.data.v) CHECK(v == 0.f);
}

TEST_CASE("raw rgb24 load honors declared size and errors on short files") {
  TempDir td;
  const std::string p = (td.path / "f.rgb").string();
  {
    std::ofstream out(p, std::ios::binary);
    for (int i = 0; i < 4 * 3 * 3; ++i) out.put(static_cast<char>(i * 2));
  }
  Frame g = load_raw_frame(p, 4, 3);
  CHECK(g.data.h == 3);
  CHECK(g.data.w == 4);
  CHECK(g.data.at(0, 0, 0) == 0.f);
  CHECK(g.data.at(1, 0, 0) == doctest::Approx(2.0 / 255.0));
  CHECK_THROWS(load_raw_frame(p, 8, 8));
  CHECK_THROWS(load_frame((td.path / "missing.png").string()));
}

TEST_CASE("pad_to_stride replicates edges and round trips") {
  Frame f = gradient_frame(65, 64);
  Frame p = pad_to_stride(f, 64);
  CHECK(p.data.h == 128);
  CHECK(p.data.w == 64);
  CHECK(p.orig_h == 65);
  // Rows 65..127 replicate row 64 exactly.
  for (int y = 65; y < 128; ++y)
    for (int x = 0; x < 64; ++x) CHECK(p.data.at(1, y, x) == p.data.at(1, 64, x));
  Frame back = crop_to_original(p);
  REQUIRE(back.data.same_shape(f.data));
  for (size_t i = 0; i < f.data.size(); ++i) CHECK(back.data.v[i] == f.data.v[i]);

  Frame same = pad_to_stride(gradient_frame(64, 64), 64);
  CHECK(same.data.h == 64);

  Frame tiny = pad_to_stride(Frame(Tensor::full(3, 1, 1, 0.25f)), 64);
  CHECK(tiny.data.h == 64);
  for (float v : tiny.data.v) CHECK(v == 0.25f);
}

TEST_CASE("window_clips enumerates strided windows with shared augmentation") {
  Rng rng(99);
  std::vector<Frame> seq;
  for (int i = 0; i < 10; ++i) {
    Frame f = gradient_frame(8, 8);
    f.data.at(0, 0, 0) = i / 10.f;  // frame marker
    seq.push_back(std::move(f));
  }
  auto clips = window_clips(seq, 5, 8, 5, /*allow_flip=*/false, rng);
  REQUIRE(clips.size() == 2);
  CHECK(clips[0][0].data.at(0, 0, 0) == 0.0f);
  CHECK(clips[1][0].data.at(0, 0, 0) == 0.5f);
  // crop == frame size: pixel data unchanged.
  for (size_t i = 0; i < seq[1].data.size(); ++i)
    CHECK(clips[0][1].data.v[i] == seq[1].data.v[i]);

  // 7-frame source at clip_len 7 -> exactly one full window.
  std::vector<Frame> seq7(seq.begin(), seq.begin() + 7);
  auto one = window_clips(seq7, 7, 8, 7, false, rng);
  CHECK(one.size() == 1);

  CHECK_THROWS(window_clips(seq7, 8, 8, 1, false, rng));
  CHECK_THROWS(window_clips(seq7, 2, 9, 1, false, rng));
}

TEST_CASE("window_clips applies one crop/flip decision to a whole clip") {
  Rng rng(7);
  std::vector<Frame> seq;
  for (int i = 0; i < 4; ++i) seq.push_back(gradient_frame(16, 16));
  for (int trial = 0; trial < 20; ++trial) {
    auto clips = window_clips(seq, 2, 8, 2, /*allow_flip=*/true, rng);
    for (const Clip& c : clips) {
      REQUIRE(c.size() == 2);
      CHECK(c[0].data.same_shape(c[1].data));
      CHECK(c[0].data.h == 8);
      // Frames are identical in content, so shared augmentation means the
      // augmented frames stay identical too.
      for (size_t i = 0; i < c[0].data.size(); ++i) CHECK(c[0].data.v[i] == c[1].data.v[i]);
    }
  }
}

TEST_CASE("flip is an involution") {
  Frame f = gradient_frame(6, 9);
  Frame ff = flip_horizontal(flip_horizontal(f));
  for (size_t i = 0; i < f.data.size(); ++i) CHECK(ff.data.v[i] == f.data.v[i]);
}

TEST_CASE("list_frame_files sorts and filters") {
  TempDir td;
  save_frame((td.path / "b.png").string(), Frame(Tensor(3, 4, 4)));
  save_frame((td.path / "a.png").string(), Frame(Tensor(3, 4, 4)));
  save_frame((td.path / "c.ppm").string(), Frame(Tensor(3, 4, 4)));
  std::ofstream(td.path / "notes.txt") << "skip me";
  auto files = list_frame_files(td.path.string());
  REQUIRE(files.size() == 3);
  CHECK(files[0].find("a.png") != std::string::npos);
  CHECK(files[2].find("c.ppm") != std::string::npos);
  CHECK_THROWS(list_frame_files((td.path / "nope").string()));
}
