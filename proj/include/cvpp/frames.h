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

#ifndef CVPP_FRAMES_H_
#define CVPP_FRAMES_H_

#include <string>
#include <vector>

#include "cvpp/rng.h"
#include "cvpp/tensor.h"

namespace cvpp {

// One video frame: 3xHxW values in [0,1] plus the pre-padding pixel size.
struct Frame {
  Tensor data;  // (3, H, W)
  int orig_h = 0, orig_w = 0;

  Frame() = default;
  explicit Frame(Tensor t) : data(std::move(t)), orig_h(data.h), orig_w(data.w) {}
  Frame(Tensor t, int oh, int ow) : data(std::move(t)), orig_h(oh), orig_w(ow) {}
};

using Clip = std::vector<Frame>;

// The deepest analysis downsampling factor; padded frames are multiples of it.
constexpr int kCodecStride = 64;

// 8-bit RGB PNG or binary PPM (P6), chosen by content sniffing. Values are
// scaled to [0,1] by division by 255.
Frame load_frame(const std::string& path);
// Raw interleaved RGB24 of a declared size.
Frame load_raw_frame(const std::string& path, int w, int h);
// PNG unless the path ends in .ppm. Values are clamped and scaled back to
// 8 bits with round-to-nearest.
void save_frame(const std::string& path, const Frame& f);

// Smallest stride-multiple enclosing size, edge-replication padding on the
// bottom/right. The original size survives in the Frame for cropping.
Frame pad_to_stride(const Frame& f, int stride = kCodecStride);
Frame crop_to_original(const Frame& f);

// Sorted .png/.ppm listing of a directory.
std::vector<std::string> list_frame_files(const std::string& dir);

// Consecutive clip_len-frame windows starting at multiples of `start_stride`,
// each with one shared random crop window and (optionally) one shared
// horizontal flip at probability 1/2. crop <= min(H, W); crop == frame size
// disables cropping (flip may still trigger).
std::vector<Clip> window_clips(const std::vector<Frame>& frames, int clip_len, int crop,
                               int start_stride, bool allow_flip, Rng& rng);

Frame flip_horizontal(const Frame& f);
Frame crop_frame(const Frame& f, int y0, int x0, int h, int w);

}  // namespace cvpp

#endif  // CVPP_FRAMES_H_
