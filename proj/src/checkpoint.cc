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

#include "cvpp/checkpoint.h"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>

namespace cvpp {

namespace {

constexpr char kMagic[4] = {'C', 'V', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
               static_cast<char>(v >> 24)};
  os.write(b, 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated");
  return b[0] | (b[1] << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& ps,
                     const nlohmann::json& manifest) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  const std::string m = manifest.dump();
  put_u32(os, static_cast<uint32_t>(m.size()));
  os.write(m.data(), m.size());
  put_u32(os, static_cast<uint32_t>(ps.all().size()));
  for (const auto& p : ps.all()) {
    put_u32(os, static_cast<uint32_t>(p->name.size()));
    os.write(p->name.data(), p->name.size());
    put_u32(os, static_cast<uint32_t>(p->value.c));
    put_u32(os, static_cast<uint32_t>(p->value.h));
    put_u32(os, static_cast<uint32_t>(p->value.w));
    os.write(reinterpret_cast<const char*>(p->value.data()),
             sizeof(float) * p->value.size());
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

nlohmann::json read_manifest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const uint32_t version = get_u32(is);
  if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version");
  const uint32_t mlen = get_u32(is);
  std::string mstr(mlen, '\0');
  is.read(mstr.data(), mlen);
  if (!is) throw std::runtime_error("checkpoint: truncated manifest");
  return nlohmann::json::parse(mstr);
}

nlohmann::json load_checkpoint(const std::string& path, ParamStore& ps,
                               std::vector<std::string>* missing,
                               std::vector<std::string>* unknown) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const uint32_t version = get_u32(is);
  if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version");
  const uint32_t mlen = get_u32(is);
  std::string mstr(mlen, '\0');
  is.read(mstr.data(), mlen);
  if (!is) throw std::runtime_error("checkpoint: truncated manifest");
  nlohmann::json manifest = nlohmann::json::parse(mstr);

  std::set<std::string> seen;
  const uint32_t count = get_u32(is);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t nlen = get_u32(is);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    const int c = static_cast<int>(get_u32(is));
    const int h = static_cast<int>(get_u32(is));
    const int w = static_cast<int>(get_u32(is));
    Tensor data(c, h, w);
    is.read(reinterpret_cast<char*>(data.data()), sizeof(float) * data.size());
    if (!is) throw std::runtime_error("checkpoint: truncated array " + name);
    Parameter* p = ps.find(name);
    if (p && p->value.same_shape(data)) {
      p->value = std::move(data);
      seen.insert(name);
    } else if (unknown) {
      unknown->push_back(name);
    }
  }
  if (missing) {
    for (const auto& p : ps.all())
      if (!seen.count(p->name)) missing->push_back(p->name);
  }
  return manifest;
}

}  // namespace cvpp
