// Copyright 2026 The elevssl Authors.
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

#include "elevssl/archive.hpp"

#include <array>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

#include "elevssl/errors.hpp"

namespace elevssl {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kBlock = 512;

void put_octal(char* field, std::size_t width, std::uint64_t value) {
  std::snprintf(field, width, "%0*llo", static_cast<int>(width - 1), static_cast<unsigned long long>(value));
}

void write_entry(std::ofstream& out, const std::string& name, const char* data, std::size_t size) {
  if (name.size() >= 100) throw ArgumentError("archive entry name too long: " + name);
  std::array<char, kBlock> h{};
  std::memcpy(h.data(), name.data(), name.size());
  put_octal(h.data() + 100, 8, 0644);
  put_octal(h.data() + 108, 8, 0);
  put_octal(h.data() + 116, 8, 0);
  put_octal(h.data() + 124, 12, size);
  put_octal(h.data() + 136, 12, 0);
  h[156] = '0';
  std::memcpy(h.data() + 257, "ustar", 6);
  std::memcpy(h.data() + 263, "00", 2);
  std::memset(h.data() + 148, ' ', 8);
  unsigned sum = 0;
  for (unsigned char c : h) sum += c;
  std::snprintf(h.data() + 148, 8, "%06o", sum);
  h[155] = ' ';
  out.write(h.data(), kBlock);
  out.write(data, static_cast<std::streamsize>(size));
  const std::size_t pad = (kBlock - size % kBlock) % kBlock;
  static const std::array<char, kBlock> zeros{};
  out.write(zeros.data(), static_cast<std::streamsize>(pad));
}

std::uint64_t parse_octal(const char* field, std::size_t width) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width && field[i]; ++i) {
    if (field[i] == ' ') continue;
    if (field[i] < '0' || field[i] > '7') break;
    v = v * 8 + static_cast<std::uint64_t>(field[i] - '0');
  }
  return v;
}

}  // namespace

void write_archive(const fs::path& path, const Archive& archive) {
  json meta = archive.meta;
  json listing = json::array();
  for (const auto& [name, t] : archive.tensors) listing.push_back({{"name", name}, {"shape", t.sizes().vec()}});
  meta["tensors"] = listing;
  const std::string meta_text = meta.dump(2) + "\n";

  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write archive: " + tmp.string());
    write_entry(out, "meta.json", meta_text.data(), meta_text.size());
    for (const auto& [name, t] : archive.tensors) {
      auto c = t.detach().to(torch::kCPU, torch::kFloat32).contiguous();
      write_entry(out, "tensors/" + name, reinterpret_cast<const char*>(c.data_ptr<float>()),
                  static_cast<std::size_t>(c.numel()) * sizeof(float));
    }
    static const std::array<char, 2 * kBlock> tail{};
    out.write(tail.data(), tail.size());
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

Archive read_archive(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open archive: " + path.string());
  std::map<std::string, std::string> files;
  std::array<char, kBlock> h{};
  while (in.read(h.data(), kBlock)) {
    if (h[0] == '\0') break;
    const std::string name(h.data(), strnlen(h.data(), 100));
    const auto size = parse_octal(h.data() + 124, 12);
    std::string data(size, '\0');
    if (!in.read(data.data(), static_cast<std::streamsize>(size)))
      throw ValidationError("archive " + path.string() + ": truncated entry " + name);
    in.ignore(static_cast<std::streamsize>((kBlock - size % kBlock) % kBlock));
    files.emplace(name, std::move(data));
  }
  auto it = files.find("meta.json");
  if (it == files.end()) throw ValidationError("archive " + path.string() + ": missing meta.json");
  Archive a;
  try {
    a.meta = json::parse(it->second);
  } catch (const json::parse_error& e) {
    throw ValidationError("archive " + path.string() + ": bad meta.json: " + e.what());
  }
  if (!a.meta.contains("tensors") || !a.meta["tensors"].is_array())
    throw ValidationError("archive " + path.string() + ": meta.json lists no tensors");
  for (const auto& entry : a.meta["tensors"]) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
    auto blob = files.find("tensors/" + name);
    if (blob == files.end()) throw ValidationError("archive " + path.string() + ": missing tensor " + name);
    std::int64_t numel = 1;
    for (auto d : shape) numel *= d;
    if (static_cast<std::size_t>(numel) * sizeof(float) != blob->second.size())
      throw ValidationError("archive " + path.string() + ": tensor " + name + " does not match declared shape");
    auto t = torch::empty(shape, torch::kFloat32);
    std::memcpy(t.data_ptr<float>(), blob->second.data(), blob->second.size());
    a.tensors.emplace_back(name, std::move(t));
  }
  a.meta.erase("tensors");
  return a;
}

}  // namespace elevssl
