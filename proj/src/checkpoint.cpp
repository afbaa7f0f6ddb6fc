// Copyright 2026 The REKI Authors.
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

#include <bit>
#include <cstring>

#include <fmt/format.h>

#include "reki/common.hpp"
#include "reki/tensor.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

namespace reki::tensor {

namespace {

constexpr char kMagic[8] = {'R', 'E', 'K', 'I', 'P', 'A', 'R', '1'};

template <typename T>
void put(std::string& out, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.append(b, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos, std::size_t end) {
  if (pos + sizeof(T) > end) throw Error("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParameterSet& params) {
  std::string out(kMagic, 8);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Parameter& p = params[k];
    put<std::uint16_t>(out, static_cast<std::uint16_t>(p.name.size()));
    out += p.name;
    put<std::uint32_t>(out, 2);
    put<std::uint64_t>(out, p.value.rows());
    put<std::uint64_t>(out, p.value.cols());
    out.append(reinterpret_cast<const char*>(p.value.data()), p.value.size() * sizeof(double));
  }
  put<std::uint64_t>(out, crc64(out.data() + 8, out.size() - 8));
  write_file(path, out);
}

std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::string& path) {
  const std::string in = read_file(path);
  if (in.size() < 8 + 4 + 8 || std::memcmp(in.data(), kMagic, 8) != 0)
    throw Error(fmt::format("'{}' is not a parameter checkpoint", path));
  const std::size_t end = in.size() - 8;
  std::size_t tail = end;
  const auto stored = take<std::uint64_t>(in, tail, in.size());
  const auto computed = crc64(in.data() + 8, end - 8);
  if (stored != computed)
    throw Error(fmt::format("checkpoint '{}' failed its checksum (stored {}, computed {})", path, hex64(stored),
                            hex64(computed)));
  std::size_t pos = 8;
  const auto count = take<std::uint32_t>(in, pos, end);
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = take<std::uint16_t>(in, pos, end);
    if (pos + len > end) throw Error("checkpoint truncated");
    std::string name = in.substr(pos, len);
    pos += len;
    const auto ndim = take<std::uint32_t>(in, pos, end);
    std::vector<std::uint64_t> dims;
    for (std::uint32_t d = 0; d < ndim; ++d) dims.push_back(take<std::uint64_t>(in, pos, end));
    if (ndim != 2) throw Error(fmt::format("checkpoint tensor '{}' has {} dims; only 2 are supported", name, ndim));
    const std::size_t n = dims[0] * dims[1];
    if (pos + n * sizeof(double) > end) throw Error("checkpoint truncated");
    std::vector<double> data(n);
    std::memcpy(data.data(), in.data() + pos, n * sizeof(double));
    pos += n * sizeof(double);
    out.emplace_back(std::move(name), Tensor(dims[0], dims[1], std::move(data)));
  }
  if (pos != end) throw Error(fmt::format("checkpoint '{}' has trailing bytes", path));
  return out;
}

void load_checkpoint(const std::string& path, ParameterSet& params) {
  auto tensors = read_checkpoint(path);
  if (tensors.size() != params.size())
    throw Error(fmt::format("checkpoint holds {} tensors, model has {}", tensors.size(), params.size()));
  for (auto& [name, t] : tensors) {
    Parameter* p = params.find(name);
    if (!p) throw Error(fmt::format("checkpoint tensor '{}' is not a model parameter", name));
    if (!p->value.same_shape(t))
      throw Error(fmt::format("checkpoint tensor '{}' is {}, model expects {}", name, shape_string(t),
                              shape_string(p->value)));
    p->value = std::move(t);
  }
}

}  // namespace reki::tensor
