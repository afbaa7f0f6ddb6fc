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
#include <filesystem>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "reki/knowledge.hpp"

static_assert(std::endian::native == std::endian::little, "vector store assumes a little-endian host");

namespace reki::knowledge {

namespace {

constexpr char kMagic[8] = {'R', 'E', 'K', 'I', 'V', 'E', 'C', '1'};
constexpr std::size_t kHeaderSize = 8 + 4 + 8;
constexpr std::size_t kCountOffset = 12;

template <typename T>
void put_raw(std::string& buf, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <typename T>
T get_raw(const std::string& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw Error("vector store truncated");
  T value;
  std::memcpy(&value, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

VectorStore::VectorStore(VectorStore&&) noexcept = default;
VectorStore& VectorStore::operator=(VectorStore&&) noexcept = default;
VectorStore::~VectorStore() = default;

VectorStore VectorStore::create(const std::string& path, std::uint32_t dim) {
  if (dim == 0) throw Error("vector store dimension must be positive");
  std::string header(kMagic, 8);
  put_raw<std::uint32_t>(header, dim);
  put_raw<std::uint64_t>(header, 0);
  VectorStore store;
  store.path_ = path;
  store.dim_ = dim;
  put_raw<std::uint64_t>(header, store.crc_.value());
  write_file(path, header);
  store.file_ = std::make_unique<std::fstream>(path, std::ios::in | std::ios::out | std::ios::binary);
  if (!*store.file_) throw Error(fmt::format("cannot open vector store '{}'", path));
  store.mutex_ = std::make_unique<std::shared_mutex>();
  return store;
}

VectorStore VectorStore::open(const std::string& path) {
  if (!file_exists(path)) throw Error(fmt::format("vector store '{}' not found", path));
  const std::string data = read_file(path);
  if (data.size() < kHeaderSize + 8 || std::memcmp(data.data(), kMagic, 8) != 0)
    throw Error(fmt::format("'{}' is not a vector store", path));
  std::size_t pos = 8;
  VectorStore store;
  store.path_ = path;
  store.dim_ = get_raw<std::uint32_t>(data, pos);
  const auto count = get_raw<std::uint64_t>(data, pos);
  if (store.dim_ == 0) throw Error(fmt::format("vector store '{}' has zero dimension", path));

  const std::size_t body_end = data.size() - 8;
  for (std::uint64_t r = 0; r < count; ++r) {
    const std::size_t start = pos;
    const auto key_len = get_raw<std::uint16_t>(data, pos);
    if (pos + key_len > body_end) throw Error(fmt::format("vector store '{}' truncated", path));
    std::string key = data.substr(pos, key_len);
    pos += key_len;
    const auto kind = key_kind_from_byte(get_raw<std::uint8_t>(data, pos));
    std::vector<float> v(store.dim_);
    if (pos + 4ULL * store.dim_ > body_end) throw Error(fmt::format("vector store '{}' truncated", path));
    std::memcpy(v.data(), data.data() + pos, 4ULL * store.dim_);
    pos += 4ULL * store.dim_;
    store.crc_.update(data.data() + start, pos - start);
    Key k{static_cast<int>(kind), std::move(key)};
    if (!store.values_.contains(k)) store.order_.push_back(k);
    store.values_[k] = std::move(v);
  }
  if (pos != body_end) throw Error(fmt::format("vector store '{}' has trailing bytes", path));
  std::size_t trailer_pos = body_end;
  const auto trailer = get_raw<std::uint64_t>(data, trailer_pos);
  if (trailer != store.crc_.value())
    throw Error(fmt::format("vector store '{}' failed its checksum (stored {}, computed {})", path, hex64(trailer),
                            hex64(store.crc_.value())));
  store.records_ = count;
  store.file_ = std::make_unique<std::fstream>(path, std::ios::in | std::ios::out | std::ios::binary);
  if (!*store.file_) throw Error(fmt::format("cannot open vector store '{}'", path));
  store.mutex_ = std::make_unique<std::shared_mutex>();
  return store;
}

void VectorStore::append(KeyKind kind, const std::string& key, std::span<const float> vector) {
  if (vector.size() != dim_)
    throw Error(fmt::format("vector for '{}' has {} dims, store expects {}", key, vector.size(), dim_));
  if (key.empty() || key.size() > 0xFFFF) throw Error("vector store keys must be 1..65535 bytes");
  std::string rec;
  put_raw<std::uint16_t>(rec, static_cast<std::uint16_t>(key.size()));
  rec += key;
  put_raw<std::uint8_t>(rec, static_cast<std::uint8_t>(kind));
  rec.append(reinterpret_cast<const char*>(vector.data()), vector.size() * sizeof(float));

  std::unique_lock lock(*mutex_);
  crc_.update(rec.data(), rec.size());
  const std::uint64_t trailer = crc_.value();
  ++records_;
  auto& f = *file_;
  f.seekp(-8, std::ios::end);
  f.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  f.write(reinterpret_cast<const char*>(&trailer), 8);
  f.seekp(static_cast<std::streamoff>(kCountOffset), std::ios::beg);
  f.write(reinterpret_cast<const char*>(&records_), 8);
  f.flush();
  if (!f) throw Error(fmt::format("write to vector store '{}' failed", path_));

  Key k{static_cast<int>(kind), key};
  if (!values_.contains(k)) order_.push_back(k);
  values_[k].assign(vector.begin(), vector.end());
}

void VectorStore::put(KeyKind kind, const std::string& key, std::span<const float> vector) {
  append(kind, key, vector);
}

void VectorStore::put(KeyKind kind, const std::string& key, std::span<const double> vector) {
  std::vector<float> f(vector.begin(), vector.end());
  append(kind, key, f);
}

std::optional<std::vector<float>> VectorStore::get(KeyKind kind, const std::string& key) const {
  std::shared_lock lock(*mutex_);
  auto it = values_.find(Key{static_cast<int>(kind), key});
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

bool VectorStore::contains(KeyKind kind, const std::string& key) const {
  std::shared_lock lock(*mutex_);
  return values_.contains(Key{static_cast<int>(kind), key});
}

std::size_t VectorStore::size() const {
  std::shared_lock lock(*mutex_);
  return values_.size();
}

std::vector<VectorStore::Entry> VectorStore::entries() const {
  std::shared_lock lock(*mutex_);
  std::vector<Entry> out;
  for (const auto& k : order_) {
    if (k.second == kDefaultKey) continue;
    out.push_back(Entry{static_cast<KeyKind>(k.first), k.second, values_.at(k)});
  }
  return out;
}

std::vector<VectorStore::Entry> VectorStore::entries(KeyKind kind) const {
  auto all = entries();
  std::erase_if(all, [kind](const Entry& e) { return e.kind != kind; });
  return all;
}

void VectorStore::compute_defaults() {
  std::map<int, std::pair<std::vector<double>, std::size_t>> sums;
  for (const auto& e : entries()) {
    auto& [sum, n] = sums[static_cast<int>(e.kind)];
    if (sum.empty()) sum.assign(dim_, 0.0);
    for (std::size_t j = 0; j < dim_; ++j) sum[j] += e.vector[j];
    ++n;
  }
  for (auto& [kind, acc] : sums) {
    auto& [sum, n] = acc;
    for (double& v : sum) v /= static_cast<double>(n);
    put(static_cast<KeyKind>(kind), std::string(kDefaultKey), std::span<const double>(sum));
  }
}

std::vector<float> VectorStore::default_vector(KeyKind kind) const {
  auto v = get(kind, std::string(kDefaultKey));
  return v ? *v : std::vector<float>(dim_, 0.0f);
}

std::vector<float> default_vector(const VectorStore& store, KeyKind kind) { return store.default_vector(kind); }

void VectorStore::export_jsonl(const std::string& path) const {
  std::string out;
  std::shared_lock lock(*mutex_);
  for (const auto& k : order_) {
    nlohmann::json j{{"key_kind", to_string(static_cast<KeyKind>(k.first))},
                     {"key", k.second},
                     {"vector", values_.at(k)}};
    out += j.dump();
    out += '\n';
  }
  lock.unlock();
  write_file(path, out);
}

}  // namespace reki::knowledge
