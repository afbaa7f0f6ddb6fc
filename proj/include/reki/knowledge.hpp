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

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "reki/common.hpp"
#include "reki/keys.hpp"

namespace reki::knowledge {

/// Maps text to a T x m matrix of per-token encodings.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual Eigen::MatrixXd encode_tokens(const std::string& text) = 0;
  virtual std::size_t dim() const = 0;
  virtual std::string id() const = 0;
};

/// Lowercased alphanumeric runs; everything else separates tokens.
std::vector<std::string> tokenize(const std::string& text);

/// Feature-hashing encoder: every token becomes a sparse bag (the word plus
/// its boundary-padded character trigrams), hashed into 2^18 signed buckets
/// and projected by a fixed seeded Gaussian matrix to `dim` columns; rows are
/// unit-normalised. Deterministic in (text, dim, seed).
class MockEncoder final : public TextEncoder {
 public:
  MockEncoder(std::size_t dim, std::uint64_t seed = 0);

  Eigen::MatrixXd encode_tokens(const std::string& text) override;
  std::size_t dim() const override { return dim_; }
  std::string id() const override;

 private:
  const Eigen::RowVectorXd& token_row(const std::string& token);

  std::size_t dim_;
  std::uint64_t seed_;
  std::unordered_map<std::string, Eigen::RowVectorXd> rows_;
  std::mutex mutex_;
};

struct RemoteEncoderConfig {
  std::string endpoint;  // e.g. https://api.example.com/v1/embeddings
  std::string model;
  std::string api_key;
  std::size_t dim = 768;
  int max_attempts = 3;
  int timeout_seconds = 60;
};

/// Embedding endpoint speaking `{model, input: [text]}` ->
/// `data[0].embedding`. Returns a single row (T = 1).
class RemoteEncoder final : public TextEncoder {
 public:
  explicit RemoteEncoder(RemoteEncoderConfig config);

  Eigen::MatrixXd encode_tokens(const std::string& text) override;
  std::size_t dim() const override { return config_.dim; }
  std::string id() const override { return "remote:" + config_.model; }

 private:
  RemoteEncoderConfig config_;
};

/// m for the named encoder profile: "small" = 768, "large" = 4096.
std::size_t profile_dim(const std::string& profile);

enum class Aggregation { kMean, kFirstToken };

std::vector<double> aggregate(const Eigen::MatrixXd& tokens, Aggregation mode);

struct KnowledgeRepresentation {
  KeyKind key_kind = KeyKind::kItem;
  std::string key;
  std::vector<double> vector;
  std::string encoder_id;
};

KnowledgeRepresentation encode_knowledge(KeyKind kind, const std::string& key, const std::string& text,
                                         TextEncoder& encoder, Aggregation mode = Aggregation::kMean);

/// Reserved key under which per-kind cold-start defaults are stored.
inline constexpr std::string_view kDefaultKey = "__default__";

/// Prestorage for dense vectors. Binary little-endian layout:
///   "REKIVEC1" | u32 dim | u64 count | count records | u64 CRC-64
/// where a record is u16 key_len | key bytes | u8 key_kind | dim x f32 and
/// the CRC covers the records. Appending rewrites only the trailer and the
/// count; a later record for the same key supersedes earlier ones.
/// Many concurrent readers or one writer.
class VectorStore {
 public:
  struct Entry {
    KeyKind kind;
    std::string key;
    std::vector<float> vector;
  };

  static VectorStore create(const std::string& path, std::uint32_t dim);
  static VectorStore open(const std::string& path);

  VectorStore(VectorStore&&) noexcept;
  VectorStore& operator=(VectorStore&&) noexcept;
  ~VectorStore();

  void put(KeyKind kind, const std::string& key, std::span<const float> vector);
  void put(KeyKind kind, const std::string& key, std::span<const double> vector);
  std::optional<std::vector<float>> get(KeyKind kind, const std::string& key) const;
  bool contains(KeyKind kind, const std::string& key) const;

  std::uint32_t dim() const { return dim_; }
  /// Records in the file, superseded ones included. Also the version tag.
  std::uint64_t record_count() const { return records_; }
  std::uint64_t version() const { return records_; }
  /// Distinct live keys, defaults included.
  std::size_t size() const;
  const std::string& path() const { return path_; }
  std::uint64_t body_crc() const { return crc_.value(); }

  /// Live entries in first-insertion order, defaults excluded.
  std::vector<Entry> entries() const;
  std::vector<Entry> entries(KeyKind kind) const;

  /// Stores the elementwise mean of each kind's vectors as its default.
  void compute_defaults();
  /// The stored default for `kind`, or zeros before compute_defaults().
  std::vector<float> default_vector(KeyKind kind) const;

  void export_jsonl(const std::string& path) const;

 private:
  VectorStore() = default;
  void append(KeyKind kind, const std::string& key, std::span<const float> vector);

  using Key = std::pair<int, std::string>;
  std::string path_;
  std::uint32_t dim_ = 0;
  std::uint64_t records_ = 0;
  Crc64 crc_;
  std::map<Key, std::vector<float>> values_;
  std::vector<Key> order_;
  std::unique_ptr<std::fstream> file_;
  std::unique_ptr<std::shared_mutex> mutex_;
};

std::vector<float> default_vector(const VectorStore& store, KeyKind kind);

struct EigenDecomposition {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // column i pairs with values[i]
  int sweeps = 0;
};

/// Cyclic Jacobi rotations on a symmetric matrix, 64-bit throughout.
EigenDecomposition jacobi_eigen(const Eigen::MatrixXd& symmetric, double tolerance = 1e-15, int max_sweeps = 100);

struct PcaResult {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;  // dim x target, orthonormal columns
  Eigen::VectorXd eigenvalues;  // all of them, descending
  double retained_variance = 0.0;
  std::size_t rank = 0;
};

/// Principal components of `data` (one row per sample). Each component is
/// sign-fixed so its largest-magnitude entry is positive.
PcaResult fit_pca(const Eigen::MatrixXd& data, std::size_t target_dim);

/// Projects every entry of `store` onto its top `target_dim` principal
/// components and writes the result (plus a `<out>.pca.json` provenance file
/// holding the projection) to `out_path`.
VectorStore reduce_dim(const VectorStore& store, std::size_t target_dim, const std::string& out_path,
                       PcaResult* fitted = nullptr);

/// Per-dimension affine map fitted over a store's live entries.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> scale;  // population standard deviation, 1 where it vanishes
};

Standardization fit_standardization(const VectorStore& store);

/// Writes (v - mean) / scale for every entry of `store` to `out_path`; per-kind
/// defaults are recomputed when the source had them.
VectorStore standardize(const VectorStore& store, const std::string& out_path, Standardization* fitted = nullptr);

}  // namespace reki::knowledge
