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

#include <cctype>
#include <cmath>

// Eigen must precede httplib: <resolv.h> defines a `_res` macro.
#include "reki/knowledge.hpp"
#include "reki/llm_client.hpp"

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

namespace reki::knowledge {

namespace {
constexpr std::uint64_t kBuckets = 1ULL << 18;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

MockEncoder::MockEncoder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim_ == 0) throw Error("encoder dimension must be positive");
}

std::string MockEncoder::id() const { return fmt::format("mock-hash-{}-{}", dim_, seed_); }

const Eigen::RowVectorXd& MockEncoder::token_row(const std::string& token) {
  auto it = rows_.find(token);
  if (it != rows_.end()) return it->second;

  std::vector<std::pair<std::string, double>> features{{"w:" + token, 1.0}};
  const std::string padded = "<" + token + ">";
  if (padded.size() >= 3) {
    const std::size_t n = padded.size() - 2;
    for (std::size_t i = 0; i < n; ++i) features.emplace_back("c:" + padded.substr(i, 3), 1.0 / static_cast<double>(n));
  }
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(dim_));
  for (const auto& [feature, weight] : features) {
    const std::uint64_t h = fnv1a64(feature, mix64(seed_));
    const std::uint64_t bucket = h % kBuckets;
    const double sign = (h >> 63) ? -1.0 : 1.0;
    // Column `bucket` of the projection matrix, regenerated on demand.
    Rng rng(mix64(seed_ ^ (bucket * 0x9e3779b97f4a7c15ULL)));
    for (std::size_t j = 0; j < dim_; ++j) row[static_cast<Eigen::Index>(j)] += sign * weight * rng.normal();
  }
  const double norm = row.norm();
  if (norm > 0.0) row /= norm;
  return rows_.emplace(token, std::move(row)).first->second;
}

Eigen::MatrixXd MockEncoder::encode_tokens(const std::string& text) {
  const auto tokens = tokenize(text);
  if (tokens.empty()) throw Error("cannot encode empty text");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(tokens.size()), static_cast<Eigen::Index>(dim_));
  std::lock_guard lock(mutex_);
  for (std::size_t i = 0; i < tokens.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = token_row(tokens[i]);
  return out;
}

RemoteEncoder::RemoteEncoder(RemoteEncoderConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) throw Error("remote encoder needs an endpoint");
}

Eigen::MatrixXd RemoteEncoder::encode_tokens(const std::string& text) {
  if (trim(text).empty()) throw Error("cannot encode empty text");
  const auto url = split_url(config_.endpoint);
  const nlohmann::json body{{"model", config_.model}, {"input", nlohmann::json::array({text})}};
  std::string last_error;
  for (int attempt = 0; attempt < std::max(1, config_.max_attempts); ++attempt) {
    httplib::Client client(url.origin);
    client.set_read_timeout(config_.timeout_seconds, 0);
    if (!config_.api_key.empty()) client.set_bearer_token_auth(config_.api_key);
    const auto res = client.Post(url.path, body.dump(), "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = fmt::format("HTTP {}", res->status);
      continue;
    }
    try {
      const auto values = nlohmann::json::parse(res->body).at("data").at(0).at("embedding").get<std::vector<double>>();
      if (values.size() != config_.dim)
        throw Error(fmt::format("embedding endpoint returned {} dims, expected {}", values.size(), config_.dim));
      Eigen::MatrixXd out(1, static_cast<Eigen::Index>(values.size()));
      for (std::size_t j = 0; j < values.size(); ++j) out(0, static_cast<Eigen::Index>(j)) = values[j];
      return out;
    } catch (const nlohmann::json::exception& e) {
      last_error = e.what();
    }
  }
  throw Error(fmt::format("embedding request failed after retries: {}", last_error));
}

std::size_t profile_dim(const std::string& profile) {
  if (profile == "small") return 768;
  if (profile == "large") return 4096;
  throw Error(fmt::format("unknown encoder profile '{}'", profile));
}

std::vector<double> aggregate(const Eigen::MatrixXd& tokens, Aggregation mode) {
  if (tokens.rows() < 1) throw Error("aggregate needs at least one token row");
  std::vector<double> out(static_cast<std::size_t>(tokens.cols()));
  if (mode == Aggregation::kFirstToken) {
    for (Eigen::Index j = 0; j < tokens.cols(); ++j) out[static_cast<std::size_t>(j)] = tokens(0, j);
    return out;
  }
  for (Eigen::Index j = 0; j < tokens.cols(); ++j) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < tokens.rows(); ++i) s += tokens(i, j);
    out[static_cast<std::size_t>(j)] = s / static_cast<double>(tokens.rows());
  }
  return out;
}

KnowledgeRepresentation encode_knowledge(KeyKind kind, const std::string& key, const std::string& text,
                                         TextEncoder& encoder, Aggregation mode) {
  KnowledgeRepresentation r;
  r.key_kind = kind;
  r.key = key;
  r.vector = aggregate(encoder.encode_tokens(text), mode);
  r.encoder_id = encoder.id();
  for (double v : r.vector)
    if (!std::isfinite(v)) throw Error(fmt::format("non-finite representation for '{}'", key));
  return r;
}

}  // namespace reki::knowledge
