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

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "reki/knowledge.hpp"

namespace reki::knowledge {

EigenDecomposition jacobi_eigen(const Eigen::MatrixXd& symmetric, double tolerance, int max_sweeps) {
  const Eigen::Index n = symmetric.rows();
  if (n != symmetric.cols()) throw Error("jacobi_eigen needs a square matrix");
  Eigen::MatrixXd a = symmetric;
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double scale = std::max(a.squaredNorm(), 1e-300);
  int sweeps = 0;
  for (; sweeps < max_sweeps; ++sweeps) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off <= tolerance * tolerance * scale) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return a(x, x) > a(y, y); });
  EigenDecomposition out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.values[i] = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    out.vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  }
  out.sweeps = sweeps;
  return out;
}

PcaResult fit_pca(const Eigen::MatrixXd& data, std::size_t target_dim) {
  const auto n = data.rows();
  const auto m = data.cols();
  if (n < 2) throw Error("PCA needs at least two samples");
  if (target_dim < 1 || target_dim > static_cast<std::size_t>(m))
    throw Error(fmt::format("PCA target dimension {} outside [1, {}]", target_dim, m));
  PcaResult r;
  r.mean = data.colwise().mean().transpose();
  const Eigen::MatrixXd centered = data.rowwise() - r.mean.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  const auto eig = jacobi_eigen(cov);
  r.eigenvalues = eig.values;
  const double top = std::max(eig.values[0], 0.0);
  for (Eigen::Index i = 0; i < m; ++i)
    if (eig.values[i] > 1e-10 * top && top > 0.0) ++r.rank;
  if (r.rank < target_dim)
    throw Error(fmt::format("PCA target dimension {} exceeds the data rank {}", target_dim, r.rank));

  const auto k = static_cast<Eigen::Index>(target_dim);
  r.components = eig.vectors.leftCols(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::Index arg = 0;
    r.components.col(c).cwiseAbs().maxCoeff(&arg);
    if (r.components(arg, c) < 0) r.components.col(c) *= -1.0;
  }
  double total = 0.0;
  double kept = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double lambda = std::max(eig.values[i], 0.0);
    total += lambda;
    if (i < k) kept += lambda;
  }
  r.retained_variance = total > 0.0 ? kept / total : 0.0;
  return r;
}

VectorStore reduce_dim(const VectorStore& store, std::size_t target_dim, const std::string& out_path,
                       PcaResult* fitted) {
  const auto entries = store.entries();
  const auto m = static_cast<Eigen::Index>(store.dim());
  Eigen::MatrixXd data(static_cast<Eigen::Index>(entries.size()), m);
  for (std::size_t i = 0; i < entries.size(); ++i)
    for (Eigen::Index j = 0; j < m; ++j) data(static_cast<Eigen::Index>(i), j) = entries[i].vector[static_cast<std::size_t>(j)];
  PcaResult pca = fit_pca(data, target_dim);

  bool had_defaults = false;
  for (int kind = 0; kind < kKeyKindCount; ++kind)
    if (store.contains(static_cast<KeyKind>(kind), std::string(kDefaultKey))) had_defaults = true;

  auto out = VectorStore::create(out_path, static_cast<std::uint32_t>(target_dim));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Eigen::VectorXd centered = data.row(static_cast<Eigen::Index>(i)).transpose() - pca.mean;
    const Eigen::VectorXd projected = pca.components.transpose() * centered;
    out.put(entries[i].kind, entries[i].key, std::span<const double>(projected.data(), target_dim));
  }
  if (had_defaults) out.compute_defaults();

  nlohmann::json meta;
  meta["source"] = store.path();
  meta["source_version"] = store.version();
  meta["source_crc"] = hex64(store.body_crc());
  meta["source_dim"] = store.dim();
  meta["target_dim"] = target_dim;
  meta["retained_variance"] = pca.retained_variance;
  meta["mean"] = std::vector<double>(pca.mean.data(), pca.mean.data() + pca.mean.size());
  nlohmann::json comps = nlohmann::json::array();
  for (Eigen::Index c = 0; c < pca.components.cols(); ++c) {
    const Eigen::VectorXd col = pca.components.col(c);
    comps.push_back(std::vector<double>(col.data(), col.data() + col.size()));
  }
  meta["components"] = std::move(comps);
  write_file(out_path + ".pca.json", meta.dump() + "\n");
  if (fitted) *fitted = std::move(pca);
  return out;
}

Standardization fit_standardization(const VectorStore& store) {
  const auto entries = store.entries();
  if (entries.empty()) throw Error("cannot standardise an empty store");
  const std::size_t m = store.dim();
  Standardization s;
  s.mean.assign(m, 0.0);
  s.scale.assign(m, 0.0);
  const double n = static_cast<double>(entries.size());
  for (const auto& e : entries)
    for (std::size_t j = 0; j < m; ++j) s.mean[j] += e.vector[j];
  for (double& v : s.mean) v /= n;
  for (const auto& e : entries)
    for (std::size_t j = 0; j < m; ++j) {
      const double d = e.vector[j] - s.mean[j];
      s.scale[j] += d * d;
    }
  for (double& v : s.scale) {
    v = std::sqrt(v / n);
    if (!(v > 1e-12)) v = 1.0;
  }
  return s;
}

VectorStore standardize(const VectorStore& store, const std::string& out_path, Standardization* fitted) {
  Standardization s = fit_standardization(store);
  bool had_defaults = false;
  for (int kind = 0; kind < kKeyKindCount; ++kind)
    if (store.contains(static_cast<KeyKind>(kind), std::string(kDefaultKey))) had_defaults = true;
  auto out = VectorStore::create(out_path, store.dim());
  std::vector<double> row(store.dim());
  for (const auto& e : store.entries()) {
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (e.vector[j] - s.mean[j]) / s.scale[j];
    out.put(e.kind, e.key, std::span<const double>(row));
  }
  if (had_defaults) out.compute_defaults();
  if (fitted) *fitted = std::move(s);
  return out;
}

}  // namespace reki::knowledge
