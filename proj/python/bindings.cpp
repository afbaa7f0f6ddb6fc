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


#include <pybind11/eigen.h>
#include <pybind11/stl.h>
#include <pybind11/pybind11.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "reki/clustering.hpp"
#include "reki/common.hpp"
#include "reki/config.hpp"
#include "reki/hein.hpp"
#include "reki/knowledge.hpp"
#include "reki/llm_client.hpp"
#include "reki/metrics.hpp"
#include "reki/pipeline.hpp"
#include "reki/synth.hpp"
#include "reki/tensor.hpp"

namespace py = pybind11;

namespace {

using reki::tensor::Tensor;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Tensor to_tensor(const Matrix& m) {
  Tensor t(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  std::copy(m.data(), m.data() + m.size(), t.data());
  return t;
}

Matrix to_matrix(const Tensor& t) {
  Matrix m(t.rows(), t.cols());
  std::copy(t.data(), t.data() + t.size(), m.data());
  return m;
}

py::object json_to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json py_to_json(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

reki::hein::HeinConfig hein_config(std::size_t input_dim, std::size_t output_dim, std::vector<std::size_t> hidden,
                                   std::size_t n_shared, std::size_t n_user, std::size_t n_item,
                                   const std::string& kind) {
  reki::hein::HeinConfig c;
  c.input_dim = input_dim;
  c.output_dim = output_dim;
  c.hidden = std::move(hidden);
  c.n_shared = n_shared;
  c.n_user = n_user;
  c.n_item = n_item;
  return reki::hein::adaptor_config(reki::hein::adaptor_kind_from_string(kind), c);
}

reki::pipeline::RunConfig config_from(const py::object& overrides) {
  auto tree = reki::pipeline::default_config_json();
  if (!overrides.is_none()) tree = reki::pipeline::merge_config(tree, py_to_json(overrides));
  return reki::pipeline::from_json(tree);
}

}  // namespace

PYBIND11_MODULE(_reki, m) {
  m.doc() = "REKI C++ core: HEIN adaptor, metrics, clustering, vector store and pipeline stages";
  py::register_exception<reki::Error>(m, "Error", PyExc_RuntimeError);

  m.def("auc", [](std::vector<double> scores, std::vector<int> labels) { return reki::metrics::auc(scores, labels); },
        py::arg("scores"), py::arg("labels"));
  m.def("logloss",
        [](std::vector<double> probs, std::vector<int> labels) { return reki::metrics::logloss(probs, labels); },
        py::arg("probs"), py::arg("labels"));

  m.def(
      "hein_forward",
      [](const Matrix& r_user, const Matrix& r_item, std::size_t q, std::vector<std::size_t> hidden,
         std::size_t n_shared, std::size_t n_user, std::size_t n_item, const std::string& kind, std::uint64_t seed) {
        if (r_user.cols() != r_item.cols()) throw reki::Error("user and item inputs must share a width");
        const auto cfg = hein_config(static_cast<std::size_t>(r_user.cols()), q, std::move(hidden), n_shared, n_user,
                                     n_item, kind);
        reki::tensor::ParameterSet params;
        reki::hein::Hein hein(cfg, params, seed);
        reki::tensor::Tape tape(false);
        const auto [u, i] = hein.forward(tape, tape.constant(to_tensor(r_user)), tape.constant(to_tensor(r_item)));
        py::dict out;
        out["user"] = to_matrix(u.output.value());
        out["item"] = to_matrix(i.output.value());
        if (cfg.gated()) {
          out["user_alpha"] = to_matrix(u.alpha.value());
          out["item_alpha"] = to_matrix(i.alpha.value());
        }
        return out;
      },
      py::arg("r_user"), py::arg("r_item"), py::arg("q") = 8, py::arg("hidden") = std::vector<std::size_t>{16},
      py::arg("n_shared") = 2, py::arg("n_user") = 2, py::arg("n_item") = 2, py::arg("kind") = "hein",
      py::arg("seed") = 0);

  m.def(
      "grad_check_hein",
      [](std::size_t m_dim, std::size_t q, std::size_t batch, std::uint64_t seed) {
        const auto cfg = hein_config(m_dim, q, {12}, 2, 2, 2, "hein");
        reki::tensor::ParameterSet params;
        reki::hein::Hein hein(cfg, params, seed);
        reki::Rng rng(reki::derive_seed(seed, "inputs"));
        Tensor ru(batch, m_dim), ri(batch, m_dim), target(batch, q);
        for (std::size_t k = 0; k < ru.size(); ++k) ru[k] = rng.normal();
        for (std::size_t k = 0; k < ri.size(); ++k) ri[k] = rng.normal();
        for (std::size_t k = 0; k < target.size(); ++k) target[k] = rng.normal();
        reki::tensor::LossClosure closure{params.size(), [&](reki::tensor::Tape& tape, const auto&) {
                                            const auto [u, i] = hein.forward(tape, tape.constant(ru), tape.constant(ri));
                                            const auto tv = tape.constant(target);
                                            return reki::tensor::sum(reki::tensor::mul(
                                                reki::tensor::sub(reki::tensor::add(u.output, i.output), tv),
                                                reki::tensor::sub(reki::tensor::add(u.output, i.output), tv)));
                                          }};
        return reki::tensor::grad_check(closure, params.all(), 1e-6, seed).max_relative_error;
      },
      py::arg("m") = 24, py::arg("q") = 8, py::arg("batch") = 5, py::arg("seed") = 0);

  m.def("represent_user_cluster", &reki::clustering::represent_user_cluster, py::arg("member_histories"),
        py::arg("d") = 15);

  py::class_<reki::clustering::ClusterTree>(m, "ClusterTree")
      .def(py::init([](std::size_t dim, std::size_t leaf_capacity, std::size_t arity, double gamma,
                       std::uint64_t seed) {
             reki::clustering::TreeOptions o;
             o.leaf_capacity = leaf_capacity;
             o.arity = arity;
             o.gamma = gamma;
             o.seed = seed;
             return reki::clustering::ClusterTree(dim, o);
           }),
           py::arg("dim"), py::arg("leaf_capacity") = 80, py::arg("arity") = 2, py::arg("gamma") = 1.0,
           py::arg("seed") = 0)
      .def(
          "insert",
          [](reki::clustering::ClusterTree& t, std::vector<double> p, std::string id) { return t.insert(p, std::move(id)); },
          py::arg("point"), py::arg("id"))
      .def("__len__", &reki::clustering::ClusterTree::size)
      .def("height", &reki::clustering::ClusterTree::height)
      .def("serialize", &reki::clustering::ClusterTree::serialize);

  m.def(
      "extract_clusters",
      [](const reki::clustering::ClusterTree& t, std::size_t max_size) {
        std::vector<std::vector<std::string>> out;
        for (auto& c : reki::clustering::extract_clusters(t, max_size, reki::clustering::ClusterKind::kItem))
          out.push_back(std::move(c.member_ids));
        return out;
      },
      py::arg("tree"), py::arg("max_cluster_size"));

  py::class_<reki::knowledge::VectorStore>(m, "VectorStore")
      .def_static("create", &reki::knowledge::VectorStore::create, py::arg("path"), py::arg("dim"))
      .def_static("open", &reki::knowledge::VectorStore::open, py::arg("path"))
      .def(
          "put",
          [](reki::knowledge::VectorStore& s, const std::string& kind, const std::string& key, std::vector<double> v) {
            s.put(reki::key_kind_from_string(kind), key, std::span<const double>(v));
          },
          py::arg("kind"), py::arg("key"), py::arg("vector"))
      .def(
          "get",
          [](const reki::knowledge::VectorStore& s, const std::string& kind, const std::string& key) {
            return s.get(reki::key_kind_from_string(kind), key);
          },
          py::arg("kind"), py::arg("key"))
      .def("compute_defaults", &reki::knowledge::VectorStore::compute_defaults)
      .def_property_readonly("dim", &reki::knowledge::VectorStore::dim)
      .def_property_readonly("crc", &reki::knowledge::VectorStore::body_crc)
      .def("__len__", &reki::knowledge::VectorStore::size);

  m.def(
      "fit_pca",
      [](const Eigen::MatrixXd& data, std::size_t target) {
        const auto r = reki::knowledge::fit_pca(data, target);
        py::dict out;
        out["mean"] = r.mean;
        out["components"] = r.components;
        out["eigenvalues"] = r.eigenvalues;
        out["retained_variance"] = r.retained_variance;
        out["rank"] = r.rank;
        return out;
      },
      py::arg("data"), py::arg("target_dim"));

  m.def(
      "mock_encode",
      [](const std::string& text, std::size_t dim, std::uint64_t seed) {
        reki::knowledge::MockEncoder enc(dim, seed);
        return reki::knowledge::aggregate(enc.encode_tokens(text), reki::knowledge::Aggregation::kMean);
      },
      py::arg("text"), py::arg("dim") = 64, py::arg("seed") = 0);
  m.def("mock_llm", &reki::mock_llm, py::arg("prompt"), py::arg("seed") = 0);

  m.def(
      "generate_synth",
      [](const std::string& dir, std::size_t users, std::size_t items, std::size_t genres, std::size_t interactions,
         double noise, std::uint64_t seed) {
        reki::synth::SynthSpec spec;
        spec.users = users;
        spec.items = items;
        spec.genres = genres;
        spec.interactions = interactions;
        spec.noise = noise;
        const auto r = reki::synth::generate(spec, seed, dir);
        py::dict out;
        out["interactions"] = r.interactions;
        out["positives"] = r.positives;
        out["expected_positive_rate"] = r.expected_positive_rate;
        return out;
      },
      py::arg("dir"), py::arg("users") = 2000, py::arg("items") = 500, py::arg("genres") = 8,
      py::arg("interactions") = 60000, py::arg("noise") = 0.2, py::arg("seed") = 1);

  m.def(
      "account_calls",
      [](const std::string& mode, std::size_t users, std::size_t items, std::size_t user_clusters,
         std::size_t item_clusters, std::size_t cache_hits) {
        return reki::pipeline::account_calls(reki::pipeline::mode_from_string(mode), users, items, user_clusters,
                                             item_clusters, cache_hits);
      },
      py::arg("mode"), py::arg("users") = 0, py::arg("items") = 0, py::arg("user_clusters") = 0,
      py::arg("item_clusters") = 0, py::arg("cache_hits") = 0);

  m.def("default_config", [] { return json_to_py(reki::pipeline::default_config_json()); });

  py::class_<reki::pipeline::Pipeline>(m, "Pipeline")
      .def(py::init([](const py::object& config) { return reki::pipeline::Pipeline(config_from(config)); }),
           py::arg("config") = py::none())
      .def("config", [](const reki::pipeline::Pipeline& p) { return json_to_py(reki::pipeline::to_json(p.config())); })
      .def("plan", &reki::pipeline::Pipeline::plan)
      .def("synth", &reki::pipeline::Pipeline::synth)
      .def("factors",
           [](reki::pipeline::Pipeline& p) {
             const auto f = p.factors();
             return f.factors;
           })
      .def("cluster",
           [](reki::pipeline::Pipeline& p) {
             const auto r = p.cluster();
             return py::make_tuple(r.user_clusters, r.item_clusters);
           })
      .def("knowledge",
           [](reki::pipeline::Pipeline& p) {
             const auto r = p.knowledge();
             py::dict out;
             out["requests"] = r.requests;
             out["llm_calls"] = r.llm_calls;
             out["cache_hits"] = r.cache_hits;
             out["failures"] = r.failures;
             return out;
           })
      .def("encode", &reki::pipeline::Pipeline::encode)
      .def("train", [](reki::pipeline::Pipeline& p) { return json_to_py(p.train().report_json); })
      .def("run_all", [](reki::pipeline::Pipeline& p) { return json_to_py(p.run_all().report_json); })
      .def(
          "eval",
          [](reki::pipeline::Pipeline& p, const std::string& path) {
            return json_to_py(p.eval(path.empty() ? std::nullopt
                                                  : std::optional(reki::pipeline::serving_path_from_string(path))));
          },
          py::arg("path") = "")
      .def("precompute",
           [](reki::pipeline::Pipeline& p) {
             const auto r = p.precompute();
             return py::make_tuple(r.store, r.entries);
           })
      .def(
          "bench",
          [](reki::pipeline::Pipeline& p, const std::string& path) {
            return json_to_py(p.bench(reki::pipeline::serving_path_from_string(path)).to_json());
          },
          py::arg("path"));
}
