# Copyright 2026 The REKI Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python bindings for the REKI C++ core."""

from ._reki import (  # noqa: F401
    ClusterTree,
    Error,
    Pipeline,
    VectorStore,
    account_calls,
    auc,
    default_config,
    extract_clusters,
    fit_pca,
    generate_synth,
    grad_check_hein,
    hein_forward,
    logloss,
    mock_encode,
    mock_llm,
    represent_user_cluster,
)

__all__ = [
    "ClusterTree",
    "Error",
    "Pipeline",
    "VectorStore",
    "account_calls",
    "auc",
    "default_config",
    "extract_clusters",
    "fit_pca",
    "generate_synth",
    "grad_check_hein",
    "hein_forward",
    "logloss",
    "mock_encode",
    "mock_llm",
    "represent_user_cluster",
]
