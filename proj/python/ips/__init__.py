# SPDX-License-Identifier: Apache-2.0
#
# ips: outdoor-to-indoor positioning simulation and estimation toolkit
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ---------------------------------------------------------------------------
"""Outdoor-to-indoor positioning toolkit.

The heavy lifting lives in the compiled `_core` module; this package simply
re-exports its public surface.
"""

from ._core import (
    Scene,
    compute_bounds,
    enumerate_paths,
    generate_scene,
    run_experiment,
    run_pipeline,
    slp_demo,
)

__all__ = [
    "Scene",
    "compute_bounds",
    "enumerate_paths",
    "generate_scene",
    "run_experiment",
    "run_pipeline",
    "slp_demo",
]
