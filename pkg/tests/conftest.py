"""Shared test setup: compile the jit kernels once per session.

The first call into each numba kernel pays its compilation cost. Two tiny
episodes exercise every kernel (raycasting, local map rasterization,
registration, scan matching, the integral image and disc scorers, both BFS
variants, A*, coarsening), so the timed acceptance tests measure steady-state
behavior instead of compiler time.
"""

import pytest

from wandertell.harness import EpisodeConfig, run_episode


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    base = dict(steps=6, world_extent_m=6.0, world_rooms=1, world_objects=2,
                global_map_size=461)
    run_episode(EpisodeConfig(seed=0, reward_kind="coverage",
                              scan_match=True, **base))
    run_episode(EpisodeConfig(seed=0, reward_kind="curiosity",
                              scan_match=False, **base))
    run_episode(EpisodeConfig(seed=0, reward_kind="impact-grid",
                              scan_match=False, **base))
