"""Shared fixtures: warm the JIT cache once so timed tests stay honest."""

import numpy as np
import pytest

from dyadic_cascade import (
    IntegrationConfig,
    ShellState,
    TreeParams,
    TreeState,
    TreeVariant,
    integrate,
    integrate_oracle,
    kp_params,
)


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # first call per kernel pays numba compilation; do it before any
    # wall-clock assertion runs
    p = kp_params(2.0, 2)
    cfg = IntegrationConfig(t_end=0.01, event_levels=frozenset({1}))
    integrate(p, ShellState(u=[1.0, 0.0]), cfg)
    integrate_oracle(p, ShellState(u=[1.0, 0.0]), 0.01, 1e-3)
    tp = TreeParams(lam=2.0, d=2, depth=2, variant=TreeVariant.BRANCHED_KP)
    integrate(tp, TreeState(u=np.zeros(tp.node_count), d=2), IntegrationConfig(t_end=0.01))
    integrate_oracle(tp, TreeState(u=np.zeros(tp.node_count), d=2), 0.01, 1e-3)
