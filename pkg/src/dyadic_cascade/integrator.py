"""Adaptive and fixed-step time integration for shell and tree models.

The adaptive route is an embedded Dormand-Prince 5(4) pair: the 5th-order
solution is propagated, the embedded 4th-order difference drives a PI step
controller (safety 0.9, growth capped at 5x, shrink floored at 0.2x), and
the error norm is the infinity norm of the componentwise ratio
|err_i| / (abs_tol + rel_tol * max(|y0_i|, |y1_i|)), so acceptance bounds
every component, not an average.

``integrate_oracle`` is a deliberately independent classical RK4 route
sharing nothing with the adaptive loop except the right-hand side; it
exists so the two can be cross-checked against each other in tests.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from . import _kernels
from .branched_tree import TreeParams, TreeState, tree_mode_arrays
from .errors import InvalidParams
from .model_core import ModelParams, ShellState, shell_index_check

__all__ = [
    "IntegrationConfig",
    "IntegrationStats",
    "Termination",
    "Event",
    "Trajectory",
    "integrate",
    "integrate_oracle",
]

# hard ceilings on recorded data, to keep runaway configs from exhausting RAM
_MAX_SAMPLE_ROWS = 2**24
_MAX_SAMPLE_VALUES = 2**25
_MAX_ORACLE_STEPS = 2**22

AnyParams = Union[ModelParams, TreeParams]
AnyState = Union[ShellState, TreeState]


class Termination(enum.Enum):
    """Why an integration stopped."""

    REACHED_T_END = "reached_t_end"
    BLOWUP_THRESHOLD = "blowup_threshold"
    STEP_UNDERFLOW = "step_underflow"


_TERM_FROM_CODE = {
    _kernels.TERM_T_END: Termination.REACHED_T_END,
    _kernels.TERM_BLOWUP: Termination.BLOWUP_THRESHOLD,
    _kernels.TERM_UNDERFLOW: Termination.STEP_UNDERFLOW,
}


class Event(NamedTuple):
    """First upward crossing of the scaled threshold by one level."""

    level: int
    t: float


@dataclass(frozen=True)
class IntegrationConfig:
    """Tolerances, step bounds and recording cadence for one run.

    sample_interval defaults to t_end/1000 when left unset.  Samples are
    decoupled from the step sequence: they land on the fixed grid
    t0 + k*sample_interval through the integrator's continuous extension,
    so tightening tolerances never changes which times are recorded.
    """

    t_end: float
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    dt_init: float = 1e-4
    dt_min: float = 1e-14
    blowup_threshold: float = 1e8
    sample_interval: float | None = None
    event_levels: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        if not np.isfinite(self.t_end) or self.t_end <= 0.0:
            raise InvalidParams(f"t_end must be a finite float > 0, got {self.t_end!r}")
        if not 0.0 < self.rel_tol < 1.0:
            raise InvalidParams(f"rel_tol must lie in (0, 1), got {self.rel_tol!r}")
        if not 0.0 < self.abs_tol < 1.0:
            raise InvalidParams(f"abs_tol must lie in (0, 1), got {self.abs_tol!r}")
        if not (np.isfinite(self.dt_min) and np.isfinite(self.dt_init)):
            raise InvalidParams("dt_min and dt_init must be finite")
        if not 0.0 < self.dt_min < self.dt_init <= self.t_end:
            raise InvalidParams(
                f"need 0 < dt_min < dt_init <= t_end, got dt_min={self.dt_min!r}, "
                f"dt_init={self.dt_init!r}, t_end={self.t_end!r}"
            )
        if not self.blowup_threshold > 0.0:
            raise InvalidParams(
                f"blowup_threshold must be > 0, got {self.blowup_threshold!r}"
            )
        if self.sample_interval is None:
            object.__setattr__(self, "sample_interval", self.t_end / 1000.0)
        if not (np.isfinite(self.sample_interval) and self.sample_interval > 0.0):
            raise InvalidParams(
                f"sample_interval must be a finite float > 0, got {self.sample_interval!r}"
            )
        object.__setattr__(self, "event_levels", frozenset(self.event_levels))
        for j in self.event_levels:
            if int(j) != j or j < 0:
                raise InvalidParams(f"event level {j!r} is not a nonnegative integer")


@dataclass(frozen=True)
class IntegrationStats:
    """Bookkeeping from one integration run."""

    n_accepted: int
    n_rejected: int
    last_dt: float
    sup_integral: float
    wall_time: float


@dataclass(frozen=True)
class Trajectory:
    """Recorded output of one integration.

    ts and us hold the sample times and states row by row (us[i] is the
    state at ts[i]); the first row is the initial state and the last row
    is the state where integration stopped.  events holds the located
    threshold crossings in chronological order.  nonfinite marks runs
    that stopped because the state left the representable range; the
    recorded rows are still all finite.
    """

    ts: np.ndarray
    us: np.ndarray
    events: tuple[Event, ...]
    termination: Termination
    nonfinite: bool
    stats: IntegrationStats
    params: AnyParams

    def __post_init__(self) -> None:
        self.ts.setflags(write=False)
        self.us.setflags(write=False)

    @property
    def n_samples(self) -> int:
        return int(self.ts.shape[0])

    def state_at(self, i: int) -> AnyState:
        if isinstance(self.params, TreeParams):
            return TreeState(u=self.us[i], t=float(self.ts[i]), d=self.params.d)
        return ShellState(u=self.us[i], t=float(self.ts[i]))

    @property
    def final_state(self) -> AnyState:
        return self.state_at(self.n_samples - 1)

    @property
    def samples(self) -> list[tuple[float, AnyState]]:
        """Materialise (t, state) pairs; prefer ts/us for bulk numerics."""
        return [(float(self.ts[i]), self.state_at(i)) for i in range(self.n_samples)]


def _mode_arrays(p: AnyParams):
    """Kernel-ready arrays: (mode, alpha, beta, lam, level, d, w_sup)."""
    if isinstance(p, ModelParams):
        lam = np.ascontiguousarray(p.lambda_powers)
        level = np.empty(0, dtype=np.int64)
        w_sup = np.ascontiguousarray(lam[: p.n_shells])
        return _kernels.MODE_LADDER, p.alpha, p.beta, lam, level, 1, w_sup
    if isinstance(p, TreeParams):
        return tree_mode_arrays(p)
    raise InvalidParams(f"unsupported parameter object {type(p).__name__}")


def _check_state(p: AnyParams, u0: AnyState) -> np.ndarray:
    if isinstance(p, ModelParams):
        if not isinstance(u0, ShellState):
            raise InvalidParams("ladder models require a ShellState initial datum")
        if u0.n_shells != p.n_shells:
            raise InvalidParams(
                f"initial datum has {u0.n_shells} shells, model has {p.n_shells}"
            )
    else:
        if not isinstance(u0, TreeState):
            raise InvalidParams("tree models require a TreeState initial datum")
        if u0.n_nodes != p.node_count:
            raise InvalidParams(
                f"initial datum has {u0.n_nodes} nodes, tree has {p.node_count}"
            )
    return np.ascontiguousarray(u0.u, dtype=np.float64)


def _sample_capacity(t0: float, t_end: float, h_s: float, n: int) -> int:
    cap = int(math.floor((t_end - t0) / h_s)) + 4
    if cap > _MAX_SAMPLE_ROWS or cap * n > _MAX_SAMPLE_VALUES:
        raise InvalidParams(
            f"sample_interval {h_s!r} would record {cap} rows of {n} values; "
            "raise sample_interval"
        )
    return cap


def _wrap(
    p: AnyParams,
    res,
    out_ts: np.ndarray,
    out_us: np.ndarray,
    ev_j: np.ndarray,
    ev_t: np.ndarray,
    wall: float,
) -> Trajectory:
    n_s, n_ev, term, nonfinite, n_acc, n_rej, last_dt, sup_int, _t_final = res
    events = tuple(
        Event(level=int(ev_j[i]), t=float(ev_t[i])) for i in range(n_ev)
    )
    stats = IntegrationStats(
        n_accepted=int(n_acc),
        n_rejected=int(n_rej),
        last_dt=float(last_dt),
        sup_integral=float(sup_int),
        wall_time=wall,
    )
    return Trajectory(
        ts=out_ts[:n_s].copy(),
        us=out_us[:n_s].copy(),
        events=events,
        termination=_TERM_FROM_CODE[int(term)],
        nonfinite=bool(nonfinite),
        stats=stats,
        params=p,
    )


def integrate(p: AnyParams, u0: AnyState, cfg: IntegrationConfig) -> Trajectory:
    """Adaptive 5(4) integration of u' = rhs(u) from u0.t to cfg.t_end.

    Stops at whichever comes first: t_end, the scaled sup crossing
    cfg.blowup_threshold, or the controller demanding a step below
    cfg.dt_min.  A state that leaves the representable range is reported
    as step underflow with the nonfinite flag set, never as an exception;
    the trajectory up to the last finite state is retained.
    """
    mode, alpha, beta, lam, level, d, w_sup = _mode_arrays(p)
    u = _check_state(p, u0)
    t0 = float(u0.t)
    if not cfg.t_end > t0:
        raise InvalidParams(f"t_end={cfg.t_end!r} must exceed the datum time {t0!r}")
    if cfg.dt_init > cfg.t_end - t0:
        raise InvalidParams(
            f"dt_init={cfg.dt_init!r} exceeds the integration interval {cfg.t_end - t0!r}"
        )

    if cfg.event_levels:
        if mode == _kernels.MODE_TREE:
            raise InvalidParams("event levels are only defined for ladder models")
        ev_idx = np.array(sorted(cfg.event_levels), dtype=np.int64)
        for j in ev_idx:
            shell_index_check(int(j), p.n_shells)
        ev_thr = np.array([1.0 / lam[j] for j in ev_idx], dtype=np.float64)
    else:
        ev_idx = np.empty(0, dtype=np.int64)
        ev_thr = np.empty(0, dtype=np.float64)

    n = u.shape[0]
    h_s = float(cfg.sample_interval)
    cap = _sample_capacity(t0, cfg.t_end, h_s, n)
    out_ts = np.empty(cap, dtype=np.float64)
    out_us = np.empty((cap, n), dtype=np.float64)
    ev_j = np.empty(ev_idx.shape[0], dtype=np.int64)
    ev_t = np.empty(ev_idx.shape[0], dtype=np.float64)

    start = time.perf_counter()
    res = _kernels.adaptive_loop(
        mode,
        alpha,
        beta,
        lam,
        level,
        d,
        u,
        t0,
        float(cfg.t_end),
        float(cfg.rel_tol),
        float(cfg.abs_tol),
        float(cfg.dt_init),
        float(cfg.dt_min),
        float(cfg.blowup_threshold),
        w_sup,
        h_s,
        ev_idx,
        ev_thr,
        out_ts,
        out_us,
        ev_j,
        ev_t,
    )
    wall = time.perf_counter() - start
    return _wrap(p, res, out_ts, out_us, ev_j, ev_t, wall)


def integrate_oracle(
    p: AnyParams, u0: AnyState, t_end: float, dt: float
) -> Trajectory:
    """Fixed-step classical RK4 cross-check route.

    Records the state after every step, so the grid is the sample set.
    For ladder models every shell j is watched for its first upward
    crossing of lam**-j, located only to within dt and stamped with the
    step-end time.  There is no blowup threshold: the run goes to t_end
    unless the state leaves the representable range.
    """
    mode, alpha, beta, lam, level, d, w_sup = _mode_arrays(p)
    u = _check_state(p, u0)
    t0 = float(u0.t)
    if not (np.isfinite(dt) and dt > 0.0):
        raise InvalidParams(f"dt must be a finite float > 0, got {dt!r}")
    if not t_end > t0:
        raise InvalidParams(f"t_end={t_end!r} must exceed the datum time {t0!r}")

    n = u.shape[0]
    n_full = int(math.floor((t_end - t0) / dt))
    rem = t_end - (t0 + n_full * dt)
    if rem < 0.0:
        rem = 0.0
    n_total = n_full + (1 if rem > 0.0 else 0)
    if n_total > _MAX_ORACLE_STEPS or (n_total + 2) * n > _MAX_SAMPLE_VALUES:
        raise InvalidParams(
            f"dt={dt!r} needs {n_total} recorded steps of {n} values; raise dt"
        )

    if mode == _kernels.MODE_LADDER:
        ev_thr = np.array([1.0 / lam[j] for j in range(n)], dtype=np.float64)
    else:
        ev_thr = np.empty(0, dtype=np.float64)
    ev_j = np.empty(ev_thr.shape[0], dtype=np.int64)
    ev_t = np.empty(ev_thr.shape[0], dtype=np.float64)
    out_ts = np.empty(n_total + 2, dtype=np.float64)
    out_us = np.empty((n_total + 2, n), dtype=np.float64)

    start = time.perf_counter()
    res = _kernels.rk4_loop(
        mode,
        alpha,
        beta,
        lam,
        level,
        d,
        u,
        t0,
        float(t_end),
        float(dt),
        n_full,
        rem,
        w_sup,
        ev_thr,
        out_ts,
        out_us,
        ev_j,
        ev_t,
    )
    wall = time.perf_counter() - start
    return _wrap(p, res, out_ts, out_us, ev_j, ev_t, wall)
