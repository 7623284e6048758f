"""Observables and sanity checks evaluated on states and trajectories.

All reductions over shells use compensated summation (math.fsum, which
returns the correctly rounded sum), so diagnostics do not drift with the
shell count.  The signed tail energies and the tail energy are computed
from the same two partial sums, which makes the partition identity
E_plus + E_minus == tail_energy hold exactly, not just approximately.
"""

from __future__ import annotations

import enum
import math
import statistics
from dataclasses import dataclass

import numpy as np

from .branched_tree import TreeParams
from .errors import InvalidParams, NoEvents
from .integrator import Trajectory
from .model_core import ModelParams, ShellState, shell_index_check

__all__ = [
    "SobolevSpec",
    "CheckStatus",
    "InvariantCheck",
    "InvariantReport",
    "WavefrontReport",
    "sobolev_norm",
    "tail_energy",
    "signed_energies",
    "sup_scaled",
    "check_invariants",
    "wavefront_report",
]

# default tolerances for the trajectory checks; energy drift is relative to
# the initial energy, the tail-monotonicity slack scales with it
ENERGY_DRIFT_TOL = 1e-9
SIGN_TOL = 1e-10
MONOTONE_SLACK = 1e-8
SUPPORT_TOL = 1e-10


@dataclass(frozen=True)
class SobolevSpec:
    """Which Sobolev norm: weight lam**(2*s*j) on shell j."""

    lam: float
    s: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.lam) or self.lam <= 1.0:
            raise InvalidParams(f"lam must be a finite float > 1, got {self.lam!r}")
        if not np.isfinite(self.s) or self.s < 0.0:
            raise InvalidParams(f"s must be a finite float >= 0, got {self.s!r}")


def _weight_table(lam: float, s: float, n: int) -> np.ndarray:
    """lam**(2*s*j) for j = 0..n-1 by repeated multiplication."""
    q = lam ** (2.0 * s)
    w = np.empty(n, dtype=np.float64)
    acc = 1.0
    for j in range(n):
        w[j] = acc
        acc *= q
    return w


def sobolev_norm(s: ShellState, spec: SobolevSpec) -> float:
    """sqrt(sum_j lam**(2*s*j) * u_j**2), compensated."""
    w = _weight_table(spec.lam, spec.s, s.n_shells)
    u = s.u
    return math.sqrt(
        math.fsum(w[j] * float(u[j]) * float(u[j]) for j in range(s.n_shells))
    )


def _tail_parts(s: ShellState, j: int) -> tuple[float, float]:
    """Compensated sums of u_l**2 over positive and negative u_l, l >= j."""
    shell_index_check(j, s.n_shells)
    u = s.u
    pos = math.fsum(
        float(u[l]) * float(u[l]) for l in range(j, s.n_shells) if u[l] > 0.0
    )
    neg = math.fsum(
        float(u[l]) * float(u[l]) for l in range(j, s.n_shells) if u[l] < 0.0
    )
    return pos, neg


def tail_energy(s: ShellState, j: int) -> float:
    """Energy at and beyond shell j: sum(u_l**2 for l >= j)."""
    pos, neg = _tail_parts(s, j)
    return pos + neg


def signed_energies(s: ShellState, j: int) -> tuple[float, float]:
    """Tail energy split by amplitude sign.

    Shells with u_l = 0 contribute 0 to both sides, so the components add
    up to tail_energy(s, j) exactly; tail_energy is literally this sum.
    """
    return _tail_parts(s, j)


def sup_scaled(s: ShellState, lam: float) -> tuple[float, int]:
    """(max_j lam**j * u_j, argmax j); ties resolve to the smaller j.

    The maximum is over signed values: an all-negative state yields its
    least negative scaled amplitude.
    """
    if not np.isfinite(lam) or lam <= 1.0:
        raise InvalidParams(f"lam must be a finite float > 1, got {lam!r}")
    u = s.u
    best = float(u[0])
    best_j = 0
    acc = 1.0
    for j in range(1, s.n_shells):
        acc *= lam
        v = acc * float(u[j])
        if v > best:
            best = v
            best_j = j
    return best, best_j


class CheckStatus(enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    NOT_APPLICABLE = "n/a"


@dataclass(frozen=True)
class InvariantCheck:
    """Outcome of one invariant check over a whole trajectory.

    worst is the largest violation observed (0.0 when nothing violated);
    the check fails when worst > tol.  where locates the worst case.
    """

    name: str
    status: CheckStatus
    worst: float
    tol: float
    where: str = ""


@dataclass(frozen=True)
class InvariantReport:
    checks: tuple[InvariantCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.status is not CheckStatus.FAIL for c in self.checks)

    def by_name(self, name: str) -> InvariantCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _row_energy(us: np.ndarray, i: int) -> float:
    return math.fsum(float(x) * float(x) for x in us[i])


def _is_pure_kp(p: ModelParams) -> bool:
    # a positive alpha keeps the drive term a square; any beta admixture
    # breaks the barrier argument, so mixtures do not qualify
    return p.alpha > 0.0 and p.beta == 0.0


def _is_pure_obukhov(p: ModelParams) -> bool:
    return p.alpha == 0.0 and p.beta > 0.0


def _energy_drift_check(t: Trajectory, tol: float) -> InvariantCheck:
    us = t.us
    e0 = _row_energy(us, 0)
    scale = e0 if e0 > 0.0 else 1.0
    worst = 0.0
    where = ""
    for i in range(1, us.shape[0]):
        drift = abs(_row_energy(us, i) - e0) / scale
        if drift > worst:
            worst = drift
            where = f"t={float(t.ts[i])!r}"
    status = CheckStatus.PASS if worst <= tol else CheckStatus.FAIL
    return InvariantCheck("energy_drift", status, worst, tol, where)


def _sign_stability_check(
    t: Trajectory, p: ModelParams, tol: float
) -> InvariantCheck:
    """Barrier at zero, per mode, over the sampled rows.

    Pure Katz-Pavlovic: a mode observed >= 0 once must stay >= -tol from
    then on.  Pure Obukhov: a mode observed <= 0 once must stay <= +tol.
    Mixtures have no maximum principle and are reported not applicable.
    """
    if _is_pure_kp(p):
        direction = 1.0
    elif _is_pure_obukhov(p):
        direction = -1.0
    else:
        return InvariantCheck(
            "sign_stability", CheckStatus.NOT_APPLICABLE, 0.0, tol
        )
    us = t.us if direction > 0.0 else -t.us
    n_rows, n = us.shape
    worst = 0.0
    where = ""
    for j in range(n):
        armed = False
        col = us[:, j]
        for i in range(n_rows):
            v = float(col[i])
            if armed and -v > worst:
                worst = -v
                where = f"t={float(t.ts[i])!r}, j={j}"
            if v >= 0.0:
                armed = True
    status = CheckStatus.PASS if worst <= tol else CheckStatus.FAIL
    return InvariantCheck("sign_stability", status, worst, tol, where)


def _positive_tail_check(
    t: Trajectory, p: ModelParams, slack: float
) -> InvariantCheck:
    """Pure Katz-Pavlovic transfers positive-part energy only upward, so
    every positive tail energy E_plus(j) is nondecreasing between samples."""
    if not _is_pure_kp(p):
        return InvariantCheck(
            "positive_tail_monotone", CheckStatus.NOT_APPLICABLE, 0.0, slack
        )
    us = t.us
    worst = 0.0
    where = ""
    prev: np.ndarray | None = None
    for i in range(us.shape[0]):
        sq = np.where(us[i] > 0.0, us[i] * us[i], 0.0)
        # suffix sums give E_plus for every tail start at once
        tails = np.cumsum(sq[::-1])[::-1]
        if prev is not None:
            j = int(np.argmax(prev - tails))
            drop = float(prev[j] - tails[j])
            if drop > worst:
                worst = drop
                where = f"t={float(t.ts[i])!r}, j={j}"
        prev = tails
    status = CheckStatus.PASS if worst <= slack else CheckStatus.FAIL
    return InvariantCheck("positive_tail_monotone", status, worst, slack, where)


def _support_confinement_check(
    t: Trajectory, p: ModelParams, tol: float
) -> InvariantCheck:
    """Pure Obukhov never spreads support upward: shells beyond the datum's
    last nonzero shell stay at zero for all time."""
    if not _is_pure_obukhov(p):
        return InvariantCheck(
            "support_confinement", CheckStatus.NOT_APPLICABLE, 0.0, tol
        )
    us = t.us
    n = us.shape[1]
    nonzero = np.flatnonzero(us[0])
    j1 = int(nonzero[-1]) if nonzero.size else -1
    if j1 >= n - 1:
        # full support: nothing beyond the datum to confine
        return InvariantCheck(
            "support_confinement", CheckStatus.NOT_APPLICABLE, 0.0, tol
        )
    beyond = np.abs(us[:, j1 + 1 :])
    i, k = np.unravel_index(int(np.argmax(beyond)), beyond.shape)
    worst = float(beyond[i, k])
    where = f"t={float(t.ts[int(i)])!r}, j={j1 + 1 + int(k)}"
    status = CheckStatus.PASS if worst <= tol else CheckStatus.FAIL
    return InvariantCheck("support_confinement", status, worst, tol, where)


def check_invariants(
    t: Trajectory,
    p: ModelParams | TreeParams,
    *,
    energy_tol: float = ENERGY_DRIFT_TOL,
    sign_tol: float = SIGN_TOL,
    monotone_slack: float | None = None,
    support_tol: float = SUPPORT_TOL,
) -> InvariantReport:
    """Evaluate the structural invariants over a trajectory's samples.

    (a) energy_drift: relative drift of sum(u**2) from the initial row,
        every model.
    (b) sign_stability: the zero barrier per mode, pure Katz-Pavlovic
        from below and pure Obukhov from above; mixtures and trees are
        not applicable (no maximum principle).
    (c) positive_tail_monotone: pure Katz-Pavlovic only, slack defaults
        to 1e-8 times the initial energy per sample step.
    (d) support_confinement: pure Obukhov with a finitely supported
        datum; shells beyond the support must stay below tolerance.

    Checks see only the recorded samples; behaviour between samples is
    not observable here.  Failures are report entries, never exceptions.
    """
    if t.us.shape[0] < 2:
        raise InvalidParams("invariant checks need a trajectory with >= 2 samples")
    if monotone_slack is None:
        monotone_slack = MONOTONE_SLACK * max(1.0, _row_energy(t.us, 0))

    is_tree = isinstance(p, TreeParams)
    checks = [_energy_drift_check(t, energy_tol)]
    if is_tree:
        checks.append(
            InvariantCheck("sign_stability", CheckStatus.NOT_APPLICABLE, 0.0, sign_tol)
        )
        checks.append(
            InvariantCheck(
                "positive_tail_monotone", CheckStatus.NOT_APPLICABLE, 0.0, monotone_slack
            )
        )
        checks.append(
            InvariantCheck(
                "support_confinement", CheckStatus.NOT_APPLICABLE, 0.0, support_tol
            )
        )
    else:
        checks.append(_sign_stability_check(t, p, sign_tol))
        checks.append(_positive_tail_check(t, p, monotone_slack))
        checks.append(_support_confinement_check(t, p, support_tol))
    return InvariantReport(checks=tuple(checks))


@dataclass(frozen=True)
class WavefrontReport:
    """Timing of the recorded threshold crossings, ordered by level.

    deltas[i] is the waiting time between crossing levels[i] and
    levels[i+1]; ratios[i] = deltas[i+1] / deltas[i], defined where the
    divisor is nonzero.  When at least three deltas exist and the median
    of the trailing ratios lies in (0, 1), blowup_estimate extrapolates
    the remaining crossings as a geometric series; otherwise None.
    """

    levels: tuple[int, ...]
    times: tuple[float, ...]
    deltas: tuple[float, ...]
    ratios: tuple[float, ...]
    median_ratio: float | None
    blowup_estimate: float | None


def wavefront_report(t: Trajectory, lam: float) -> WavefrontReport:
    """Summarise the arrival times of the scaled-threshold crossings.

    lam is the scale ratio the thresholds were built from; it is
    validated for interface consistency with the crossing definition.
    """
    if not np.isfinite(lam) or lam <= 1.0:
        raise InvalidParams(f"lam must be a finite float > 1, got {lam!r}")
    if not t.events:
        raise NoEvents("trajectory has no recorded threshold crossings")
    evs = sorted(t.events, key=lambda e: e.level)
    levels = tuple(e.level for e in evs)
    times = tuple(e.t for e in evs)
    deltas = tuple(times[i + 1] - times[i] for i in range(len(times) - 1))
    ratios = tuple(
        deltas[i + 1] / deltas[i] for i in range(len(deltas) - 1) if deltas[i] != 0.0
    )

    median_ratio: float | None = None
    estimate: float | None = None
    if len(deltas) >= 3 and len(ratios) >= 1:
        window = ratios[-min(5, len(ratios)) :]
        r = float(statistics.median(window))
        median_ratio = r
        if 0.0 < r < 1.0 and deltas[-1] > 0.0:
            estimate = times[-1] + deltas[-1] * r / (1.0 - r)
    return WavefrontReport(
        levels=levels,
        times=times,
        deltas=deltas,
        ratios=ratios,
        median_ratio=median_ratio,
        blowup_estimate=estimate,
    )
