"""Reproducible random ensembles over the ladder models.

Random data are drawn with a counter-based generator keyed by
(seed, shell): amplitude j of run seed k is Philox(key=[k, j]) mapped
through uniform(-1, 1) and scaled by the deterministic decay profile
lam**-((s+delta)*j).  Because every amplitude owns its key, the datum
does not depend on draw order, thread count, or how many shells precede
it; run i of an ensemble simply uses seed base_seed + i.

The per-run workers release the GIL inside the compiled integrator, so a
thread pool gives real parallelism; records are collected in run order,
which keeps every output byte-identical whatever the worker count.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParams
from .integrator import IntegrationConfig, Termination, Trajectory, integrate
from .model_core import ModelParams, ShellState

__all__ = [
    "DatumDistribution",
    "RandomDatumSpec",
    "RunRecord",
    "EnsembleSummary",
    "hypothesis_norm_bound",
    "sample_initial_datum",
    "run_ensemble",
]

_UINT64_MASK = (1 << 64) - 1


class DatumDistribution(enum.Enum):
    """Law of the bounded random factors b_j.

    Only the symmetric uniform law on [-1, 1] is implemented; the enum
    keeps room for alternatives without changing the datum interface.
    """

    UNIFORM_SYMMETRIC = "uniform_symmetric"


@dataclass(frozen=True)
class RandomDatumSpec:
    """Law of the random initial datum u_j = lam**-((s+delta)*j) * b_j.

    s > 1 is the Sobolev index the ensemble is designed around; delta > 0
    is mandatory extra decay: without it the H^s norm of the datum would
    diverge with the shell count, with it the norm is bounded by the
    seed-independent geometric-series constant (see
    hypothesis_norm_bound).  b_j is drawn uniformly from [-1, 1), so the
    probability of a nonpositive b_j is 1/2.
    """

    s: float
    n_shells: int
    seed: int
    delta: float = 0.1
    distribution: DatumDistribution = field(default=DatumDistribution.UNIFORM_SYMMETRIC)

    def __post_init__(self) -> None:
        if not np.isfinite(self.s) or self.s <= 1.0:
            raise InvalidParams(f"s must be a finite float > 1, got {self.s!r}")
        if not np.isfinite(self.delta) or self.delta <= 0.0:
            raise InvalidParams(f"delta must be a finite float > 0, got {self.delta!r}")
        if int(self.n_shells) != self.n_shells or self.n_shells < 2:
            raise InvalidParams(
                f"n_shells must be an integer >= 2, got {self.n_shells!r}"
            )
        if int(self.seed) != self.seed or not 0 <= self.seed <= _UINT64_MASK:
            raise InvalidParams(
                f"seed must be an integer in [0, 2**64), got {self.seed!r}"
            )
        if not isinstance(self.distribution, DatumDistribution):
            raise InvalidParams(
                f"distribution must be a DatumDistribution member, got {self.distribution!r}"
            )


def hypothesis_norm_bound(spec: RandomDatumSpec, lam: float) -> float:
    """Seed-independent bound on the datum's H^s norm.

    |u_j| <= lam**-((s+delta)*j) makes the squared norm a geometric
    series with ratio lam**(-2*delta), summing below
    1/(1 - lam**(-2*delta)) regardless of the shell count.
    """
    if not np.isfinite(lam) or lam <= 1.0:
        raise InvalidParams(f"lam must be a finite float > 1, got {lam!r}")
    ratio = lam ** (-2.0 * spec.delta)
    return 1.0 / math.sqrt(1.0 - ratio)


def _uniform_symmetric(seed: int, j: int) -> float:
    key = np.array([seed, j], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return float(gen.uniform(-1.0, 1.0))


def sample_initial_datum(spec: RandomDatumSpec, lam: float) -> ShellState:
    """Draw the random datum for one seed; a pure function of (spec, lam).

    Amplitude j is keyed by (seed, j) in a counter-based generator, so
    the low shells of a datum never change when n_shells changes.
    """
    if not np.isfinite(lam) or lam <= 1.0:
        raise InvalidParams(f"lam must be a finite float > 1, got {lam!r}")
    n = spec.n_shells
    q = lam ** (-(spec.s + spec.delta))
    u = np.empty(n, dtype=np.float64)
    a = 1.0
    for j in range(n):
        u[j] = a * _uniform_symmetric(spec.seed, j)
        a *= q
    return ShellState(u=u, t=0.0)


@dataclass(frozen=True)
class RunRecord:
    """Observables of one ensemble member.

    sup_norm_hr is the largest H^r norm over the recorded samples;
    final_mode0_fraction is u_0(t_final)**2 divided by the initial
    energy (0.0 for a zero datum).
    """

    seed: int
    norm_hs_initial: float
    sup_norm_hr: float
    final_mode0_fraction: float
    termination: Termination
    nonfinite: bool


@dataclass(frozen=True)
class EnsembleSummary:
    """All run records, in seed order, plus order-independent aggregates."""

    records: tuple[RunRecord, ...]
    r: float
    sup_norm_hr_max: float
    sup_norm_hr_median: float
    sup_norm_hr_q90: float
    n_reached_t_end: int
    n_blowup: int
    n_underflow: int

    @property
    def n_runs(self) -> int:
        return len(self.records)


def _norm_table(lam: float, s: float, n: int) -> np.ndarray:
    q = lam ** (2.0 * s)
    w = np.empty(n, dtype=np.float64)
    acc = 1.0
    for j in range(n):
        w[j] = acc
        acc *= q
    return w


def _sup_norm_over_samples(traj: Trajectory, w: np.ndarray) -> float:
    weighted = (traj.us * traj.us) * w
    return float(np.sqrt(weighted.sum(axis=1).max()))


def _run_one(
    p: ModelParams,
    datum: ShellState,
    cfg: IntegrationConfig,
    seed: int,
    w_r: np.ndarray,
    w_s: np.ndarray,
    norm_cap: float | None = None,
) -> RunRecord:
    norm_hs0 = float(np.sqrt(((datum.u * datum.u) * w_s).sum()))
    if norm_cap is not None and not norm_hs0 <= norm_cap * (1.0 + 1e-12):
        # the geometric-series bound is a theorem about the construction;
        # breaching it means the datum was not built as documented
        raise InvalidParams(
            f"datum norm {norm_hs0!r} exceeds the construction bound {norm_cap!r}"
        )
    e0 = datum.energy()
    traj = integrate(p, datum, cfg)
    sup_hr = _sup_norm_over_samples(traj, w_r)
    u0_final = float(traj.us[-1, 0])
    fraction = (u0_final * u0_final) / e0 if e0 > 0.0 else 0.0
    return RunRecord(
        seed=seed,
        norm_hs_initial=norm_hs0,
        sup_norm_hr=sup_hr,
        final_mode0_fraction=fraction,
        termination=traj.termination,
        nonfinite=traj.nonfinite,
    )


def run_ensemble(
    p: ModelParams,
    spec: RandomDatumSpec,
    n_runs: int,
    cfg: IntegrationConfig,
    r: float,
    threads: int | None = None,
) -> EnsembleSummary:
    """Integrate n_runs independent random data and aggregate observables.

    Run i uses seed spec.seed + i (wrapping at 2**64).  r is the Sobolev
    index tracked along each trajectory and must lie strictly below the
    datum regularity spec.s.  Per-run failures terminate that run's
    trajectory (blowup threshold or step underflow) and land in the
    summary counts; they never abort the other runs.

    threads picks the worker count (default 1); records and aggregates
    are byte-identical for any choice.
    """
    if spec.n_shells != p.n_shells:
        raise InvalidParams(
            f"datum spec has {spec.n_shells} shells, model has {p.n_shells}"
        )
    if int(n_runs) != n_runs or n_runs < 1:
        raise InvalidParams(f"n_runs must be an integer >= 1, got {n_runs!r}")
    if not np.isfinite(r) or r >= spec.s:
        raise InvalidParams(
            f"tracked index r={r!r} must lie strictly below the datum index s={spec.s!r}"
        )
    if threads is None:
        threads = 1
    if int(threads) != threads or threads < 1:
        raise InvalidParams(f"threads must be an integer >= 1, got {threads!r}")

    w_r = _norm_table(p.lam, r, p.n_shells)
    w_s = _norm_table(p.lam, spec.s, p.n_shells)
    norm_cap = hypothesis_norm_bound(spec, p.lam)
    seeds = [(spec.seed + i) & _UINT64_MASK for i in range(n_runs)]

    def work(seed: int) -> RunRecord:
        run_spec = RandomDatumSpec(
            s=spec.s,
            n_shells=spec.n_shells,
            seed=seed,
            delta=spec.delta,
            distribution=spec.distribution,
        )
        datum = sample_initial_datum(run_spec, p.lam)
        return _run_one(p, datum, cfg, seed, w_r, w_s, norm_cap)

    if threads == 1:
        records = [work(seed) for seed in seeds]
    else:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            records = list(pool.map(work, seeds))

    sups = np.array([rec.sup_norm_hr for rec in records], dtype=np.float64)
    terms = [rec.termination for rec in records]
    return EnsembleSummary(
        records=tuple(records),
        r=float(r),
        sup_norm_hr_max=float(sups.max()),
        sup_norm_hr_median=float(np.quantile(sups, 0.5)),
        sup_norm_hr_q90=float(np.quantile(sups, 0.9)),
        n_reached_t_end=sum(1 for x in terms if x is Termination.REACHED_T_END),
        n_blowup=sum(1 for x in terms if x is Termination.BLOWUP_THRESHOLD),
        n_underflow=sum(1 for x in terms if x is Termination.STEP_UNDERFLOW),
    )
