"""Shell-model definitions on the dyadic wavenumber ladder.

A state assigns one real amplitude to each shell j = 0..N-1, thought of
as the energy carrier near wavenumber lambda**j.  The evolution couples
nearest neighbours only.  Two classical couplings are supported, plus any
nonnegative mixture of the two:

* Katz-Pavlovic forcing (weight alpha): shell j is driven by the square
  of its slower neighbour and drained by its faster one,
  ``alpha * (lam**j * u[j-1]**2 - lam**(j+1) * u[j] * u[j+1])``.
* Obukhov forcing (weight beta): shell j is driven multiplicatively and
  drained by the square of its faster neighbour,
  ``beta * (lam**j * u[j] * u[j-1] - lam**(j+1) * u[j+1]**2)``.

Both couplings conserve sum(u**2) exactly in the truncated system because
the boundary convention pins u[-1] = u[N] = 0 (the zero-tail closure), so
the transfer terms telescope.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from .errors import IndexOutOfRange, InvalidParams, NonFiniteState

__all__ = [
    "Closure",
    "ModelParams",
    "ShellState",
    "FluxVector",
    "kp_params",
    "obukhov_params",
    "validate_params",
    "rhs",
    "energy_flux",
]


class Closure(enum.Enum):
    """Boundary convention for the truncated ladder.

    ZERO_TAIL pins the ghost amplitudes u[-1] and u[N] to zero, which
    makes the quadratic transfer telescope and conserves energy exactly.
    """

    ZERO_TAIL = "zero_tail"


def _power_table(lam: float, count: int) -> np.ndarray:
    """Return [lam**0, lam**1, ..., lam**(count-1)] by repeated multiplication.

    Repeated multiplication keeps the table bit-reproducible across
    platforms; libm pow() is not guaranteed to be correctly rounded.
    """
    table = np.empty(count, dtype=np.float64)
    acc = 1.0
    for j in range(count):
        table[j] = acc
        acc *= lam
    return table


@dataclass(frozen=True)
class ModelParams:
    """Immutable description of one shell model.

    Parameters
    ----------
    lam:
        Wavenumber ratio between adjacent shells; must exceed 1.
    alpha, beta:
        Weights of the Katz-Pavlovic and Obukhov couplings.  At least one
        must be nonzero.
    n_shells:
        Number of retained shells N; at least 2, and small enough that
        lam**(N+1) is still a finite float.
    closure:
        Boundary convention; only the zero tail is implemented.
    """

    lam: float
    alpha: float
    beta: float
    n_shells: int
    closure: Closure = Closure.ZERO_TAIL

    def __post_init__(self) -> None:
        validate_params(self)

    @cached_property
    def lambda_powers(self) -> np.ndarray:
        """Read-only table of lam**j for j = 0..n_shells+1."""
        table = _power_table(self.lam, self.n_shells + 2)
        table.setflags(write=False)
        return table

    @property
    def is_pure_kp(self) -> bool:
        return self.alpha != 0.0 and self.beta == 0.0

    @property
    def is_pure_obukhov(self) -> bool:
        return self.alpha == 0.0 and self.beta != 0.0


def kp_params(lam: float, n_shells: int) -> ModelParams:
    """Pure Katz-Pavlovic model: (alpha, beta) = (1, 0)."""
    return ModelParams(lam=lam, alpha=1.0, beta=0.0, n_shells=n_shells)


def obukhov_params(lam: float, n_shells: int) -> ModelParams:
    """Pure Obukhov model: (alpha, beta) = (0, 1)."""
    return ModelParams(lam=lam, alpha=0.0, beta=1.0, n_shells=n_shells)


def validate_params(p: ModelParams) -> ModelParams:
    """Check every documented invariant of ModelParams.

    Raises InvalidParams with the offending field named in the message.
    Returns its argument so call sites can validate inline.
    """
    lam = float(p.lam)
    if not np.isfinite(lam) or lam <= 1.0:
        raise InvalidParams(f"lam must be a finite float > 1, got {p.lam!r}")
    if not np.isfinite(p.alpha) or not np.isfinite(p.beta):
        raise InvalidParams("alpha and beta must be finite")
    if p.alpha == 0.0 and p.beta == 0.0:
        raise InvalidParams("alpha and beta cannot both be zero")
    if int(p.n_shells) != p.n_shells or p.n_shells < 2:
        raise InvalidParams(f"n_shells must be an integer >= 2, got {p.n_shells!r}")
    if not isinstance(p.closure, Closure):
        raise InvalidParams(f"closure must be a Closure member, got {p.closure!r}")
    # lam**(N+1) appears as a coefficient of the last retained shell; if it
    # overflows, the model is not representable in binary64.
    acc = 1.0
    for _ in range(p.n_shells + 1):
        acc *= lam
    if not np.isfinite(acc):
        raise InvalidParams(
            f"lam**(n_shells+1) overflows binary64 (lam={lam}, n_shells={p.n_shells}); "
            "reduce n_shells"
        )
    return p


def _as_state_vector(u, n_expected: int | None = None) -> np.ndarray:
    arr = np.asarray(u, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidParams(f"state vector must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteState("state vector contains NaN or infinity")
    if n_expected is not None and arr.shape[0] != n_expected:
        raise InvalidParams(
            f"state vector has {arr.shape[0]} entries, model has {n_expected} shells"
        )
    return arr


@dataclass(frozen=True)
class ShellState:
    """One snapshot of the ladder: amplitudes u[0..N-1] at time t.

    The amplitude array is copied and frozen on construction, so states
    can be shared between trajectories and diagnostics without defensive
    copies downstream.
    """

    u: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        arr = _as_state_vector(self.u).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "u", arr)
        if not np.isfinite(self.t):
            raise NonFiniteState(f"state time must be finite, got {self.t!r}")

    @property
    def n_shells(self) -> int:
        return int(self.u.shape[0])

    def energy(self) -> float:
        """Total energy sum(u**2), compensated summation."""
        return math.fsum(float(x) * float(x) for x in self.u)


@dataclass(frozen=True)
class FluxVector:
    """Per-interface energy flux at one instant.

    Entry j is the rate at which energy crosses interface j, i.e. the time
    derivative of the tail energy sum(u[l]**2 for l >= j).  Entry 0 is
    exactly 0.0: no energy enters or leaves the full truncated system.
    """

    f: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        arr = _as_state_vector(self.f).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "f", arr)


def rhs(p: ModelParams, s: ShellState) -> np.ndarray:
    """Time derivative of the state under the mixed coupling.

    Shell j receives
    ``alpha * (lam**j * u[j-1]**2 - lam**(j+1) * u[j] * u[j+1])
    + beta * (lam**j * u[j] * u[j-1] - lam**(j+1) * u[j+1]**2)``
    with u[-1] = u[N] = 0.  The result is a fresh ownable array.
    """
    u = _as_state_vector(s.u, p.n_shells)
    out = np.empty_like(u)
    _kernels.rhs_linear(p.alpha, p.beta, p.lambda_powers, u, out)
    return out


def energy_flux(p: ModelParams, s: ShellState) -> FluxVector:
    """Energy flux across every interface, derived from the coupling.

    d/dt sum(u[l]**2 for l >= j) telescopes to the single boundary term
    ``2*alpha*lam**j * u[j-1]**2 * u[j] + 2*beta*lam**j * u[j-1] * u[j]**2``
    for j >= 1; the j = 0 entry is pinned to exactly 0.0.
    """
    u = _as_state_vector(s.u, p.n_shells)
    lamp = p.lambda_powers
    f = np.empty(p.n_shells, dtype=np.float64)
    f[0] = 0.0
    for j in range(1, p.n_shells):
        f[j] = (
            2.0 * p.alpha * lamp[j] * u[j - 1] * u[j - 1] * u[j]
            + 2.0 * p.beta * lamp[j] * u[j - 1] * u[j] * u[j]
        )
    return FluxVector(f=f, t=s.t)


def shell_index_check(j: int, n_shells: int) -> int:
    """Validate a shell index against the retained range [0, n_shells)."""
    if int(j) != j or not 0 <= j < n_shells:
        raise IndexOutOfRange(f"shell index {j!r} outside [0, {n_shells})")
    return int(j)
