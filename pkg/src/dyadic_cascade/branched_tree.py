"""Shell models on a rooted d-ary tree instead of a linear ladder.

Nodes are stored in level order: the root is index 0, the children of
node i are d*i+1 .. d*i+d, its parent is (i-1)//d, and generation g
occupies one contiguous block of d**g indices.  Every generation up to
the configured depth is complete, so a node either has all d children or
none.  The ladder models are the d = 1 special case, and the tree right
hand side reproduces them bit for bit there.

Each node couples only to its parent and its children:

* branched Katz-Pavlovic: du_i = lam**g * u_par**2
                                 - lam**(g+1) * u_i * sum(children)
* branched Obukhov:       du_i = lam**g * u_i * u_par
                                 - lam**(g+1) * sum(children**2)

with u_par = 0 at the root and empty child sums at the deepest
generation.  Both variants conserve sum(u**2) exactly: grouping the
drain term of a parent with the drive terms of its children telescopes
the transfer, just as on the ladder.
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
    "TreeVariant",
    "TreeParams",
    "TreeState",
    "validate_tree_params",
    "node_count",
    "parent_index",
    "children_indices",
    "rhs_tree",
    "tree_sobolev_norm",
    "picard_time",
]

_MAX_NODES = 2**24


class TreeVariant(enum.Enum):
    BRANCHED_KP = "branched_kp"
    BRANCHED_OBUKHOV = "branched_obukhov"


def node_count(d: int, depth: int) -> int:
    """Number of nodes in a complete d-ary tree of the given depth."""
    total = 0
    block = 1
    for _ in range(depth + 1):
        total += block
        block *= d
    return total


def parent_index(i: int, d: int) -> int | None:
    """Level-order index of the parent, or None for the root."""
    if i == 0:
        return None
    return (i - 1) // d


def children_indices(i: int, d: int, n_nodes: int) -> range:
    """Level-order indices of the children; empty for the last generation."""
    c0 = d * i + 1
    if c0 >= n_nodes:
        return range(0)
    return range(c0, min(c0 + d, n_nodes))


def _depth_from_count(n_nodes: int, d: int) -> int:
    """Depth of a complete d-ary tree with n_nodes nodes, or raise."""
    total = 0
    block = 1
    depth = -1
    while total < n_nodes:
        total += block
        block *= d
        depth += 1
        if depth > 64:
            break
    if total != n_nodes:
        raise InvalidParams(
            f"{n_nodes} nodes is not a complete {d}-ary tree of any depth"
        )
    return depth


@dataclass(frozen=True)
class TreeParams:
    """Immutable description of one branched model.

    depth counts generations below the root, so depth = 1 means a root
    plus d leaves.  The node budget is capped at 2**24 and lam**(depth+1)
    must stay finite, mirroring the ladder's shell cap.
    """

    lam: float
    d: int
    depth: int
    variant: TreeVariant

    def __post_init__(self) -> None:
        validate_tree_params(self)

    @property
    def node_count(self) -> int:
        return node_count(self.d, self.depth)

    @cached_property
    def levels(self) -> np.ndarray:
        """Generation of each node in level order, read-only."""
        out = np.empty(self.node_count, dtype=np.int64)
        pos = 0
        block = 1
        for g in range(self.depth + 1):
            out[pos : pos + block] = g
            pos += block
            block *= self.d
        out.setflags(write=False)
        return out

    @cached_property
    def level_powers(self) -> np.ndarray:
        """lam**g for g = 0..depth+1 by repeated multiplication, read-only."""
        table = np.empty(self.depth + 2, dtype=np.float64)
        acc = 1.0
        for g in range(self.depth + 2):
            table[g] = acc
            acc *= self.lam
        table.setflags(write=False)
        return table

    @property
    def coupling_weights(self) -> tuple[float, float]:
        """(alpha, beta) weights selecting the variant's coupling."""
        if self.variant is TreeVariant.BRANCHED_KP:
            return 1.0, 0.0
        return 0.0, 1.0


def validate_tree_params(p: TreeParams) -> TreeParams:
    lam = float(p.lam)
    if not np.isfinite(lam) or lam <= 1.0:
        raise InvalidParams(f"lam must be a finite float > 1, got {p.lam!r}")
    if int(p.d) != p.d or p.d < 1:
        raise InvalidParams(f"d must be an integer >= 1, got {p.d!r}")
    if int(p.depth) != p.depth or p.depth < 1:
        raise InvalidParams(f"depth must be an integer >= 1, got {p.depth!r}")
    if not isinstance(p.variant, TreeVariant):
        raise InvalidParams(f"variant must be a TreeVariant member, got {p.variant!r}")
    n = node_count(p.d, p.depth)
    if n > _MAX_NODES:
        raise InvalidParams(
            f"d={p.d}, depth={p.depth} needs {n} nodes, over the 2**24 cap"
        )
    acc = 1.0
    for _ in range(p.depth + 1):
        acc *= lam
    if not np.isfinite(acc):
        raise InvalidParams(
            f"lam**(depth+1) overflows binary64 (lam={lam}, depth={p.depth})"
        )
    return p


@dataclass(frozen=True)
class TreeState:
    """Amplitudes of a complete d-ary tree in level order, at time t.

    The state carries its own arity d so the flat vector is
    self-describing; the depth is recovered from the length and checked
    to be a complete tree.
    """

    u: np.ndarray
    t: float = 0.0
    d: int = 1

    def __post_init__(self) -> None:
        arr = np.asarray(self.u, dtype=np.float64)
        if arr.ndim != 1:
            raise InvalidParams(f"node vector must be one-dimensional, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteState("node vector contains NaN or infinity")
        if not np.isfinite(self.t):
            raise NonFiniteState(f"state time must be finite, got {self.t!r}")
        if int(self.d) != self.d or self.d < 1:
            raise InvalidParams(f"d must be an integer >= 1, got {self.d!r}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "u", arr)
        # raises unless the length closes a complete tree
        object.__setattr__(self, "_depth", _depth_from_count(arr.shape[0], int(self.d)))

    @property
    def n_nodes(self) -> int:
        return int(self.u.shape[0])

    @property
    def depth(self) -> int:
        return self._depth

    def energy(self) -> float:
        return math.fsum(float(x) * float(x) for x in self.u)


def tree_mode_arrays(p: TreeParams):
    """Kernel-ready arrays (mode, alpha, beta, lam, level, d, w_sup)."""
    alpha, beta = p.coupling_weights
    lam = np.ascontiguousarray(p.level_powers)
    levels = np.ascontiguousarray(p.levels)
    w_sup = np.ascontiguousarray(lam[levels])
    return _kernels.MODE_TREE, alpha, beta, lam, levels, int(p.d), w_sup


def rhs_tree(p: TreeParams, s: TreeState) -> np.ndarray:
    """Time derivative of a tree state under the configured variant."""
    if s.d != p.d:
        raise InvalidParams(f"state arity d={s.d} does not match params d={p.d}")
    if s.n_nodes != p.node_count:
        raise InvalidParams(
            f"state has {s.n_nodes} nodes, params describe {p.node_count}"
        )
    alpha, beta = p.coupling_weights
    u = np.ascontiguousarray(s.u, dtype=np.float64)
    out = np.empty_like(u)
    _kernels.rhs_tree(alpha, beta, p.level_powers, p.levels, int(p.d), u, out)
    return out


def tree_sobolev_norm(s: TreeState, lam: float, srho: float) -> float:
    """Sobolev norm sqrt(sum over nodes of lam**(2*srho*g) * u**2).

    g is the node's generation.  Weights are built by repeated
    multiplication with lam**(2*srho); summation is compensated.
    """
    if not np.isfinite(lam) or lam <= 1.0:
        raise InvalidParams(f"lam must be a finite float > 1, got {lam!r}")
    if not np.isfinite(srho):
        raise InvalidParams(f"srho must be finite, got {srho!r}")
    q = lam ** (2.0 * srho)

    def weighted_squares():
        w = 1.0
        pos = 0
        block = 1
        u = s.u
        for _ in range(s.depth + 1):
            for i in range(pos, pos + block):
                x = float(u[i])
                yield w * x * x
            pos += block
            block *= s.d
            w *= q

    return math.sqrt(math.fsum(weighted_squares()))


def picard_time(norm_hs: float, d: int, lam: float, s: float) -> float:
    """Guaranteed local existence horizon for a datum of the given norm.

    The quadratic coupling on a d-ary tree is bounded by
    sqrt(2*(d+1)) * lam**s on the Sobolev ball, so a Picard iteration
    contracts up to T = 1 / (4 * sqrt(2*(d+1)) * lam**s * norm); on
    [0, T] the solution's norm stays below twice the datum's.
    """
    if not np.isfinite(norm_hs) or norm_hs <= 0.0:
        raise InvalidParams(f"norm_hs must be a finite float > 0, got {norm_hs!r}")
    if int(d) != d or d < 1:
        raise InvalidParams(f"d must be an integer >= 1, got {d!r}")
    if not np.isfinite(lam) or lam <= 1.0:
        raise InvalidParams(f"lam must be a finite float > 1, got {lam!r}")
    if not np.isfinite(s) or s < 1.0:
        raise InvalidParams(f"s must be a finite float >= 1, got {s!r}")
    return 1.0 / (4.0 * math.sqrt(2.0 * (d + 1)) * lam**s * norm_hs)


def tree_node_check(i: int, n_nodes: int) -> int:
    """Validate a node index against [0, n_nodes)."""
    if int(i) != i or not 0 <= i < n_nodes:
        raise IndexOutOfRange(f"node index {i!r} outside [0, {n_nodes})")
    return int(i)
