"""The discrete architecture set: projection, membership, enumeration, pruning.

A member of the set selects, for every intermediate state, exactly two
operators that come from two different source nodes. Indicators are binary
and the "none" operator is never selected.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from dartsprime.search_space import AlphaStore, CellLayout

ENUMERATION_LIMIT = 10**6


class InvalidArchitecture(ValueError):
    pass


@dataclass
class DiscreteArchitecture:
    layout: CellLayout
    cells: dict  # cell type -> (num_edges, num_ops) array of 0/1

    def selections(self, cell_type: str) -> list:
        """``(state, source, op_name)`` triples in state/source order."""
        ind = self.cells[cell_type]
        out = []
        for row, (i, j) in enumerate(self.layout.edges):
            for p in np.flatnonzero(ind[row]):
                out.append((i, j, self.layout.ops[p]))
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteArchitecture):
            return NotImplemented
        return (self.layout == other.layout and self.cells.keys() == other.cells.keys()
                and all(np.array_equal(self.cells[c], other.cells[c]) for c in self.cells))


@dataclass(frozen=True)
class Violation:
    constraint: str  # "S1" edge cardinality, "S2" state cardinality, "S3" binary, "none"
    cell_type: str
    state: int
    detail: str


# ---------------------------------------------------------------------------
# projection


def _source_choices(a: np.ndarray, layout: CellLayout, state: int):
    """Best candidate op per source for one state: (sources, op columns, values)."""
    rows = list(layout.state_rows(state))
    cand = np.asarray(layout.candidate_ops)
    sub = a[np.ix_(rows, cand)]
    best = np.argmax(sub, axis=1)  # first max -> lowest operator index on ties
    vals = sub[np.arange(len(rows)), best]
    return rows, cand[best], vals


def project_cell(a: np.ndarray, layout: CellLayout) -> np.ndarray:
    """Euclidean-nearest member of the discrete set for one cell's activated weights."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape != layout.shape:
        raise ValueError(f"activated weights {a.shape} do not match layout {layout.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("activated weights must be finite")
    if not layout.candidate_ops:
        raise InvalidArchitecture("no selectable operator in the roster")
    s = np.zeros(layout.shape, dtype=np.int8)
    for i in range(layout.num_states):
        rows, ops, vals = _source_choices(a, layout, i)
        if len(rows) < 2:
            raise InvalidArchitecture(f"state {i} has fewer than two available sources")
        order = np.argsort(-vals, kind="stable")  # stable -> lowest source index on ties
        for k in order[:2]:
            s[rows[k], ops[k]] = 1
    return s


def project_to_S(activated: dict, layout: CellLayout) -> DiscreteArchitecture:
    return DiscreteArchitecture(layout, {c: project_cell(a, layout) for c, a in activated.items()})


def decision_margin(a: np.ndarray, layout: CellLayout) -> float:
    """Smallest gap separating a projection decision from its runner-up.

    Covers both the per-source operator argmax and the top-two source cut.
    Samples with a small margin sit near a discontinuity of the projection.
    """
    margin = math.inf
    cand = list(layout.candidate_ops)
    for i in range(layout.num_states):
        rows = list(layout.state_rows(i))
        sub = np.asarray(a)[np.ix_(rows, cand)]
        if sub.shape[1] > 1:
            top2 = np.sort(sub, axis=1)[:, -2:]
            margin = min(margin, float(np.min(top2[:, 1] - top2[:, 0])))
        vals = np.sort(sub.max(axis=1))[::-1]
        if len(vals) > 2:
            margin = min(margin, float(vals[1] - vals[2]))
    return margin


def distance_to_S(activated: dict, layout: CellLayout) -> float:
    """Euclidean norm of activated weights minus their projection, over all cell types."""
    total = 0.0
    for a in activated.values():
        d = np.asarray(a) - project_cell(a, layout)
        total += float(np.sum(d * d))
    return math.sqrt(total)


# ---------------------------------------------------------------------------
# membership and enumeration


def validate_cell(ind: np.ndarray, layout: CellLayout, cell_type: str = "normal") -> list:
    ind = np.asarray(ind)
    out = []
    if ind.shape != layout.shape:
        return [Violation("shape", cell_type, -1, f"expected {layout.shape}, got {ind.shape}")]
    binary = np.isin(ind, (0, 1))
    none_cols = [p for p, name in enumerate(layout.ops) if name == "none"]
    for i in range(layout.num_states):
        rows = list(layout.state_rows(i))
        if not binary[rows].all():
            out.append(Violation("S3", cell_type, i, "indicator outside {0, 1}"))
        for r in rows:
            if ind[r].sum() > 1:
                out.append(Violation("S1", cell_type, i,
                                     f"{int(ind[r].sum())} active operators on edge from node {layout.edges[r][1]}"))
        total = ind[rows].sum()
        if total != 2:
            out.append(Violation("S2", cell_type, i, f"{total} active operators, expected 2"))
        if none_cols and ind[np.ix_(rows, none_cols)].any():
            out.append(Violation("none", cell_type, i, "'none' operator selected"))
    return out


def validate_in_S(arch: DiscreteArchitecture):
    """Return ``(is_valid, violations)``."""
    violations = []
    for c, ind in arch.cells.items():
        violations.extend(validate_cell(ind, arch.layout, c))
    return not violations, violations


def count_S(layout: CellLayout) -> int:
    """Number of members of the set for a single cell type."""
    k = len(layout.candidate_ops)
    n = 1
    for i in range(layout.num_states):
        n *= math.comb(layout.num_inputs + i, 2) * k * k
    return n


def enumerate_S(layout: CellLayout, limit: int = ENUMERATION_LIMIT) -> Iterator[np.ndarray]:
    """Yield every single-cell member of the set, in a deterministic order."""
    n = count_S(layout)
    if n > limit:
        raise ValueError(f"set has {n} members, above the enumeration guard of {limit}")
    cand = layout.candidate_ops
    per_state = []
    for i in range(layout.num_states):
        rows = list(layout.state_rows(i))
        opts = []
        for r1, r2 in itertools.combinations(rows, 2):
            for p1, p2 in itertools.product(cand, repeat=2):
                opts.append(((r1, p1), (r2, p2)))
        per_state.append(opts)
    for combo in itertools.product(*per_state):
        s = np.zeros(layout.shape, dtype=np.int8)
        for pair in combo:
            for r, p in pair:
                s[r, p] = 1
        yield s


def _state_options(layout: CellLayout, state: int) -> np.ndarray:
    """Every valid indicator pattern for one state, flattened over the whole cell."""
    opts = []
    for r1, r2 in itertools.combinations(layout.state_rows(state), 2):
        for p1, p2 in itertools.product(layout.candidate_ops, repeat=2):
            s = np.zeros(layout.shape, dtype=np.int8)
            s[r1, p1] = s[r2, p2] = 1
            opts.append(s.ravel())
    return np.array(opts, dtype=np.int8).reshape(-1, layout.num_edges * len(layout.ops))


def member_matrix(layout: CellLayout, limit: int = ENUMERATION_LIMIT) -> np.ndarray:
    """All single-cell members as rows of flattened indicators.

    States occupy disjoint rows, so the set is the sum of a cartesian product
    of per-state option sets.
    """
    n = count_S(layout)
    if n > limit:
        raise ValueError(f"set has {n} members, above the enumeration guard of {limit}")
    out = np.zeros((1, layout.num_edges * len(layout.ops)), dtype=np.int8)
    for i in range(layout.num_states):
        opts = _state_options(layout, i)
        out = (out[:, None, :] + opts[None, :, :]).reshape(-1, out.shape[1])
    return out


def brute_force_project(a: np.ndarray, layout: CellLayout, members: np.ndarray = None) -> np.ndarray:
    """Nearest member by exhaustive search; test oracle for ``project_cell``."""
    members = member_matrix(layout) if members is None else members
    flat = np.asarray(a, dtype=np.float64).ravel()
    # ||s - a||^2 = ||s||^2 - 2 s.a + ||a||^2 with ||s||^2 = sum(s) for binary s
    d = members.sum(axis=1, dtype=np.float64) - 2.0 * (members @ flat)
    return members[int(np.argmin(d))].reshape(layout.shape)


def random_architecture(layout: CellLayout, cell_types, rng: np.random.Generator) -> DiscreteArchitecture:
    """Uniform sample from the set (per cell type, independently)."""
    cells = {}
    cand = layout.candidate_ops
    for c in cell_types:
        s = np.zeros(layout.shape, dtype=np.int8)
        for i in range(layout.num_states):
            rows = list(layout.state_rows(i))
            picked = rng.choice(len(rows), size=2, replace=False)
            for k in sorted(picked):
                s[rows[k], cand[rng.integers(len(cand))]] = 1
        cells[c] = s
    return DiscreteArchitecture(layout, cells)


# ---------------------------------------------------------------------------
# CRB progressive pruning


def crb_prune_update(store: AlphaStore) -> dict:
    """Prune every operator whose raw weight is non-positive. Pruning is permanent."""
    if store.mode != "crb":
        raise ValueError("progressive pruning only applies to CRB activation")
    for c, t in store.raw.items():
        store.mask[c] &= t.data > 0.0
    return store.mask
