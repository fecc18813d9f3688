"""Cell-based supernetwork over a toy operator roster.

A cell has ``num_inputs`` input nodes (the outputs of the two previous cells)
followed by ``num_states`` intermediate states. State ``i`` receives one edge
from every earlier node ``j`` (inputs first, then states ``0..i-1``), and each
edge carries every operator in the roster. Architecture weights are stored
per cell type as a matrix with one row per edge and one column per operator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from dartsprime import autodiff as ad
from dartsprime.autodiff import ShapeError, Tensor

OPERATOR_KINDS = ("none", "skip", "affine_relu", "affine_tanh", "sep_affine", "avg_proj")
PARAMETER_FREE = frozenset({"none", "skip", "avg_proj"})
DEFAULT_OPS = OPERATOR_KINDS
CELL_TYPES = ("normal", "reduce")


@dataclass(frozen=True)
class CellLayout:
    """Index structure shared by alphas, discrete architectures and genotypes."""

    num_states: int
    num_inputs: int
    ops: tuple

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        if self.num_states < 1:
            raise ValueError("num_states must be >= 1")
        if self.num_inputs < 1:
            raise ValueError("num_inputs must be >= 1")
        if not self.ops:
            raise ValueError("operator set is empty")
        unknown = set(self.ops) - set(OPERATOR_KINDS)
        if unknown:
            raise ValueError(f"unknown operators: {sorted(unknown)}")
        if len(set(self.ops)) != len(self.ops):
            raise ValueError("duplicate operators in roster")

    @cached_property
    def edges(self) -> tuple:
        """``(state, source)`` pairs, grouped by state in increasing order."""
        return tuple((i, j) for i in range(self.num_states) for j in range(self.num_inputs + i))

    @cached_property
    def edge_index(self) -> dict:
        return {e: k for k, e in enumerate(self.edges)}

    def state_rows(self, state: int) -> range:
        start = sum(self.num_inputs + i for i in range(state))
        return range(start, start + self.num_inputs + state)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def shape(self) -> tuple:
        return (self.num_edges, len(self.ops))

    @cached_property
    def candidate_ops(self) -> tuple:
        """Operator columns eligible for selection ("none" never is)."""
        return tuple(p for p, name in enumerate(self.ops) if name != "none")


@dataclass
class SearchSpaceConfig:
    num_inputs: int = 2
    num_states: int = 3
    ops: tuple = DEFAULT_OPS
    width: int = 8
    num_cell_types: int = 2
    num_cells: int = 2
    input_dim: int = 2
    num_classes: int = 2
    activation: str = "softmax"
    bn_eps: float = 1e-5

    def __post_init__(self):
        self.ops = tuple(self.ops)

    def validate(self) -> None:
        CellLayout(self.num_states, self.num_inputs, self.ops)
        if self.activation not in ("softmax", "crb"):
            raise ValueError(f"activation must be 'softmax' or 'crb', got {self.activation!r}")
        if self.activation == "softmax" and "none" not in self.ops:
            raise ValueError("softmax activation requires the 'none' operator in the roster")
        if self.activation == "crb" and "none" in self.ops:
            raise ValueError("crb activation excludes the 'none' operator")
        if self.num_cell_types not in (1, 2):
            raise ValueError("num_cell_types must be 1 or 2")
        for name in ("width", "num_cells", "input_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")

    @property
    def layout(self) -> CellLayout:
        return CellLayout(self.num_states, self.num_inputs, self.ops)

    @property
    def cell_types(self) -> tuple:
        return CELL_TYPES[: self.num_cell_types]

    def cell_type_of(self, k: int) -> str:
        """Cells alternate normal/reduce when two cell types are searched."""
        return self.cell_types[k % self.num_cell_types]

    @classmethod
    def crb_default(cls, **kw) -> "SearchSpaceConfig":
        kw.setdefault("ops", tuple(o for o in DEFAULT_OPS if o != "none"))
        return cls(activation="crb", **kw)


# ---------------------------------------------------------------------------
# operators


def _he_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> Tensor:
    bound = np.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True)


def _bias(n: int) -> Tensor:
    return Tensor(np.zeros(n), requires_grad=True)


def averaging_matrix(width: int) -> np.ndarray:
    """Fixed circulant map averaging each feature with its two neighbours."""
    M = np.zeros((width, width))
    for i in range(width):
        for d in (-1, 0, 1):
            M[(i + d) % width, i] += 1.0 / 3.0
    return M


@dataclass
class OperatorInstance:
    kind: str
    params: list = field(default_factory=list)
    fixed: Optional[Tensor] = None

    def forward(self, x: Tensor) -> Optional[Tensor]:
        """Apply the operator; ``None`` stands for the all-zero output of "none"."""
        k = self.kind
        if k == "none":
            return None
        if k == "skip":
            return x
        if k == "avg_proj":
            return ad.affine(x, self.fixed)
        if k == "affine_relu":
            return ad.relu(ad.affine(x, *self.params))
        if k == "affine_tanh":
            return ad.tanh(ad.affine(x, *self.params))
        if k == "sep_affine":
            W1, b1, W2, b2 = self.params
            return ad.relu(ad.affine(ad.relu(ad.affine(x, W1, b1)), W2, b2))
        raise ValueError(f"unknown operator kind {k!r}")


def make_operator(kind: str, width: int, rng: np.random.Generator) -> OperatorInstance:
    if kind in ("none", "skip"):
        return OperatorInstance(kind)
    if kind == "avg_proj":
        return OperatorInstance(kind, fixed=Tensor(averaging_matrix(width)))
    if kind in ("affine_relu", "affine_tanh"):
        return OperatorInstance(kind, [_he_uniform(rng, width, width), _bias(width)])
    if kind == "sep_affine":
        return OperatorInstance(kind, [_he_uniform(rng, width, width), _bias(width),
                                       _he_uniform(rng, width, width), _bias(width)])
    raise ValueError(f"unknown operator kind {kind!r}")


# ---------------------------------------------------------------------------
# architecture weights


@dataclass
class AlphaStore:
    """Raw architecture weights per cell type, with the CRB prune mask."""

    layout: CellLayout
    mode: str
    raw: dict
    mask: Optional[dict] = None

    @classmethod
    def initial(cls, layout: CellLayout, cell_types, mode: str) -> "AlphaStore":
        init = 0.0 if mode == "softmax" else 0.5
        raw = {c: Tensor(np.full(layout.shape, init), requires_grad=True) for c in cell_types}
        mask = {c: np.ones(layout.shape, dtype=bool) for c in cell_types} if mode == "crb" else None
        return cls(layout, mode, raw, mask)

    @property
    def cell_types(self) -> tuple:
        return tuple(self.raw)

    def parameters(self) -> list:
        return [self.raw[c] for c in self.cell_types]

    def activated_tensors(self) -> dict:
        """Activated weights as graph nodes, so gradients reach the raw values."""
        if self.mode == "softmax":
            return {c: ad.softmax(t, axis=1) for c, t in self.raw.items()}
        return {c: ad.mul(ad.clip(t, 0.0, 1.0), Tensor(self.mask[c].astype(np.float64)))
                for c, t in self.raw.items()}

    def raw_arrays(self) -> dict:
        return {c: t.data.copy() for c, t in self.raw.items()}

    def set_raw(self, arrays: dict) -> None:
        for c, a in arrays.items():
            self.raw[c].data = np.array(a, dtype=np.float64)

    def copy(self) -> "AlphaStore":
        raw = {c: Tensor(t.data.copy(), requires_grad=True) for c, t in self.raw.items()}
        mask = None if self.mask is None else {c: m.copy() for c, m in self.mask.items()}
        return AlphaStore(self.layout, self.mode, raw, mask)


def activation_of(raw: np.ndarray, mode: str, mask: Optional[np.ndarray] = None) -> np.ndarray:
    if mode == "softmax":
        z = raw - raw.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)
    out = np.clip(raw, 0.0, 1.0)
    return out if mask is None else np.where(mask, out, 0.0)


def activate_alpha(store: AlphaStore) -> dict:
    """Activated weights per cell type as plain arrays."""
    return {c: activation_of(t.data, store.mode, None if store.mask is None else store.mask[c])
            for c, t in store.raw.items()}


def activation_vjp(raw: np.ndarray, mode: str, upstream: np.ndarray,
                   mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Pull a gradient on activated weights back to raw weights."""
    if mode == "softmax":
        a = activation_of(raw, mode)
        return a * (upstream - (upstream * a).sum(axis=1, keepdims=True))
    inside = (raw > 0.0) & (raw < 1.0)
    if mask is not None:
        inside &= mask
    return upstream * inside


# ---------------------------------------------------------------------------
# networks


@dataclass
class Cell:
    cell_type: str
    layout: CellLayout
    edge_ops: list
    pre: list
    bn: bool = False
    bn_eps: float = 1e-5

    def parameters(self) -> list:
        out = []
        for adapter in self.pre:
            if adapter is not None:
                out.extend(adapter)
        for ops in self.edge_ops:
            for _, op in ops:
                out.extend(op.params)
        return out


def mixed_edge_forward(x: Tensor, ops: list, weights: Optional[Tensor], row: int,
                       mask_row: Optional[np.ndarray] = None) -> Optional[Tensor]:
    """Weighted sum of every operator on one edge.

    ``ops`` lists ``(column, OperatorInstance)`` pairs. Without ``weights``
    the selected operators are summed with unit weight (discrete network).
    Pruned columns are not evaluated.
    """
    if weights is None:
        outs = [y for y in (op.forward(x) for _, op in ops) if y is not None]
        return ad.add(*outs) if outs else None
    outs = [None] * weights.shape[1]
    for p, op in ops:
        if mask_row is not None and not mask_row[p]:
            continue
        y = op.forward(x)
        if y is not None and y.shape != x.shape:
            raise ShapeError(f"operator {op.kind} changed shape {x.shape} -> {y.shape}")
        outs[p] = y
    return ad.weighted_sum(outs, weights, row, like=x)


def cell_forward(inputs, cell: Cell, weights: Optional[Tensor] = None,
                 mask: Optional[np.ndarray] = None) -> Tensor:
    """Evaluate one cell and return the concatenation of its intermediate states."""
    lay = cell.layout
    if len(inputs) != lay.num_inputs:
        raise ShapeError(f"cell expects {lay.num_inputs} inputs, got {len(inputs)}")
    nodes = []
    for x, adapter in zip(inputs, cell.pre):
        nodes.append(x if adapter is None else ad.affine(x, *adapter))
    width = nodes[0].shape[1]
    for x in nodes:
        if x.shape != nodes[0].shape:
            raise ShapeError(f"cell inputs disagree in shape: {[n.shape for n in nodes]}")
    zero = Tensor(np.zeros(nodes[0].shape))
    for i in range(lay.num_states):
        terms = []
        for row in lay.state_rows(i):
            _, j = lay.edges[row]
            y = mixed_edge_forward(nodes[j], cell.edge_ops[row], weights, row,
                                   None if mask is None else mask[row])
            if y is not None:
                terms.append(y)
        state = ad.add(*terms) if terms else zero
        if cell.bn and weights is not None:
            state = ad.batchnorm(state, cell.bn_eps)
        nodes.append(state)
    out = ad.concat(nodes[lay.num_inputs:], axis=1)
    assert out.shape[1] == lay.num_states * width
    return out


@dataclass
class Network:
    """Stem, stacked cells, classifier head. Used for both supernet and discrete nets."""

    config: SearchSpaceConfig
    stem: list
    cells: list
    head: list

    def parameters(self) -> list:
        out = list(self.stem)
        for cell in self.cells:
            out.extend(cell.parameters())
        out.extend(self.head)
        return out

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))


def _adapter(rng, fan_in: int, width: int):
    return None if fan_in == width else [_he_uniform(rng, fan_in, width), _bias(width)]


def _build(config: SearchSpaceConfig, seed: int, edge_ops_for, bn: bool) -> Network:
    config.validate()
    lay = config.layout
    rng = np.random.default_rng(seed)
    w = config.width
    stem = [_he_uniform(rng, config.input_dim, w), _bias(w)]
    widths = [w]
    cells = []
    for k in range(config.num_cells):
        ctype = config.cell_type_of(k)
        pre = [_adapter(rng, fan_in, w) for fan_in in _cell_inputs(widths, lay.num_inputs)]
        edge_ops = edge_ops_for(ctype, lay, rng)
        cells.append(Cell(ctype, lay, edge_ops, pre, bn=bn, bn_eps=config.bn_eps))
        widths.append(lay.num_states * w)
    head = [_he_uniform(rng, widths[-1], config.num_classes), _bias(config.num_classes)]
    return Network(config, stem, cells, head)


def build_supernet(config: SearchSpaceConfig, seed: int):
    """Build the supernetwork and freshly initialised architecture weights."""

    def all_ops(ctype, lay, rng):
        return [[(p, make_operator(kind, config.width, rng)) for p, kind in enumerate(lay.ops)]
                for _ in lay.edges]

    net = _build(config, seed, all_ops, bn=config.activation == "crb")
    alphas = AlphaStore.initial(config.layout, config.cell_types, config.activation)
    return net, alphas


def build_discrete_network(cells: dict, config: SearchSpaceConfig, seed: int) -> Network:
    """Network holding only the selected operators; ``cells`` maps cell type to 0/1 matrix."""

    def selected(ctype, lay, rng):
        ind = np.asarray(cells[ctype])
        return [[(p, make_operator(lay.ops[p], config.width, rng)) for p in np.flatnonzero(ind[row])]
                for row in range(lay.num_edges)]

    return _build(config, seed, selected, bn=False)


def _cell_inputs(history: list, n: int) -> list:
    return history[-n:] if len(history) >= n else [history[0]] * (n - len(history)) + history


def network_forward(x, net: Network, alphas: Optional[AlphaStore] = None,
                    activated: Optional[dict] = None) -> Tensor:
    """Logits for a batch. Passing ``alphas`` runs the mixed supernet forward.

    ``activated`` may supply precomputed activated-weight tensors so the caller
    can keep a handle on them.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.data.ndim != 2 or x.shape[1] != net.config.input_dim:
        raise ShapeError(f"batch shape {x.shape} does not match input_dim {net.config.input_dim}")
    if alphas is not None and activated is None:
        activated = alphas.activated_tensors()
    s = ad.affine(x, *net.stem)
    history = [s]
    n_in = net.config.num_inputs
    for cell in net.cells:
        weights = None if activated is None else activated[cell.cell_type]
        mask = None if alphas is None or alphas.mask is None else alphas.mask[cell.cell_type]
        out = cell_forward(_cell_inputs(history, n_in), cell, weights, mask)
        history.append(out)
    return ad.affine(history[-1], *net.head)
