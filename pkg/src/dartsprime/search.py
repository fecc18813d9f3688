"""First-order bilevel search with pluggable schedule and regularizer."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from dartsprime import autodiff as ad
from dartsprime.autodiff import Tensor
from dartsprime.data import Dataset
from dartsprime.discretization import (DiscreteArchitecture, InvalidArchitecture, crb_prune_update,
                                       distance_to_S, project_to_S, validate_in_S)
from dartsprime.fimt import FimtState, SchedulerConfig, ewma_update, fimt_trace, schedule_decision
from dartsprime.optim import SGD, Adam, cosine_lr
from dartsprime.regularizers import (AdmmConfig, AdmmState, ProximityConfig, admm_penalty,
                                     admm_update_zu, proximity_grad, proximity_penalty, ramp_c)
from dartsprime.search_space import (AlphaStore, Network, SearchSpaceConfig, activate_alpha,
                                     build_discrete_network, build_supernet, network_forward)

REGULARIZERS = ("none", "proximity", "admm")


@dataclass
class SearchConfig:
    space: SearchSpaceConfig = field(default_factory=SearchSpaceConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    regularizer: str = "proximity"
    proximity: ProximityConfig = field(default_factory=ProximityConfig)
    admm: AdmmConfig = field(default_factory=AdmmConfig)
    epochs: int = 20
    batch_size: int = 32
    w_lr: float = 0.05
    w_lr_min: float = 1e-3
    w_momentum: float = 0.9
    w_weight_decay: float = 3e-4
    w_grad_clip: Optional[float] = 5.0
    alpha_lr: float = 0.05
    alpha_lr_min: float = 0.0
    alpha_betas: tuple = (0.5, 0.999)
    alpha_eps: float = 1e-8
    alpha_weight_decay: Optional[float] = None  # None: 1e-3 for softmax, off for CRB
    alpha_cosine: Optional[bool] = None  # None: on for softmax, off for CRB
    ramp: str = "auto"  # "auto", "alpha_steps" or "epochs"
    seed: int = 101

    def validate(self) -> None:
        self.space.validate()
        self.scheduler.validate()
        self.proximity.validate()
        self.admm.validate()
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"unknown regularizer {self.regularizer!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.ramp not in ("auto", "alpha_steps", "epochs"):
            raise ValueError(f"unknown ramp mode {self.ramp!r}")
        for name in ("w_lr", "w_lr_min", "alpha_lr", "alpha_lr_min", "w_weight_decay"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 <= self.w_momentum < 1:
            raise ValueError("w_momentum must lie in [0, 1)")
        if self.w_grad_clip is not None and self.w_grad_clip <= 0:
            raise ValueError("w_grad_clip must be positive or None")

    @property
    def crb(self) -> bool:
        return self.space.activation == "crb"

    def effective_alpha_weight_decay(self) -> float:
        if self.alpha_weight_decay is not None:
            return self.alpha_weight_decay
        return 0.0 if self.crb else 1e-3

    def effective_alpha_cosine(self) -> bool:
        return (not self.crb) if self.alpha_cosine is None else self.alpha_cosine

    def ramp_mode(self) -> str:
        if self.ramp != "auto":
            return self.ramp
        return "epochs" if self.scheduler.kind == "dynamic_fimt" else "alpha_steps"


# ---------------------------------------------------------------------------
# history


HISTORY_COLUMNS = ("step", "epoch", "trace", "fimt", "h", "fired", "c", "train_loss", "val_loss",
                   "penalty", "distance")


@dataclass
class StepRecord:
    step: int
    epoch: int
    trace: float
    fimt: float
    h: Optional[float]
    fired: bool
    train_loss: float
    c: Optional[float] = None
    val_loss: Optional[float] = None
    penalty: Optional[float] = None
    distance: Optional[float] = None


@dataclass
class SearchHistory:
    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # (epoch, {"raw", "activated", "mask"})
    checkpoints: list = field(default_factory=list)  # (epochs completed, DiscreteArchitecture)
    admm_z: list = field(default_factory=list)  # consensus variable after each ADMM update
    mode: str = "softmax"
    ops: tuple = ()
    num_inputs: int = 2

    @property
    def alpha_steps(self) -> int:
        return sum(r.fired for r in self.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for r in self.records:
            w.writerow(["" if (v := getattr(r, k)) is None else (int(v) if k == "fired" else repr(v))
                        for k in HISTORY_COLUMNS])
        return buf.getvalue()

    def write(self, directory) -> Path:
        """Write ``history.csv`` plus one ``alpha_epoch_NNN.json`` per snapshot."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "history.csv").write_text(self.to_csv())
        for epoch, snap in self.snapshots:
            payload = {"epoch": epoch, "mode": self.mode, "ops": list(self.ops),
                       "num_inputs": self.num_inputs,
                       **{k: {c: np.asarray(a).tolist() for c, a in v.items()}
                          for k, v in snap.items() if v is not None}}
            (d / f"alpha_epoch_{epoch:03d}.json").write_text(json.dumps(payload, sort_keys=True) + "\n")
        return d / "history.csv"


def read_history_csv(path) -> list:
    """Parse a history CSV back into a list of dicts with typed values."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != HISTORY_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        for raw in reader:
            row = {}
            for k, v in raw.items():
                if v == "":
                    row[k] = None
                elif k in ("step", "epoch"):
                    row[k] = int(v)
                elif k == "fired":
                    row[k] = bool(int(v))
                else:
                    row[k] = float(v)
            rows.append(row)
    steps = [r["step"] for r in rows]
    if steps != sorted(set(steps)):
        raise ValueError(f"{path}: steps are not strictly increasing")
    return rows


def read_snapshot(path) -> dict:
    payload = json.loads(Path(path).read_text())
    out = {k: {c: np.asarray(a) for c, a in payload[k].items()}
           for k in ("raw", "activated", "mask") if k in payload}
    out.update(epoch=payload["epoch"], mode=payload["mode"], ops=tuple(payload["ops"]),
               num_inputs=payload.get("num_inputs", 2))
    return out


# ---------------------------------------------------------------------------
# data


def split_dataset(n: int, scheduler: SchedulerConfig, seed: int):
    """Seeded disjoint split of ``range(n)`` sized by the expected step ratio.

    Alternating schedules split 50/50; ratio ``r`` schedules put ``r/(r+1)``
    of the data in the weight-training split.
    """
    ratio = scheduler.step_ratio
    if n < ratio + 1:
        raise ValueError(f"dataset of {n} examples too small for step ratio {ratio}")
    n_train = int(round(n * ratio / (ratio + 1.0)))
    n_train = min(max(n_train, 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


class _Batches:
    """Endless reshuffled minibatches over an index set."""

    def __init__(self, idx: np.ndarray, batch_size: int, rng: np.random.Generator):
        self.idx = idx
        self.bs = min(batch_size, len(idx))
        self.rng = rng
        self._queue: list = []

    def per_epoch(self) -> int:
        return len(self.idx) // self.bs

    def epoch(self):
        perm = self.rng.permutation(self.idx)
        for k in range(self.per_epoch()):
            yield perm[k * self.bs:(k + 1) * self.bs]

    def next(self) -> np.ndarray:
        if not self._queue:
            self._queue = list(self.epoch())
        return self._queue.pop(0)


# ---------------------------------------------------------------------------
# steps


def _constant_activations(alphas: AlphaStore) -> dict:
    return {c: Tensor(a) for c, a in activate_alpha(alphas).items()}


def _clip_norm(grads: list, max_norm: Optional[float]) -> list:
    if max_norm is None:
        return grads
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if norm <= max_norm:
        return grads
    return [g * (max_norm / (norm + 1e-6)) for g in grads]


def w_step(net: Network, alphas: Optional[AlphaStore], x: np.ndarray, y: np.ndarray, opt: SGD,
           grad_clip: Optional[float] = None):
    """One momentum-SGD step on the training loss at fixed architecture weights.

    Returns ``(loss, G)`` where ``G`` is the unclipped gradient list.
    """
    params = net.parameters()
    for p in params:
        p.grad = None
    activated = None if alphas is None else _constant_activations(alphas)
    loss = ad.cross_entropy(network_forward(x, net, alphas, activated), y)
    loss.backward()
    G = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    opt.step(_clip_norm(G, grad_clip))
    for p in params:
        p.grad = None
    return loss.item(), G


@dataclass
class AlphaObjective:
    """Regularizer selection and state for the architecture step."""

    kind: str = "none"
    proximity: ProximityConfig = field(default_factory=ProximityConfig)
    admm: Optional[AdmmState] = None

    def value_and_grad(self, alphas: AlphaStore, c: float):
        raw = alphas.raw_arrays()
        if self.kind == "proximity":
            value = proximity_penalty(activate_alpha(alphas), c, self.proximity, alphas.layout)
            grad = proximity_grad(raw, c, self.proximity, alphas.layout, alphas.mode, alphas.mask)
            return value, grad
        if self.kind == "admm":
            return admm_penalty(raw, self.admm, alphas.mode, alphas.mask)
        return 0.0, {k: np.zeros_like(v) for k, v in raw.items()}


def validation_loss(net: Network, alphas: AlphaStore, x, y) -> Tensor:
    return ad.cross_entropy(network_forward(x, net, alphas), y)


def alpha_gradient(net: Network, alphas: AlphaStore, x, y, objective: AlphaObjective, c: float):
    """Gradient of validation loss plus regularizer with respect to raw weights."""
    w_params = net.parameters()
    flags = [p.requires_grad for p in w_params]
    for p in w_params:
        p.requires_grad = False
    try:
        for t in alphas.parameters():
            t.grad = None
        loss = validation_loss(net, alphas, x, y)
        loss.backward()
    finally:
        for p, f in zip(w_params, flags):
            p.requires_grad = f
    penalty, reg = objective.value_and_grad(alphas, c)
    grads = {k: t.grad + reg[k] for k, t in alphas.raw.items()}
    for t in alphas.parameters():
        t.grad = None
    return loss.item(), penalty, grads


def alpha_step(net: Network, alphas: AlphaStore, x, y, objective: AlphaObjective, opt: Adam, c: float):
    """One Adam step on the architecture weights at the current network weights."""
    loss, penalty, grads = alpha_gradient(net, alphas, x, y, objective, c)
    opt.step([grads[k] for k in alphas.cell_types])
    if alphas.mode == "crb":
        crb_prune_update(alphas)
    return loss, penalty


# ---------------------------------------------------------------------------
# search


@dataclass
class SearchResult:
    arch: DiscreteArchitecture
    history: SearchHistory
    alphas: AlphaStore
    net: Network

    def __iter__(self):
        return iter((self.arch, self.history))


def _snapshot(alphas: AlphaStore) -> dict:
    return {"raw": alphas.raw_arrays(), "activated": activate_alpha(alphas),
            "mask": None if alphas.mask is None else {c: m.astype(np.int8) for c, m in alphas.mask.items()}}


def run_search(config: SearchConfig, dataset: Dataset, checkpoint_every: Optional[int] = None) -> SearchResult:
    """Run the full search and return the projected architecture and the history.

    With ``checkpoint_every`` set, the projected architecture is also recorded
    after every ``checkpoint_every`` completed epochs (starting at 0).
    """
    config.validate()
    space = config.space
    if space.input_dim != dataset.input_dim or space.num_classes != dataset.classes:
        raise ValueError("search space input/class dimensions do not match the dataset")
    rng = np.random.default_rng(config.seed)
    net, alphas = build_supernet(space, int(rng.integers(2**31 - 1)))
    train_idx, valid_idx = split_dataset(len(dataset), config.scheduler, int(rng.integers(2**31 - 1)))
    train = _Batches(train_idx, config.batch_size, np.random.default_rng(rng.integers(2**31 - 1)))
    valid = _Batches(valid_idx, config.batch_size, np.random.default_rng(rng.integers(2**31 - 1)))

    w_opt = SGD(net.parameters(), config.w_lr, config.w_momentum, config.w_weight_decay)
    a_opt = Adam(alphas.parameters(), config.alpha_lr, tuple(config.alpha_betas), config.alpha_eps,
                 config.effective_alpha_weight_decay())
    sched = config.scheduler
    state = FimtState.initial(sched)
    objective = AlphaObjective(config.regularizer, config.proximity)
    if config.regularizer == "admm":
        objective.admm = AdmmState.initial(activate_alpha(alphas), alphas.layout, config.admm)

    steps_per_epoch = train.per_epoch()
    total_steps = steps_per_epoch * config.epochs
    ramp_mode = config.ramp_mode()
    if sched.kind == "alternating":
        planned_alpha = total_steps
    elif sched.kind == "constant":
        planned_alpha = total_steps // sched.k
    else:
        planned_alpha = max(1, int(total_steps / (sched.r + 1)))
    planned_alpha = max(planned_alpha, 1)

    history = SearchHistory(mode=alphas.mode, ops=space.ops, num_inputs=space.num_inputs)
    step = 0
    alpha_index = 0
    for epoch in range(config.epochs):
        if checkpoint_every and epoch % checkpoint_every == 0:
            history.checkpoints.append((epoch, project_to_S(activate_alpha(alphas), alphas.layout)))
        w_opt.lr = cosine_lr(epoch, config.w_lr, config.w_lr_min, config.epochs)
        a_opt.lr = (cosine_lr(epoch, config.alpha_lr, config.alpha_lr_min, config.epochs)
                    if config.effective_alpha_cosine() else config.alpha_lr)
        for batch in train.epoch():
            train_loss, G = w_step(net, alphas, dataset.x[batch], dataset.y[batch], w_opt, config.w_grad_clip)
            trace = fimt_trace(G)
            fimt = ewma_update(state, trace, sched.lam)
            h_before = state.h if sched.kind == "dynamic_fimt" else None
            fired = schedule_decision(sched, state, step)
            rec = StepRecord(step, epoch, trace, fimt, h_before, fired, train_loss)
            if fired:
                if ramp_mode == "epochs":
                    c = ramp_c(epoch, max(config.epochs - 1, 1))
                else:
                    c = ramp_c(min(alpha_index, planned_alpha), planned_alpha)
                vb = valid.next()
                rec.c = c
                rec.val_loss, rec.penalty = alpha_step(net, alphas, dataset.x[vb], dataset.y[vb],
                                                       objective, a_opt, c)
                alpha_index += 1
                if objective.admm is not None and alpha_index % config.admm.period == 0:
                    admm_update_zu(objective.admm, activate_alpha(alphas), alphas.layout)
                    history.admm_z.append({c: z.copy() for c, z in objective.admm.z.items()})
                rec.distance = distance_to_S(activate_alpha(alphas), alphas.layout)
            history.records.append(rec)
            step += 1
        history.snapshots.append((epoch, _snapshot(alphas)))
    arch = project_to_S(activate_alpha(alphas), alphas.layout)
    if checkpoint_every:
        history.checkpoints.append((config.epochs, arch))
    return SearchResult(arch, history, alphas, net)


def extended_run(config: SearchConfig, dataset: Dataset, checkpoint_every: int) -> list:
    """Search while recording projected architectures at fixed epoch intervals.

    Returns ``(epochs_completed, DiscreteArchitecture)`` pairs; the last entry
    is the final architecture.
    """
    if checkpoint_every < 1:
        raise ValueError("checkpoint_every must be >= 1")
    return run_search(config, dataset, checkpoint_every).history.checkpoints


# ---------------------------------------------------------------------------
# retraining


@dataclass
class EvalConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 0.05
    lr_min: float = 0.0
    momentum: float = 0.9
    weight_decay: float = 3e-4
    grad_clip: Optional[float] = 5.0
    seed: int = 0


@dataclass
class RetrainResult:
    test_error: float
    test_loss: float
    num_parameters: int


def evaluate_network(net: Network, x, y) -> tuple:
    logits = network_forward(x, net)
    loss = ad.cross_entropy(logits, y).item()
    err = float(np.mean(np.argmax(logits.data, axis=1) != y))
    return err, loss


def retrain_discrete(arch: DiscreteArchitecture, dataset: Dataset, space: SearchSpaceConfig,
                     config: Optional[EvalConfig] = None) -> RetrainResult:
    """Train the selected-operator network from scratch and score it on held-out data."""
    config = config or EvalConfig()
    ok, violations = validate_in_S(arch)
    if not ok:
        raise InvalidArchitecture(f"cannot retrain an invalid architecture: {violations}")
    rng = np.random.default_rng(config.seed)
    net = build_discrete_network(arch.cells, space, int(rng.integers(2**31 - 1)))
    opt = SGD(net.parameters(), config.lr, config.momentum, config.weight_decay)
    batches = _Batches(np.arange(len(dataset)), config.batch_size, np.random.default_rng(rng.integers(2**31 - 1)))
    for epoch in range(config.epochs):
        opt.lr = cosine_lr(epoch, config.lr, config.lr_min, config.epochs)
        for batch in batches.epoch():
            w_step(net, None, dataset.x[batch], dataset.y[batch], opt, config.grad_clip)
    err, loss = evaluate_network(net, dataset.x_test, dataset.y_test)
    return RetrainResult(err, loss, net.num_parameters())
