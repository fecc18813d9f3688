"""Genotype records: the JSON form of a discrete architecture.

Layout of a record::

    {
      "normal": [{"state": 0, "source": 1, "op": "affine_relu"}, ...],
      "reduce": [...],
      "meta": {"num_states": 3, "num_inputs": 2, "ops": [...], "skip_fraction": 0.25}
    }

Every key other than ``meta`` is a cell type. Triples are sorted by
(state, source).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from dartsprime.discretization import DiscreteArchitecture, InvalidArchitecture, validate_in_S
from dartsprime.search_space import CellLayout

META_KEY = "meta"


def skip_fraction(arch: DiscreteArchitecture) -> float:
    """Fraction of selected operators that are plain skip connections."""
    _require_valid(arch)
    picks = [op for c in arch.cells for _, _, op in arch.selections(c)]
    return sum(op == "skip" for op in picks) / len(picks)


def _require_valid(arch: DiscreteArchitecture) -> None:
    ok, violations = validate_in_S(arch)
    if not ok:
        raise InvalidArchitecture("; ".join(f"{v.cell_type}/state {v.state}: {v.constraint} {v.detail}"
                                            for v in violations))


def export_genotype(arch: DiscreteArchitecture) -> dict:
    _require_valid(arch)
    record = {c: [{"state": int(i), "source": int(j), "op": op} for i, j, op in arch.selections(c)]
              for c in arch.cells}
    lay = arch.layout
    record[META_KEY] = {
        "num_states": lay.num_states,
        "num_inputs": lay.num_inputs,
        "ops": list(lay.ops),
        "skip_fraction": skip_fraction(arch),
    }
    return record


def import_genotype(record: dict) -> DiscreteArchitecture:
    try:
        meta = record[META_KEY]
        lay = CellLayout(meta["num_states"], meta["num_inputs"], tuple(meta["ops"]))
    except (KeyError, TypeError) as exc:
        raise InvalidArchitecture(f"genotype record lacks layout metadata: {exc}") from exc
    cells = {}
    for c, triples in record.items():
        if c == META_KEY:
            continue
        s = np.zeros(lay.shape, dtype=np.int8)
        for t in triples:
            try:
                row = lay.edge_index[(t["state"], t["source"])]
                s[row, lay.ops.index(t["op"])] = 1
            except (KeyError, ValueError) as exc:
                raise InvalidArchitecture(f"bad triple {t}: {exc}") from exc
        cells[c] = s
    arch = DiscreteArchitecture(lay, cells)
    _require_valid(arch)
    return arch


def genotype_json(arch: DiscreteArchitecture) -> str:
    return json.dumps(export_genotype(arch), indent=2, sort_keys=True) + "\n"


def save_genotype(arch: DiscreteArchitecture, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(genotype_json(arch))
    return path


def load_genotype(path) -> DiscreteArchitecture:
    return import_genotype(json.loads(Path(path).read_text()))
