"""JSON documents: the MPS exchange format, site plans and cost reports.

MPS exchange format, version 1::

    {
      "version": 1,
      "n": <sites>,
      "scalar": "real" | "complex",
      "total_charge": [N, 2Sz],              # optional, derived if absent
      "site_charges": [[[0,0],[1,1],...], ...],   # per site, one charge per basis state
      "bonds": [[[0,0]], [[0,0],[1,1],...], ...], # n+1 bonds, one charge per index
      "blocks": [                             # per site
        [{"q_left": [..], "q_site": [..], "q_right": [..],
          "rows": r, "cols": c, "data": [...]}, ...], ...
      ]
    }

``data`` is row-major; complex entries are ``[re, im]`` pairs.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .blockdiag import BlockDiagonalDecomposition, MergedPlan
from .givens import plan_to_dict
from .symmetry import BlockSparseTensor, BondSpace, Charge, SiteBasis, SymmetricMPS

FORMAT_VERSION = 1


class FormatError(ValueError):
    """Malformed document; ``where`` is a field path or a line/column."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


def _charge_list(charges) -> list[list[int]]:
    return [[int(x) for x in q] for q in charges]


def _encode_data(m: np.ndarray, scalar: str) -> list:
    flat = np.asarray(m).reshape(-1)
    if scalar == "complex":
        return [[float(z.real), float(z.imag)] for z in flat.astype(complex)]
    return [float(x) for x in flat.real]


def mps_to_dict(mps: SymmetricMPS) -> dict:
    bonds = [mps.tensors[0].left] + [t.right for t in mps.tensors]
    return {
        "version": FORMAT_VERSION,
        "n": mps.n,
        "scalar": mps.scalar_kind,
        "total_charge": [int(x) for x in mps.total_charge],
        "site_charges": [_charge_list(t.site.charges) for t in mps.tensors],
        "bonds": [_charge_list(b.charges) for b in bonds],
        "blocks": [
            [
                {
                    "q_left": list(ql),
                    "q_site": list(qs),
                    "q_right": list(qr),
                    "rows": int(t.blocks[(ql, qs, qr)].shape[0]),
                    "cols": int(t.blocks[(ql, qs, qr)].shape[1]),
                    "data": _encode_data(t.blocks[(ql, qs, qr)], mps.scalar_kind),
                }
                for ql, qs, qr in t.sorted_keys()
            ]
            for t in mps.tensors
        ],
    }


def _require(doc: dict, key: str, where: str, kind: type | tuple) -> Any:
    if not isinstance(doc, dict):
        raise FormatError(where, "expected an object")
    if key not in doc:
        raise FormatError(f"{where}.{key}" if where else key, "missing field")
    value = doc[key]
    if not isinstance(value, kind) or isinstance(value, bool):
        name = kind.__name__ if isinstance(kind, type) else "/".join(k.__name__ for k in kind)
        raise FormatError(f"{where}.{key}" if where else key, f"expected {name}, got {type(value).__name__}")
    return value


def _parse_charge(value, where: str) -> Charge:
    if not isinstance(value, list) or not value or not all(isinstance(x, int) and not isinstance(x, bool) for x in value):
        raise FormatError(where, f"expected a list of integers, got {value!r}")
    return Charge(value)


def _parse_data(values, rows: int, cols: int, scalar: str, where: str) -> np.ndarray:
    if not isinstance(values, list) or len(values) != rows * cols:
        got = len(values) if isinstance(values, list) else type(values).__name__
        raise FormatError(where, f"expected {rows * cols} entries, got {got}")
    try:
        if scalar == "complex":
            arr = np.array(values, dtype=float)
            if arr.shape != (rows * cols, 2):
                raise ValueError
            out = (arr[:, 0] + 1j * arr[:, 1]).reshape(rows, cols)
        else:
            out = np.array(values, dtype=float).reshape(rows, cols)
    except (ValueError, TypeError):
        pair = "[re, im] pairs" if scalar == "complex" else "numbers"
        raise FormatError(where, f"entries must be {pair}") from None
    if not np.all(np.isfinite(out)):
        raise FormatError(where, "non-finite entry")
    return out


def mps_from_dict(doc: Any) -> SymmetricMPS:
    if not isinstance(doc, dict):
        raise FormatError("document", "expected a JSON object")
    version = _require(doc, "version", "", int)
    if version != FORMAT_VERSION:
        raise FormatError("version", f"unsupported version {version} (this reader handles {FORMAT_VERSION})")
    n = _require(doc, "n", "", int)
    if n < 1:
        raise FormatError("n", "need at least one site")
    scalar = _require(doc, "scalar", "", str)
    if scalar not in ("real", "complex"):
        raise FormatError("scalar", f"expected 'real' or 'complex', got {scalar!r}")
    site_charges = _require(doc, "site_charges", "", list)
    bonds = _require(doc, "bonds", "", list)
    blocks = _require(doc, "blocks", "", list)
    if len(site_charges) != n:
        raise FormatError("site_charges", f"expected {n} entries, got {len(site_charges)}")
    if len(bonds) != n + 1:
        raise FormatError("bonds", f"expected {n + 1} entries, got {len(bonds)}")
    if len(blocks) != n:
        raise FormatError("blocks", f"expected {n} entries, got {len(blocks)}")

    spaces = []
    for i, bond in enumerate(bonds):
        if not isinstance(bond, list) or not bond:
            raise FormatError(f"bonds[{i}]", "expected a non-empty list of charges")
        space = BondSpace(tuple(_parse_charge(q, f"bonds[{i}][{j}]") for j, q in enumerate(bond)))
        if not space.is_contiguous():
            raise FormatError(f"bonds[{i}]", "charge sectors must be contiguous")
        spaces.append(space)

    tensors = []
    for i in range(n):
        sc = site_charges[i]
        if not isinstance(sc, list) or not sc:
            raise FormatError(f"site_charges[{i}]", "expected a non-empty list of charges")
        basis = SiteBasis(tuple(_parse_charge(q, f"site_charges[{i}][{j}]") for j, q in enumerate(sc)))
        if not isinstance(blocks[i], list):
            raise FormatError(f"blocks[{i}]", "expected a list of blocks")
        stored = {}
        for j, blk in enumerate(blocks[i]):
            where = f"blocks[{i}][{j}]"
            key = tuple(_parse_charge(_require(blk, k, where, list), f"{where}.{k}") for k in ("q_left", "q_site", "q_right"))
            rows = _require(blk, "rows", where, int)
            cols = _require(blk, "cols", where, int)
            if key in stored:
                raise FormatError(where, "duplicate block key")
            if key[1] not in basis.charges:
                raise FormatError(f"{where}.q_site", f"charge {tuple(key[1])} is not a basis charge of site {i + 1}")
            for side, space, dim in (("q_left", spaces[i], rows), ("q_right", spaces[i + 1], cols)):
                q = key[0] if side == "q_left" else key[2]
                if space.sector_dim(q) != dim:
                    raise FormatError(f"{where}.{side}", f"sector {tuple(q)} has dimension {space.sector_dim(q)}, block says {dim}")
            stored[key] = _parse_data(blk.get("data"), rows, cols, scalar, f"{where}.data")
        tensors.append(BlockSparseTensor(spaces[i], basis, spaces[i + 1], stored))

    if "total_charge" in doc:
        total = _parse_charge(doc["total_charge"], "total_charge")
    else:
        right = spaces[-1].charges
        left = spaces[0].charges
        if len(right) != 1 or len(left) != 1:
            raise FormatError("total_charge", "required when a boundary bond has more than one index")
        total = right[0] - left[0]
    return SymmetricMPS(tensors, total, scalar)


def dumps(doc: Any) -> str:
    return json.dumps(doc, indent=1, sort_keys=False) + "\n"


def loads(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"line {exc.lineno}, column {exc.colno}", exc.msg) from None


def save_mps(mps: SymmetricMPS, path: str | Path) -> None:
    Path(path).write_text(dumps(mps_to_dict(mps)))


def load_mps(path: str | Path) -> SymmetricMPS:
    return mps_from_dict(loads(Path(path).read_text()))


def site_plan_to_dict(index: int, dec: BlockDiagonalDecomposition, plan: MergedPlan) -> dict:
    doc = plan_to_dict(plan)
    doc.update({"a": [int(x) for x in plan.a], "fillers": [bool(x) for x in plan.fillers]})
    return {
        "site": index,
        "rows": dec.size,
        "dim": dec.dim,
        "cols": dec.n_cols,
        "W": [int(x) for x in dec.W],
        "Q": [int(x) for x in dec.Q],
        "block_sizes": dec.block_sizes,
        "block_offsets": [int(x) for x in dec.block_offsets],
        "plan": doc,
    }
