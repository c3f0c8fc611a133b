"""Block diagonalization of symmetric site isometries.

``[U' *] = W V Q^dag`` with ``V`` block diagonal, blocks sorted by size
(largest first).  Permutations are stored as index maps ``w`` and ``q``:

    [U' *][w[i], q[j]] == V[i, j]

so row ``i`` of ``V`` is row ``w[i]`` of the completed unitary and column
``j`` of ``V`` is its column ``q[j]``.  Columns ``0..B-1`` of the completed
unitary are ``U'``; the rest are free completion columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .givens import RotationLayer, SynthesisPlan, clements_decompose, layer_structure
from .symmetry import BlockPattern, Charge, site_isometry

RESIDUAL_TOL = 1e-10


class StructureError(ValueError):
    pass


class InfeasibleBlockError(ValueError):
    pass


class AlignmentError(ValueError):
    pass


def ceil_log2(x: int) -> int:
    return (int(x) - 1).bit_length() if x > 1 else 0


@dataclass
class Permutations:
    """Index maps: ``rows[k]`` / ``cols[k]`` give the original index at
    pre-sort position ``k``; ``order[i]`` gives the pre-sort position of
    sorted position ``i``."""

    rows: np.ndarray
    cols: np.ndarray
    order: np.ndarray
    groups: list[tuple[Charge | None, list[int], list[int], int]]
    # (label, original rows, original U' columns, completion columns needed)


@dataclass
class BlockDiagonalDecomposition:
    dim: int
    size: int
    n_cols: int
    W: np.ndarray
    Q: np.ndarray
    blocks: list[np.ndarray]
    block_offsets: list[int]
    labels: list[Charge | None] = field(default_factory=list)

    @property
    def block_sizes(self) -> list[int]:
        return [b.shape[0] for b in self.blocks]

    @property
    def is_real(self) -> bool:
        return not any(np.iscomplexobj(b) for b in self.blocks)

    def block_matrix(self) -> np.ndarray:
        return scipy.linalg.block_diag(*self.blocks) if self.blocks else np.zeros((0, 0))

    def assemble(self) -> np.ndarray:
        """The completed unitary ``W V Q^dag`` (``dim x dim``)."""
        v = self.block_matrix()
        out = np.zeros_like(v)
        out[np.ix_(self.W, self.Q)] = v
        return out

    def residual(self, u: np.ndarray) -> float:
        full = self.assemble()
        return float(np.linalg.norm(full[: u.shape[0], : u.shape[1]] - u))


def find_permutations(pattern: BlockPattern) -> Permutations:
    """Group rows by the left sector they feed, then order the square blocks by size."""
    nrows, ncols = pattern.shape
    seen_rows: set[tuple[int, int]] = set()
    by_left: dict[Charge, list] = {}
    for blk in pattern.blocks:
        if blk.rows in seen_rows:
            raise StructureError(f"row range {blk.rows} carries more than one block")
        seen_rows.add(blk.rows)
        by_left.setdefault(blk.q_left, []).append(blk)

    groups = []
    for ql, (c0, c1) in sorted(pattern.col_groups):
        blks = sorted(by_left.get(ql, []), key=lambda b: (b.d, b.rows))
        if any(b.cols != (c0, c1) for b in blks):
            raise StructureError(f"blocks for sector {ql} disagree on column range")
        rows = [r for b in blks for r in range(*b.rows)]
        width = c1 - c0
        if len(rows) < width:
            raise InfeasibleBlockError(
                f"sector {ql}: rectangle is {len(rows)}x{width}, wider than tall (input not canonical?)"
            )
        groups.append((ql, rows, list(range(c0, c1)), len(rows) - width))
    used = {r for _, rows, _, _ in groups for r in rows}
    for r in range(nrows):
        if r not in used:
            groups.append((None, [r], [], 1))

    rows_map, cols_map = [], []
    spare = ncols
    for _, rows, cols, extra in groups:
        rows_map.extend(rows)
        cols_map.extend(cols)
        cols_map.extend(range(spare, spare + extra))
        spare += extra
    if spare != nrows:
        raise StructureError(f"column bookkeeping mismatch: {spare} != {nrows}")

    sizes = [len(g[1]) for g in groups]
    starts = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    ranked = sorted(range(len(groups)), key=lambda g: -sizes[g])
    order = np.concatenate([np.arange(starts[g], starts[g + 1]) for g in ranked]) if groups else np.zeros(0, int)
    return Permutations(
        np.asarray(rows_map, dtype=int),
        np.asarray(cols_map, dtype=int),
        order.astype(int),
        [groups[g] for g in ranked],
    )


def complete_rectangle(rect: np.ndarray) -> np.ndarray:
    """Extend an ``h x w`` matrix with orthonormal columns to an ``h x h`` unitary."""
    h, w = rect.shape
    if w > h:
        raise InfeasibleBlockError(f"rectangle {h}x{w} is wider than tall")
    if w == 0:
        return np.eye(h, dtype=rect.dtype)
    q, _, _ = scipy.linalg.qr(rect, pivoting=True, mode="full")
    return np.hstack([rect, q[:, w:]])


def complete_rectangles(u: np.ndarray, pattern: BlockPattern) -> list[np.ndarray]:
    perms = find_permutations(pattern)
    return [complete_rectangle(u[np.ix_(rows, cols)]) for _, rows, cols, _ in perms.groups]


def block_diagonalize(u: np.ndarray, pattern: BlockPattern, pad: bool = True) -> BlockDiagonalDecomposition:
    """``[U' *] = W V Q^dag``; with ``pad`` the dimension is rounded up to a power of two."""
    u = np.asarray(u)
    if u.shape != pattern.shape:
        raise StructureError(f"matrix shape {u.shape} does not match pattern {pattern.shape}")
    perms = find_permutations(pattern)
    blocks = [complete_rectangle(u[np.ix_(rows, cols)]) for _, rows, cols, _ in perms.groups]
    labels = [g[0] for g in perms.groups]
    size = u.shape[0]
    w = perms.rows[perms.order]
    q = perms.cols[perms.order]
    dim = 1 << ceil_log2(size) if pad else size
    if dim > size:
        one = np.ones((1, 1), dtype=u.dtype)
        blocks += [one.copy() for _ in range(dim - size)]
        labels += [None] * (dim - size)
        extra = np.arange(size, dim)
        w = np.concatenate([w, extra])
        q = np.concatenate([q, extra])
    offsets = np.concatenate([[0], np.cumsum([b.shape[0] for b in blocks])[:-1]]).astype(int).tolist()
    dec = BlockDiagonalDecomposition(dim, size, u.shape[1], w, q, blocks, offsets, labels)
    residual = dec.residual(u)
    if residual > RESIDUAL_TOL:
        raise ArithmeticError(f"block reassembly residual {residual:.2e}")
    return dec


# -- merging per-block plans --------------------------------------------------


@dataclass
class MergedStructure:
    sizes: list[int]
    offsets: list[int]
    lengths: list[int]
    fillers: list[bool]
    first_shifted: bool
    a: list[int]

    @property
    def s(self) -> int:
        return len(self.a)


def merged_structure(sizes: list[int]) -> MergedStructure:
    """Layer alignment from block sizes alone (the Clements layout is data independent).

    A block at offset ``o`` sees global pairs shifted by ``o mod 2``, so its
    global first-layer parity is its local one XOR ``o mod 2``.  Blocks that
    disagree with the first block get one identity filler layer.
    """
    sizes = [int(x) for x in sizes]
    if any(a < b for a, b in zip(sizes, sizes[1:])):
        raise AlignmentError("block sizes must be sorted in descending order")
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int).tolist() if sizes else []
    first = None
    lengths, fillers = [], []
    for size, off in zip(sizes, offsets):
        count, local_shift = layer_structure(size)
        if count == 0:
            lengths.append(0)
            fillers.append(False)
            continue
        parity = local_shift != bool(off % 2)
        if first is None:
            first = parity
        filler = parity != first
        fillers.append(filler)
        lengths.append(count + int(filler))
    s = max(lengths, default=0)
    a = [sum(size for size, n in zip(sizes, lengths) if n >= r) for r in range(1, s + 1)]
    return MergedStructure(sizes, offsets, lengths, fillers, bool(first), a)


@dataclass
class MergedPlan(SynthesisPlan):
    a: list[int] = field(default_factory=list)
    block_sizes: list[int] = field(default_factory=list)
    fillers: list[bool] = field(default_factory=list)

    @property
    def s(self) -> int:
        return len(self.layers)


def merge_block_plans(plans: list[SynthesisPlan]) -> MergedPlan:
    """Combine per-block plans into full-width layers of a single parity each."""
    if not plans:
        raise ValueError("no block plans to merge")
    kinds = {p.kind for p in plans}
    forms = {p.form for p in plans if p.layers and p.kind != "real"}
    if len(kinds) != 1 or len(forms) > 1:
        raise ValueError("block plans mix scalar kinds or block forms")
    kind = kinds.pop()
    form = forms.pop() if forms else "ryrz"
    st = merged_structure([p.dim for p in plans])
    dim = sum(st.sizes)
    layers = [RotationLayer(st.first_shifted != (r % 2 == 1), dim) for r in range(st.s)]
    for plan, off, filler in zip(plans, st.offsets, st.fillers):
        start = int(filler)
        for r, layer in enumerate(plan.layers):
            target = layers[start + r]
            for i, theta, phi in layer.angles:
                p = off + layer.first_row(i)
                if (p % 2 == 1) != target.shifted:
                    raise AlignmentError(f"block pair at global row {p} conflicts with layer parity")
                target.angles.append((p // 2, theta, phi))
    for layer in layers:
        layer.angles.sort()
    final = np.concatenate([np.asarray(p.final_phase, dtype=float) for p in plans])
    return MergedPlan(dim, layers, final, kind, form, a=st.a, block_sizes=st.sizes, fillers=st.fillers)


def synthesize_blocks(dec: BlockDiagonalDecomposition, kind: str | None = None) -> MergedPlan:
    kind = kind or ("real" if dec.is_real else "complex")
    return merge_block_plans([clements_decompose(b, kind) for b in dec.blocks])


def compile_site(tensor, kind: str | None = None, pad: bool = True) -> tuple[BlockDiagonalDecomposition, MergedPlan]:
    """Block-diagonalize and synthesize one canonical site tensor."""
    u, pattern = site_isometry(tensor)
    dec = block_diagonalize(u, pattern, pad=pad)
    return dec, synthesize_blocks(dec, kind)
