"""Charges, block-sparse MPS tensors and the dense contraction oracle.

Conventions used throughout the package:

* A site tensor ``M`` has index order ``(left bond u, site d, right bond v)``.
  Only blocks with ``q(u) + q(d) == q(v)`` may be stored.
* The state is ``sum M_1^{d_1} ... M_n^{d_n} |d_1 ... d_n>`` and dense
  amplitudes are ordered with site 1 as the most significant digit.
* Right-canonical means ``sum_d M^d (M^d)^dagger = I`` for every site.  The
  site isometry ``U'`` has rows ``(d, v)`` (site-major) and columns ``u``: it
  maps the incoming bond state on the ancilla register to the outgoing
  (site, bond) pair, which is how the sequential preparation circuit uses it.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

DEFAULT_AMPLITUDE_CAP = 2**22


class SymmetryError(ValueError):
    """Raised when an MPS violates its block structure."""


class InfeasibleChargeError(ValueError):
    """Raised when no charge path reaches the requested total charge."""


class NotIsometricError(ValueError):
    def __init__(self, residual: float, tol: float):
        super().__init__(f"site matrix is not an isometry: ||U'^dag U' - I|| = {residual:.3e} > {tol:.1e}")
        self.residual = residual


class RankReductionWarning(UserWarning):
    pass


class Charge(tuple):
    """Additive quantum numbers, e.g. ``(N, 2*Sz)``.

    Behaves like a tuple for hashing and lexicographic ordering, but ``+`` and
    ``-`` act componentwise.
    """

    __slots__ = ()

    def __new__(cls, components: Iterable[int] = ()):
        return super().__new__(cls, (int(c) for c in components))

    @classmethod
    def zero(cls, size: int = 2) -> "Charge":
        return cls((0,) * size)

    def __add__(self, other):
        if len(self) != len(other):
            raise ValueError(f"charge length mismatch: {self} + {other}")
        return Charge(a + b for a, b in zip(self, other))

    def __sub__(self, other):
        if len(self) != len(other):
            raise ValueError(f"charge length mismatch: {self} - {other}")
        return Charge(a - b for a, b in zip(self, other))

    def __neg__(self):
        return Charge(-a for a in self)

    def __repr__(self):
        return f"Charge{tuple(self)}"


@dataclass(frozen=True)
class SiteBasis:
    charges: tuple[Charge, ...]

    def __post_init__(self):
        object.__setattr__(self, "charges", tuple(Charge(c) for c in self.charges))

    @property
    def dim(self) -> int:
        return len(self.charges)

    @classmethod
    def fermionic(cls) -> "SiteBasis":
        """|0,0>, |1,+1/2>, |1,-1/2>, |2,0> with charges (N, 2Sz)."""
        return cls((Charge((0, 0)), Charge((1, 1)), Charge((1, -1)), Charge((2, 0))))

    def index(self, q: Charge) -> int:
        return self.charges.index(q)


@dataclass(frozen=True)
class BondSpace:
    """Virtual bond with one charge per index."""

    charges: tuple[Charge, ...]

    def __post_init__(self):
        object.__setattr__(self, "charges", tuple(Charge(c) for c in self.charges))

    @classmethod
    def from_sectors(cls, sectors: Iterable[tuple[Charge, int]]) -> "BondSpace":
        items = sorted((Charge(q), int(size)) for q, size in sectors)
        return cls(tuple(q for q, size in items for _ in range(size)))

    @property
    def dim(self) -> int:
        return len(self.charges)

    def is_contiguous(self) -> bool:
        seen = set()
        prev = None
        for q in self.charges:
            if q != prev:
                if q in seen:
                    return False
                seen.add(q)
                prev = q
        return True

    @property
    def sectors(self) -> dict[Charge, slice]:
        """Charge -> index range. Assumes contiguous sectors."""
        out: dict[Charge, slice] = {}
        start = 0
        for q, group in itertools.groupby(self.charges):
            size = len(list(group))
            out[q] = slice(start, start + size)
            start += size
        return out

    def sector_dim(self, q: Charge) -> int:
        s = self.sectors.get(q)
        return 0 if s is None else s.stop - s.start


BlockKey = tuple[Charge, Charge, Charge]


@dataclass
class BlockSparseTensor:
    """Rank-3 tensor stored as dense blocks keyed by ``(q_left, q_site, q_right)``.

    The constructor does not check charge conservation so that malformed
    inputs can be reported by :func:`validate`; every operation that consumes
    an MPS validates it first.
    """

    left: BondSpace
    site: SiteBasis
    right: BondSpace
    blocks: dict[BlockKey, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.blocks = {
            (Charge(a), Charge(b), Charge(c)): np.asarray(m) for (a, b, c), m in self.blocks.items()
        }

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.left.dim, self.site.dim, self.right.dim)

    @property
    def nnz(self) -> int:
        return sum(m.size for m in self.blocks.values())

    @property
    def is_complex(self) -> bool:
        return any(np.iscomplexobj(m) for m in self.blocks.values())

    def sorted_keys(self) -> list[BlockKey]:
        return sorted(self.blocks, key=lambda k: (k[0], self.site.index(k[1]), k[2]))

    def to_dense(self) -> np.ndarray:
        dtype = complex if self.is_complex else float
        out = np.zeros(self.shape, dtype=dtype)
        ls, rs = self.left.sectors, self.right.sectors
        for (ql, qs, qr), m in self.blocks.items():
            out[ls[ql], self.site.index(qs), rs[qr]] = m
        return out


@dataclass
class SymmetricMPS:
    tensors: list[BlockSparseTensor]
    total_charge: Charge
    scalar_kind: str = "real"

    def __post_init__(self):
        self.total_charge = Charge(self.total_charge)
        if self.scalar_kind not in ("real", "complex"):
            raise ValueError(f"scalar_kind must be 'real' or 'complex', got {self.scalar_kind!r}")

    @property
    def n(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [self.tensors[0].left.dim] + [t.right.dim for t in self.tensors]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims)

    @property
    def site_dim(self) -> int:
        return self.tensors[0].site.dim

    def density_inverse(self) -> float:
        """Dense tensor size divided by the number of stored entries."""
        dense = sum(int(np.prod(t.shape)) for t in self.tensors)
        nnz = sum(t.nnz for t in self.tensors)
        return dense / nnz


def validate(mps: SymmetricMPS) -> list[str]:
    """List every structural violation in ``mps``; an empty list means valid."""
    problems: list[str] = []
    if mps.n == 0:
        return ["MPS has no sites"]
    width = len(mps.total_charge)
    real = mps.scalar_kind == "real"
    for i, t in enumerate(mps.tensors):
        where = f"site {i}"
        if len(set(t.site.charges)) != t.site.dim:
            problems.append(f"{where}: site basis charges are not distinct")
        for name, bond in (("left", t.left), ("right", t.right)):
            if not bond.is_contiguous():
                problems.append(f"{where}: {name} bond has non-contiguous sectors")
            if any(len(q) != width for q in bond.charges):
                problems.append(f"{where}: {name} bond charge length differs from total charge")
        if i > 0 and mps.tensors[i - 1].right != t.left:
            problems.append(f"{where}: left bond does not match right bond of site {i - 1}")
        if not (t.left.is_contiguous() and t.right.is_contiguous()):
            continue
        ls, rs = t.left.sectors, t.right.sectors
        for ql, qs, qr in sorted(t.blocks):
            m = t.blocks[(ql, qs, qr)]
            key = f"{where}: block {tuple(ql)},{tuple(qs)},{tuple(qr)}"
            if qs not in t.site.charges:
                problems.append(f"{key}: site charge not in basis")
                continue
            if ql not in ls or qr not in rs:
                problems.append(f"{key}: charge not present on bond")
                continue
            if len(ql) != len(qs) or len(qs) != len(qr):
                problems.append(f"{key}: charge length mismatch")
                continue
            if ql + qs != qr:
                problems.append(f"{key}: charge not conserved, {tuple(qr)} != {tuple(ql)} + {tuple(qs)}")
            expected = (t.left.sector_dim(ql), t.right.sector_dim(qr))
            if m.ndim != 2 or m.shape != expected:
                problems.append(f"{key}: shape {m.shape} != sector sizes {expected}")
            elif m.size == 0:
                problems.append(f"{key}: zero-sized block")
            if real and np.iscomplexobj(m):
                problems.append(f"{key}: complex data in a real MPS")
    first, last = mps.tensors[0].left, mps.tensors[-1].right
    if first.dim == 1 and first.charges[0] != Charge.zero(width):
        problems.append("left boundary bond of dimension 1 must carry the zero charge")
    if any(q != mps.total_charge for q in last.charges):
        problems.append("right boundary bond must carry only the total charge")
    return problems


def ensure_valid(mps: SymmetricMPS) -> None:
    problems = validate(mps)
    if problems:
        raise SymmetryError("invalid MPS:\n  " + "\n  ".join(problems))


def _charge_counts(basis: SiteBasis, sites: int) -> dict[Charge, int]:
    """Number of product configurations of ``sites`` sites per total charge."""
    width = len(basis.charges[0])
    counts = {Charge.zero(width): 1}
    for _ in range(sites):
        nxt: dict[Charge, int] = {}
        for q, c in counts.items():
            for qs in basis.charges:
                nxt[q + qs] = nxt.get(q + qs, 0) + c
        counts = nxt
    return counts


def random_symmetric_mps(
    n: int,
    chi_cap: int,
    total_charge: Sequence[int],
    seed: int = 0,
    scalar_kind: str = "real",
    basis: SiteBasis | None = None,
    max_sector_dim: int | None = None,
) -> SymmetricMPS:
    """Random block-sparse MPS with every charge-allowed block filled.

    Each bond keeps the charges that are reachable from the left and can still
    reach ``total_charge`` on the right.  A sector gets dimension
    ``min(left count, right count, max_sector_dim)``; if the bond then exceeds
    ``chi_cap`` the sectors are shrunk proportionally (at least 1 each), and
    when there are more sectors than ``chi_cap`` only the largest are kept.
    """
    basis = basis or SiteBasis.fermionic()
    total = Charge(total_charge)
    if n < 1 or chi_cap < 1:
        raise ValueError("need n >= 1 and chi_cap >= 1")
    if total not in _charge_counts(basis, n):
        raise InfeasibleChargeError(f"total charge {tuple(total)} is unreachable with {n} sites")
    rng = np.random.default_rng(seed)

    bonds: list[BondSpace] = []
    for i in range(n + 1):
        left = _charge_counts(basis, i)
        right = _charge_counts(basis, n - i)
        dims = {}
        for q, cl in left.items():
            cr = right.get(total - q, 0)
            if cr:
                d = min(cl, cr)
                if max_sector_dim is not None:
                    d = min(d, max_sector_dim)
                dims[q] = d
        if len(dims) > chi_cap:
            keep = sorted(dims, key=lambda q: (-dims[q], q))[:chi_cap]
            dims = {q: 1 for q in keep}
        elif sum(dims.values()) > chi_cap:
            dims = _shrink(dims, chi_cap)
        bonds.append(BondSpace.from_sectors(dims.items()))

    tensors = []
    for i in range(n):
        left, right = bonds[i], bonds[i + 1]
        rs = right.sectors
        blocks = {}
        for ql, sl in left.sectors.items():
            for qs in basis.charges:
                qr = ql + qs
                if qr not in rs:
                    continue
                shape = (sl.stop - sl.start, rs[qr].stop - rs[qr].start)
                m = rng.standard_normal(shape)
                if scalar_kind == "complex":
                    m = m + 1j * rng.standard_normal(shape)
                blocks[(ql, qs, qr)] = m
        tensors.append(BlockSparseTensor(left, basis, right, blocks))
    return SymmetricMPS(tensors, total, scalar_kind)


def _shrink(dims: dict[Charge, int], cap: int) -> dict[Charge, int]:
    total = sum(dims.values())
    out = {q: max(1, (d * cap) // total) for q, d in dims.items()}
    # hand out any remaining room to the largest sectors, deterministic order
    order = sorted(dims, key=lambda q: (-dims[q], q))
    k = 0
    while sum(out.values()) < cap:
        q = order[k % len(order)]
        if out[q] < dims[q]:
            out[q] += 1
        k += 1
        if k > 4 * cap * len(order):
            break
    while sum(out.values()) > cap:
        q = max((q for q in order if out[q] > 1), key=lambda q: (out[q], q))
        out[q] -= 1
    return out


def contract_to_statevector(mps: SymmetricMPS, cap: int = DEFAULT_AMPLITUDE_CAP) -> np.ndarray:
    """Dense amplitudes, site 1 most significant.

    With a left boundary of dimension ``B_0 > 1`` the boundary index is an
    extra leading digit and the result has length ``B_0 * D**n``.
    """
    b0 = mps.tensors[0].left.dim
    size = b0 * mps.site_dim**mps.n
    if size > cap:
        raise ValueError(f"statevector of {size} amplitudes exceeds cap {cap}")
    psi = np.eye(b0, dtype=complex if any(t.is_complex for t in mps.tensors) else float)
    for t in mps.tensors:
        m = t.to_dense()
        psi = np.einsum("pu,udv->pdv", psi, m).reshape(-1, m.shape[2])
    if psi.shape[1] != 1:
        raise ValueError("right boundary bond must have dimension 1")
    return psi[:, 0]


def _lq_rank_revealing(m: np.ndarray, rtol: float) -> tuple[np.ndarray, np.ndarray, int]:
    """``m = L @ Q`` with orthonormal rows in ``Q``; rank cut at ``rtol``."""
    q, r, perm = scipy.linalg.qr(m.conj().T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > rtol * diag[0])) if len(diag) and diag[0] > 0 else 0
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    # m^dag P = q r  ->  m = P r^dag q^dag
    left = r[:rank, :].conj().T[inv, :]
    return left, q[:, :rank].conj().T, m.shape[0] - rank


def right_canonicalize(mps: SymmetricMPS, rtol: float = 1e-14) -> SymmetricMPS:
    """Sector-wise LQ sweep from the right; the result is normalized.

    Sites 2..n become right-canonical.  Site 1 carries the normalized state
    (for ``B_0 == 1`` that is the canonical condition as well).  Bond sectors
    that turn out rank-deficient are shrunk with a warning.
    """
    ensure_valid(mps)
    tensors = [BlockSparseTensor(t.left, t.site, t.right, dict(t.blocks)) for t in mps.tensors]
    dropped = 0
    for i in range(mps.n - 1, 0, -1):
        t = tensors[i]
        rs = t.right.sectors
        new_blocks: dict[BlockKey, np.ndarray] = {}
        factors: dict[Charge, np.ndarray] = {}
        new_dims: dict[Charge, int] = {}
        for ql in t.left.sectors:
            keys = [(ql, qs, ql + qs) for qs in t.site.charges if (ql, qs, ql + qs) in t.blocks]
            if not keys:
                new_dims[ql] = 0
                factors[ql] = np.zeros((t.left.sector_dim(ql), 0))
                continue
            stacked = np.hstack([t.blocks[k] for k in keys])
            lfac, qfac, lost = _lq_rank_revealing(stacked, rtol)
            dropped += lost
            new_dims[ql] = qfac.shape[0]
            factors[ql] = lfac
            col = 0
            for k in keys:
                w = rs[k[2]].stop - rs[k[2]].start
                if qfac.shape[0]:
                    new_blocks[k] = qfac[:, col:col + w]
                col += w
        new_left = BondSpace.from_sectors((q, d) for q, d in new_dims.items() if d > 0)
        tensors[i] = BlockSparseTensor(new_left, t.site, t.right, new_blocks)
        prev = tensors[i - 1]
        prev_blocks = {}
        for (ql, qs, qr), m in prev.blocks.items():
            if new_dims[qr] > 0:
                prev_blocks[(ql, qs, qr)] = m @ factors[qr]
        tensors[i - 1] = BlockSparseTensor(prev.left, prev.site, new_left, prev_blocks)
    norm = np.sqrt(sum(np.vdot(m, m).real for m in tensors[0].blocks.values()))
    if norm == 0:
        raise SymmetryError("MPS represents the zero vector")
    first = tensors[0]
    tensors[0] = BlockSparseTensor(
        first.left, first.site, first.right, {k: m / norm for k, m in first.blocks.items()}
    )
    if dropped:
        warnings.warn(f"right_canonicalize removed {dropped} numerically null bond directions", RankReductionWarning)
    return SymmetricMPS(tensors, mps.total_charge, mps.scalar_kind)


def isometry_residual(tensor: BlockSparseTensor) -> float:
    u = site_matrix(tensor)
    return float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[1])))


def site_matrix(tensor: BlockSparseTensor) -> np.ndarray:
    """Dense ``U'`` with rows ``(d, v)`` and columns ``u``."""
    m = tensor.to_dense()
    left, d, right = m.shape
    return m.transpose(1, 2, 0).reshape(d * right, left)


@dataclass(frozen=True)
class PatternBlock:
    q_left: Charge
    q_site: Charge
    q_right: Charge
    d: int
    rows: tuple[int, int]
    cols: tuple[int, int]


@dataclass(frozen=True)
class BlockPattern:
    """Block layout of a site isometry ``U'``.

    ``row_groups`` lists every ``(d, q_right)`` row range (including those
    without a stored block), ``col_groups`` every left sector.
    """

    shape: tuple[int, int]
    blocks: tuple[PatternBlock, ...]
    row_groups: tuple[tuple[int, Charge, tuple[int, int]], ...]
    col_groups: tuple[tuple[Charge, tuple[int, int]], ...]


def block_pattern(tensor: BlockSparseTensor) -> BlockPattern:
    right = tensor.right.dim
    rs, ls = tensor.right.sectors, tensor.left.sectors
    row_groups = []
    for d in range(tensor.site.dim):
        for qr, s in rs.items():
            row_groups.append((d, qr, (d * right + s.start, d * right + s.stop)))
    col_groups = tuple((ql, (s.start, s.stop)) for ql, s in ls.items())
    blocks = []
    for ql, qs, qr in tensor.sorted_keys():
        d = tensor.site.index(qs)
        blocks.append(
            PatternBlock(
                ql, qs, qr, d,
                (d * right + rs[qr].start, d * right + rs[qr].stop),
                (ls[ql].start, ls[ql].stop),
            )
        )
    return BlockPattern((tensor.site.dim * right, tensor.left.dim), tuple(blocks), tuple(row_groups), col_groups)


def site_isometry(tensor: BlockSparseTensor, tol: float = 1e-10) -> tuple[np.ndarray, BlockPattern]:
    """Return ``U'`` (shape ``(D*B_right, B_left)``) and its block pattern.

    Raises :class:`NotIsometricError` if the columns are not orthonormal.
    """
    u = site_matrix(tensor)
    residual = float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[1])))
    if residual > tol:
        raise NotIsometricError(residual, tol)
    return u, block_pattern(tensor)
