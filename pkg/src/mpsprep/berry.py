"""Dense baseline: cosine-sine staging of a four-block site isometry.

The splitting lemma factors an orthonormal stack ``[A; B]`` (both ``m x k``,
``m >= k``) as

    [A; B] = diag(U1, U2) [[D1, -D2], [D2, D1]] [V; 0]

with real diagonal ``D1``, ``D2`` and ``D1^2 + D2^2 = I``.  ``D2`` comes from
a polar decomposition of ``B V^dag``, which stays diagonal when ``B`` is
rank deficient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blockdiag import complete_rectangle
from .symmetry import SymmetricMPS, site_matrix

STACK_TOL = 1e-8
DIAG_TOL = 1e-12


class StackError(ValueError):
    def __init__(self, residual: float, tol: float):
        super().__init__(f"stack columns are not orthonormal: residual {residual:.3e} > {tol:.1e}")
        self.residual = residual


@dataclass
class StackSplit:
    U1: np.ndarray
    U2: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    V: np.ndarray

    @property
    def d1(self) -> np.ndarray:
        return np.diag(self.D1).copy()

    @property
    def d2(self) -> np.ndarray:
        return np.diag(self.D2).copy()

    def middle(self) -> np.ndarray:
        return np.block([[self.D1, -self.D2], [self.D2, self.D1]])

    def reconstruct(self) -> np.ndarray:
        m, k = self.D1.shape
        outer = np.block([[self.U1, np.zeros((m, m))], [np.zeros((m, m)), self.U2]])
        right = np.vstack([self.V, np.zeros((k, k))])
        return outer @ self.middle() @ right


def _diag_rect(d: np.ndarray, m: int) -> np.ndarray:
    out = np.zeros((m, len(d)))
    out[: len(d), : len(d)] = np.diag(d)
    return out


def split_orthonormal(a: np.ndarray, b: np.ndarray) -> StackSplit:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"stack halves must share a 2-d shape, got {a.shape} and {b.shape}")
    m, k = a.shape
    if m < k:
        raise ValueError(f"need m >= k, got {m}x{k}")
    residual = float(np.linalg.norm(a.conj().T @ a + b.conj().T @ b - np.eye(k)))
    if residual > STACK_TOL:
        raise StackError(residual, STACK_TOL)

    u1, s, v = np.linalg.svd(a, full_matrices=True)
    s = np.minimum(s, 1.0)
    # polar decomposition B V^dag = P H via its SVD X S Y^dag
    x, sig, yh = np.linalg.svd(b @ v.conj().T, full_matrices=False)
    p = x @ yh
    h = yh.conj().T @ (sig[:, None] * yh)
    off = np.linalg.norm(h - np.diag(np.diag(h)))
    if off > 1e-10:
        raise ArithmeticError(f"polar factor is not diagonal (off-diagonal norm {off:.2e})")
    d2 = np.clip(np.diag(h).real, 0.0, 1.0)
    u2 = complete_rectangle(p)
    return StackSplit(u1, u2, _diag_rect(s, m), _diag_rect(d2, m), v)


@dataclass
class BaselineSiteCircuit:
    """Stages (in application order) acting on four ``m``-dim blocks.

    1. ``diag(V, V, V, V)`` (dropped when ``V`` is pushed to the previous site)
    2. cosine-sine rotation ``(c1, s1)`` on block pairs (0, 1) and (2, 3)
    3. ``diag(I, W1, W1, I)``
    4. rotation ``(c2, s2)`` on pair (1, 2)
    5. ``diag(I, I, W2, W2)``
    6. rotation ``(c3, s3)`` on pair (2, 3)
    7. ``diag(U1, U2, U3, U4)``
    """

    m: int
    k: int
    V: np.ndarray
    cs: list[tuple[np.ndarray, np.ndarray]]
    W1: np.ndarray
    W2: np.ndarray
    U: list[np.ndarray]
    v_pushed: bool = False

    def stages(self, include_v: bool | None = None) -> list[tuple]:
        include_v = not self.v_pushed if include_v is None else include_v
        eye = np.eye(self.m)
        vpad = eye.astype(self.V.dtype)
        vpad[: self.k, : self.k] = self.V
        out = []
        if include_v:
            out.append(("diag", [vpad] * 4))
        out.append(("rot", [(0, 1), (2, 3)], *self.cs[0]))
        out.append(("diag", [eye, self.W1, self.W1, eye]))
        out.append(("rot", [(1, 2)], *self.cs[1]))
        out.append(("diag", [eye, eye, self.W2, self.W2]))
        out.append(("rot", [(2, 3)], *self.cs[2]))
        out.append(("diag", list(self.U)))
        return out

    def apply(self, x: np.ndarray, include_v: bool | None = None) -> np.ndarray:
        """Apply to ``x`` with leading axis of length ``4m`` (block-major)."""
        y = np.asarray(x, dtype=complex if self.is_complex else None).reshape((4, self.m) + x.shape[1:]).copy()
        for stage in self.stages(include_v):
            if stage[0] == "diag":
                y = np.stack([np.tensordot(mat, y[j], axes=(1, 0)) for j, mat in enumerate(stage[1])])
            else:
                _, pairs, c, s = stage
                shape = (self.m,) + (1,) * (y.ndim - 2)
                c, s = c.reshape(shape), s.reshape(shape)
                for p, q in pairs:
                    yp, yq = y[p].copy(), y[q].copy()
                    y[p] = c * yp - s * yq
                    y[q] = s * yp + c * yq
        return y.reshape(x.shape)

    @property
    def is_complex(self) -> bool:
        mats = [self.V, self.W1, self.W2, *self.U]
        return any(np.iscomplexobj(mat) for mat in mats)

    def unitary(self, include_v: bool | None = None) -> np.ndarray:
        return self.apply(np.eye(4 * self.m), include_v)


def _pad_rows(block: np.ndarray, m: int) -> np.ndarray:
    out = np.zeros((m, block.shape[1]), dtype=block.dtype)
    out[: block.shape[0]] = block
    return out


def pad_isometry(u: np.ndarray, site_dim: int = 4, m: int | None = None) -> np.ndarray:
    """Pad each of the ``site_dim`` row blocks of ``u`` to height ``m``."""
    rows, k = u.shape
    h = rows // site_dim
    m = max(h, k) if m is None else m
    return np.vstack([_pad_rows(u[d * h:(d + 1) * h], m) for d in range(site_dim)])


def _expand(d: np.ndarray, m: int, fill: float) -> np.ndarray:
    out = np.full(m, fill)
    out[: len(d)] = d
    return out


def berry_decompose(u: np.ndarray, site_dim: int = 4) -> BaselineSiteCircuit:
    """Stage a ``(4h) x k`` isometry; blocks are padded to ``m = max(h, k)``."""
    u = np.asarray(u)
    if site_dim != 4:
        raise ValueError(f"the baseline staging needs four row blocks, got site dimension {site_dim}")
    if u.shape[0] % 4:
        raise ValueError(f"row count {u.shape[0]} is not a multiple of 4")
    k = u.shape[1]
    residual = float(np.linalg.norm(u.conj().T @ u - np.eye(k)))
    if residual > STACK_TOL:
        raise StackError(residual, STACK_TOL)
    up = pad_isometry(u, 4)
    m = up.shape[0] // 4
    a1, lower = up[:m], up[m:]

    q, r = np.linalg.qr(lower, mode="complete")
    bmat, r2 = q[:, :m], r[:m]
    b2, b34 = bmat[:m], bmat[m:]
    c, s3 = np.linalg.qr(b34, mode="reduced")
    stack = np.vstack([b2, s3])
    res = float(np.linalg.norm(stack.conj().T @ stack - np.eye(m)))
    if res > 1e-10:
        raise ArithmeticError(f"[B2; S3] is not orthonormal (residual {res:.2e})")

    first = split_orthonormal(a1, r2)
    second = split_orthonormal(b2, s3)
    third = split_orthonormal(c[:m], c[m:])
    cs = [
        (_expand(first.d1, m, 1.0), _expand(first.d2, m, 0.0)),
        (second.d1, second.d2),
        (third.d1, third.d2),
    ]
    w1 = second.V @ first.U2
    w2 = third.V @ second.U2
    return BaselineSiteCircuit(m, k, first.V, cs, w1, w2, [first.U1, second.U1, third.U1, third.U2])


def baseline_residual(circuit: BaselineSiteCircuit, u: np.ndarray) -> float:
    target = pad_isometry(np.asarray(u), 4, circuit.m)
    e0 = np.zeros((4 * circuit.m, circuit.k), dtype=complex)
    e0[: circuit.k] = np.eye(circuit.k)
    return float(np.linalg.norm(circuit.apply(e0, include_v=True) - target))


def berry_decompose_mps(mps: SymmetricMPS) -> list[BaselineSiteCircuit]:
    """Stage every site right to left, pushing each ``V`` into the previous site."""
    mats = [site_matrix(t) for t in mps.tensors]
    circuits: list[BaselineSiteCircuit] = [None] * mps.n  # type: ignore[list-item]
    for i in range(mps.n - 1, -1, -1):
        circ = berry_decompose(mats[i], mps.site_dim)
        if i > 0:
            mats[i - 1] = np.kron(np.eye(mps.site_dim), circ.V) @ mats[i - 1]
            circ.v_pushed = True
        circuits[i] = circ
    return circuits
