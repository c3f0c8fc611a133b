"""Layered Givens-rotation synthesis of unitaries (Clements ordering).

A plan represents ``U = D L_s ... L_1``.  Layer ``L_r`` either pairs rows
``(2i, 2i+1)`` (unshifted) or ``(2i+1, 2i+2)`` (shifted); unlisted pairs are
identity.  Two block forms are used:

* ``"givens"``: ``G(t, p) = [[e^{ip} cos t, -sin t], [e^{ip} sin t, cos t]]``
* ``"ryrz"``:   ``R_y(t) R_z(p)`` with ``R_z(p) = diag(e^{-ip}, e^{ip})``

Real plans carry no phase angles (``phi is None``) and a final diagonal of
signs, so both forms reduce to ``R_y(t)``.
"""

from __future__ import annotations

import cmath
import functools
import math
from dataclasses import dataclass, field

import numpy as np

ZERO_ANGLE = 1e-14
NULL_TOL = 1e-12


class NotUnitaryError(ValueError):
    def __init__(self, residual: float, tol: float):
        super().__init__(f"matrix is not unitary: ||U^dag U - I|| = {residual:.3e} > {tol:.1e}")
        self.residual = residual


class KindMismatchError(ValueError):
    pass


@dataclass
class RotationLayer:
    shifted: bool
    dim: int
    angles: list[tuple[int, float, float | None]] = field(default_factory=list)

    @property
    def parity(self) -> str:
        return "shifted" if self.shifted else "unshifted"

    def first_row(self, block: int) -> int:
        return 2 * block + 1 if self.shifted else 2 * block


@dataclass
class SynthesisPlan:
    dim: int
    layers: list[RotationLayer]
    final_phase: np.ndarray
    kind: str = "complex"
    form: str = "ryrz"

    @property
    def is_real(self) -> bool:
        return self.kind == "real"

    def angle_count(self) -> int:
        return sum(len(layer.angles) for layer in self.layers)


def wrap_angle(x: float) -> float:
    y = (x + np.pi) % (2 * np.pi) - np.pi
    if y <= -np.pi:
        y = np.pi
    return 0.0 if abs(y) < ZERO_ANGLE else float(y)


def block_matrix(theta: float, phi: float | None, form: str) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    if phi is None:
        return np.array([[c, -s], [s, c]])
    if form == "givens":
        e = np.exp(1j * phi)
        return np.array([[e * c, -s], [e * s, c]])
    em, ep = np.exp(-1j * phi), np.exp(1j * phi)
    return np.array([[c * em, -s * ep], [s * em, c * ep]])


def apply_layer(layer: RotationLayer, x: np.ndarray, form: str) -> np.ndarray:
    """Apply ``layer`` to ``x`` whose first axis indexes rows; returns a new array."""
    if not layer.angles:
        return x
    complex_needed = any(phi is not None for _, _, phi in layer.angles)
    out = x.astype(complex) if complex_needed and not np.iscomplexobj(x) else x.copy()
    p = np.array([layer.first_row(i) for i, _, _ in layer.angles])
    g = np.stack([block_matrix(theta, phi, form) for _, theta, phi in layer.angles])
    g = g.reshape(g.shape + (1,) * (x.ndim - 1))
    a, b = out[p], out[p + 1]
    out[p] = g[:, 0, 0] * a + g[:, 0, 1] * b
    out[p + 1] = g[:, 1, 0] * a + g[:, 1, 1] * b
    return out


def final_diagonal(plan: SynthesisPlan) -> np.ndarray:
    if plan.is_real:
        return np.asarray(plan.final_phase, dtype=float)
    return np.exp(1j * np.asarray(plan.final_phase, dtype=float))


def reconstruct(plan: SynthesisPlan) -> np.ndarray:
    """Dense ``D L_s ... L_1``."""
    m = np.eye(plan.dim, dtype=float if plan.is_real else complex)
    for layer in plan.layers:
        m = apply_layer(layer, m, plan.form)
    return final_diagonal(plan)[:, None] * m


# -- Clements schedule -------------------------------------------------------


@dataclass(frozen=True)
class _Schedule:
    # nulling ops: (side, p, row, col); side "R" mixes columns p, p+1 and
    # zeroes (row, p); side "L" mixes rows p, p+1 and zeroes (p+1, col)
    ops: tuple[tuple[str, int, int, int], ...]
    # application order as op indices, with the layer of each
    order: tuple[int, ...]
    layer_of: tuple[int, ...]
    nlayers: int
    first_shifted: bool


@functools.lru_cache(maxsize=None)
def clements_schedule(n: int) -> _Schedule:
    ops = []
    for i in range(1, n):
        if i % 2 == 1:
            for j in range(i):
                ops.append(("R", i - 1 - j, n - 1 - j, i - 1 - j))
        else:
            for j in range(1, i + 1):
                ops.append(("L", n + j - i - 2, n + j - i - 1, j - 1))
    rights = [k for k, op in enumerate(ops) if op[0] == "R"]
    lefts = [k for k, op in enumerate(ops) if op[0] == "L"]
    order = tuple(rights + lefts[::-1])

    best = None
    for p0 in (0, 1):
        last = [-1] * n
        layer_of = []
        for k in order:
            p = ops[k][1]
            r = max(last[p], last[p + 1]) + 1
            if (r + p0) % 2 != p % 2:
                r += 1
            last[p] = last[p + 1] = r
            layer_of.append(r)
        count = max(layer_of) + 1 if layer_of else 0
        if best is None or count < best[1]:
            best = (layer_of, count, p0)
    layer_of, count, p0 = best
    return _Schedule(tuple(ops), order, tuple(layer_of), count, bool(p0 % 2))


def layer_structure(n: int) -> tuple[int, bool]:
    """Number of layers and whether the first one is shifted, for size ``n``."""
    sched = clements_schedule(n)
    return sched.nlayers, sched.first_shifted


def check_unitary(u: np.ndarray, tol: float = 1e-8) -> None:
    residual = float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])))
    if residual > tol:
        raise NotUnitaryError(residual, tol)


def clements_decompose(u: np.ndarray, kind: str = "complex", fold: bool = True) -> SynthesisPlan:
    """Decompose a unitary into ``dim`` (at most) alternating rotation layers.

    ``kind="real"`` requires a real orthogonal input and produces only
    ``R_y`` blocks with a final sign vector.  With ``fold=False`` a complex
    plan is returned in raw Givens form; :func:`fold_phases` converts it.
    """
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1] or u.shape[0] < 1:
        raise ValueError(f"expected a square matrix, got shape {u.shape}")
    check_unitary(u)
    real = kind == "real"
    if real:
        if np.iscomplexobj(u) and np.max(np.abs(u.imag)) > 0:
            raise KindMismatchError("complex matrix passed with kind='real'")
        work = np.array(u.real if np.iscomplexobj(u) else u, dtype=float)
    else:
        work = np.array(u, dtype=complex)
    n = work.shape[0]
    sched = clements_schedule(n)
    thetas = np.zeros(len(sched.ops))
    phis = np.zeros(len(sched.ops))

    for k, (side, p, row, col) in enumerate(sched.ops):
        if side == "R":
            theta, phi = _null_right(work[row, p], work[row, p + 1], real)
            c, s = math.cos(theta), math.sin(theta)
            e = 1.0 if real else cmath.exp(-1j * phi)
            # U <- U T^{-1}, acting on columns p, p+1
            work[:, p:p + 2] = work[:, p:p + 2] @ np.array([[e * c, e * s], [-s, c]])
            residual = abs(work[row, p])
            work[row, p] = 0.0
        else:
            theta, phi = _null_left(work[p, col], work[p + 1, col], real)
            c, s = math.cos(theta), math.sin(theta)
            e = 1.0 if real else cmath.exp(1j * phi)
            work[p:p + 2] = np.array([[e * c, -s], [e * s, c]]) @ work[p:p + 2]
            residual = abs(work[p + 1, col])
            work[p + 1, col] = 0.0
        if residual > NULL_TOL:
            raise ArithmeticError(f"Givens step left residual {residual:.2e} at ({side}, {p})")
        thetas[k], phis[k] = theta, phi

    diag = np.diag(work).copy()
    if real:
        if np.max(np.abs(np.abs(diag) - 1)) > 1e-9:
            raise ArithmeticError("residual diagonal is not +-1")
        signs = np.sign(diag)
    else:
        phases = np.angle(diag)

    # commute left rotations through the diagonal: T^{-1} D = D' T'
    for k in reversed([k for k, op in enumerate(sched.ops) if op[0] == "L"]):
        p = sched.ops[k][1]
        if real:
            thetas[k] = -signs[p] * signs[p + 1] * thetas[k]
        else:
            alpha, beta = phases[p], phases[p + 1]
            thetas[k], phis[k], phases[p] = -thetas[k], alpha - beta, beta - phis[k]

    p0 = int(sched.first_shifted)
    layers = [RotationLayer(shifted=(r + p0) % 2 == 1, dim=n) for r in range(sched.nlayers)]
    for k, r in zip(sched.order, sched.layer_of):
        p = sched.ops[k][1]
        theta = wrap_angle(thetas[k])
        phi = None if real else wrap_angle(phis[k])
        if theta == 0.0 and not phi:
            continue
        layers[r].angles.append((p // 2, theta, phi))
    for layer in layers:
        layer.angles.sort()

    if real:
        return SynthesisPlan(n, layers, signs.astype(float), "real", "ryrz")
    plan = SynthesisPlan(n, layers, np.array([wrap_angle(x) for x in phases]), "complex", "givens")
    return fold_phases(plan) if fold else plan


def _null_right(a, b, real: bool) -> tuple[float, float]:
    """Angles with ``[a, b] T(theta, phi)^{-1} = [0, *]``."""
    if real:
        return math.atan2(a, b), 0.0
    if abs(a) < 1e-300:
        return 0.0, 0.0
    if abs(b) < 1e-300:
        return math.pi / 2, cmath.phase(a)
    return math.atan2(abs(a), abs(b)), cmath.phase(a) - cmath.phase(b)


def _null_left(x, y, real: bool) -> tuple[float, float]:
    """Angles with ``T(theta, phi) [x, y]^T = [*, 0]^T``."""
    if real:
        return math.atan2(-y, x), 0.0
    if abs(y) < 1e-300:
        return 0.0, 0.0
    if abs(x) < 1e-300:
        return math.pi / 2, 0.0
    return math.atan2(abs(y), abs(x)), cmath.phase(-y) - cmath.phase(x)


def fold_phases(plan: SynthesisPlan) -> SynthesisPlan:
    """Rewrite raw Givens blocks as ``R_y R_z`` and push phases to the final diagonal.

    Sweeping from the first-applied layer, each block absorbs the phases
    ``(b1, b2)`` coming from its right:
    ``G(t, p) diag(e^{ib1}, e^{ib2}) = e^{ib'} R_y(t) R_z(p')`` with
    ``b' = (p + b1 + b2)/2`` and ``p' = (b2 - b1 - p)/2``.
    """
    if plan.form == "ryrz" or plan.is_real:
        return plan
    beta = np.zeros(plan.dim)
    layers = []
    for layer in plan.layers:
        out = RotationLayer(layer.shifted, layer.dim)
        nxt = beta.copy()
        for i, theta, phi in layer.angles:
            p = layer.first_row(i)
            b1, b2 = beta[p], beta[p + 1]
            new_beta = (phi + b1 + b2) / 2
            new_phi = wrap_angle((b2 - b1 - phi) / 2)
            nxt[p] = nxt[p + 1] = new_beta
            if theta != 0.0 or new_phi != 0.0:
                out.angles.append((i, theta, new_phi))
        beta = nxt
        layers.append(out)
    final = np.array([wrap_angle(x) for x in np.asarray(plan.final_phase) + beta])
    return SynthesisPlan(plan.dim, layers, final, plan.kind, "ryrz")


def propagate_signs(plan: SynthesisPlan, incoming_signs) -> tuple[SynthesisPlan, np.ndarray]:
    """Commute a diagonal of signs through the plan.

    Returns ``(plan', outgoing)`` with
    ``reconstruct(plan') @ diag(outgoing) == diag(incoming) @ reconstruct(plan)``.
    Only rotation angles flip (``R_y(t) diag(-1, 1) = diag(-1, 1) R_y(-t)``);
    phase rotations commute with the signs, so ``outgoing == incoming``.
    """
    s = np.asarray(incoming_signs)
    if s.shape != (plan.dim,):
        raise ValueError(f"expected {plan.dim} signs, got shape {s.shape}")
    layers = []
    for layer in plan.layers:
        out = RotationLayer(layer.shifted, layer.dim)
        for i, theta, phi in layer.angles:
            p = layer.first_row(i)
            out.angles.append((i, -theta if s[p] != s[p + 1] else theta, phi))
        layers.append(out)
    return SynthesisPlan(plan.dim, layers, np.array(plan.final_phase), plan.kind, plan.form), s.copy()


def plan_to_dict(plan: SynthesisPlan) -> dict:
    return {
        "dim": plan.dim,
        "kind": plan.kind,
        "form": plan.form,
        "layers": [
            {
                "parity": layer.parity,
                "angles": [[i, t] if phi is None else [i, t, phi] for i, t, phi in layer.angles],
            }
            for layer in plan.layers
        ],
        "final_phase": [float(x) for x in plan.final_phase],
    }


def plan_from_dict(doc: dict) -> SynthesisPlan:
    dim = int(doc["dim"])
    layers = []
    for entry in doc["layers"]:
        if entry["parity"] not in ("shifted", "unshifted"):
            raise ValueError(f"unknown layer parity {entry['parity']!r}")
        angles = [(int(a[0]), float(a[1]), float(a[2]) if len(a) > 2 else None) for a in entry["angles"]]
        layers.append(RotationLayer(entry["parity"] == "shifted", dim, angles))
    return SynthesisPlan(dim, layers, np.array(doc["final_phase"], dtype=float), doc["kind"], doc["form"])
