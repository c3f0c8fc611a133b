"""Statevector simulation of the sequential preparation circuit.

Registers: ``n`` site registers of ``r = ceil(log D)`` qubits and one bond
register of ``w = ceil(log chi)`` qubits.  Site ``i`` acts on its own
register and the bond register; the local basis index is ``d * 2^w + v``.

Sparse sites run ``Q^dag``, the rotation layers, the final diagonal, ``W``
and then a sign fix.  Measurement-based uncomputation of each lookup leaves
a classically known sign ``(-1)^{popcount(data & m)}`` where ``m`` is the
measured outcome mask; those signs are carried through the layers by
flipping rotation angles and removed at the end of the site.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .berry import BaselineSiteCircuit, berry_decompose_mps
from .blockdiag import BlockDiagonalDecomposition, MergedPlan, ceil_log2, compile_site
from .costs import (
    CostParams,
    block_diag_cost,
    ceil_div,
    log_ratio,
    permutation_cost,
    signfix_cost,
    site_cost_sparse,
)
from .givens import apply_layer, propagate_signs, SynthesisPlan
from .symmetry import SymmetricMPS, contract_to_statevector

DEFAULT_QUBIT_CAP = 24


class QubitCapError(ValueError):
    pass


class ProgramError(ValueError):
    pass


# -- sign outcomes -------------------------------------------------------------


class SignOutcomeSource:
    """Supplies measurement outcome masks.

    Modes: ``all_plus`` (every mask 0), ``seeded_random`` (deterministic for a
    seed) and ``replay`` (a fixed list of masks, used for exhaustive runs).
    Every draw is recorded as ``(nbits, mask)``.
    """

    def __init__(self, mode: str = "all_plus", seed: int | None = None, outcomes: list[int] | None = None):
        if mode not in ("all_plus", "seeded_random", "replay"):
            raise ValueError(f"unknown sign source mode {mode!r}")
        self.mode = mode
        self.seed = seed
        self._rng = np.random.default_rng(seed) if mode == "seeded_random" else None
        self._queue = list(outcomes or [])
        self.record: list[tuple[int, int]] = []

    def draw(self, nbits: int) -> int:
        if nbits <= 0:
            mask = 0
        elif self.mode == "all_plus":
            mask = 0
        elif self.mode == "seeded_random":
            mask = int(self._rng.integers(0, 1 << nbits))
        else:
            if not self._queue:
                raise ProgramError("replay source ran out of outcomes")
            mask = self._queue.pop(0) & ((1 << nbits) - 1)
        self.record.append((nbits, mask))
        return mask


def parity_signs(values: np.ndarray, mask: int) -> np.ndarray:
    bits = np.bitwise_count(np.asarray(values, dtype=np.int64) & mask)
    return 1 - 2 * (bits.astype(np.int64) & 1)


def encode_angle(angle: float, b: int) -> int:
    return int(np.round(angle / (2 * np.pi) * (1 << b))) % (1 << b)


# -- program -------------------------------------------------------------------


@dataclass
class SparseSiteUnit:
    dec: BlockDiagonalDecomposition
    plan: MergedPlan
    W_reg: np.ndarray
    Q_reg: np.ndarray


@dataclass
class BaselineSiteUnit:
    circuit: BaselineSiteCircuit
    embed: np.ndarray  # completed-matrix index -> register index


@dataclass
class PreparationProgram:
    n: int
    site_dim: int
    r: int
    w: int
    kind: str
    method: str
    units: list = field(default_factory=list)
    params: CostParams = field(default_factory=CostParams)

    @property
    def local_dim(self) -> int:
        return (1 << self.r) << self.w

    @property
    def qubits(self) -> int:
        return self.n * self.r + self.w


def _fill(prefix: list[int], total: int) -> np.ndarray:
    """``prefix`` followed by the unused indices of ``range(total)`` in ascending order."""
    used = set(prefix)
    return np.asarray(prefix + [x for x in range(total) if x not in used], dtype=int)


def _register_maps(rows: int, right: int, left: int, site_dim: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Completed-matrix row/column index -> local register index."""
    row_prefix = [d * (1 << w) + v for d in range(site_dim) for v in range(right)]
    if len(row_prefix) != rows:
        raise ProgramError("row count does not match site and bond dimensions")
    total = site_dim << w
    return _fill(row_prefix, total), _fill(list(range(left)), total)


def compile_program(
    mps: SymmetricMPS,
    method: str = "sparse",
    params: CostParams | None = None,
    qubit_cap: int = DEFAULT_QUBIT_CAP,
) -> PreparationProgram:
    """Compile every site of a right-canonical MPS (site 1 included)."""
    params = params or CostParams()
    bonds = mps.bond_dims
    if bonds[0] != 1:
        raise ProgramError(f"left boundary bond must be 1, got {bonds[0]}")
    if bonds[-1] != 1:
        raise ProgramError(f"right boundary bond must be 1, got {bonds[-1]}")
    site_dim = mps.site_dim
    r, w = ceil_log2(site_dim), ceil_log2(max(bonds))
    if site_dim != 1 << r:
        raise ProgramError(f"site dimension {site_dim} is not a power of two")
    prog = PreparationProgram(mps.n, site_dim, r, w, mps.scalar_kind, method, params=params)
    if prog.qubits > qubit_cap:
        raise QubitCapError(f"{prog.qubits} qubits exceed the simulation cap of {qubit_cap}")
    total = site_dim << w
    if method == "sparse":
        for i, tensor in enumerate(mps.tensors):
            dec, plan = compile_site(tensor, mps.scalar_kind)
            row_map, col_map = _register_maps(dec.size, bonds[i + 1], bonds[i], site_dim, w)
            # extend the padded block-diagonal space with identity up to the register size
            wi = np.concatenate([dec.W, np.arange(dec.dim, total)])
            qi = np.concatenate([dec.Q, np.arange(dec.dim, total)])
            prog.units.append(SparseSiteUnit(dec, plan, row_map[wi], col_map[qi]))
    elif method == "baseline":
        for i, circ in enumerate(berry_decompose_mps(mps)):
            m = circ.m
            if m > 1 << w:
                raise ProgramError(f"baseline block size {m} exceeds the bond register")
            embed = np.asarray([d * (1 << w) + v for d in range(4) for v in range(m)], dtype=int)
            prog.units.append(BaselineSiteUnit(circ, embed))
    else:
        raise ProgramError(f"unknown program method {method!r}")
    return prog


# -- simulation ------------------------------------------------------------------


@dataclass
class SimulationResult:
    state: np.ndarray
    ancilla: np.ndarray
    ancilla_trace_distance: float
    outcomes: list[tuple[int, int]]

    def __iter__(self):
        return iter((self.state, self.ancilla))


def _adapt_layer(layer, signs: np.ndarray, dim: int):
    tmp = SynthesisPlan(dim, [layer], np.zeros(dim), "complex")
    adapted, _ = propagate_signs(tmp, signs[:dim])
    return adapted.layers[0]


def _signed(x: np.ndarray, signs: np.ndarray) -> np.ndarray:
    return x * signs.reshape((-1,) + (1,) * (x.ndim - 1))


def _run_sparse(unit: SparseSiteUnit, x: np.ndarray, source: SignOutcomeSource, b: int, nbits: int) -> np.ndarray:
    """One site.  ``signs`` is the classical record of the sign pattern the
    state currently carries; layers are adapted to it and it is undone last."""
    plan, l = unit.plan, unit.plan.dim
    # Q^dag as a lookup of source indices
    y = x[unit.Q_reg]
    signs = parity_signs(unit.Q_reg, source.draw(nbits))
    y = _signed(y, signs)
    if not plan.is_real and not np.iscomplexobj(y):
        y = y.astype(complex)
    head = y[:l]
    for layer in plan.layers:
        layer = _adapt_layer(layer, signs, l)
        head = apply_layer(layer, head, plan.form)
        if layer.angles:
            m_theta = source.draw(b)
            m_phi = 0 if plan.is_real else source.draw(b)
            new = np.ones(l, dtype=np.int64)
            for i, theta, phi in layer.angles:
                p = layer.first_row(i)
                bit = bin(encode_angle(theta, b) & m_theta).count("1")
                if phi is not None:
                    bit += bin(encode_angle(phi, b) & m_phi).count("1")
                if bit % 2:
                    new[p] = new[p + 1] = -1
            head = _signed(head, new)
            signs[:l] *= new
    if plan.is_real:
        # the +-1 diagonal is never applied; it joins the sign record
        signs[:l] *= np.asarray(plan.final_phase, dtype=np.int64)
    else:
        phases = np.asarray(plan.final_phase)
        head = _signed(head, np.exp(1j * phases))
        enc = np.asarray([encode_angle(ph, b) for ph in phases], dtype=np.int64)
        new = parity_signs(enc, source.draw(b))
        head = _signed(head, new)
        signs[:l] *= new
    y[:l] = head
    # W scatters rows to register positions; the sign record travels along
    z = np.empty_like(y)
    z[unit.W_reg] = y
    reg_signs = np.empty_like(signs)
    reg_signs[unit.W_reg] = signs
    new = parity_signs(np.arange(len(z)), source.draw(nbits))
    z = _signed(z, new)
    reg_signs *= new
    # sign fix
    return _signed(z, reg_signs)


def _run_baseline(unit: BaselineSiteUnit, x: np.ndarray) -> np.ndarray:
    u = unit.circuit.unitary()
    out = x.astype(np.result_type(x, u)).copy()
    idx = unit.embed
    out[idx] = np.tensordot(u, x[idx], axes=(1, 0))
    return out


def simulate_preparation(program: PreparationProgram, sign_source: SignOutcomeSource | None = None) -> SimulationResult:
    """Run the program on ``|0...0>``; returns the site-register state and the bond register's reduced state."""
    source = sign_source or SignOutcomeSource("all_plus")
    n = program.n
    dr, dw = 1 << program.r, 1 << program.w
    nbits = program.r + program.w
    dtype = float if program.kind == "real" else complex
    psi = np.zeros([dr] * n + [dw], dtype=dtype)
    psi[(0,) * (n + 1)] = 1.0
    for i, unit in enumerate(program.units):
        t = np.moveaxis(psi, [i, n], [0, 1])
        shape = t.shape
        x = t.reshape(dr * dw, -1)
        if isinstance(unit, SparseSiteUnit):
            y = _run_sparse(unit, x, source, program.params.b, nbits)
        else:
            y = _run_baseline(unit, x)
        psi = np.moveaxis(y.reshape(shape), [0, 1], [i, n])
    flat = psi.reshape(-1, dw)
    rho = flat.T @ flat.conj()
    target = np.zeros_like(rho)
    target[0, 0] = 1.0
    dist = 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(rho - target))))
    return SimulationResult(flat[:, 0].copy(), rho, dist, list(source.record))


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    return float(abs(np.vdot(a, b)) ** 2 / (na * nb) ** 2)


def global_phase(a: np.ndarray, b: np.ndarray) -> complex:
    """Phase ``g`` with ``b ~ g a``."""
    ov = np.vdot(a, b)
    return complex(ov / abs(ov)) if abs(ov) > 0 else 1.0 + 0j


def verify_against_oracle(mps: SymmetricMPS, program: PreparationProgram, source: SignOutcomeSource | None = None) -> dict:
    result = simulate_preparation(program, source)
    ref = contract_to_statevector(mps)
    ref = ref / np.linalg.norm(ref)
    return {
        "fidelity": fidelity(ref, result.state),
        "ancilla_trace_distance": result.ancilla_trace_distance,
        "global_phase": global_phase(ref, result.state),
        "state": result.state,
    }


def exhaustive_sources(program: PreparationProgram) -> Iterator[SignOutcomeSource]:
    """One replay source per outcome branch.

    Draw widths come from a recording run; the program's draw sequence does
    not depend on the outcomes, so the product covers every branch.
    """
    probe = SignOutcomeSource("all_plus")
    simulate_preparation(program, probe)
    widths = [nb for nb, _ in probe.record]
    for masks in itertools.product(*[range(1 << nb) for nb in widths]):
        yield SignOutcomeSource("replay", outcomes=list(masks))


def branch_count(program: PreparationProgram) -> int:
    probe = SignOutcomeSource("all_plus")
    simulate_preparation(program, probe)
    return 1 << sum(nb for nb, _ in probe.record)


# -- instrumented count ------------------------------------------------------------


def _instrumented_site(unit: SparseSiteUnit, params: CostParams) -> int:
    plan, l = unit.plan, unit.plan.dim
    b, real = params.b, plan.is_real
    bits = b if real else 2 * b
    lg = ceil_log2(l)
    cv = block_diag_cost(list(plan.a), l, b, real, params)
    total = 0
    layer_entries = [e for e in cv.breakdown if e.label.startswith("layer ")]
    for ar, layer, entry in zip(plan.a, plan.layers, layer_entries):
        lam = entry.lam
        total += max(ceil_div(ar, 2 * lam) - 1, 0) + bits * (lam - 1)
        total += log_ratio(l, ar)
        total += (1 if real else 2) * max(b - 2, 0)
        if layer.shifted:
            total += 2 * max(lg - 1, 0)
    if not real:
        lam = next(e.lam for e in cv.breakdown if e.label == "final-phase")
        total += max(ceil_div(l, lam) - 1, 0) + b * (lam - 1) + max(b - 2, 0)
    ov, cap = params.lambda_overrides, params.ancilla_cap
    lam_p = permutation_cost(l, ov.get("permutation"), cap).breakdown[0].lam
    total += 2 * (max((1 << lg) // lam_p - 1, 0) + lg * (lam_p - 1))
    lam_f = signfix_cost(l, ov.get("signfix"), cap).breakdown[0].lam
    total += max((1 << lg) // lam_f - 1, 0) + (lam_f - 1)
    return total


def instrumented_toffoli_count(program: PreparationProgram) -> int:
    """Gate-level Toffoli tally using the same Λ choices as the cost bound.

    Lookups cost ``items/Λ - 1 + bits(Λ - 1)``, a rotation ``b - 2`` and a
    shifted layer a decrement plus increment of ``ceil(log l) - 1`` each.
    """
    total = 0
    for unit in program.units:
        if not isinstance(unit, SparseSiteUnit):
            raise ProgramError("instrumented counts are only defined for sparse programs")
        total += _instrumented_site(unit, program.params)
    return total


def program_cost_bound(program: PreparationProgram) -> int:
    total = 0
    for unit in program.units:
        if not isinstance(unit, SparseSiteUnit):
            raise ProgramError("cost bounds here are only defined for sparse programs")
        total += site_cost_sparse(unit.dec, unit.plan, program.params).toffolis
    return total
