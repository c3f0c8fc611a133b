"""Toffoli and ancilla-qubit accounting.

All counts are exact integers.  ``Λ`` parameters are powers of two chosen by
exhaustive scan, optionally subject to an ancilla cap per component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .blockdiag import MergedPlan, ceil_log2, find_permutations, merged_structure
from .symmetry import SymmetricMPS, block_pattern


class CostParameterError(ValueError):
    pass


def ceil_div(a: int, b: int) -> int:
    return -(-int(a) // int(b))


def log_ratio(l: int, a: int) -> int:
    """``ceil(log2(l / a))`` for positive integers, without floating point."""
    t = 0
    while a << t < l:
        t += 1
    return t


def next_pow2(x: int) -> int:
    return 1 << ceil_log2(max(int(x), 1))


def is_pow2(x: int) -> bool:
    return x >= 1 and x & (x - 1) == 0


def _check_lambda(lam: int) -> None:
    if not isinstance(lam, int) or not is_pow2(lam):
        raise CostParameterError(f"Λ must be a power of two >= 1, got {lam!r}")


@dataclass
class CostParams:
    b: int = 15
    ancilla_cap: int | None = None
    lambda_overrides: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.b < 1:
            raise CostParameterError(f"bitsize must be positive, got {self.b}")
        if self.ancilla_cap is not None and self.ancilla_cap < 1:
            raise CostParameterError(f"ancilla cap must be positive, got {self.ancilla_cap}")
        for key, lam in self.lambda_overrides.items():
            _check_lambda(lam)


@dataclass
class CostEntry:
    label: str
    toffolis: int
    qubits: int
    lam: int | None = None


@dataclass
class CostReport:
    breakdown: list[CostEntry] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def toffolis(self) -> int:
        return sum(e.toffolis for e in self.breakdown)

    @property
    def ancilla_peak(self) -> int:
        # components run one after another, so the peak is the largest one
        return max((e.qubits for e in self.breakdown), default=0)

    def add(self, label: str, toffolis: int, qubits: int, lam: int | None = None) -> CostEntry:
        entry = CostEntry(label, int(toffolis), int(qubits), lam)
        self.breakdown.append(entry)
        return entry

    def extend(self, other: "CostReport", prefix: str = "") -> None:
        for e in other.breakdown:
            self.breakdown.append(CostEntry(prefix + e.label, e.toffolis, e.qubits, e.lam))
        for note in other.notes:
            if note not in self.notes:
                self.notes.append(note)

    def term(self, label: str) -> int:
        return sum(e.toffolis for e in self.breakdown if e.label == label)

    def to_dict(self) -> dict:
        return {
            "toffolis": self.toffolis,
            "ancilla_peak": self.ancilla_peak,
            "breakdown": [
                {"label": e.label, "toffolis": e.toffolis, "qubits": e.qubits, "lambda": e.lam}
                for e in self.breakdown
            ],
            "notes": list(self.notes),
        }


# -- QROAM flavors -----------------------------------------------------------


def layer_cost(l: int, b: int, lam: int, real: bool = False) -> tuple[int, int]:
    """Load ``ceil(l/2)`` angles and rotate: ``ceil(l/(2Λ)) + 2bΛ`` (``bΛ`` if real)."""
    _check_lambda(lam)
    bits = b if real else 2 * b
    return ceil_div(l, 2 * lam) + bits * lam, bits * (lam - 1) + log_ratio(l, lam)


def permutation_cost_terms(l: int, lam: int) -> tuple[int, int]:
    """``2^v/Λ + v(Λ-1)`` with ``v = ceil(log l)``; qubits ``vΛ + v - log Λ``."""
    _check_lambda(lam)
    v = ceil_log2(l)
    if lam > 1 << v:
        raise CostParameterError(f"Λ={lam} exceeds 2^{v}")
    return (1 << v) // lam + v * (lam - 1), v * lam + v - ceil_log2(lam)


def signfix_cost_terms(l: int, lam: int) -> tuple[int, int]:
    """``2^v/Λ + Λ``; qubits ``Λ + ceil(log(2^v/Λ))``."""
    _check_lambda(lam)
    v = ceil_log2(l)
    if lam > 1 << v:
        raise CostParameterError(f"Λ={lam} exceeds 2^{v}")
    return (1 << v) // lam + lam, lam + v - ceil_log2(lam)


def qroam_cost(num_items: int, bitsize: int, lam: int, flavor: str = "plain") -> tuple[int, int]:
    """Toffolis and qubits of one QROAM read in the requested flavor.

    ``plain``: ``ceil(L/Λ) + m(Λ-1)`` with ``m(Λ-1) + ceil(log(L/Λ))`` qubits.
    ``layer``: ``num_items`` is the row count ``l``, ``bitsize`` the per-angle
    word (``2b`` complex, ``b`` real).
    ``permutation`` and ``signfix`` ignore ``bitsize``.
    """
    _check_lambda(lam)
    if flavor == "plain":
        return ceil_div(num_items, lam) + bitsize * (lam - 1), bitsize * (lam - 1) + log_ratio(num_items, lam)
    if flavor == "layer":
        return ceil_div(num_items, 2 * lam) + bitsize * lam, bitsize * (lam - 1) + log_ratio(num_items, lam)
    if flavor == "permutation":
        return permutation_cost_terms(num_items, lam)
    if flavor == "signfix":
        return signfix_cost_terms(num_items, lam)
    raise CostParameterError(f"unknown QROAM flavor {flavor!r}")


def scan_lambda(
    fn: Callable[[int], tuple[int, int]],
    max_lam: int,
    cap: int | None = None,
    override: int | None = None,
) -> tuple[int, int, int]:
    """Best ``(Λ, toffolis, qubits)`` over powers of two up to ``max_lam``.

    Ties go to the smaller Λ.  Raises if no candidate fits under ``cap``.
    """
    if override is not None:
        _check_lambda(override)
        tof, qub = fn(override)
        return override, tof, qub
    best = None
    lam = 1
    while lam <= max(max_lam, 1):
        tof, qub = fn(lam)
        if (cap is None or qub <= cap) and (best is None or tof < best[1]):
            best = (lam, tof, qub)
        lam *= 2
    if best is None:
        raise CostParameterError(f"no Λ fits under the ancilla cap {cap}")
    return best


def optimal_layer_cost(l: int, b: int = 15, real: bool = False, cap: int | None = None) -> tuple[int, int]:
    lam, tof, _ = scan_lambda(lambda x: layer_cost(l, b, x, real), next_pow2(ceil_div(l, 2)), cap)
    return lam, tof


# -- dense synthesis ---------------------------------------------------------


def synthesis_cost_dense(l: int, b: int = 15, real: bool = False, params: CostParams | None = None) -> CostReport:
    params = params or CostParams(b=b)
    cap, ov = params.ancilla_cap, params.lambda_overrides
    rep = CostReport()
    lam, per_layer, qub = scan_lambda(
        lambda x: layer_cost(l, b, x, real), next_pow2(ceil_div(l, 2)), cap, ov.get("layer")
    )
    rep.add("layers", l * per_layer, qub, lam)
    if not real:
        rep.add("final-phase", per_layer + b, qub, lam)
    lam_f, tof_f, qub_f = scan_lambda(lambda x: (ceil_div(l, x) + x, x + log_ratio(l, x)), next_pow2(l), cap, ov.get("signfix"))
    rep.add("sign-fix", tof_f, qub_f, lam_f)
    rep.add("increments", l * ceil_log2(l), 0)
    return rep


# -- block-diagonal synthesis --------------------------------------------------


def block_diag_cost(a: list[int], l: int, b: int = 15, real: bool = False, params: CostParams | None = None) -> CostReport:
    """``C_V`` from the active widths ``a_r`` of a merged plan on ``l`` rows."""
    params = params or CostParams(b=b)
    cap, ov = params.ancilla_cap, params.lambda_overrides
    bits = b if real else 2 * b
    rep = CostReport()
    for r, ar in enumerate(a, start=1):
        ctrl = log_ratio(l, ar)

        def fn(x: int, ar=ar, ctrl=ctrl) -> tuple[int, int]:
            return ceil_div(ar, 2 * x) + ctrl + bits * x, bits * (x - 1) + log_ratio(ar, x) + ctrl

        lam, tof, qub = scan_lambda(fn, next_pow2(ceil_div(ar, 2)), cap, ov.get("layer"))
        rep.add(f"layer {r}", tof, qub, lam)
    if not real:
        lam, tof, qub = scan_lambda(lambda x: (ceil_div(l, x) + b * x, b * (x - 1) + log_ratio(l, x)), next_pow2(l), cap, ov.get("final-phase"))
        rep.add("final-phase", tof, qub, lam)
    rep.add("increments", len(a) * ceil_log2(l), 0)
    return rep


def synthesis_cost_block_diag(merged: MergedPlan, b: int = 15, real: bool | None = None, params: CostParams | None = None) -> CostReport:
    real = merged.is_real if real is None else real
    return block_diag_cost(list(merged.a), merged.dim, b, real, params)


def permutation_cost(l: int, lam: int | None = None, cap: int | None = None) -> CostReport:
    rep = CostReport()
    lam, tof, qub = scan_lambda(lambda x: permutation_cost_terms(l, x), next_pow2(l), cap, lam)
    rep.add("permutation", tof, qub, lam)
    return rep


def signfix_cost(l: int, lam: int | None = None, cap: int | None = None) -> CostReport:
    rep = CostReport()
    lam, tof, qub = scan_lambda(lambda x: signfix_cost_terms(l, x), next_pow2(l), cap, lam)
    rep.add("sign-fix", tof, qub, lam)
    return rep


def sparse_cost_from_sizes(sizes: list[int], b: int = 15, real: bool = False, params: CostParams | None = None) -> CostReport:
    """``C_V + 2 C_P + C_F`` for a site whose sorted square blocks have ``sizes``."""
    params = params or CostParams(b=b)
    st = merged_structure(sorted(sizes, reverse=True))
    l = next_pow2(sum(sizes))
    return _sparse_report(st.a, l, b, real, params)


def _sparse_report(a: list[int], l: int, b: int, real: bool, params: CostParams) -> CostReport:
    cap, ov = params.ancilla_cap, params.lambda_overrides
    rep = CostReport()
    cv = block_diag_cost(a, l, b, real, params)
    rep.add("C_V", cv.toffolis, cv.ancilla_peak)
    cp = permutation_cost(l, ov.get("permutation"), cap).breakdown[0]
    rep.add("C_P (W)", cp.toffolis, cp.qubits, cp.lam)
    rep.add("C_P (Q)", cp.toffolis, cp.qubits, cp.lam)
    cf = signfix_cost(l, ov.get("signfix"), cap).breakdown[0]
    rep.add("C_F", cf.toffolis, cf.qubits, cf.lam)
    return rep


def site_cost_sparse(dec, plan: MergedPlan, params: CostParams | None = None, real: bool | None = None) -> CostReport:
    params = params or CostParams()
    real = plan.is_real if real is None else real
    if plan.dim != dec.dim:
        raise ValueError(f"plan dimension {plan.dim} does not match decomposition {dec.dim}")
    return _sparse_report(list(plan.a), dec.dim, params.b, real, params)


# -- dense baseline ------------------------------------------------------------


def site_cost_dense_baseline(chi: int, b: int = 15, real: bool = False, params: CostParams | None = None) -> CostReport:
    """Cost of one site in the dense baseline with ``m = chi``."""
    if chi < 1:
        raise CostParameterError(f"chi must be >= 1, got {chi}")
    params = params or CostParams(b=b)
    cap, ov = params.ancilla_cap, params.lambda_overrides
    bits = b if real else 2 * b
    mult = chi if real else chi + 1
    lg = ceil_log2(chi)
    rep = CostReport()

    lam, tof, qub = scan_lambda(lambda x: (ceil_div(chi, x) + b * x, b * (x - 1) + log_ratio(chi, x)), next_pow2(chi), cap, ov.get("cs"))
    rep.add("cosine-sine", 3 * tof, qub, lam)
    lam, tof, qub = scan_lambda(
        lambda x: (ceil_div(chi, 2 * x) + bits * x, bits * (x - 1) + log_ratio(chi, x)),
        next_pow2(ceil_div(chi, 2)), cap, ov.get("w-stages"),
    )
    rep.add("W stages", 2 * mult * tof, qub, lam)
    lam, tof, qub = scan_lambda(
        lambda x: (ceil_div(2 * chi, x) + bits * x, bits * (x - 1) + log_ratio(2 * chi, x)),
        next_pow2(2 * chi), cap, ov.get("u-stage"),
    )
    rep.add("U stage", mult * tof, qub, lam)
    rep.add("increments", 3 * chi * lg + (0 if real else 3 * b), 0)
    lam, tof, qub = scan_lambda(lambda x: (ceil_div(4 * chi, x) + x, x + log_ratio(4 * chi, x)), next_pow2(4 * chi), cap, ov.get("signfix"))
    rep.add("sign-fix", tof, qub, lam)
    return rep


# -- whole MPS -----------------------------------------------------------------

METHODS = ("sparse", "dense", "dense_real")


def site_block_sizes(tensor) -> list[int]:
    """Sorted square block sizes of a site, from its charge pattern alone."""
    perms = find_permutations(block_pattern(tensor))
    return [len(g[1]) for g in perms.groups]


@dataclass
class MPSCostReport(CostReport):
    site_totals: list[int] = field(default_factory=list)
    qubits: int = 0
    method: str = "sparse"


def mps_total_cost(mps: SymmetricMPS, method: str = "sparse", params: CostParams | None = None) -> MPSCostReport:
    """Sum of per-site costs; the first site is costed like every other site."""
    if method not in METHODS:
        raise CostParameterError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    params = params or CostParams()
    if method == "dense_real" and mps.scalar_kind != "real":
        raise CostParameterError("dense_real requires a real MPS")
    real_sparse = mps.scalar_kind == "real"
    bonds = mps.bond_dims
    rep = MPSCostReport(method=method)
    for i, tensor in enumerate(mps.tensors, start=1):
        if method == "sparse":
            site = sparse_cost_from_sizes(site_block_sizes(tensor), params.b, real_sparse, params)
        else:
            chi = max(bonds[i - 1], bonds[i])
            site = site_cost_dense_baseline(chi, params.b, method == "dense_real", params)
        rep.extend(site, prefix=f"site {i}: ")
        rep.site_totals.append(site.toffolis)
    rep.notes.append("first site costed as a synthesis of its own isometry")
    rep.notes.append("QROAM junk-register measurement corrections are counted inside the sign-fix term")
    chi = max(bonds)
    rep.qubits = mps.n * ceil_log2(mps.site_dim) + ceil_log2(chi) + params.b + rep.ancilla_peak
    return rep


def improvement_factor(dense: CostReport, sparse: CostReport) -> float:
    return dense.toffolis / sparse.toffolis if sparse.toffolis else math.inf
