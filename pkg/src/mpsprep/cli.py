"""Command-line front end: gen, synth, cost, verify, compare.

Exit status is 0 on success, 1 when verification fails and 2 for usage or
parse errors.  ``MPSPREP_THREADS`` sets the worker count for per-site work.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .blockdiag import compile_site
from .costs import METHODS, CostParameterError, CostParams, MPSCostReport, mps_total_cost
from .formats import FormatError, dumps, load_mps, mps_to_dict, site_plan_to_dict
from .simulate import SignOutcomeSource, compile_program, fidelity, simulate_preparation
from .symmetry import (
    InfeasibleChargeError,
    SymmetryError,
    contract_to_statevector,
    ensure_valid,
    isometry_residual,
    random_symmetric_mps,
    right_canonicalize,
    site_matrix,
)

EXIT_OK, EXIT_VERIFY, EXIT_USAGE = 0, 1, 2
FIDELITY_TOL = 1e-10
TRACE_TOL = 1e-9


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    output: str | None = None
    method: str = "sparse"
    bitsize: int = 15
    ancilla_cap: int | None = None
    seed: int = 0
    sites: int = 4
    chi: int = 8
    charge: tuple[int, ...] = (4, 0)
    scalar: str = "real"
    max_sector_dim: int | None = None
    seeds: int = 20
    qubit_cap: int = 24
    fmt: str = "table"

    def params(self) -> CostParams:
        return CostParams(b=self.bitsize, ancilla_cap=self.ancilla_cap)


def thread_count() -> int:
    raw = os.environ.get("MPSPREP_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"MPSPREP_THREADS must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise UsageError(f"MPSPREP_THREADS must be a positive integer, got {raw!r}")
    return value


def _parse_charge(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"charge must be comma-separated integers, got {text!r}") from None


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mpsprep", description="Compile and cost block-sparse MPS preparation circuits.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a random symmetric MPS")
    g.add_argument("--sites", type=_positive, default=4)
    g.add_argument("--chi", type=_positive, default=8)
    g.add_argument("--charge", type=_parse_charge, default=(4, 0))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--scalar", choices=("real", "complex"), default="real")
    g.add_argument("--max-sector-dim", type=_positive, default=None)
    g.add_argument("-o", "--output")

    s = sub.add_parser("synth", help="write per-site block-diagonal synthesis plans")
    s.add_argument("input")
    s.add_argument("-o", "--output")

    for name, text in (("cost", "Toffoli and qubit report for one method"), ("compare", "all methods side by side")):
        c = sub.add_parser(name, help=text)
        c.add_argument("input")
        if name == "cost":
            c.add_argument("--method", choices=METHODS, default="sparse")
        c.add_argument("--bitsize", type=_positive, default=15)
        c.add_argument("--ancilla-cap", type=_positive, default=None)
        c.add_argument("--format", dest="fmt", choices=("table", "json"), default="table")
        c.add_argument("-o", "--output")

    v = sub.add_parser("verify", help="canonicalize, compile, simulate and compare with the dense contraction")
    v.add_argument("input")
    v.add_argument("--seeds", type=int, default=20, help="random sign-outcome seeds to try")
    v.add_argument("--bitsize", type=_positive, default=15)
    v.add_argument("--qubit-cap", type=_positive, default=24)
    v.add_argument("-o", "--output")
    return p


def parse_config(argv: list[str]) -> RunConfig:
    ns = build_parser().parse_args(argv)
    return RunConfig(**vars(ns))


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _load_canonical(path: str):
    mps = load_mps(path)
    ensure_valid(mps)
    return right_canonicalize(mps)


# -- commands ------------------------------------------------------------------


def cmd_gen(cfg: RunConfig) -> int:
    mps = random_symmetric_mps(
        cfg.sites, cfg.chi, cfg.charge, seed=cfg.seed, scalar_kind=cfg.scalar, max_sector_dim=cfg.max_sector_dim
    )
    _emit(dumps(mps_to_dict(right_canonicalize(mps))), cfg.output)
    return EXIT_OK


def cmd_synth(cfg: RunConfig) -> int:
    mps = _load_canonical(cfg.input)
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        compiled = list(pool.map(lambda t: compile_site(t, mps.scalar_kind), mps.tensors))
    doc = {
        "version": 1,
        "kind": mps.scalar_kind,
        "sites": [site_plan_to_dict(i + 1, dec, plan) for i, (dec, plan) in enumerate(compiled)],
    }
    _emit(dumps(doc), cfg.output)
    return EXIT_OK


def _summary_row(mps, rep: MPSCostReport) -> dict:
    return {
        "method": rep.method,
        "bond_dim": mps.max_bond,
        "density_inverse": round(mps.density_inverse(), 6),
        "qubits": rep.qubits,
        "toffolis": rep.toffolis,
    }


def _term_totals(rep: MPSCostReport) -> dict[str, int]:
    totals: dict[str, int] = {}
    for e in rep.breakdown:
        term = e.label.split(": ", 1)[1]
        totals[term] = totals.get(term, 0) + e.toffolis
    return totals


def render_cost_table(mps, rep: MPSCostReport) -> str:
    lines = [
        f"method            {rep.method}",
        f"sites             {mps.n}",
        f"bond dims         {' '.join(str(x) for x in mps.bond_dims)}",
        f"density^-1        {mps.density_inverse():.2f}",
        f"qubits            {rep.qubits}",
        f"toffolis          {rep.toffolis}",
        f"ancilla peak      {rep.ancilla_peak}",
        "",
        "term totals",
    ]
    for term, tof in _term_totals(rep).items():
        lines.append(f"  {term:<16}{tof:>14}")
    lines += ["", "per site", f"  {'site':<6}{'toffolis':>14}"]
    for i, tof in enumerate(rep.site_totals, start=1):
        lines.append(f"  {i:<6}{tof:>14}")
    lines += ["", "notes"] + [f"  - {n}" for n in rep.notes]
    return "\n".join(lines) + "\n"


def cmd_cost(cfg: RunConfig) -> int:
    mps = _load_canonical(cfg.input)
    rep = mps_total_cost(mps, cfg.method, cfg.params())
    if cfg.fmt == "json":
        doc = _summary_row(mps, rep)
        doc.update({"terms": _term_totals(rep), "report": rep.to_dict(), "site_totals": rep.site_totals})
        _emit(dumps(doc), cfg.output)
    else:
        _emit(render_cost_table(mps, rep), cfg.output)
    return EXIT_OK


def cmd_compare(cfg: RunConfig) -> int:
    mps = _load_canonical(cfg.input)
    methods = ["dense", "dense_real", "sparse"] if mps.scalar_kind == "real" else ["dense", "sparse"]
    reps = {m: mps_total_cost(mps, m, cfg.params()) for m in methods}
    sparse = reps["sparse"].toffolis
    rows = []
    for m in methods:
        row = _summary_row(mps, reps[m])
        row["improvement"] = round(reps[m].toffolis / sparse, 6)
        rows.append(row)
    ratio = reps["dense"].toffolis / reps["dense_real"].toffolis if "dense_real" in reps else None
    if cfg.fmt == "json":
        _emit(dumps({"rows": rows, "dense_over_dense_real": None if ratio is None else round(ratio, 6)}), cfg.output)
        return EXIT_OK
    lines = [
        f"bond dims   {' '.join(str(x) for x in mps.bond_dims)}",
        f"density^-1  {mps.density_inverse():.2f}",
        "",
        f"{'method':<12}{'qubits':>8}{'toffolis':>16}{'improvement':>14}",
    ]
    for row in rows:
        lines.append(f"{row['method']:<12}{row['qubits']:>8}{row['toffolis']:>16}{row['improvement']:>14.2f}")
    if ratio is not None:
        lines += ["", f"dense / dense_real toffoli ratio  {ratio:.4f}"]
    _emit("\n".join(lines) + "\n", cfg.output)
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    mps = _load_canonical(cfg.input)
    canon_res = max(isometry_residual(t) for t in mps.tensors)
    prog = compile_program(mps, "sparse", CostParams(b=cfg.bitsize), qubit_cap=cfg.qubit_cap)
    block_res = max(u.dec.residual(site_matrix(t)) for u, t in zip(prog.units, mps.tensors))
    ref = contract_to_statevector(mps)
    ref = ref / np.linalg.norm(ref)
    sources = [SignOutcomeSource("all_plus")] + [SignOutcomeSource("seeded_random", seed=s) for s in range(max(cfg.seeds, 0))]
    worst_f, worst_t = 1.0, 0.0
    for src in sources:
        res = simulate_preparation(prog, src)
        worst_f = min(worst_f, fidelity(ref, res.state))
        worst_t = max(worst_t, res.ancilla_trace_distance)
    ok = worst_f >= 1 - FIDELITY_TOL and worst_t < TRACE_TOL
    lines = [
        f"sites                    {mps.n}",
        f"bond dims                {' '.join(str(x) for x in mps.bond_dims)}",
        f"canonical residual       {canon_res:.3e}",
        f"block residual           {block_res:.3e}",
        f"sign sources             {len(sources)}",
        f"fidelity (worst)         {worst_f:.15f}",
        f"infidelity (worst)       {max(1 - worst_f, 0.0):.3e}",
        f"ancilla trace distance   {worst_t:.3e}",
        f"result                   {'PASS' if ok else 'FAIL'}",
    ]
    _emit("\n".join(lines) + "\n", cfg.output)
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {"gen": cmd_gen, "synth": cmd_synth, "cost": cmd_cost, "compare": cmd_compare, "verify": cmd_verify}


def run(cfg: RunConfig) -> int:
    return COMMANDS[cfg.command](cfg)


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
        thread_count()
        return run(cfg)
    except UsageError as exc:
        print(f"mpsprep: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FormatError as exc:
        print(f"mpsprep: parse error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, InfeasibleChargeError, SymmetryError, CostParameterError, ValueError) as exc:
        print(f"mpsprep: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
