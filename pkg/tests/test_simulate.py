import numpy as np
import pytest

from mpsprep import simulate
from mpsprep.costs import CostParams
from mpsprep.simulate import (
    ProgramError,
    QubitCapError,
    SignOutcomeSource,
    branch_count,
    compile_program,
    encode_angle,
    exhaustive_sources,
    instrumented_toffoli_count,
    parity_signs,
    program_cost_bound,
    simulate_preparation,
    verify_against_oracle,
)
from mpsprep.symmetry import (
    BlockSparseTensor,
    BondSpace,
    Charge,
    SiteBasis,
    SymmetricMPS,
    contract_to_statevector,
)

from conftest import canonical_mps


def product_state(digits):
    basis = SiteBasis.fermionic()
    tensors, q = [], Charge.zero()
    for d in digits:
        nq = q + basis.charges[d]
        key = (q, basis.charges[d], nq)
        tensors.append(BlockSparseTensor(BondSpace((q,)), basis, BondSpace((nq,)), {key: np.ones((1, 1))}))
        q = nq
    return SymmetricMPS(tensors, q)


class TestSources:
    def test_all_plus(self):
        src = SignOutcomeSource()
        assert [src.draw(3) for _ in range(4)] == [0] * 4
        assert src.record == [(3, 0)] * 4

    def test_seeded_deterministic(self):
        a, b = SignOutcomeSource("seeded_random", 5), SignOutcomeSource("seeded_random", 5)
        assert [a.draw(6) for _ in range(10)] == [b.draw(6) for _ in range(10)]

    def test_replay_masks_width(self):
        src = SignOutcomeSource("replay", outcomes=[0b1111, 1])
        assert src.draw(2) == 0b11
        assert src.draw(0) == 0
        assert src.draw(3) == 1
        with pytest.raises(ProgramError):
            src.draw(1)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            SignOutcomeSource("coin")

    def test_parity_signs(self):
        assert list(parity_signs(np.array([0, 1, 2, 3]), 0b11)) == [1, -1, -1, 1]

    def test_encode_angle(self):
        assert encode_angle(0.0, 4) == 0
        assert encode_angle(np.pi, 4) == 8
        assert encode_angle(-np.pi / 2, 4) == 12


class TestCorrectness:
    def test_product_state_one_hot(self):
        mps = product_state([1, 3, 0, 2])
        prog = compile_program(mps)
        assert prog.w == 0
        state = simulate_preparation(prog).state
        expected = np.zeros(4 ** 4)
        expected[((1 * 4 + 3) * 4 + 0) * 4 + 2] = 1
        assert np.allclose(np.abs(state), expected)

    @pytest.mark.parametrize("kind", ["real", "complex"])
    @pytest.mark.parametrize("seed", range(4))
    def test_random_mps_all_plus(self, kind, seed):
        mps = canonical_mps(2 + seed % 3, 8, seed, kind)
        out = verify_against_oracle(mps, compile_program(mps))
        assert out["fidelity"] > 1 - 1e-10
        assert out["ancilla_trace_distance"] < 1e-10

    @pytest.mark.parametrize("kind", ["real", "complex"])
    def test_random_sign_outcomes(self, kind):
        mps = canonical_mps(4, 8, 3, kind)
        prog = compile_program(mps)
        for seed in range(10):
            out = verify_against_oracle(mps, prog, SignOutcomeSource("seeded_random", seed))
            assert out["fidelity"] > 1 - 1e-10
            assert out["ancilla_trace_distance"] < 1e-10

    def test_global_phase_unit(self):
        mps = canonical_mps(3, 4, 1, "complex")
        out = verify_against_oracle(mps, compile_program(mps), SignOutcomeSource("seeded_random", 0))
        assert abs(abs(out["global_phase"]) - 1) < 1e-12
        ref = contract_to_statevector(mps)
        assert np.allclose(out["state"], out["global_phase"] * ref / np.linalg.norm(ref), atol=1e-9)

    def test_support_in_charge_sector(self):
        mps = canonical_mps(4, 8, 2)
        state = simulate_preparation(compile_program(mps), SignOutcomeSource("seeded_random", 1)).state
        ref = contract_to_statevector(mps)
        assert np.all(np.abs(state[ref == 0]) < 1e-12)

    def test_exhaustive_two_sites(self):
        mps = canonical_mps(2, 2, 4)
        prog = compile_program(mps, params=CostParams(b=1))
        assert branch_count(prog) > 1
        states = []
        for src in exhaustive_sources(prog):
            out = verify_against_oracle(mps, prog, src)
            assert out["fidelity"] > 1 - 1e-10
            states.append(out["state"])
        assert len(states) == branch_count(prog)
        assert max(np.linalg.norm(s - states[0]) for s in states) < 1e-10

    def test_adaptation_is_needed(self, monkeypatch):
        mps = canonical_mps(4, 8, 3)
        prog = compile_program(mps)
        monkeypatch.setattr(simulate, "_adapt_layer", lambda layer, signs, dim: layer)
        worst = min(
            verify_against_oracle(mps, prog, SignOutcomeSource("seeded_random", s))["fidelity"] for s in range(5)
        )
        assert worst < 0.99


class TestBaselineProgram:
    @pytest.mark.parametrize("kind", ["real", "complex"])
    def test_fidelity(self, kind):
        mps = canonical_mps(4, 8, 6, kind)
        out = verify_against_oracle(mps, compile_program(mps, "baseline"))
        assert out["fidelity"] > 1 - 1e-10
        assert out["ancilla_trace_distance"] < 1e-10

    def test_no_instrumented_count(self):
        mps = canonical_mps(2, 2, 0)
        with pytest.raises(ProgramError):
            instrumented_toffoli_count(compile_program(mps, "baseline"))


class TestCompile:
    def test_qubit_cap(self):
        mps = canonical_mps(12, 16, 0)
        assert 2 * 12 + 4 > 24
        with pytest.raises(QubitCapError):
            compile_program(mps)
        with pytest.raises(QubitCapError):
            compile_program(canonical_mps(4, 16, 0), qubit_cap=8)

    def test_unknown_method(self):
        with pytest.raises(ProgramError):
            compile_program(canonical_mps(2, 2, 0), "magic")

    def test_open_left_boundary_rejected(self):
        mps = canonical_mps(3, 4, 0)
        t = mps.tensors[0]
        wide = BondSpace((t.left.charges[0], t.left.charges[0]))
        blocks = {k: np.vstack([v, v]) / np.sqrt(2) for k, v in t.blocks.items()}
        mps.tensors[0] = BlockSparseTensor(wide, t.site, t.right, blocks)
        with pytest.raises(ProgramError):
            compile_program(mps)


class TestCounts:
    @pytest.mark.parametrize("seed", range(5))
    def test_instrumented_within_bound(self, seed):
        mps = canonical_mps(3 + seed % 3, 16, seed, "complex" if seed % 2 else "real")
        prog = compile_program(mps)
        inst, bound = instrumented_toffoli_count(prog), program_cost_bound(prog)
        assert 0.5 * bound <= inst <= bound

    def test_empty_program(self):
        prog = compile_program(canonical_mps(1, 1, 0))
        prog.units = []
        assert instrumented_toffoli_count(prog) == 0
        assert program_cost_bound(prog) == 0
