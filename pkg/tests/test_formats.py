import json

import numpy as np
import pytest

from mpsprep.blockdiag import compile_site
from mpsprep.formats import (
    FormatError,
    dumps,
    load_mps,
    loads,
    mps_from_dict,
    mps_to_dict,
    save_mps,
    site_plan_to_dict,
)
from mpsprep.symmetry import contract_to_statevector

from conftest import canonical_mps


@pytest.mark.parametrize("kind", ["real", "complex"])
def test_round_trip_exact(kind, tmp_path):
    mps = canonical_mps(4, 8, 2, kind)
    path = tmp_path / "state.json"
    save_mps(mps, path)
    back = load_mps(path)
    assert back.scalar_kind == kind
    assert back.bond_dims == mps.bond_dims
    assert np.array_equal(contract_to_statevector(back), contract_to_statevector(mps))


def test_dumps_deterministic():
    mps = canonical_mps(3, 4, 1)
    assert dumps(mps_to_dict(mps)) == dumps(mps_to_dict(mps_from_dict(mps_to_dict(mps))))


def test_unknown_version():
    doc = mps_to_dict(canonical_mps(2, 2, 0))
    doc["version"] = 7
    with pytest.raises(FormatError) as exc:
        mps_from_dict(doc)
    assert exc.value.where == "version"


def test_missing_field_path():
    doc = mps_to_dict(canonical_mps(2, 2, 0))
    del doc["scalar"]
    with pytest.raises(FormatError, match="scalar"):
        mps_from_dict(doc)


def test_block_field_context():
    doc = mps_to_dict(canonical_mps(3, 4, 0))
    doc["blocks"][1][0]["data"] = doc["blocks"][1][0]["data"][:-1]
    with pytest.raises(FormatError) as exc:
        mps_from_dict(doc)
    assert exc.value.where.startswith("blocks[1][0]")


def test_bad_scalar():
    doc = mps_to_dict(canonical_mps(2, 2, 0))
    doc["scalar"] = "quaternion"
    with pytest.raises(FormatError):
        mps_from_dict(doc)


def test_json_error_has_line_and_column():
    with pytest.raises(FormatError) as exc:
        loads('{\n  "version": 1,\n  "n": ,\n}')
    assert exc.value.where.startswith("line 3, column")


def test_not_an_object():
    with pytest.raises(FormatError):
        mps_from_dict([1, 2, 3])


def test_site_plan_document():
    mps = canonical_mps(3, 8, 4)
    dec, plan = compile_site(mps.tensors[1], "real")
    doc = json.loads(dumps(site_plan_to_dict(2, dec, plan)))
    assert doc["site"] == 2
    assert doc["block_sizes"] == dec.block_sizes
