import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shilnikov_lab import serialize


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_floats_round_trip_exactly(x):
    assert json.loads(serialize.dumps({"x": x}))["x"] == x


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=8))
def test_lists_round_trip(xs):
    assert json.loads(serialize.dumps(xs)) == xs


def test_insertion_order_kept():
    text = serialize.dumps({"b": 1, "a": 2, "c": {"z": 0, "y": 1}})
    assert list(json.loads(text)) == ["b", "a", "c"]
    assert text.index('"z"') < text.index('"y"')


@pytest.mark.parametrize(
    "value, text",
    [(np.float64(0.1), "0.10000000000000001"), (np.int64(3), "3"), (np.bool_(True), "true"), (None, "null"), (1e-300, "1e-300")],
)
def test_scalar_spelling(value, text):
    assert serialize.dumps(value).strip() == text


def test_arrays_and_nesting():
    obj = {"m": np.eye(2), "rows": [[1.5, 2.0], {"k": "v"}], "empty": [], "none": {}}
    assert json.loads(serialize.dumps(obj)) == {"m": [[1.0, 0.0], [0.0, 1.0]], "rows": [[1.5, 2.0], {"k": "v"}], "empty": [], "none": {}}


def test_non_finite_loadable_by_python():
    back = json.loads(serialize.dumps([math.inf, -math.inf, math.nan]))
    assert back[0] == math.inf and back[1] == -math.inf and math.isnan(back[2])


def test_unknown_type():
    with pytest.raises(TypeError):
        serialize.dumps({"x": object()})


def test_file_round_trip(tmp_path):
    p = tmp_path / "x.json"
    serialize.dump({"a": [0.1, 0.2]}, p)
    assert serialize.load(p) == {"a": [0.1, 0.2]}
    assert p.read_text().endswith("\n")
