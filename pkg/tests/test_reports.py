import asyncio
import math

import numpy as np
import orjson
import pytest

from modules import Converters, Reports, Workers
from modules.Reports import Column
from modules.Spectral import RegimeTag


@pytest.mark.parametrize(
    ("value", "text"),
    [(True, "true"), (False, "false"), (None, ""), (3, "3"), ((1, -2), "1 -2"), (RegimeTag.gap, "gap"), (math.inf, "inf")],
)
def test_cell(value, text):
    assert Reports.cell(value) == text


@pytest.mark.parametrize("x", [0.1, 1 / 3, 2.0**-40, -123456.789, np.float64(0.7)])
def test_floats_round_trip(x):
    assert float(Reports.cell(x)) == x


def test_vector_token():
    assert Reports.vector((0, -1)) == "(0,-1)"
    assert Reports.vector(np.array([3, 4])) == "(3,4)"


def test_csv_layout(tmp_path):
    columns = (Column("m", "label"), Column("width", "gap width"))
    path = Reports.write_csv(tmp_path / "nested" / "t.csv", "demo", columns, [("(0,1)", 0.5), ("(1,0)", None)], ["note"])
    lines = path.read_text().splitlines()
    assert lines[:4] == ["# demo", "# m: label", "# width: gap width", "# note"]
    assert lines[4] == "m,width"
    assert lines[6] == '"(1,0)",'
    with pytest.raises(ValueError):
        Reports.write_csv(tmp_path / "bad.csv", "demo", columns, [(1,)])


def test_json_is_plain(tmp_path):
    payload = {"a": np.arange(3), "b": (1, 2), "c": complex(1, -1), "d": math.nan, (0, 1): np.int64(4), "e": {3, 1}}
    loaded = orjson.loads(Reports.write_json(tmp_path / "x.json", payload).read_bytes())
    assert loaded == {"a": [0, 1, 2], "b": [1, 2], "c": {"re": 1.0, "im": -1.0}, "d": "nan", "(0, 1)": 4, "e": [1, 3]}


def test_converters():
    assert Converters.to_count(" 12 ", 1) == 12
    assert Converters.to_count("junk", 1) == 1
    assert Converters.to_count("-3", 4) == 4
    assert Converters.to_count("0", 4) == 4
    assert Converters.to_vector(np.array([1, -2])) == (1, -2)
    assert Converters.to_complex({"re": 0.5}) == 0.5 + 0j


@pytest.mark.parametrize("jobs", [1, 3])
def test_map_ordered(jobs):
    pool = Workers.executor(jobs)
    try:
        results = asyncio.run(Workers.map_ordered(pool, lambda x, shift: x * x + shift, range(20), shift=1))
    finally:
        if pool is not None:
            pool.shutdown()
    assert results == [x * x + 1 for x in range(20)]


def test_executor_needs_a_worker():
    assert Workers.executor(1) is None
    with pytest.raises(ValueError):
        Workers.executor(0)
