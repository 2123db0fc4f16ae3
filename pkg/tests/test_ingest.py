from __future__ import annotations

import io

import numpy as np
import pytest

from ocdetect.ingest import IngestError, ingest, read_array, read_rows
from ocdetect.simulate import ChangeSpec, generate_stream, replicate_rng, write_stream_csv


def test_two_rows():
    rows = list(read_rows(io.StringIO("1.0,2.0\n3.0,4.0")))
    assert [r.tolist() for r in rows] == [[1.0, 2.0], [3.0, 4.0]]


def test_comments_and_blank_lines_skipped():
    rows = list(read_rows(io.StringIO("# header\n\n1,2\n  \n# more\n3,4\n")))
    assert len(rows) == 2


def test_ragged_row_reports_line():
    with pytest.raises(IngestError, match="line 2: expected 2 fields") as exc:
        list(read_rows(io.StringIO("1.0,2.0\n3.0\n")))
    assert exc.value.lineno == 2


def test_non_numeric_field():
    with pytest.raises(IngestError, match="line 3: non-numeric field 'abc'"):
        list(read_rows(io.StringIO("1,2\n3,4\n5,abc\n")))


@pytest.mark.parametrize("text", ["1,2\nnan,1\n", "1,2\n1,inf\n"])
def test_non_finite_rejected(text):
    with pytest.raises(IngestError, match="line 2: non-finite"):
        list(read_rows(io.StringIO(text)))


def test_premature_end_of_input():
    with pytest.raises(IngestError, match="line 2: premature end"):
        list(read_rows(io.StringIO("1.5,2.5\n3.5,")))


def test_jsonl(tmp_path):
    f = tmp_path / "x.jsonl"
    f.write_text("[1, 2.5]\n[3, 4]\n")
    assert read_array(f).tolist() == [[1.0, 2.5], [3.0, 4.0]]
    (tmp_path / "bad.jsonl").write_text('[1, "a"]\n')
    with pytest.raises(IngestError, match="line 1: expected a JSON array"):
        read_array(tmp_path / "bad.jsonl")
    with pytest.raises(IngestError, match="line 1: invalid JSON"):
        list(read_rows(io.StringIO("[1,\n"), "jsonl"))


def test_rows_are_lazy():
    def lines():
        yield "1,2\n"
        raise AssertionError("read too far")

    it = read_rows(lines())
    assert next(it).tolist() == [1.0, 2.0]


def test_simulate_roundtrip_exact(tmp_path):
    X = generate_stream(ChangeSpec(z=5, theta=np.full(7, 0.3)), 200, replicate_rng(1))
    f = tmp_path / "s.csv"
    write_stream_csv(f, X, {"p": 7, "z": 5, "vartheta": 0.79, "s": 7, "seed": 1})
    assert np.array_equal(read_array(f), X)


def test_stdin(monkeypatch):
    monkeypatch.setattr("sys.stdin", io.StringIO("1,2\n"))
    assert [r.tolist() for r in ingest("-")] == [[1.0, 2.0]]
    with pytest.raises(ValueError):
        list(read_rows(io.StringIO(""), "xml"))
