import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from printseg.jobstats import (
    DEFAULT_EDGES,
    JobStatsError,
    PrintJob,
    analyze,
    failure_rate,
    load_jobs,
    runtime_histogram,
    tokenize,
    word_frequency,
)


def _csv(rows, header="filename,duration_s,canceled"):
    return io.StringIO("\n".join([header, *rows]) + "\n")


def test_three_rows():
    jobs, errors = load_jobs(_csv(["a.gcode,400,0", "b.gcode,10,1", "c.gcode,9000,true"]))
    assert len(jobs) == 3 and errors == []
    assert jobs[2] == PrintJob("c.gcode", 9000.0, True)


def test_negative_duration_row():
    jobs, errors = load_jobs(_csv(["a.gcode,400,0", "b.gcode,-5,0", "c.gcode,xx,0", "d.gcode,1,maybe"]))
    assert len(jobs) == 1
    assert [e.row for e in errors] == [2, 3, 4]
    assert "negative" in errors[0].message


def test_header_only():
    assert load_jobs(_csv([])) == ([], [])


def test_missing_column():
    with pytest.raises(JobStatsError, match="canceled"):
        load_jobs(_csv(["a,1"], header="filename,duration_s"))


def test_short_row():
    jobs, errors = load_jobs(_csv(["a.gcode,400"]))
    assert jobs == [] and len(errors) == 1


def test_failure_rate_24_of_100():
    jobs = [PrintJob(f"j{i}", 600.0, i < 24) for i in range(100)]
    fr = failure_rate(jobs, 300)
    assert (fr.canceled, fr.total) == (24, 100)
    assert fr.rate == 0.24


def test_failure_rate_excludes_short_jobs():
    jobs = [PrintJob("a", 100.0, True), PrintJob("b", 300.0, True), PrintJob("c", 301.0, False)]
    fr = failure_rate(jobs, 300)
    assert (fr.canceled, fr.total, fr.excluded_canceled, fr.excluded_total) == (0, 1, 2, 2)


def test_failure_rate_empty_denominator():
    fr = failure_rate([PrintJob("a", 10.0, True)], 300)
    assert fr.total == 0 and fr.rate is None


def test_failure_rate_zero():
    fr = failure_rate([PrintJob("a", 10.0, False), PrintJob("b", 1.0, False)], 0)
    assert fr.rate == 0.0


def test_failure_rate_rejects_negative_threshold():
    with pytest.raises(JobStatsError):
        failure_rate([], -1)


def test_histogram_assignment():
    h = runtime_histogram([PrintJob("a", 25.0, False)], [0, 10, 20, 30])
    assert h.finished == [0, 0, 1] and h.canceled == [0, 0, 0]


def test_histogram_edge_goes_up():
    h = runtime_histogram([PrintJob("a", 10.0, True), PrintJob("b", 30.0, False), PrintJob("c", 0.0, False)],
                          [0, 10, 20, 30])
    assert h.canceled == [0, 1, 0]
    assert h.finished == [1, 0, 0]
    assert h.overflow == (1, 0)


def test_histogram_errors():
    with pytest.raises(JobStatsError):
        runtime_histogram([], [0])
    with pytest.raises(JobStatsError):
        runtime_histogram([], [0, 10, 10])


jobs_strategy = st.lists(st.builds(PrintJob, st.text(max_size=12), st.floats(0, 1e5), st.booleans()), max_size=50)


@given(jobs_strategy, st.floats(0, 1e5))
def test_counting_invariants(jobs, threshold):
    fr = failure_rate(jobs, threshold)
    assert fr.canceled <= fr.total <= len(jobs)
    assert fr.total + fr.excluded_total == len(jobs)
    h = runtime_histogram(jobs, DEFAULT_EDGES)
    assert h.total == len(jobs)
    assert sum(h.canceled) + h.underflow[1] + h.overflow[1] == sum(j.canceled for j in jobs)


@pytest.mark.parametrize("names, expected", [
    (["Dragon_v2.stl", "dragon-final.gcode"], [("dragon", 2), ("final", 1)]),
    (["a.stl"], []),
    (["CubeStand.stl"], [("cube", 1), ("stand", 1)]),
    (["PLAHolderBracket.stl"], [("bracket", 1), ("holder", 1), ("pla", 1)]),
    (["3DBenchy.gcode", "benchy_0.2mm_PLA.gcode"], [("benchy", 2), ("pla", 1)]),
    (["USBHolder v3 (1).gcode"], [("holder", 1), ("usb", 1)]),
])
def test_word_frequency_examples(names, expected):
    assert [(w.token, w.count) for w in word_frequency(names)] == expected


def test_tokenize_rules():
    assert tokenize("path/to/MyCoolPart_v10.gcode") == ["cool", "part"]
    assert tokenize("C:\\models\\Gear123Box.stl") == ["gear", "box"]
    assert tokenize("1234.gcode") == []


def test_top_k():
    names = ["alpha beta gamma", "beta gamma", "gamma"]
    assert [w.token for w in word_frequency(names, top_k=2)] == ["gamma", "beta"]
    with pytest.raises(JobStatsError):
        word_frequency(names, top_k=0)


@given(st.lists(st.text(alphabet="abcXYZ_-.019", max_size=15), max_size=20), st.randoms())
def test_word_frequency_order_invariant(names, rnd):
    shuffled = list(names)
    rnd.shuffle(shuffled)
    assert word_frequency(names) == word_frequency(shuffled)


def test_analyze_report():
    report = analyze(_csv(["CubeStand.stl,600,1", "Dragon_v2.stl,20,0", "bad,-1,0"]))
    d = report.to_dict()
    assert d["jobs"] == 2
    assert d["failure_rate"] == {"canceled": 1, "total": 1, "rate": 1.0, "excluded_canceled": 0,
                                 "excluded_total": 1}
    assert d["row_errors"][0]["row"] == 3
    assert sum(d["histogram"]["finished"]) + sum(d["histogram"]["canceled"]) == 2
