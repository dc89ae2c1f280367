import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import has_topological_order, lexicographic_topo_sort
from provrepro.errors import ValidationFailed, WorkflowFileError
from provrepro.model import (
    CloudFile,
    FileRef,
    JobDefinition,
    JobKind,
    WorkflowDefinition,
    dump_workflow,
    parse_workflow,
    topological_order,
    validate_workflow,
    wordcount_workflow,
)


def memhog(name, deps=()):
    return JobDefinition(name, JobKind.MEMHOG, required_ram_mb=100, depends_on=tuple(deps))


def codes(definition):
    with pytest.raises(ValidationFailed) as exc:
        validate_workflow(definition)
    return exc.value.codes()


def test_wordcount_is_valid():
    wf = wordcount_workflow()
    assert validate_workflow(wf) is wf
    assert [j.name for j in wf.jobs] == ["split", "analysis1", "analysis2", "merge"]


def test_empty_workflow_is_valid():
    assert validate_workflow(WorkflowDefinition("empty", ())).jobs == ()


def test_self_dependency_is_cyclic():
    assert codes(WorkflowDefinition("w", (memhog("A", ["A"]),))) == {"CyclicDependency"}


def test_two_cycle():
    assert "CyclicDependency" in codes(WorkflowDefinition("w", (memhog("a", ["b"]), memhog("b", ["a"]))))


def test_every_violation_reported():
    wf = WorkflowDefinition(
        "bad",
        (
            memhog("a", ["ghost"]),
            memhog("a"),
            JobDefinition("w", JobKind.WORDCOUNT, (), (FileRef("c", "f"),)),
        ),
    )
    assert codes(wf) == {"UnknownDependency", "DuplicateJobName", "ArityMismatch"}


@pytest.mark.parametrize(
    "kind,n_in,n_out",
    [("split", 1, 2), ("wordcount", 1, 1), ("merge", 2, 1), ("memhog", 0, 0)],
)
def test_arity_accepted(kind, n_in, n_out):
    job = JobDefinition(
        "j",
        JobKind(kind),
        tuple(FileRef("in", f"i{k}") for k in range(n_in)),
        tuple(FileRef("out", f"o{k}") for k in range(n_out)),
    )
    validate_workflow(WorkflowDefinition("w", (job,)))


def test_arity_rejected():
    job = JobDefinition("s", JobKind.SPLIT, (FileRef("in", "x"),), (FileRef("out", "y"),))
    assert codes(WorkflowDefinition("w", (job,))) == {"ArityMismatch"}


def test_input_from_non_upstream_job():
    a = JobDefinition("a", JobKind.WORDCOUNT, (FileRef("in", "x"),), (FileRef("out", "ca"),))
    b = JobDefinition("b", JobKind.WORDCOUNT, (FileRef("out", "ca"),), (FileRef("out", "cb"),))
    assert codes(WorkflowDefinition("w", (a, b))) == {"UnproducedInput"}
    b_ok = JobDefinition("b", JobKind.WORDCOUNT, (FileRef("out", "ca"),), (FileRef("out", "cb"),), depends_on=("a",))
    validate_workflow(WorkflowDefinition("w", (a, b_ok)))


def test_transitive_upstream_producer_is_enough():
    a = JobDefinition("a", JobKind.WORDCOUNT, (FileRef("in", "x"),), (FileRef("out", "ca"),))
    b = memhog("b", ["a"])
    c = JobDefinition("c", JobKind.WORDCOUNT, (FileRef("out", "ca"),), (FileRef("out", "cc"),), depends_on=("b",))
    validate_workflow(WorkflowDefinition("w", (a, b, c)))


def test_duplicate_output_filename():
    a = JobDefinition("a", JobKind.WORDCOUNT, (FileRef("in", "x"),), (FileRef("out", "same"),))
    b = JobDefinition("b", JobKind.WORDCOUNT, (FileRef("in", "y"),), (FileRef("other", "same"),))
    assert codes(WorkflowDefinition("w", (a, b))) == {"DuplicateOutput"}


def test_nonpositive_ram():
    assert codes(WorkflowDefinition("w", (JobDefinition("m", JobKind.MEMHOG, required_ram_mb=0),))) == {"InvalidField"}


def test_wordcount_topological_order():
    deps = {j.name: set(j.depends_on) for j in wordcount_workflow().jobs}
    assert topological_order(wordcount_workflow().jobs) == lexicographic_topo_sort(deps)
    assert lexicographic_topo_sort(deps) == ["split", "analysis1", "analysis2", "merge"]


@st.composite
def small_graphs(draw):
    n = draw(st.integers(0, 6))
    names = [f"j{i}" for i in range(n)]
    edges = set()
    for i in range(n):
        for k in range(n):
            if draw(st.integers(0, 4)) == 0:
                edges.add((names[k], names[i]))  # k must precede i
    return names, edges


@settings(max_examples=150, deadline=None)
@given(small_graphs())
def test_acceptance_matches_brute_force_topological_order(graph):
    names, edges = graph
    jobs = tuple(memhog(n, sorted(a for a, b in edges if b == n)) for n in names)
    wf = WorkflowDefinition("g", jobs)
    expected = has_topological_order(names, edges)
    try:
        validate_workflow(wf)
        accepted = True
    except ValidationFailed as exc:
        assert exc.codes() == {"CyclicDependency"}
        accepted = False
    assert accepted == expected
    if accepted:
        deps = {n: {a for a, b in edges if b == n} for n in names}
        assert topological_order(jobs) == lexicographic_topo_sort(deps)


def test_document_round_trip():
    wf = wordcount_workflow()
    assert parse_workflow(dump_workflow(wf)) == wf


def test_document_syntax_error_has_line():
    with pytest.raises(WorkflowFileError, match=r"line 3, column"):
        parse_workflow('{\n  "label": "x",\n  "jobs": [,]\n}')


@pytest.mark.parametrize(
    "job,where",
    [
        ({"name": "a", "kind": "shell"}, r"jobs\[0\]\.kind"),
        ({"name": "", "kind": "memhog"}, r"jobs\[0\]\.name"),
        ({"name": "a", "kind": "memhog", "required_ram_mb": "lots"}, r"jobs\[0\]\.required_ram_mb"),
        ({"name": "a", "kind": "wordcount", "inputs": [{"container": "c"}]}, r"jobs\[0\]\.inputs\[0\]\.filename"),
        ({"name": "a", "kind": "memhog", "command": "rm -rf"}, r"unknown field"),
    ],
)
def test_document_field_diagnostics(job, where):
    with pytest.raises(WorkflowFileError, match=where):
        parse_workflow(json.dumps({"label": "x", "jobs": [job]}))


def test_values_are_immutable():
    ref = FileRef("c", "f")
    with pytest.raises(AttributeError):
        ref.container = "d"
    with pytest.raises(ValueError):
        FileRef("", "f")


def test_cloudfile_digest_checked():
    cf = CloudFile("c", "f", b"hello")
    assert cf.md5_hex == "5d41402abc4b2a76b9719d911017c592"
    with pytest.raises(ValueError):
        CloudFile("c", "f", b"hello", "0" * 32)


@settings(max_examples=100, deadline=None)
@given(st.binary(min_size=1, max_size=256), st.data())
def test_single_bit_flip_changes_digest(content, data):
    i = data.draw(st.integers(0, len(content) - 1))
    bit = data.draw(st.integers(0, 7))
    mutated = bytearray(content)
    mutated[i] ^= 1 << bit
    assert CloudFile("c", "f", bytes(mutated)).md5_hex != CloudFile("c", "f", content).md5_hex
