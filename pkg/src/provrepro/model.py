"""Domain types shared by every subsystem, plus workflow validation and I/O.

All types are frozen dataclasses holding tuples, so they can be passed
between threads freely.
"""

from __future__ import annotations

import hashlib
import heapq
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable

from .errors import (
    ArityMismatch,
    CyclicDependency,
    DuplicateJobName,
    DuplicateOutput,
    InvalidField,
    UnknownDependency,
    UnproducedInput,
    ValidationFailed,
    ValidationIssue,
    WorkflowFileError,
)


class JobKind(str, Enum):
    SPLIT = "split"
    WORDCOUNT = "wordcount"
    MERGE = "merge"
    MEMHOG = "memhog"


# (inputs, outputs) per kind
KIND_ARITY: dict[JobKind, tuple[int, int]] = {
    JobKind.SPLIT: (1, 2),
    JobKind.WORDCOUNT: (1, 1),
    JobKind.MERGE: (2, 1),
    JobKind.MEMHOG: (0, 0),
}


class VmState(str, Enum):
    ACTIVE = "active"
    DESTROYED = "destroyed"


class JobStatus(str, Enum):
    SUCCEEDED = "succeeded"
    FAILED_OOM = "failed_oom"


@dataclass(frozen=True, order=True)
class FileRef:
    container: str
    filename: str

    def __post_init__(self):
        if not self.container or not self.filename:
            raise ValueError(f"FileRef needs a container and a filename: {self!r}")

    def __str__(self) -> str:
        return f"{self.container}/{self.filename}"

    def to_dict(self) -> dict[str, str]:
        return {"container": self.container, "filename": self.filename}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> FileRef:
        return cls(d["container"], d["filename"])


@dataclass(frozen=True)
class JobDefinition:
    name: str
    kind: JobKind
    inputs: tuple[FileRef, ...] = ()
    outputs: tuple[FileRef, ...] = ()
    required_ram_mb: int = 64
    depends_on: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", JobKind(self.kind))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        object.__setattr__(self, "depends_on", tuple(self.depends_on))

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "kind": self.kind.value,
            "inputs": [f.to_dict() for f in self.inputs],
            "outputs": [f.to_dict() for f in self.outputs],
            "required_ram_mb": self.required_ram_mb,
            "depends_on": list(self.depends_on),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> JobDefinition:
        return cls(
            name=d["name"],
            kind=JobKind(d["kind"]),
            inputs=tuple(FileRef.from_dict(f) for f in d.get("inputs", ())),
            outputs=tuple(FileRef.from_dict(f) for f in d.get("outputs", ())),
            required_ram_mb=d.get("required_ram_mb", 64),
            depends_on=tuple(d.get("depends_on", ())),
        )


@dataclass(frozen=True)
class WorkflowDefinition:
    label: str
    jobs: tuple[JobDefinition, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "jobs", tuple(self.jobs))

    def job(self, name: str) -> JobDefinition:
        for j in self.jobs:
            if j.name == name:
                return j
        raise KeyError(name)

    def edges(self) -> set[tuple[str, str]]:
        """Dependency edges as (upstream, downstream) pairs."""
        return {(dep, j.name) for j in self.jobs for dep in j.depends_on}

    def external_inputs(self) -> list[FileRef]:
        """Consumed files no job produces, in order of first use."""
        produced = {f for j in self.jobs for f in j.outputs}
        seen: list[FileRef] = []
        for j in self.jobs:
            for f in j.inputs:
                if f not in produced and f not in seen:
                    seen.append(f)
        return seen

    def to_dict(self) -> dict[str, Any]:
        return {"label": self.label, "jobs": [j.to_dict() for j in self.jobs]}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> WorkflowDefinition:
        return cls(d.get("label", ""), tuple(JobDefinition.from_dict(j) for j in d.get("jobs", ())))

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.md5(blob).hexdigest()


@dataclass(frozen=True)
class Flavor:
    flavor_id: int
    name: str
    ram_mb: int
    disk_gb: int
    vcpus: int

    def __post_init__(self):
        if self.ram_mb <= 0 or self.disk_gb < 0 or self.vcpus < 1:
            raise ValueError(f"invalid flavor {self!r}")


@dataclass(frozen=True)
class Image:
    image_id: str
    image_name: str

    def __post_init__(self):
        if not self.image_id or not self.image_name:
            raise ValueError(f"invalid image {self!r}")


@dataclass(frozen=True)
class VmInstance:
    ip: str
    nodename: str
    flavor_id: int
    image_id: str
    state: VmState = VmState.ACTIVE
    owner: str = "researcher"
    seq: int = 0  # provisioning order

    def __post_init__(self):
        object.__setattr__(self, "state", VmState(self.state))

    @property
    def active(self) -> bool:
        return self.state is VmState.ACTIVE

    def to_dict(self) -> dict[str, Any]:
        return {
            "ip": self.ip,
            "nodename": self.nodename,
            "flavor_id": self.flavor_id,
            "image_id": self.image_id,
            "state": self.state.value,
            "owner": self.owner,
            "seq": self.seq,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> VmInstance:
        return cls(**d)


@dataclass(frozen=True)
class JobRecord:
    job_name: str
    host_ip: str
    status: JobStatus
    produced: tuple[FileRef, ...] = ()
    started: int = 0  # executor dispatch sequence numbers
    finished: int = 0

    def __post_init__(self):
        object.__setattr__(self, "status", JobStatus(self.status))
        object.__setattr__(self, "produced", tuple(self.produced))

    @property
    def succeeded(self) -> bool:
        return self.status is JobStatus.SUCCEEDED

    def to_dict(self) -> dict[str, Any]:
        return {
            "job_name": self.job_name,
            "host_ip": self.host_ip,
            "status": self.status.value,
            "produced": [f.to_dict() for f in self.produced],
            "started": self.started,
            "finished": self.finished,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> JobRecord:
        return cls(
            job_name=d["job_name"],
            host_ip=d["host_ip"],
            status=JobStatus(d["status"]),
            produced=tuple(FileRef.from_dict(f) for f in d.get("produced", ())),
            started=d.get("started", 0),
            finished=d.get("finished", 0),
        )


@dataclass(frozen=True)
class WorkflowRun:
    wf_id: int
    definition: WorkflowDefinition
    job_records: tuple[JobRecord, ...]
    output_container: str
    repeat_of: int | None = None
    owner: str = "researcher"

    def __post_init__(self):
        if self.wf_id <= 0:
            raise ValueError("wf_id must be strictly positive")
        object.__setattr__(self, "job_records", tuple(self.job_records))

    @property
    def succeeded(self) -> bool:
        return len(self.job_records) == len(self.definition.jobs) and all(
            r.succeeded for r in self.job_records
        )

    def record(self, job_name: str) -> JobRecord:
        for r in self.job_records:
            if r.job_name == job_name:
                return r
        raise KeyError(job_name)

    def outputs(self) -> list[FileRef]:
        return [f for r in self.job_records for f in r.produced]

    def to_dict(self) -> dict[str, Any]:
        return {
            "wf_id": self.wf_id,
            "definition": self.definition.to_dict(),
            "job_records": [r.to_dict() for r in self.job_records],
            "output_container": self.output_container,
            "repeat_of": self.repeat_of,
            "owner": self.owner,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> WorkflowRun:
        return cls(
            wf_id=d["wf_id"],
            definition=WorkflowDefinition.from_dict(d["definition"]),
            job_records=tuple(JobRecord.from_dict(r) for r in d["job_records"]),
            output_container=d["output_container"],
            repeat_of=d.get("repeat_of"),
            owner=d.get("owner", "researcher"),
        )


@dataclass(frozen=True)
class JobResourceMapping:
    """One row of Cloud-aware provenance: a job and the VM config that ran it."""

    wf_id: int
    job_name: str
    host_ip: str
    nodename: str
    flavor_id: int
    min_ram_mb: int
    min_hd_gb: int
    vcpus: int
    image_name: str
    image_id: str

    # Table-1 column order, used for CSV dumps
    CSV_HEADER = (
        "wfID",
        "Host IP",
        "nodename",
        "Flavour Id",
        "minRAM (MB)",
        "minHD (GB)",
        "vCPU",
        "Image name",
        "Image id",
    )

    def csv_row(self) -> list[Any]:
        return [
            self.wf_id,
            self.host_ip,
            self.nodename,
            self.flavor_id,
            self.min_ram_mb,
            self.min_hd_gb,
            self.vcpus,
            self.image_name,
            self.image_id,
        ]

    def resource_key(self) -> tuple[int, int, int, int, str]:
        """What must match for two hosts to count as equivalent infrastructure."""
        return (self.flavor_id, self.min_ram_mb, self.min_hd_gb, self.vcpus, self.image_id)

    def to_dict(self) -> dict[str, Any]:
        return {
            "wf_id": self.wf_id,
            "job_name": self.job_name,
            "host_ip": self.host_ip,
            "nodename": self.nodename,
            "flavor_id": self.flavor_id,
            "min_ram_mb": self.min_ram_mb,
            "min_hd_gb": self.min_hd_gb,
            "vcpus": self.vcpus,
            "image_name": self.image_name,
            "image_id": self.image_id,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> JobResourceMapping:
        return cls(**d)


@dataclass(frozen=True)
class CloudFile:
    container: str
    filename: str
    content: bytes
    md5_hex: str = ""

    def __post_init__(self):
        digest = hashlib.md5(self.content).hexdigest()
        if self.md5_hex and self.md5_hex != digest:
            raise ValueError(f"digest does not match content for {self.container}/{self.filename}")
        object.__setattr__(self, "md5_hex", digest)

    @property
    def ref(self) -> FileRef:
        return FileRef(self.container, self.filename)

    @property
    def hash(self) -> str:
        return self.md5_hex


@dataclass(frozen=True)
class FileComparison:
    job: str
    position: int
    src: FileRef
    dest: FileRef | None
    src_hash: str | None
    dest_hash: str | None

    @property
    def match(self) -> bool:
        return self.src_hash is not None and self.src_hash == self.dest_hash

    @property
    def filename(self) -> str:
        return self.src.filename


@dataclass(frozen=True)
class ReproReport:
    src_wf_id: int
    dest_wf_id: int
    structure_equal: bool
    infrastructure_equal: bool
    outputs_equal: bool
    per_file: tuple[FileComparison, ...] = ()
    notes: tuple[str, ...] = field(default=())

    @property
    def verdict(self) -> bool:
        return self.structure_equal and self.infrastructure_equal and self.outputs_equal


# -- validation ----------------------------------------------------------


def topological_order(jobs: Iterable[JobDefinition]) -> list[str]:
    """Kahn's algorithm; ready jobs are taken in lexicographic name order.

    Dependencies on unknown names are ignored. Jobs on a cycle are omitted,
    so a short result signals a cycle.
    """
    jobs = list(jobs)
    names = {j.name for j in jobs}
    indegree = {j.name: 0 for j in jobs}
    children: dict[str, list[str]] = {j.name: [] for j in jobs}
    for j in jobs:
        for dep in set(j.depends_on):
            if dep in names:
                indegree[j.name] += 1
                children[dep].append(j.name)
    ready = [n for n, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for c in children[n]:
            indegree[c] -= 1
            if indegree[c] == 0:
                heapq.heappush(ready, c)
    return order


def ancestors(definition: WorkflowDefinition) -> dict[str, set[str]]:
    """Transitive upstream jobs of every job (assumes acyclic)."""
    by_name = {j.name: j for j in definition.jobs}
    memo: dict[str, set[str]] = {}

    def visit(name: str, stack: frozenset) -> set[str]:
        if name in memo:
            return memo[name]
        out: set[str] = set()
        for dep in by_name[name].depends_on:
            if dep in by_name and dep not in stack:
                out.add(dep)
                out |= visit(dep, stack | {dep})
        memo[name] = out
        return out

    return {n: visit(n, frozenset([n])) for n in by_name}


def collect_issues(definition: WorkflowDefinition) -> list[ValidationIssue]:
    issues: list[ValidationIssue] = []
    seen: set[str] = set()
    for j in definition.jobs:
        if not j.name:
            issues.append(InvalidField("job name must be non-empty"))
        elif j.name in seen:
            issues.append(DuplicateJobName(f"job name {j.name!r} used more than once", j.name))
        seen.add(j.name)
        if not isinstance(j.required_ram_mb, int) or j.required_ram_mb <= 0:
            issues.append(InvalidField(f"{j.name}: required_ram_mb must be a positive integer", j.name))
        n_in, n_out = KIND_ARITY[j.kind]
        if len(j.inputs) != n_in or len(j.outputs) != n_out:
            issues.append(
                ArityMismatch(
                    f"{j.name}: {j.kind.value} takes {n_in} input(s) / {n_out} output(s), "
                    f"got {len(j.inputs)}/{len(j.outputs)}",
                    j.name,
                )
            )

    names = {j.name for j in definition.jobs}
    for j in definition.jobs:
        for dep in j.depends_on:
            if dep == j.name:
                issues.append(CyclicDependency(f"{j.name} depends on itself", j.name))
            elif dep not in names:
                issues.append(UnknownDependency(f"{j.name} depends on unknown job {dep!r}", j.name))

    order = topological_order(definition.jobs)
    acyclic = len(order) == len(names)
    if not acyclic:
        stuck = sorted(names - set(order))
        self_loops = {j.name for j in definition.jobs if j.name in j.depends_on}
        if set(stuck) - self_loops:
            issues.append(CyclicDependency(f"dependency cycle among {stuck}"))

    producer: dict[FileRef, str] = {}
    writers: dict[str, list[str]] = {}
    for j in definition.jobs:
        for f in j.outputs:
            producer.setdefault(f, j.name)
            writers.setdefault(f.filename, []).append(j.name)
    # all outputs of a run land in one container, so filenames must be distinct
    for filename, jobs in writers.items():
        if len(jobs) > 1:
            issues.append(DuplicateOutput(f"output filename {filename!r} written by {jobs}", jobs[-1]))

    if acyclic and len(seen) == len(definition.jobs):
        ups = ancestors(definition)
        for j in definition.jobs:
            for f in j.inputs:
                src = producer.get(f)
                if src is not None and src not in ups[j.name]:
                    issues.append(
                        UnproducedInput(f"{j.name} reads {f} produced by {src}, which is not upstream of it", j.name)
                    )
    return issues


def validate_workflow(definition: WorkflowDefinition) -> WorkflowDefinition:
    """Return the definition unchanged, or raise ValidationFailed listing every issue."""
    issues = collect_issues(definition)
    if issues:
        raise ValidationFailed(issues)
    return definition


# -- workflow documents --------------------------------------------------

_JOB_FIELDS = {"name", "kind", "inputs", "outputs", "required_ram_mb", "depends_on"}


def _fileref_from_doc(obj: Any, where: str) -> FileRef:
    if not isinstance(obj, dict):
        raise WorkflowFileError(f"{where}: expected an object with container and filename")
    container, filename = obj.get("container"), obj.get("filename")
    for key, val in (("container", container), ("filename", filename)):
        if not isinstance(val, str) or not val:
            raise WorkflowFileError(f"{where}.{key}: expected a non-empty string")
        if "/" in val:
            raise WorkflowFileError(f"{where}.{key}: '/' is not allowed in object names")
    return FileRef(container, filename)


def parse_workflow(text: str) -> WorkflowDefinition:
    """Parse a workflow document, reporting JSON line/column or field path on error.

    Shape::

        {"label": "wordcount",
         "jobs": [{"name": "split", "kind": "split",
                   "inputs": [{"container": "wfinput", "filename": "corpus"}],
                   "outputs": [...], "required_ram_mb": 64, "depends_on": []}]}
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise WorkflowFileError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise WorkflowFileError("top level: expected an object")
    label = doc.get("label", "")
    if not isinstance(label, str):
        raise WorkflowFileError("label: expected a string")
    raw_jobs = doc.get("jobs", [])
    if not isinstance(raw_jobs, list):
        raise WorkflowFileError("jobs: expected a list")
    jobs = []
    for i, rj in enumerate(raw_jobs):
        where = f"jobs[{i}]"
        if not isinstance(rj, dict):
            raise WorkflowFileError(f"{where}: expected an object")
        unknown = set(rj) - _JOB_FIELDS
        if unknown:
            raise WorkflowFileError(f"{where}: unknown field(s) {sorted(unknown)}")
        name = rj.get("name")
        if not isinstance(name, str) or not name:
            raise WorkflowFileError(f"{where}.name: expected a non-empty string")
        try:
            kind = JobKind(rj.get("kind"))
        except ValueError:
            allowed = ", ".join(k.value for k in JobKind)
            raise WorkflowFileError(f"{where}.kind: {rj.get('kind')!r} is not one of {allowed}") from None
        ram = rj.get("required_ram_mb", 64)
        if isinstance(ram, bool) or not isinstance(ram, int):
            raise WorkflowFileError(f"{where}.required_ram_mb: expected an integer")
        deps = rj.get("depends_on", [])
        if not isinstance(deps, list) or not all(isinstance(d, str) for d in deps):
            raise WorkflowFileError(f"{where}.depends_on: expected a list of job names")
        refs = {}
        for key in ("inputs", "outputs"):
            vals = rj.get(key, [])
            if not isinstance(vals, list):
                raise WorkflowFileError(f"{where}.{key}: expected a list")
            refs[key] = tuple(_fileref_from_doc(v, f"{where}.{key}[{k}]") for k, v in enumerate(vals))
        jobs.append(JobDefinition(name, kind, refs["inputs"], refs["outputs"], ram, tuple(deps)))
    return WorkflowDefinition(label, tuple(jobs))


def load_workflow(path: str | Path) -> WorkflowDefinition:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise WorkflowFileError(f"{path}: {exc.strerror}") from exc
    try:
        return parse_workflow(text)
    except WorkflowFileError as exc:
        raise WorkflowFileError(f"{path}: {exc}") from None


def dump_workflow(definition: WorkflowDefinition) -> str:
    return json.dumps(definition.to_dict(), indent=2) + "\n"


def wordcount_workflow(
    input_ref: FileRef = FileRef("wfinput", "corpus"),
    output_container: str = "wfoutput",
    required_ram_mb: int = 64,
) -> WorkflowDefinition:
    """The four-job split / count / count / merge workflow."""
    wl1, wl2 = FileRef(output_container, "wordlist1"), FileRef(output_container, "wordlist2")
    a1, a2 = FileRef(output_container, "analysis1"), FileRef(output_container, "analysis2")
    merged = FileRef(output_container, "merge_output")
    ram = required_ram_mb
    return WorkflowDefinition(
        "wordcount",
        (
            JobDefinition("split", JobKind.SPLIT, (input_ref,), (wl1, wl2), ram),
            JobDefinition("analysis1", JobKind.WORDCOUNT, (wl1,), (a1,), ram, ("split",)),
            JobDefinition("analysis2", JobKind.WORDCOUNT, (wl2,), (a2,), ram, ("split",)),
            JobDefinition("merge", JobKind.MERGE, (a1, a2), (merged,), ram, ("analysis1", "analysis2")),
        ),
    )
