"""Workflow execution on simulated VMs.

Stands in for the workflow-management system: provisions compute nodes,
schedules jobs in dependency order, runs the built-in job kinds, and keeps
an append-only execution database of completed runs.
"""

from __future__ import annotations

import itertools
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping

from ._storage import JsonlLog, WriterLock, home_dir
from .errors import (
    JobFailedOom,
    MissingInput,
    StagingError,
    UnknownWorkflow,
)
from .model import (
    FileRef,
    JobDefinition,
    JobKind,
    JobRecord,
    JobStatus,
    VmInstance,
    WorkflowDefinition,
    WorkflowRun,
    topological_order,
    validate_workflow,
)
from .simcloud import DEFAULT_OWNER, SimCloud

logger = logging.getLogger(__name__)

# memory reserved on every node for the OS; a job fits iff required + this <= flavor RAM
OVERHEAD_MB = 32


def output_container_name(wf_id: int) -> str:
    return f"wfoutput{wf_id}"


def fits_in_memory(required_ram_mb: int, node_ram_mb: int) -> bool:
    return required_ram_mb + OVERHEAD_MB <= node_ram_mb


# -- built-in job kinds ---------------------------------------------------


def split_text(data: bytes) -> tuple[bytes, bytes]:
    """Split at the word boundary closest to the middle; earliest cut wins ties.

    Whitespace runs collapse to single spaces, so the two halves joined by a
    space equal the normalized input.
    """
    words = data.split()
    if not words:
        return b"", b""
    total = sum(len(w) for w in words) + len(words) - 1
    best_k, best_diff = 0, total
    left = -1  # length of " ".join(words[:k]); -1 stands in for the empty join
    for k in range(1, len(words) + 1):
        left += len(words[k - 1]) + 1
        right = total - left - 1 if k < len(words) else 0
        diff = abs(left - right)
        if diff < best_diff:
            best_k, best_diff = k, diff
    return b" ".join(words[:best_k]), b" ".join(words[best_k:])


def count_words(data: bytes) -> bytes:
    return b"%d\n" % len(data.split())


def merge_counts(a: bytes, b: bytes) -> bytes:
    try:
        return b"%d\n" % (int(a.strip()) + int(b.strip()))
    except ValueError as exc:
        raise MissingInput(f"merge input is not a decimal count: {exc}") from None


# -- execution database ---------------------------------------------------


class ExecutionDb:
    """Append-only run log under ``<home>/wms/runs``.

    Two record types: ``reserve`` claims a wf_id before execution starts so
    the output container name is known; ``run`` stores the completed run.
    """

    def __init__(self, home: str | os.PathLike | None = None):
        root = home_dir(home) / "wms"
        self._log = JsonlLog(root / "runs")
        self._lock = WriterLock(root / ".lock")
        self._runs: dict[int, WorkflowRun] = {}
        self._max_id = 0

    def _sync(self) -> None:
        for rec in self._log.read_new():
            self._max_id = max(self._max_id, rec["wf_id"])
            if rec["type"] == "run":
                run = WorkflowRun.from_dict(rec["run"])
                self._runs[run.wf_id] = run

    @property
    def next_wf_id(self) -> int:
        self._sync()
        return self._max_id + 1

    def reserve_id(self) -> int:
        with self._lock():
            self._sync()
            wf_id = self._max_id + 1
            self._log.append({"type": "reserve", "wf_id": wf_id})
            self._max_id = wf_id
        return wf_id

    def record(self, run: WorkflowRun) -> None:
        with self._lock():
            self._sync()
            if run.wf_id in self._runs:
                raise ValueError(f"run {run.wf_id} already recorded")
            if run.repeat_of is not None and (run.repeat_of not in self._runs or run.repeat_of >= run.wf_id):
                raise ValueError(f"repeat_of {run.repeat_of} must name an earlier recorded run")
            self._log.append({"type": "run", "wf_id": run.wf_id, "run": run.to_dict()})
            self._runs[run.wf_id] = run

    def get(self, wf_id: int) -> WorkflowRun:
        self._sync()
        try:
            return self._runs[wf_id]
        except KeyError:
            raise UnknownWorkflow(wf_id) from None

    def get_workflow_jobs(self, wf_id: int) -> list[JobRecord]:
        """Job records in topological order (ties by name) with their produced files."""
        run = self.get(wf_id)
        rank = {n: i for i, n in enumerate(topological_order(run.definition.jobs))}
        return sorted(run.job_records, key=lambda r: rank[r.job_name])

    def runs(self) -> list[WorkflowRun]:
        self._sync()
        return [self._runs[k] for k in sorted(self._runs)]

    def __contains__(self, wf_id: int) -> bool:
        self._sync()
        return wf_id in self._runs


# -- scheduling and dispatch ----------------------------------------------


@dataclass(frozen=True)
class NodeSpec:
    nodename: str
    flavor_id: int
    image_id: str


@dataclass(frozen=True)
class ClusterSpec:
    nodes: tuple[NodeSpec, ...]
    scheduling: str = "round_robin"

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if not self.nodes:
            raise ValueError("a cluster needs at least one node")
        names = [n.nodename for n in self.nodes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate node names in {names}")
        if self.scheduling != "round_robin":
            raise ValueError(f"unsupported scheduling policy {self.scheduling!r}")

    @classmethod
    def uniform(cls, n: int, flavor_id: int, image_id: str, prefix: str = "vm") -> ClusterSpec:
        return cls(tuple(NodeSpec(f"{prefix}{i + 1}.novalocal", flavor_id, image_id) for i in range(n)))


def schedule(definition: WorkflowDefinition, nodes: list[VmInstance]) -> list[tuple[str, VmInstance]]:
    """Topological order with lexicographic tie-break, nodes assigned round-robin."""
    order = topological_order(definition.jobs)
    return [(name, nodes[i % len(nodes)]) for i, name in enumerate(order)]


class Executor:
    def __init__(self, cloud: SimCloud, db: ExecutionDb, max_workers: int = 1):
        self.cloud = cloud
        self.db = db
        self.max_workers = max_workers
        self._seq = itertools.count(1)
        self._seq_lock = threading.Lock()

    def _tick(self) -> int:
        with self._seq_lock:
            return next(self._seq)

    def provision_cluster(self, cluster: ClusterSpec, owner: str = DEFAULT_OWNER) -> list[VmInstance]:
        return [self.cloud.provision_vm(n.flavor_id, n.image_id, n.nodename, owner) for n in cluster.nodes]

    def stage_inputs(self, definition: WorkflowDefinition, inputs: Mapping[FileRef, bytes] | None = None) -> None:
        for ref, content in (inputs or {}).items():
            self.cloud.put_cloud_file(ref.container, ref.filename, content)
        missing = [str(r) for r in definition.external_inputs() if not self.cloud.exists(r.container, r.filename)]
        if missing:
            raise StagingError(f"external input(s) not in the object store: {', '.join(missing)}")

    def run_job(
        self,
        job: JobDefinition,
        node: VmInstance,
        resolve: Mapping[FileRef, FileRef] | None = None,
        output_container: str | None = None,
    ) -> JobRecord:
        """Execute one job on ``node``.

        ``resolve`` maps declared input refs to the actual object addresses
        (upstream outputs live in the run's container). Outputs keep their
        filename and go to ``output_container`` when given.
        """
        resolve = resolve or {}
        started = self._tick()
        ram = self.cloud.flavor(node.flavor_id).ram_mb
        if not fits_in_memory(job.required_ram_mb, ram):
            logger.info("%s: needs %d+%d MB, %s has %d", job.name, job.required_ram_mb, OVERHEAD_MB, node.ip, ram)
            return JobRecord(job.name, node.ip, JobStatus.FAILED_OOM, (), started, self._tick())

        data = []
        for ref in job.inputs:
            actual = resolve.get(ref, ref)
            if not self.cloud.exists(actual.container, actual.filename):
                raise MissingInput(f"{job.name}: input {actual} not found")
            data.append(self.cloud.get_cloud_file(actual.container, actual.filename).content)

        if job.kind is JobKind.SPLIT:
            payloads: tuple[bytes, ...] = split_text(data[0])
        elif job.kind is JobKind.WORDCOUNT:
            payloads = (count_words(data[0]),)
        elif job.kind is JobKind.MERGE:
            payloads = (merge_counts(data[0], data[1]),)
        else:
            payloads = ()

        produced = []
        for ref, payload in zip(job.outputs, payloads):
            target = FileRef(output_container or ref.container, ref.filename)
            self.cloud.put_cloud_file(target.container, target.filename, payload)
            produced.append(target)
        return JobRecord(job.name, node.ip, JobStatus.SUCCEEDED, tuple(produced), started, self._tick())

    def submit(
        self,
        definition: WorkflowDefinition,
        nodes: list[VmInstance],
        inputs: Mapping[FileRef, bytes] | None = None,
        repeat_of: int | None = None,
        owner: str = DEFAULT_OWNER,
    ) -> WorkflowRun:
        """Run ``definition`` on already-provisioned ``nodes`` and record the run.

        Raises JobFailedOom after recording the run if any job ran out of
        memory; jobs downstream of the failure are not executed.
        """
        validate_workflow(definition)
        if definition.jobs and not nodes:
            raise ValueError("no nodes to run on")
        self.stage_inputs(definition, inputs)
        wf_id = self.db.reserve_id()
        container = output_container_name(wf_id)
        by_name = {j.name: j for j in definition.jobs}
        plan = schedule(definition, nodes)
        node_of = dict(plan)

        producer_out: dict[FileRef, FileRef] = {
            ref: FileRef(container, ref.filename) for j in definition.jobs for ref in j.outputs
        }
        records: dict[str, JobRecord] = {}
        blocked: set[str] = set()

        def ready(name: str) -> bool:
            return all(d in records for d in by_name[name].depends_on)

        def dispatch(name: str) -> JobRecord:
            return self.run_job(by_name[name], node_of[name], producer_out, container)

        pending = [name for name, _ in plan]
        with ThreadPoolExecutor(max_workers=max(1, self.max_workers)) as pool:
            while pending:
                # plan is topological, so one pass propagates blocking transitively
                for n in pending:
                    if any(d in blocked for d in by_name[n].depends_on):
                        blocked.add(n)
                wave = [n for n in pending if n not in blocked and ready(n)]
                if not wave:
                    break
                if self.max_workers > 1:
                    results = list(pool.map(dispatch, wave))
                else:
                    results = [dispatch(n) for n in wave]
                for rec in results:
                    records[rec.job_name] = rec
                    if not rec.succeeded:
                        blocked.add(rec.job_name)
                pending = [n for n in pending if n not in records and n not in blocked]

        ordered = tuple(records[n] for n, _ in plan if n in records)
        run = WorkflowRun(wf_id, definition, ordered, container, repeat_of, owner)
        self.db.record(run)
        failed = [r.job_name for r in ordered if not r.succeeded]
        if failed:
            raise JobFailedOom(failed[0], run)
        return run

    def submit_workflow(
        self,
        definition: WorkflowDefinition,
        cluster: ClusterSpec,
        inputs: Mapping[FileRef, bytes] | None = None,
        owner: str = DEFAULT_OWNER,
    ) -> WorkflowRun:
        """Validate, provision the cluster, stage inputs, and run."""
        validate_workflow(definition)
        self.stage_inputs(definition, inputs)
        nodes = self.provision_cluster(cluster, owner)
        return self.submit(definition, nodes, None, owner=owner)

    def get_workflow_jobs(self, wf_id: int) -> list[JobRecord]:
        return self.db.get_workflow_jobs(wf_id)


def inputs_from_files(definition: WorkflowDefinition, contents: Iterable[bytes]) -> dict[FileRef, bytes]:
    """Pair payloads positionally with the workflow's external inputs."""
    refs = definition.external_inputs()
    contents = list(contents)
    if len(contents) != len(refs):
        raise StagingError(f"workflow reads {len(refs)} external input(s), {len(contents)} given")
    return dict(zip(refs, contents))



# -- memory sweep ---------------------------------------------------------


@dataclass(frozen=True)
class SweepCell:
    flavor: str
    ram_mb: int
    required_mb: int
    trials: int
    successes: int

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials


def memory_sweep(
    executor: Executor,
    start_mb: int,
    stop_mb: int,
    step_mb: int,
    repeats: int = 5,
    owner: str = DEFAULT_OWNER,
) -> list[SweepCell]:
    """Run ``repeats`` memhog jobs per (flavor, requirement) and tally successes.

    One VM per catalog flavor is provisioned for the sweep and destroyed
    afterwards. Requirements step from ``start_mb``; ``stop_mb`` is always
    the last point, even when it falls off the step grid.
    """
    if start_mb > stop_mb or step_mb <= 0 or repeats < 1 or start_mb <= 0:
        raise ValueError("need 0 < from <= to, step > 0 and repeats >= 1")
    grid = list(range(start_mb, stop_mb + 1, step_mb))
    if grid[-1] != stop_mb:
        grid.append(stop_mb)
    cloud = executor.cloud
    image_id = cloud.images[0].image_id
    cells = []
    for flavor in cloud.flavors:
        vm = cloud.provision_vm(flavor.flavor_id, image_id, f"memsweep-{flavor.name}.novalocal", owner)
        try:
            for required in grid:
                job = JobDefinition(f"memhog-{required}", JobKind.MEMHOG, required_ram_mb=required)
                ok = sum(executor.run_job(job, vm).succeeded for _ in range(repeats))
                cells.append(SweepCell(flavor.name, flavor.ram_mb, required, repeats, ok))
        finally:
            cloud.destroy_vm(vm.ip)
    return cells
