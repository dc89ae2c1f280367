"""Cloud-aware provenance: joining job records with VM configuration.

``ProvenanceAggregator`` reads a finished run from the execution database
and the VM inventory from the cloud, and joins them on IP address.
``ProvenanceStore`` persists the joined rows together with the archived
workflow definition, which is everything needed to repeat the run later.

Store layout under ``<home>/prov``::

    index              one JSON record per committed capture (last wins per wf_id)
    <wf_id>.<n>.jsonl  definition record, then one mapping record per job;
                       n counts forced re-captures, older files are removed
"""

from __future__ import annotations

import csv
import io
import json
import os
from collections import Counter
from dataclasses import dataclass
from typing import Iterable

from ._storage import JsonlLog, WriterLock, atomic_write, home_dir
from .errors import CorruptProvenance, DuplicateCapture, NotCaptured, UnmappedJob
from .executor import ExecutionDb, NodeSpec
from .model import JobResourceMapping, WorkflowDefinition, topological_order
from .simcloud import SimCloud


@dataclass(frozen=True)
class CapturedRun:
    wf_id: int
    definition: WorkflowDefinition
    mappings: tuple[JobResourceMapping, ...]
    repeat_of: int | None = None

    def distinct_hosts(self) -> list[JobResourceMapping]:
        """First row for each host IP, walking jobs in execution order."""
        rank = {n: i for i, n in enumerate(topological_order(self.definition.jobs))}
        seen: dict[str, JobResourceMapping] = {}
        for row in sorted(self.mappings, key=lambda r: (rank.get(r.job_name, len(rank)), r.job_name)):
            seen.setdefault(row.host_ip, row)
        return list(seen.values())


class ProvenanceStore:
    def __init__(self, home: str | os.PathLike | None = None):
        self.root = home_dir(home) / "prov"
        self.root.mkdir(parents=True, exist_ok=True)
        self._index_log = JsonlLog(self.root / "index")
        self._index: dict[int, dict] = {}
        self._lock = WriterLock(self.root / ".lock")

    def _sync(self) -> dict[int, dict]:
        for rec in self._index_log.read_new():
            self._index[rec["wf_id"]] = rec
        return self._index

    def is_captured(self, wf_id: int) -> bool:
        return wf_id in self._sync()

    def captured_ids(self) -> list[int]:
        return sorted(self._sync())

    def store_mappings(
        self,
        rows: Iterable[JobResourceMapping],
        definition: WorkflowDefinition,
        *,
        wf_id: int | None = None,
        repeat_of: int | None = None,
        force: bool = False,
    ) -> None:
        """Persist rows and the archived definition for one run, all or nothing.

        ``wf_id`` is only needed when ``rows`` is empty. A second capture of
        the same run raises DuplicateCapture unless ``force`` is set, in which
        case the new rows replace the old ones.
        """
        rows = sorted(rows, key=lambda r: r.job_name)
        ids = {r.wf_id for r in rows}
        if wf_id is not None:
            ids.add(wf_id)
        if len(ids) != 1:
            raise ValueError(f"rows must belong to exactly one workflow, got ids {sorted(ids)}")
        (wf_id,) = ids
        names = [r.job_name for r in rows]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate job rows for workflow {wf_id}")
        if repeat_of is not None and repeat_of >= wf_id:
            raise ValueError("repeat_of must point to an older workflow")

        lines = [json.dumps({"type": "definition", "wf_id": wf_id, "definition": definition.to_dict()})]
        lines += [json.dumps({"type": "mapping", **r.to_dict()}) for r in rows]
        payload = ("\n".join(lines) + "\n").encode()

        with self._lock():
            index = self._sync()
            if wf_id in index and not force:
                raise DuplicateCapture(f"workflow {wf_id} already captured (use force to replace)")
            old = index.get(wf_id)
            generation = (old or {}).get("generation", 0) + 1
            fname = f"{wf_id}.{generation}.jsonl"
            atomic_write(self.root / fname, payload)
            # the index append is the commit point
            rec = {
                "wf_id": wf_id,
                "file": fname,
                "generation": generation,
                "rows": len(rows),
                "repeat_of": repeat_of,
            }
            self._index_log.append(rec)
            self._index[wf_id] = rec
        if old is not None and old["file"] != fname:
            (self.root / old["file"]).unlink(missing_ok=True)

    def get_mappings(self, wf_id: int) -> CapturedRun:
        entry = self._sync().get(wf_id)
        if entry is None:
            raise NotCaptured(wf_id)
        definition = None
        rows = []
        with open(self.root / entry["file"], encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                kind = rec.pop("type")
                if kind == "definition":
                    definition = WorkflowDefinition.from_dict(rec["definition"])
                else:
                    rows.append(JobResourceMapping.from_dict(rec))
        if definition is None or len(rows) != entry["rows"]:
            raise CorruptProvenance(f"capture file for workflow {wf_id} is incomplete")
        return CapturedRun(wf_id, definition, tuple(rows), entry.get("repeat_of"))

    def repeats_of(self, wf_id: int) -> list[int]:
        return sorted(k for k, v in self._sync().items() if v.get("repeat_of") == wf_id)

    def distinct_resource_specs(self, wf_id: int) -> list[NodeSpec]:
        """The re-provisioning shopping list: one spec per distinct host used."""
        captured = self.get_mappings(wf_id)
        return [NodeSpec(r.nodename, r.flavor_id, r.image_id) for r in captured.distinct_hosts()]

    def dump_csv(self, wf_id: int, per_job: bool = False) -> str:
        captured = self.get_mappings(wf_id)
        rows = captured.mappings if per_job else captured.distinct_hosts()
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(JobResourceMapping.CSV_HEADER)
        for row in rows:
            writer.writerow(row.csv_row())
        return buf.getvalue()


class ProvenanceAggregator:
    """Joins execution records with the VM inventory on IP address."""

    def __init__(self, cloud: SimCloud, db: ExecutionDb, store: ProvenanceStore):
        self.cloud = cloud
        self.db = db
        self.store = store

    def map_jobs_to_vms(self, wf_id: int) -> list[JobResourceMapping]:
        """One row per job record; nothing is persisted.

        Raises UnmappedJob listing every job whose recorded IP has no active VM.
        """
        run = self.db.get(wf_id)
        vm_list = self.cloud.list_vms(run.owner)
        ip_counts = Counter(vm.ip for vm in vm_list)
        clashes = sorted(ip for ip, n in ip_counts.items() if n > 1)
        if clashes:
            raise CorruptProvenance(f"several active VMs share ip(s) {clashes}")
        by_ip = {vm.ip: vm for vm in vm_list}

        rows, unmapped = [], []
        for rec in self.db.get_workflow_jobs(wf_id):
            vm = by_ip.get(rec.host_ip)
            if vm is None:
                unmapped.append((rec.job_name, rec.host_ip))
                continue
            flavor = self.cloud.flavor(vm.flavor_id)
            image = self.cloud.image(vm.image_id)
            rows.append(
                JobResourceMapping(
                    wf_id=wf_id,
                    job_name=rec.job_name,
                    host_ip=vm.ip,
                    nodename=vm.nodename,
                    flavor_id=flavor.flavor_id,
                    min_ram_mb=flavor.ram_mb,
                    min_hd_gb=flavor.disk_gb,
                    vcpus=flavor.vcpus,
                    image_name=image.image_name,
                    image_id=image.image_id,
                )
            )
        if unmapped:
            raise UnmappedJob(unmapped)
        return rows

    def capture(self, wf_id: int, force: bool = False) -> CapturedRun:
        run = self.db.get(wf_id)
        rows = self.map_jobs_to_vms(wf_id)
        self.store.store_mappings(rows, run.definition, wf_id=wf_id, repeat_of=run.repeat_of, force=force)
        return self.store.get_mappings(wf_id)
