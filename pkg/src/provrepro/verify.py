"""Reproducibility verification at three levels: structure, infrastructure, outputs."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from pathlib import Path

from ._storage import atomic_write, home_dir
from .errors import FileNotFound
from .executor import ExecutionDb
from .model import FileComparison, FileRef, JobRecord, ReproReport
from .provenance import ProvenanceStore
from .reproduce import InfrastructureComparison, Reproducer
from .simcloud import SimCloud

REPORT_CSV_HEADER = ("Job", "WFID", "ContainerName", "FileName", "MD5Hash")


@dataclass(frozen=True)
class OutputComparison:
    src_wf_id: int
    dest_wf_id: int
    files: tuple[FileComparison, ...]
    file_counter: int
    comparison_counter: int
    warnings: tuple[str, ...] = ()

    @property
    def equal(self) -> bool:
        return self.file_counter == self.comparison_counter

    def __bool__(self) -> bool:
        return self.equal

    @property
    def mismatches(self) -> list[FileComparison]:
        return [f for f in self.files if not f.match]


@dataclass(frozen=True)
class StructureComparison:
    missing_jobs: tuple[str, ...] = ()
    extra_jobs: tuple[str, ...] = ()
    kind_changes: tuple[tuple[str, str, str], ...] = ()
    missing_edges: tuple[tuple[str, str], ...] = ()
    extra_edges: tuple[tuple[str, str], ...] = ()

    @property
    def equal(self) -> bool:
        return not (self.missing_jobs or self.extra_jobs or self.kind_changes or self.missing_edges or self.extra_edges)

    def __bool__(self) -> bool:
        return self.equal

    def describe(self) -> list[str]:
        out = [f"job {j} missing from destination" for j in self.missing_jobs]
        out += [f"job {j} only in destination" for j in self.extra_jobs]
        out += [f"job {j} kind {a} -> {b}" for j, a, b in self.kind_changes]
        out += [f"edge {a}->{b} missing from destination" for a, b in self.missing_edges]
        out += [f"edge {a}->{b} only in destination" for a, b in self.extra_edges]
        return out


def _hash_or_none(cloud: SimCloud, ref: FileRef | None) -> str | None:
    if ref is None:
        return None
    try:
        return cloud.get_cloud_file(ref.container, ref.filename).md5_hex
    except FileNotFound:
        return None


class Verifier:
    def __init__(self, cloud: SimCloud, db: ExecutionDb, store: ProvenanceStore):
        self.cloud = cloud
        self.db = db
        self.store = store
        self.reproducer = Reproducer(cloud, db, store)

    def compare_workflow_outputs(self, src_wf_id: int, dest_wf_id: int) -> OutputComparison:
        """Hash-compare every source output with its counterpart in the destination.

        Files pair up by (job name, output position), since the two runs
        write into different containers. A source file with no counterpart
        is counted but never matches. Destination-only files are warnings.
        """
        src_jobs = self.db.get_workflow_jobs(src_wf_id)
        dest_jobs: dict[str, JobRecord] = {r.job_name: r for r in self.db.get_workflow_jobs(dest_wf_id)}

        files: list[FileComparison] = []
        warnings: list[str] = []
        file_counter = comparison_counter = 0
        for job in src_jobs:
            dest_job = dest_jobs.get(job.job_name)
            if dest_job is None:
                warnings.append(f"job {job.job_name} missing from workflow {dest_wf_id}")
            for pos, src_ref in enumerate(job.produced):
                dest_ref = None
                if dest_job is not None and pos < len(dest_job.produced):
                    dest_ref = dest_job.produced[pos]
                cmp = FileComparison(
                    job=job.job_name,
                    position=pos,
                    src=src_ref,
                    dest=dest_ref,
                    src_hash=_hash_or_none(self.cloud, src_ref),
                    dest_hash=_hash_or_none(self.cloud, dest_ref),
                )
                file_counter += 1
                if cmp.match:
                    comparison_counter += 1
                files.append(cmp)

        src_names = {j.job_name: len(j.produced) for j in src_jobs}
        for name, rec in dest_jobs.items():
            for ref in rec.produced[src_names.get(name, 0) :]:
                warnings.append(f"{ref} (job {name}) exists only in workflow {dest_wf_id}")
        return OutputComparison(src_wf_id, dest_wf_id, tuple(files), file_counter, comparison_counter, tuple(warnings))

    def compare_workflow_structure(self, src_wf_id: int, dest_wf_id: int) -> StructureComparison:
        a = self.store.get_mappings(src_wf_id).definition
        b = self.store.get_mappings(dest_wf_id).definition
        kinds_a = {j.name: j.kind.value for j in a.jobs}
        kinds_b = {j.name: j.kind.value for j in b.jobs}
        return StructureComparison(
            missing_jobs=tuple(sorted(kinds_a.keys() - kinds_b.keys())),
            extra_jobs=tuple(sorted(kinds_b.keys() - kinds_a.keys())),
            kind_changes=tuple(
                (n, kinds_a[n], kinds_b[n]) for n in sorted(kinds_a.keys() & kinds_b.keys()) if kinds_a[n] != kinds_b[n]
            ),
            missing_edges=tuple(sorted(a.edges() - b.edges())),
            extra_edges=tuple(sorted(b.edges() - a.edges())),
        )

    def compare_infrastructure(self, src_wf_id: int, dest_wf_id: int) -> InfrastructureComparison:
        return self.reproducer.compare_infrastructure(src_wf_id, dest_wf_id)

    def build_report(self, src_wf_id: int, dest_wf_id: int) -> ReproReport:
        structure = self.compare_workflow_structure(src_wf_id, dest_wf_id)
        infra = self.compare_infrastructure(src_wf_id, dest_wf_id)
        outputs = self.compare_workflow_outputs(src_wf_id, dest_wf_id)
        notes = [
            "inputs are not hashed separately: a repeat re-reads the source run's input objects",
            f"hosts: {len(infra.src_hosts)} in workflow {src_wf_id}, {len(infra.dest_hosts)} in workflow {dest_wf_id}"
            " (one VM per distinct host actually used)",
        ]
        notes += structure.describe()
        notes += [f"resource config {k} only in workflow {src_wf_id}" for k in infra.only_in_src]
        notes += [f"resource config {k} only in workflow {dest_wf_id}" for k in infra.only_in_dest]
        notes += list(outputs.warnings)
        return ReproReport(
            src_wf_id=src_wf_id,
            dest_wf_id=dest_wf_id,
            structure_equal=structure.equal,
            infrastructure_equal=infra.equal,
            outputs_equal=outputs.equal,
            per_file=outputs.files,
            notes=tuple(notes),
        )


def _yes_no(flag: bool) -> str:
    return "equal" if flag else "DIFFERENT"


def render_text(report: ReproReport) -> str:
    matched = sum(1 for f in report.per_file if f.match)
    lines = [
        f"Reproducibility report: source {report.src_wf_id} -> destination {report.dest_wf_id}",
        f"  workflow structure:       {_yes_no(report.structure_equal)}",
        f"  execution infrastructure: {_yes_no(report.infrastructure_equal)}",
        f"  outputs:                  {_yes_no(report.outputs_equal)} ({matched}/{len(report.per_file)} files)",
        f"  verdict:                  {'REPRODUCED' if report.verdict else 'NOT REPRODUCED'}",
        "",
        f"{'job':<12} {'file':<16} {'source md5':<34} {'destination md5':<34} match",
    ]
    for f in report.per_file:
        lines.append(
            f"{f.job:<12} {f.filename:<16} {f.src_hash or '-':<34} {f.dest_hash or '-':<34} {'yes' if f.match else 'NO'}"
        )
    if report.notes:
        lines += ["", "notes:"] + [f"  - {n}" for n in report.notes]
    return "\n".join(lines) + "\n"


def render_csv(report: ReproReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_CSV_HEADER)
    for f in report.per_file:
        writer.writerow([f.job, report.src_wf_id, f.src.container, f.src.filename, f.src_hash or ""])
        if f.dest is None:
            writer.writerow([f.job, report.dest_wf_id, "", "", ""])
        else:
            writer.writerow([f.job, report.dest_wf_id, f.dest.container, f.dest.filename, f.dest_hash or ""])
    return buf.getvalue()


def write_report(report: ReproReport, home: str | os.PathLike | None = None) -> tuple[Path, Path]:
    out = home_dir(home) / "reports"
    stem = f"{report.src_wf_id}_{report.dest_wf_id}"
    txt, csv_path = out / f"{stem}.txt", out / f"{stem}.csv"
    atomic_write(txt, render_text(report).encode())
    atomic_write(csv_path, render_csv(report).encode())
    return txt, csv_path
