"""One object wiring every subsystem to a single state directory."""

from __future__ import annotations

import os
from typing import Mapping

from ._storage import home_dir
from .errors import JobFailedOom
from .executor import ClusterSpec, ExecutionDb, Executor
from .model import FileRef, ReproReport, WorkflowDefinition, WorkflowRun, validate_workflow
from .provenance import CapturedRun, ProvenanceAggregator, ProvenanceStore
from .reproduce import InfrastructureComparison, Reproducer
from .simcloud import DEFAULT_OWNER, SimCloud
from .verify import OutputComparison, StructureComparison, Verifier


class Workspace:
    def __init__(self, home: str | os.PathLike | None = None, max_workers: int = 1):
        self.home = home_dir(home)
        self.cloud = SimCloud(self.home)
        self.db = ExecutionDb(self.home)
        self.store = ProvenanceStore(self.home)
        self.executor = Executor(self.cloud, self.db, max_workers)
        self.aggregator = ProvenanceAggregator(self.cloud, self.db, self.store)
        self.reproducer = Reproducer(self.cloud, self.db, self.store, self.executor)
        self.verifier = Verifier(self.cloud, self.db, self.store)

    def run(
        self,
        definition: WorkflowDefinition,
        nodes: int = 2,
        flavor: str = "m1.small",
        inputs: Mapping[FileRef, bytes] | None = None,
        capture: bool = True,
        owner: str = DEFAULT_OWNER,
    ) -> WorkflowRun:
        """Provision ``nodes`` VMs of ``flavor``, run, and capture provenance.

        A run that fails with JobFailedOom is still captured before the
        error propagates.
        """
        validate_workflow(definition)
        if nodes < 1:
            raise ValueError("need at least one node")
        image_id = self.cloud.images[0].image_id
        cluster = ClusterSpec.uniform(nodes, self.cloud.flavor_by_name(flavor).flavor_id, image_id)
        try:
            run = self.executor.submit_workflow(definition, cluster, inputs, owner)
        except JobFailedOom as exc:
            if capture:
                self.aggregator.capture(exc.run.wf_id)
            raise
        if capture:
            self.aggregator.capture(run.wf_id)
        return run

    def capture(self, wf_id: int, force: bool = False) -> CapturedRun:
        return self.aggregator.capture(wf_id, force)

    def repeat(self, src_wf_id: int) -> WorkflowRun:
        return self.reproducer.repeat_workflow(src_wf_id)

    def compare_outputs(self, src: int, dest: int) -> OutputComparison:
        return self.verifier.compare_workflow_outputs(src, dest)

    def compare_structure(self, src: int, dest: int) -> StructureComparison:
        return self.verifier.compare_workflow_structure(src, dest)

    def compare_infrastructure(self, src: int, dest: int) -> InfrastructureComparison:
        return self.reproducer.compare_infrastructure(src, dest)

    def report(self, src: int, dest: int) -> ReproReport:
        return self.verifier.build_report(src, dest)
