"""Repeating a captured workflow on freshly provisioned, equivalent VMs."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass

from .errors import CloudError, InputsMissing, JobFailedOom, ProvisioningFailed, UnknownWorkflow
from .executor import ExecutionDb, Executor
from .model import JobResourceMapping, VmInstance, WorkflowRun
from .provenance import ProvenanceAggregator, ProvenanceStore
from .simcloud import DEFAULT_OWNER, SimCloud

logger = logging.getLogger(__name__)

REP_SUFFIX = "-rep"

ResourceKey = tuple[int, int, int, int, str]


def rep_nodename(nodename: str) -> str:
    """``osdc-vm3.novalocal`` -> ``osdc-vm3-rep.novalocal``."""
    head, dot, tail = nodename.partition(".")
    return f"{head}{REP_SUFFIX}{dot}{tail}"


@dataclass(frozen=True)
class InfrastructureComparison:
    src_wf_id: int
    dest_wf_id: int
    src_hosts: tuple[JobResourceMapping, ...]
    dest_hosts: tuple[JobResourceMapping, ...]
    only_in_src: tuple[ResourceKey, ...]
    only_in_dest: tuple[ResourceKey, ...]

    @property
    def equal(self) -> bool:
        return not self.only_in_src and not self.only_in_dest

    def __bool__(self) -> bool:
        return self.equal


class Reproducer:
    def __init__(self, cloud: SimCloud, db: ExecutionDb, store: ProvenanceStore, executor: Executor | None = None):
        self.cloud = cloud
        self.db = db
        self.store = store
        self.executor = executor or Executor(cloud, db)
        self.aggregator = ProvenanceAggregator(cloud, db, store)

    def _provision(self, specs, owner: str) -> list[VmInstance]:
        vms: list[VmInstance] = []
        try:
            for spec in specs:
                vms.append(self.cloud.provision_vm(spec.flavor_id, spec.image_id, rep_nodename(spec.nodename), owner))
        except CloudError as exc:
            for vm in vms:
                self.cloud.destroy_vm(vm.ip)
            raise ProvisioningFailed(f"could not re-provision {spec}: {exc}") from exc
        return vms

    def repeat_workflow(self, src_wf_id: int) -> WorkflowRun:
        """Re-provision, resubmit, and re-capture a captured run.

        The new run gets a fresh wf_id with ``repeat_of`` pointing at the
        source. One VM is provisioned per distinct host the source used,
        with identical flavor and image.
        """
        captured = self.store.get_mappings(src_wf_id)
        specs = self.store.distinct_resource_specs(src_wf_id)
        try:
            owner = self.db.get(src_wf_id).owner
        except UnknownWorkflow:
            owner = DEFAULT_OWNER

        definition = captured.definition
        missing = [str(r) for r in definition.external_inputs() if not self.cloud.exists(r.container, r.filename)]
        if missing:
            raise InputsMissing(f"inputs of workflow {src_wf_id} no longer in the object store: {', '.join(missing)}")

        vms = self._provision(specs, owner)
        logger.info("repeating %d on %s", src_wf_id, [vm.nodename for vm in vms])
        try:
            run = self.executor.submit(definition, vms, repeat_of=src_wf_id, owner=owner)
        except JobFailedOom as exc:
            # the failed run is recorded; keep its provenance too
            self.aggregator.capture(exc.run.wf_id)
            raise
        self.aggregator.capture(run.wf_id)
        return run

    def compare_infrastructure(self, src_wf_id: int, dest_wf_id: int) -> InfrastructureComparison:
        """Multiset equality of per-host resource configuration; IPs and names ignored."""
        src = tuple(self.store.get_mappings(src_wf_id).distinct_hosts())
        dest = tuple(self.store.get_mappings(dest_wf_id).distinct_hosts())
        a = Counter(r.resource_key() for r in src)
        b = Counter(r.resource_key() for r in dest)
        return InfrastructureComparison(
            src_wf_id,
            dest_wf_id,
            src,
            dest,
            tuple(sorted((a - b).elements())),
            tuple(sorted((b - a).elements())),
        )
