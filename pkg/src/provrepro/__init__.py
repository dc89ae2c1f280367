"""Repeatable workflow execution on a simulated IaaS cloud.

Workflows run on simulated VMs; each job is linked to the flavor and image
of the VM that ran it. That record is enough to provision equivalent VMs,
rerun the workflow, and check the rerun by hashing its outputs.
"""

from .errors import ProvReproError
from .executor import OVERHEAD_MB, ClusterSpec, ExecutionDb, Executor, NodeSpec
from .model import (
    CloudFile,
    FileRef,
    Flavor,
    Image,
    JobDefinition,
    JobKind,
    JobResourceMapping,
    ReproReport,
    VmInstance,
    WorkflowDefinition,
    WorkflowRun,
    load_workflow,
    parse_workflow,
    validate_workflow,
    wordcount_workflow,
)
from .provenance import ProvenanceAggregator, ProvenanceStore
from .reproduce import Reproducer
from .simcloud import SimCloud
from .verify import Verifier
from .workspace import Workspace

__version__ = "0.1.0"
