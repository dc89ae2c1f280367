"""Exception hierarchy.

Every error carries the CLI exit code of its failure class so the command
layer does not need a parallel lookup table.
"""

from __future__ import annotations

EXIT_VALIDATION = 1
EXIT_PROVISIONING = 2
EXIT_EXECUTION = 3
EXIT_CAPTURE = 4
EXIT_VERDICT_FALSE = 5


class ProvReproError(Exception):
    exit_code = EXIT_VALIDATION


# -- model ---------------------------------------------------------------


class ValidationIssue(ProvReproError):
    """A single invariant violation in a workflow definition."""

    code = "ValidationIssue"

    def __init__(self, message: str, job: str | None = None):
        super().__init__(message)
        self.message = message
        self.job = job

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


class CyclicDependency(ValidationIssue):
    code = "CyclicDependency"


class UnknownDependency(ValidationIssue):
    code = "UnknownDependency"


class ArityMismatch(ValidationIssue):
    code = "ArityMismatch"


class DuplicateJobName(ValidationIssue):
    code = "DuplicateJobName"


class UnproducedInput(ValidationIssue):
    code = "UnproducedInput"


class DuplicateOutput(ValidationIssue):
    code = "DuplicateOutput"


class InvalidField(ValidationIssue):
    code = "InvalidField"


class ValidationFailed(ProvReproError):
    """Raised with the complete list of issues found in a definition."""

    def __init__(self, issues: list[ValidationIssue]):
        self.issues = list(issues)
        super().__init__("; ".join(str(i) for i in self.issues))

    def codes(self) -> set[str]:
        return {i.code for i in self.issues}


class WorkflowFileError(ProvReproError):
    """Malformed workflow definition document (syntax or field shape)."""


# -- simcloud ------------------------------------------------------------


class CloudError(ProvReproError):
    exit_code = EXIT_PROVISIONING


class UnknownFlavor(CloudError):
    pass


class UnknownImage(CloudError):
    pass


class IpSpaceExhausted(CloudError):
    pass


class NoSuchInstance(CloudError):
    pass


class InvalidName(ProvReproError):
    pass


class FileNotFound(ProvReproError):
    exit_code = EXIT_EXECUTION

    def __init__(self, container: str, filename: str):
        super().__init__(f"no object {container}/{filename}")
        self.container = container
        self.filename = filename


# -- executor ------------------------------------------------------------


class ExecutionError(ProvReproError):
    exit_code = EXIT_EXECUTION


class StagingError(ExecutionError):
    pass


class MissingInput(ExecutionError):
    pass


class JobFailedOom(ExecutionError):
    """A job ran out of memory; the failed run is already recorded."""

    def __init__(self, job: str, run=None):
        super().__init__(f"job {job!r} failed: out of memory")
        self.job = job
        self.run = run


class UnknownWorkflow(ProvReproError):
    def __init__(self, wf_id: int):
        super().__init__(f"unknown workflow id {wf_id}")
        self.wf_id = wf_id


# -- provenance ----------------------------------------------------------


class CaptureError(ProvReproError):
    exit_code = EXIT_CAPTURE


class UnmappedJob(CaptureError):
    def __init__(self, unmapped: list[tuple[str, str]]):
        self.unmapped = list(unmapped)
        detail = ", ".join(f"{job}@{ip}" for job, ip in self.unmapped)
        super().__init__(f"no active VM for job(s): {detail}")

    @property
    def jobs(self) -> set[str]:
        return {job for job, _ in self.unmapped}


class DuplicateCapture(CaptureError):
    pass


class CorruptProvenance(CaptureError):
    pass


class NotCaptured(ProvReproError):
    def __init__(self, wf_id: int):
        super().__init__(f"workflow {wf_id} has no captured provenance")
        self.wf_id = wf_id


# -- reproduce -----------------------------------------------------------


class ProvisioningFailed(CloudError):
    pass


class InputsMissing(ExecutionError):
    pass
