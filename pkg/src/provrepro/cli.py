"""Command-line entry point.

State lives in ``$PROVREPRO_HOME`` (default ``./.provrepro``).

Exit codes: 0 ok, 1 validation / unknown id / bad arguments, 2 provisioning,
3 execution, 4 provenance capture, 5 reproducibility check failed.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .errors import (
    EXIT_CAPTURE,
    EXIT_EXECUTION,
    EXIT_VALIDATION,
    EXIT_VERDICT_FALSE,
    JobFailedOom,
    ProvReproError,
)
from .executor import inputs_from_files, memory_sweep
from .model import load_workflow, validate_workflow
from .verify import render_text, write_report
from .workspace import Workspace

logger = logging.getLogger("provrepro")


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def cmd_run(ws: Workspace, args) -> int:
    definition = validate_workflow(load_workflow(args.workflow))
    inputs = None
    if args.input:
        contents = []
        for path in args.input:
            try:
                contents.append(Path(path).read_bytes())
            except OSError as exc:
                _err(f"{path}: {exc.strerror}")
                return EXIT_EXECUTION
        inputs = inputs_from_files(definition, contents)
    try:
        run = ws.run(definition, nodes=args.nodes, flavor=args.flavor, inputs=inputs, capture=False)
    except JobFailedOom as exc:
        print(f"wfID: {exc.run.wf_id}")
        _err(str(exc))
        try:
            ws.capture(exc.run.wf_id)
        except ProvReproError as cap:
            _err(f"capture failed: {cap}")
        return EXIT_EXECUTION
    print(f"wfID: {run.wf_id}")
    try:
        ws.capture(run.wf_id)
    except ProvReproError as exc:
        _err(f"capture failed: {exc}")
        return EXIT_CAPTURE
    return 0


def cmd_capture(ws: Workspace, args) -> int:
    captured = ws.capture(args.wf_id, force=args.force)
    print(f"captured wfID {captured.wf_id}: {len(captured.mappings)} job mapping(s)")
    return 0


def cmd_repeat(ws: Workspace, args) -> int:
    run = ws.repeat(args.wf_id)
    print(f"wfID: {run.wf_id} (repeat of {args.wf_id})")
    return 0


def cmd_compare(ws: Workspace, args) -> int:
    result = ws.compare_outputs(args.src, args.dest)
    word = "MATCH" if result.equal else "DIFFER"
    print(f"OUTPUTS {word} ({result.comparison_counter}/{result.file_counter})")
    for f in result.mismatches:
        print(f"  mismatch: {f.job} {f.filename} {f.src_hash or '-'} != {f.dest_hash or '-'}")
    for w in result.warnings:
        print(f"  warning: {w}")
    return 0 if result.equal else EXIT_VERDICT_FALSE


def cmd_report(ws: Workspace, args) -> int:
    report = ws.report(args.src, args.dest)
    txt, csv_path = write_report(report, ws.home)
    sys.stdout.write(render_text(report))
    print(f"report written to {txt} and {csv_path}")
    return 0 if report.verdict else EXIT_VERDICT_FALSE


def cmd_infra(ws: Workspace, args) -> int:
    sys.stdout.write(ws.store.dump_csv(args.wf_id, per_job=args.all_jobs))
    return 0


def cmd_memsweep(ws: Workspace, args) -> int:
    try:
        cells = memory_sweep(ws.executor, args.start, args.stop, args.step, args.repeats)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_VALIDATION
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["flavor", "ram_mb", "required_mb", "trials", "successes", "success_rate"])
        for c in cells:
            writer.writerow([c.flavor, c.ram_mb, c.required_mb, c.trials, c.successes, f"{c.success_rate:.1f}"])
    finally:
        if args.out:
            out.close()
    return 0


def cmd_teardown(ws: Workspace, args) -> int:
    captured = ws.store.get_mappings(args.wf_id)
    active = {vm.ip for vm in ws.cloud.list_vms(None)}
    for row in captured.distinct_hosts():
        if row.host_ip in active:
            ws.cloud.destroy_vm(row.host_ip)
            print(f"destroyed {row.host_ip} ({row.nodename})")
    return 0


def cmd_vms(ws: Workspace, args) -> int:
    for vm in ws.cloud.list_vms(None):
        flavor = ws.cloud.flavor(vm.flavor_id)
        print(f"{vm.ip}\t{vm.nodename}\t{flavor.name}\t{vm.image_id}\t{vm.owner}")
    return 0


def cmd_validate(ws: Workspace, args) -> int:
    definition = validate_workflow(load_workflow(args.workflow))
    print(f"{args.workflow}: valid ({len(definition.jobs)} jobs)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="provrepro", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a workflow on fresh VMs and capture its provenance")
    p.add_argument("workflow", help="workflow definition (JSON)")
    p.add_argument("--nodes", type=int, default=2, help="number of compute VMs (default 2)")
    p.add_argument("--flavor", default="m1.small", help="flavor name (default m1.small)")
    p.add_argument("--input", nargs="+", metavar="FILE", help="local files staged as the workflow's external inputs, in order")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("capture", help="(re)capture Cloud-aware provenance of a run")
    p.add_argument("wf_id", type=int)
    p.add_argument("--force", action="store_true", help="replace an existing capture")
    p.set_defaults(func=cmd_capture)

    p = sub.add_parser("repeat", help="repeat a captured run on equivalent VMs")
    p.add_argument("wf_id", type=int)
    p.set_defaults(func=cmd_repeat)

    p = sub.add_parser("compare", help="compare output hashes of two runs")
    p.add_argument("src", type=int)
    p.add_argument("dest", type=int)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="three-level reproducibility report")
    p.add_argument("src", type=int)
    p.add_argument("dest", type=int)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("infra", help="print the infrastructure mapped to a run as CSV")
    p.add_argument("wf_id", type=int)
    p.add_argument("--all-jobs", action="store_true", help="one row per job instead of per host")
    p.set_defaults(func=cmd_infra)

    p = sub.add_parser("memsweep", help="memhog success rate per flavor and memory requirement")
    p.add_argument("--from", dest="start", type=int, default=100, metavar="MB")
    p.add_argument("--to", dest="stop", type=int, default=4096, metavar="MB")
    p.add_argument("--step", type=int, default=100, metavar="MB")
    p.add_argument("--repeats", type=int, default=5, metavar="K")
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(func=cmd_memsweep)

    p = sub.add_parser("teardown", help="destroy the VMs a captured run used")
    p.add_argument("wf_id", type=int)
    p.set_defaults(func=cmd_teardown)

    p = sub.add_parser("vms", help="list active VMs")
    p.set_defaults(func=cmd_vms)

    p = sub.add_parser("validate", help="check a workflow definition")
    p.add_argument("workflow")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    ws = Workspace()
    try:
        return args.func(ws, args)
    except ProvReproError as exc:
        _err(f"{type(exc).__name__}: {exc}")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
