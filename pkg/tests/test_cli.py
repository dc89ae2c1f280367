import csv
import io
import subprocess
import sys
from pathlib import Path

import pytest

from provrepro.cli import main

WORKFLOWS = Path(__file__).resolve().parent.parent / "workflows"
WORDCOUNT = str(WORKFLOWS / "wordcount.wf")
CORPUS = str(WORKFLOWS / "corpus.txt")


def cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_run_assigns_sequential_ids(home, capsys):
    assert cli(capsys, "run", WORDCOUNT, "--input", CORPUS)[:2] == (0, "wfID: 1\n")
    assert cli(capsys, "run", WORDCOUNT, "--input", CORPUS)[:2] == (0, "wfID: 2\n")


def test_run_rejects_cyclic_workflow(home, capsys):
    code, out, err = cli(capsys, "run", str(WORKFLOWS / "cyclic.wf"))
    assert code == 1 and out == ""
    assert "CyclicDependency" in err or "cycl" in err.lower()
    assert not (home / "cloud" / "instances").exists() or "active" not in (home / "cloud" / "instances").read_text()


def test_run_rejects_malformed_json(home, tmp_path, capsys):
    bad = tmp_path / "bad.wf"
    bad.write_text('{"label": "x", "jobs": [')
    code, _, err = cli(capsys, "run", str(bad))
    assert code == 1 and "line 1" in err


def test_run_missing_input_file(home, tmp_path, capsys):
    code, _, err = cli(capsys, "run", WORDCOUNT, "--input", str(tmp_path / "nope"))
    assert code == 3 and "nope" in err


def test_run_unknown_flavor(home, capsys):
    code, _, err = cli(capsys, "run", WORDCOUNT, "--input", CORPUS, "--flavor", "m1.huge")
    assert code == 2 and "m1.huge" in err


def test_run_oom_exits_3_and_still_captures(home, tmp_path, capsys):
    wf = tmp_path / "hog.wf"
    wf.write_text('{"label": "hog", "jobs": [{"name": "big", "kind": "memhog", "required_ram_mb": 3000}]}')
    code, out, _ = cli(capsys, "run", str(wf), "--nodes", "1")
    assert code == 3 and out == "wfID: 1\n"
    assert cli(capsys, "infra", "1")[0] == 0


def test_validate(home, capsys):
    code, out, _ = cli(capsys, "validate", WORDCOUNT)
    assert code == 0 and "valid (4 jobs)" in out
    assert cli(capsys, "validate", str(WORKFLOWS / "cyclic.wf"))[0] == 1


def test_repeat_and_compare(home, capsys):
    cli(capsys, "run", WORDCOUNT, "--input", CORPUS)
    assert cli(capsys, "repeat", "1")[:2] == (0, "wfID: 2 (repeat of 1)\n")
    code, out, _ = cli(capsys, "compare", "1", "2")
    assert code == 0 and out.startswith("OUTPUTS MATCH (5/5)")


def test_repeat_unknown_id(home, capsys):
    code, _, err = cli(capsys, "repeat", "999")
    assert code == 1 and "999" in err


def test_compare_differ(home, capsys):
    cli(capsys, "run", WORDCOUNT, "--input", CORPUS)
    cli(capsys, "repeat", "1")
    (home / "cloud" / "objects" / "wfoutput2" / "merge_output").write_bytes(b"1\n")
    code, out, _ = cli(capsys, "compare", "1", "2")
    assert code == 5
    assert out.splitlines()[0] == "OUTPUTS DIFFER (4/5)"
    assert "merge_output" in out.splitlines()[1]


def test_report_command(home, capsys):
    cli(capsys, "run", WORDCOUNT, "--input", CORPUS)
    cli(capsys, "repeat", "1")
    code, out, _ = cli(capsys, "report", "1", "2")
    assert code == 0 and "REPRODUCED" in out
    assert (home / "reports" / "1_2.csv").exists()
    cli(capsys, "run", WORDCOUNT, "--flavor", "m1.medium", "--input", CORPUS)
    assert cli(capsys, "report", "1", "3")[0] == 5


def test_infra(home, capsys):
    cli(capsys, "run", WORDCOUNT, "--input", CORPUS)
    code, out, _ = cli(capsys, "infra", "1")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and len(rows) == 3
    assert rows[1][:4] == ["1", "172.16.1.2", "vm1.novalocal", "2"]
    code, out, _ = cli(capsys, "infra", "1", "--all-jobs")
    assert len(out.splitlines()) == 5


def test_infra_uncaptured(home, capsys):
    code, _, err = cli(capsys, "infra", "1")
    assert code == 1 and "NotCaptured" in err


def test_capture_twice_and_force(home, capsys):
    cli(capsys, "run", WORDCOUNT, "--input", CORPUS)
    assert cli(capsys, "capture", "1")[0] == 4
    code, out, _ = cli(capsys, "capture", "1", "--force")
    assert code == 0 and "4 job mapping" in out


def test_capture_after_teardown_fails(home, capsys):
    cli(capsys, "run", WORDCOUNT, "--input", CORPUS)
    code, out, _ = cli(capsys, "teardown", "1")
    assert code == 0 and out.count("destroyed") == 2
    assert cli(capsys, "vms")[1] == ""
    code, _, err = cli(capsys, "capture", "1", "--force")
    assert code == 4 and "UnmappedJob" in err


def test_memsweep(home, tmp_path, capsys):
    code, out, _ = cli(capsys, "memsweep", "--from", "400", "--to", "600", "--step", "100", "--repeats", "2")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0
    tiny = {int(r["required_mb"]): float(r["success_rate"]) for r in rows if r["flavor"] == "m1.tiny"}
    assert tiny == {400: 1.0, 500: 0.0, 600: 0.0}
    target = tmp_path / "sweep.csv"
    assert cli(capsys, "memsweep", "--from", "100", "--to", "200", "--out", str(target))[0] == 0
    assert target.read_text().startswith("flavor,ram_mb,required_mb,trials,successes,success_rate\n")


def test_memsweep_bad_range(home, capsys):
    assert cli(capsys, "memsweep", "--from", "500", "--to", "100")[0] == 1
    assert cli(capsys, "memsweep", "--step", "0")[0] == 1


def test_bad_arguments(home, capsys):
    assert cli(capsys)[0] == 1
    assert cli(capsys, "repeat", "abc")[0] == 1


def test_scripted_round_trip(tmp_path):
    env = {"PROVREPRO_HOME": str(tmp_path / "state"), "PATH": "/usr/bin:/bin"}

    def run(*args):
        return subprocess.run([sys.executable, "-m", "provrepro", *args], env=env, capture_output=True, text=True)

    assert run("run", WORDCOUNT, "--input", CORPUS).stdout == "wfID: 1\n"
    assert run("repeat", "1").stdout == "wfID: 2 (repeat of 1)\n"
    res = run("compare", "1", "2")
    assert res.returncode == 0 and "MATCH (5/5)" in res.stdout
