import json
import subprocess
import sys

import pytest

from hiplace.harness import fixture_path
from hiplace.harness.cli import main

SMALL = str(fixture_path("small"))
TINY = str(fixture_path("tiny"))


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def files_of(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    out = tmp_path_factory.mktemp("ck")
    assert main(["train", SMALL, "--pretrain-episodes", "10", "--joint-episodes", "6", "--out", str(out)]) == 0
    return out / "checkpoint.json"


def twice(argv, tmp_path, capsys, name):
    """Run ``argv`` twice into separate directories; return both directories' file contents."""
    results = []
    for i in range(2):
        out = tmp_path / f"{name}{i}"
        code, stdout, _ = run([*argv, "--out", str(out)], capsys)
        assert code == 0 and json.loads(stdout)["ok"]
        results.append(files_of(out))
    return results


CASES = {
    "validate": ["validate", SMALL],
    "partition": ["partition", SMALL, "--seed", "3"],
    "baseline-json": ["baseline", SMALL, "--kind", "random", "--episodes", "3"],
    "baseline-csv": ["baseline", SMALL, "--kind", "best_fit", "--episodes", "2", "--format", "csv"],
    "pretrain": ["pretrain", SMALL, "--zone", "1", "--episodes", "8", "--format", "csv"],
    "train": ["train", SMALL, "--pretrain-episodes", "6", "--joint-episodes", "4", "--format", "csv"],
    "oracle": ["oracle", TINY],
}


@pytest.mark.parametrize("name", sorted(CASES))
def test_outputs_byte_identical(name, tmp_path, capsys):
    a, b = twice(CASES[name], tmp_path, capsys, name)
    assert a and a == b


def test_eval_and_compare_byte_identical(checkpoint, tmp_path, capsys):
    evals = twice(["eval", SMALL, "--checkpoint", str(checkpoint), "--episodes", "3", "--greedy",
                   "--format", "csv"], tmp_path, capsys, "eval")
    assert evals[0] == evals[1]
    base = tmp_path / "base"
    assert main(["baseline", SMALL, "--kind", "first_fit", "--episodes", "3", "--out", str(base)]) == 0
    capsys.readouterr()
    reports = [str(base / "report.json"), str(tmp_path / "eval0" / "report.json")]
    comps = twice(["compare", *reports], tmp_path, capsys, "cmp")
    assert comps[0] == comps[1]
    table = json.loads(comps[0]["comparison.json"])
    assert [r["source"] for r in table["rows"]] == ["first_fit", "checkpoint:checkpoint.json"]


def test_stdout_identical(capsys):
    outs = [run(["baseline", TINY, "--kind", "round_robin", "--episodes", "2", "--format", "csv"], capsys)[1]
            for _ in range(2)]
    assert outs[0] == outs[1] and outs[0].startswith("episode,placed,objective")


def test_seed_changes_output(capsys):
    a = run(["baseline", SMALL, "--kind", "random", "--episodes", "2", "--seed", "1"], capsys)[1]
    b = run(["baseline", SMALL, "--kind", "random", "--episodes", "2", "--seed", "2"], capsys)[1]
    assert a != b


def test_fixture_names_resolve(capsys):
    code, out, _ = run(["validate", "tiny"], capsys)
    assert code == 0 and json.loads(out)["nodes"] == 4


@pytest.mark.parametrize(
    "argv, code, needle",
    [
        (["validate", "does-not-exist.json"], 2, "cannot read"),
        (["validate", "medium"], 2, "no bundled fixture"),
        (["pretrain", SMALL, "--zone", "0"], 2, "--out"),
        (["pretrain", SMALL, "--zone", "5", "--out", "x"], 2, "out of range"),
        (["oracle", TINY, "--app", "3"], 2, "out of range"),
        (["oracle", SMALL, "--app", "0"], 0, None),
        (["eval", SMALL, "--checkpoint", "missing.json"], 2, "unknown policy source"),
        (["compare", "nothing.json"], 1, "FileNotFoundError"),
    ],
)
def test_exit_codes(argv, code, needle, capsys):
    got, out, err = run(argv, capsys)
    assert got == code
    if needle is not None:
        payload = json.loads(err)
        assert payload["ok"] is False and needle in json.dumps(payload)


def test_invalid_scenario_is_machine_readable(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": 1, "name": "x", "resources": {"nodes": []},
                               "applications": [], "bogus": 1}))
    got, _, err = run(["validate", str(bad)], capsys)
    payload = json.loads(err)
    assert got == 2 and payload["error"] == "invalid_scenario"
    assert any("bogus" in e for e in payload["errors"])


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hiplace.harness.cli", "partition", TINY],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["assignment"] == [0, 0, 1, 1]
