"""Acceptance suite: one verify-all run (two passes), one test per criterion."""

from __future__ import annotations

import csv
import json

import pytest

from nlkg.acceptance import NAMES
from nlkg.cli import main


@pytest.fixture(scope="module")
def verify_all(tmp_path_factory, acceptance_lines):
    out = tmp_path_factory.mktemp("acceptance")
    code = main(["verify-all", "--out", str(out), "--repeat", "2"])
    root = out / "verify-all"
    results = {c["id"]: c for c in json.loads((root / "results.json").read_text())["criteria"]}
    with open(root / "matrix.csv") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))][1:]
    status = {int(r[0]): (r[2], float(r[3])) for r in rows}
    acceptance_lines[:] = [
        f"[{'PASS' if status[i][0] == 'pass' else 'FAIL'}] criterion {i:2d}: {NAMES[i]} ({status[i][1]:.1f}s)"
        for i in sorted(status)
    ]
    return code, results, status


@pytest.mark.parametrize("cid", sorted(NAMES), ids=[f"{i:02d}-{NAMES[i].replace(' ', '_')}" for i in sorted(NAMES)])
def test_criterion(verify_all, cid):
    _, results, status = verify_all
    res = results[cid]
    assert res["pass"], json.dumps(res["measured"], indent=1)
    assert status[cid][0] == "pass", f"criterion {cid} exceeded its time budget ({status[cid][1]:.1f}s)"


def test_exit_code(verify_all):
    assert verify_all[0] == 0
