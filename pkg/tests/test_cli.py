import json

import numpy as np
import pytest

from nonunique.core.blocks import ProblemDims, admissible_block
from nonunique.geometry import build_tn, tn_to_json
from nonunique.main import build_parser, run_command


def test_parser_lists_every_command():
    parser = build_parser()
    args = parser.parse_args(["verify-tn", "--eps", "0.1,0.05", "--grid", "64"])
    assert args.command == "verify-tn"
    assert args.eps == [0.1, 0.05]
    assert args.grid == 64


def test_verify_tn_on_fixture(tmp_path):
    assert run_command(["verify-tn", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "verify-tn" / "report.json").read_text())
    assert report["N"] == 4
    assert report["collinear_legs"] == [[0, 2], [1, 3]]
    assert all(c["status"] == "pass" for c in report["certificates"])
    assert (tmp_path / "verify-tn" / "timings.json").exists()


def test_verify_tn_from_config_file(tmp_path):
    C = admissible_block([1.0], [1.0], 0.5, [[0.0]])
    cfg = build_tn(np.zeros((2, 2)), [(C, 2.0), (-C, 3.0)], dims=ProblemDims(1, 1))
    path = tmp_path / "run.json"
    path.write_text(json.dumps(tn_to_json(cfg)))
    assert run_command(["verify-tn", "--config", str(path), "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "verify-tn" / "report.json").read_text())
    assert report["N"] == 2
    assert report["admissible"] is True


def test_tartar_demo(tmp_path):
    assert run_command(["tartar-demo", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "tartar-demo" / "report.json").read_text())
    assert report["hull_size"] == 4


def test_report_is_deterministic(tmp_path):
    run_command(["tartar-demo", "--out", str(tmp_path / "a")])
    run_command(["tartar-demo", "--out", str(tmp_path / "b")])
    first = (tmp_path / "a" / "tartar-demo" / "report.json").read_text()
    second = (tmp_path / "b" / "tartar-demo" / "report.json").read_text()
    assert first.replace(str(tmp_path / "a"), "") == second.replace(str(tmp_path / "b"), "")


@pytest.mark.parametrize(
    "argv",
    [
        ["staircase", "--eps", "1.5"],
        ["staircase", "--eps", "0.05,0.1"],
        ["refine", "--grid", "100"],
        ["refine", "--flux", "quartic"],
        ["no-such-command"],
    ],
)
def test_invalid_input_exits_with_two(tmp_path, argv):
    if argv[0] != "no-such-command":
        argv = argv + ["--out", str(tmp_path)]
    assert run_command(argv) == 2
