"""Command line interface, exercised in-process through main()."""

import json

import numpy as np
import pytest

from voxelenc.cli import build_parser, main
from voxelenc.matio import read_matrix, write_matrix
from voxelenc.rng import PortableRng

SUBCOMMANDS = [
    "fit",
    "predict",
    "eval",
    "cv",
    "cross",
    "concept",
    "sweep",
    "ttest",
    "synth",
    "inspect",
]


def _synth(tmp_path, **extra):
    args = [
        "synth",
        "--n",
        "30",
        "--d",
        "4",
        "--v",
        "6",
        "--sigma",
        "0.1",
        "--seed",
        "5",
        "--out",
        str(tmp_path / "data"),
    ]
    for k, v in extra.items():
        args += [f"--{k}", str(v)]
    assert main(args) == 0
    return tmp_path / "data" / "manifest.json"


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_every_subcommand_has_help(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        main([cmd, "--help"])
    assert exc.value.code == 0
    assert "usage" in capsys.readouterr().out


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


def test_unknown_flag_exits_two():
    with pytest.raises(SystemExit) as exc:
        main(["cv", "--bogus"])
    assert exc.value.code == 2


def test_synth_then_inspect(tmp_path, capsys):
    man = _synth(tmp_path)
    out = capsys.readouterr().out
    assert "manifest.json" in out
    assert main(["inspect", str(man)]) == 0
    summary = capsys.readouterr().out
    assert "subject synth" in summary
    assert "30 stimuli" in summary
    assert main(["inspect", str(tmp_path / "data" / "response.vemf")]) == 0
    header = capsys.readouterr().out
    assert "rows: 30" in header
    assert "cols: 6" in header
    assert "dtype: float64" in header


def test_fit_predict_eval_flow(tmp_path, capsys):
    rng = PortableRng(2)
    x = rng.gaussians(40 * 5).reshape(40, 5)
    w = rng.gaussians(5 * 3).reshape(5, 3)
    y = x @ w
    write_matrix(x, tmp_path / "x.vemf")
    write_matrix(y, tmp_path / "y.vemf")
    prefix = tmp_path / "model" / "m"
    assert (
        main(
            [
                "fit",
                "--x",
                str(tmp_path / "x.vemf"),
                "--y",
                str(tmp_path / "y.vemf"),
                "--lambda",
                "0.001",
                "--out",
                str(prefix),
            ]
        )
        == 0
    )
    fit_info = json.loads(capsys.readouterr().out)
    assert fit_info["lambda"] == 0.001

    pred_path = tmp_path / "pred.vemf"
    assert (
        main(
            [
                "predict",
                "--model",
                str(prefix),
                "--x",
                str(tmp_path / "x.vemf"),
                "--out",
                str(pred_path),
            ]
        )
        == 0
    )
    capsys.readouterr()
    pred = read_matrix(pred_path)
    np.testing.assert_allclose(pred, y, atol=1e-3)

    assert (
        main(
            [
                "eval",
                "--y-true",
                str(tmp_path / "y.vemf"),
                "--y-pred",
                str(pred_path),
            ]
        )
        == 0
    )
    scores = json.loads(capsys.readouterr().out)
    assert scores["two_v_two"] == 1.0
    assert scores["pearson"] > 0.999


def test_cv_run_and_byte_identical_rerun(tmp_path, capsys):
    man = _synth(tmp_path)
    capsys.readouterr()
    out_a = tmp_path / "run_a"
    out_b = tmp_path / "run_b"
    for out in (out_a, out_b):
        code = main(
            ["cv", "--manifest", str(man), "--k", "3", "--out", str(out)]
        )
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["kind"] == "cv"
        assert summary["rows"] == 3
    assert (out_a / "report.json").read_bytes() == (out_b / "report.json").read_bytes()


def test_cv_config_file_with_flag_override(tmp_path, capsys):
    man = _synth(tmp_path)
    capsys.readouterr()
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"manifest": str(man), "k": 3, "lambda": 5.0}))
    out = tmp_path / "run"
    assert main(["cv", "--config", str(cfg), "--k", "5", "--out", str(out)]) == 0
    capsys.readouterr()
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["k"] == 5  # flag wins
    assert report["config"]["lambda"] == 5.0  # file value survives
    assert "out_dir" not in report["config"]


def test_cv_missing_manifest_is_io_error(tmp_path):
    assert main(["cv", "--manifest", str(tmp_path / "nope.json"), "--k", "3"]) == 2


def test_validation_failure_exits_one(tmp_path, capsys):
    man = _synth(tmp_path)
    capsys.readouterr()
    assert main(["cv", "--manifest", str(man), "--k", "99"]) == 1
    err = capsys.readouterr().err
    assert "error" in err.lower()


def test_ttest_flags_planted_layer_over_noise(tmp_path, capsys):
    man = _synth(tmp_path, layers=2, subjects=4, **{"true-layer": 2})
    capsys.readouterr()
    out1 = tmp_path / "good"
    out2 = tmp_path / "noise"
    assert main(["cv", "--manifest", str(man), "--k", "3", "--layer", "L2", "--out", str(out1)]) == 0
    assert main(["cv", "--manifest", str(man), "--k", "3", "--layer", "L1", "--out", str(out2)]) == 0
    capsys.readouterr()
    code = main(
        [
            "ttest",
            "--reports",
            f"good={out1},noise={out2}",
            "--pair",
            "good:noise",
            "--metric",
            "pearson",
        ]
    )
    assert code == 0
    text = capsys.readouterr().out
    assert "good vs noise" in text
    assert "roi1" in text
    assert "*" in text  # planted layer against pure noise is significant


def test_concept_via_cli(tmp_path, capsys):
    man = _synth(tmp_path, **{"sub-datasets": "concrete:15,abstract:15"})
    capsys.readouterr()
    out = tmp_path / "run"
    assert main(["concept", "--manifest", str(man), "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["rows"] == 2


def test_parser_rejects_cells_outside_cross():
    parser = build_parser()
    with pytest.raises(SystemExit):
        parser.parse_args(["cv", "--cells", "CC"])
    ns = parser.parse_args(["cross", "--cells", "CC,CI"])
    assert ns.cells == ["CC", "CI"]
