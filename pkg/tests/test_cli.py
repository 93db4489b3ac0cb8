import json
import subprocess
import sys

import pytest

from anchorlab.cli import EXIT_IO, EXIT_OK, EXIT_USAGE, EXIT_VERIFY, main

BOXES = """image_id,cx,cy,width,height
img0,100,100,48,24
img0,30,40,24,70
img1,150,80,70,24.5
img1,50,60,33,33
img2,200,150,120,40
img2,80,220,36,12
"""


@pytest.fixture()
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    (tmp_path / "boxes.csv").write_text(BOXES)
    return tmp_path


def test_pipeline_end_to_end(workdir, capsys):
    assert main(["ingest", "--boxes", "boxes.csv", "-o", "stats.json"]) == EXIT_OK
    assert main(["design", "--stats", "stats.json", "--iou", "0.5", "-o", "cfg.json"]) == EXIT_OK
    assert main(["design", "--mar-obj", "6", "--iou", "0.5", "-o", "cfg6.json"]) == EXIT_OK
    assert (
        main(
            [
                "verify", "--config", "cfg6.json", "--grid", "96x48",
                "--dump-grid", "grid.csv", "-o", "report.json",
            ]
        )
        == EXIT_OK
    )
    assert main(["match", "--config", "cfg6.json", "--boxes", "boxes.csv", "-o", "m.csv"]) == EXIT_OK
    assert (
        main(["match", "--config", "cfg6.json", "--boxes", "boxes.csv", "--placed", "-o", "mp.csv"])
        == EXIT_OK
    )
    assert main(["scatter", "--config", "cfg6.json", "--boxes", "boxes.csv", "-o", "sc.csv"]) == EXIT_OK
    capsys.readouterr()

    report = json.loads((workdir / "report.json").read_text())
    assert report["passed"] is True
    assert report["coverage"]["min_iou"] == pytest.approx(0.5, abs=1e-9)
    assert report["required_t"]["closed_form"] == 3.0
    assert report["required_t"]["bisection"] == pytest.approx(3.0, abs=1e-5)

    # every artifact gets a manifest; figure outputs accompany data outputs
    for name in (
        "stats.json", "cfg.json", "cfg6.json", "report.json",
        "grid.csv", "grid.svg", "m.csv", "mp.csv", "sc.csv", "sc.svg",
    ):
        assert (workdir / name).exists(), name
        assert (workdir / f"{name}.manifest.json").exists(), name

    manifest = json.loads((workdir / "report.json.manifest.json").read_text())
    assert manifest["command"] == "verify"
    assert manifest["timestamp"] == "2023-11-14T22:13:20Z"  # SOURCE_DATE_EPOCH
    assert "sha256" in manifest["inputs"]["config"]

    match_lines = (workdir / "m.csv").read_text().splitlines()
    assert match_lines[0] == "gt_index,layer,anchor_index,iou,matched"
    assert len(match_lines) == 7

    scatter_lines = (workdir / "sc.csv").read_text().splitlines()
    assert scatter_lines[0] == "series,width,height"
    assert len(scatter_lines) == 1 + 26 + 6

    svg = (workdir / "sc.svg").read_text()
    assert svg.lstrip().startswith("<?xml")


def test_design_output_is_loadable_config(workdir):
    assert main(["design", "--mar-obj", "6", "-o", "cfg.json"]) == EXIT_OK
    from anchorlab import design_config, load_config

    assert load_config("cfg.json") == design_config(6, 0.5)


def test_reruns_are_byte_identical(workdir):
    for sub in ("a", "b"):
        d = workdir / sub
        d.mkdir()
        (d / "boxes.csv").write_text(BOXES)
    import os

    for sub in ("a", "b"):
        os.chdir(workdir / sub)
        assert main(["ingest", "--boxes", "boxes.csv", "-o", "stats.json"]) == EXIT_OK
        assert main(["design", "--mar-obj", "6", "-o", "cfg.json"]) == EXIT_OK
        assert (
            main(
                [
                    "verify", "--config", "cfg.json", "--grid", "64x32",
                    "--dump-grid", "grid.csv", "-o", "report.json",
                ]
            )
            == EXIT_OK
        )
        assert main(["match", "--config", "cfg.json", "--boxes", "boxes.csv", "--placed", "-o", "m.csv"]) == EXIT_OK
        assert main(["scatter", "--config", "cfg.json", "--boxes", "boxes.csv", "-o", "sc.csv"]) == EXIT_OK
    os.chdir(workdir)
    names = [
        "stats.json", "stats.json.manifest.json",
        "cfg.json", "cfg.json.manifest.json",
        "report.json", "report.json.manifest.json",
        "grid.csv", "grid.csv.manifest.json", "grid.svg", "grid.svg.manifest.json",
        "m.csv", "m.csv.manifest.json",
        "sc.csv", "sc.csv.manifest.json", "sc.svg", "sc.svg.manifest.json",
    ]
    for name in names:
        a = (workdir / "a" / name).read_bytes()
        b = (workdir / "b" / name).read_bytes()
        assert a == b, f"{name} differs between identical runs"


def test_exit_codes(workdir, capsys):
    # 1: unreadable input
    assert main(["ingest", "--boxes", "missing.csv", "-o", "x.json"]) == EXIT_IO
    # 2: structurally bad input
    (workdir / "bad.csv").write_text("nope\n1\n")
    assert main(["ingest", "--boxes", "bad.csv", "-o", "x.json"]) == EXIT_USAGE
    # 2: empty dataset
    (workdir / "empty.csv").write_text("image_id,cx,cy,width,height\n")
    assert main(["ingest", "--boxes", "empty.csv", "-o", "x.json"]) == EXIT_USAGE
    # 2: bad threshold (argparse level)
    with pytest.raises(SystemExit) as exc:
        main(["design", "--mar-obj", "6", "--iou", "1.5", "-o", "x.json"])
    assert exc.value.code == EXIT_USAGE
    # 2: malformed config JSON
    (workdir / "broken.json").write_text("{\"layers\": []}")
    assert main(["verify", "--config", "broken.json"]) == EXIT_USAGE
    capsys.readouterr()


def test_verify_failure_gives_witness_and_exit_3(workdir, capsys):
    assert main(["design", "--mar-obj", "6", "-o", "cfg.json"]) == EXIT_OK
    # auditing the same pyramid for a hypothetical narrower wide-anchor ratio
    # must fail: ratio 2.5 cannot hold ratio-6 objects at IoU 1/2
    code = main(
        ["verify", "--config", "cfg.json", "--t", "2.5", "--k", "6", "--grid", "64x32"]
    )
    assert code == EXIT_VERIFY
    err = capsys.readouterr().err
    assert "verify failed" in err
    assert "quadratic margin" in err


def test_scatter_svg_only(workdir):
    assert main(["design", "--mar-obj", "6", "-o", "cfg.json"]) == EXIT_OK
    assert main(["scatter", "--config", "cfg.json", "-o", "only.svg"]) == EXIT_OK
    assert (workdir / "only.svg").exists()
    assert not (workdir / "only.csv").exists()
    assert main(["scatter", "--config", "cfg.json", "-o", "bad.txt"]) == EXIT_USAGE


def test_module_entry_point():
    out = subprocess.run(
        [sys.executable, "-m", "anchorlab", "--version"],
        capture_output=True,
        text=True,
        check=True,
    )
    assert "anchorlab" in out.stdout
