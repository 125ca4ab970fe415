import json

import numpy as np
import pytest

from conftest import make_image
from deepir.cli import main
from deepir.imgio import load_image, save_image


@pytest.fixture()
def sample_png(tmp_path):
    path = tmp_path / "sample.png"
    save_image(path, make_image(0, 48, 64))
    return path


def test_usage_error_epsilon(sample_png, weights_path, tmp_path, capsys):
    code = main([
        "retarget", "--input", str(sample_png), "--weights", str(weights_path),
        "--epsilon", "1.5", "--output", str(tmp_path / "out.png"),
    ])
    assert code == 1
    assert "epsilon must be in (0,1]" in capsys.readouterr().err


def test_usage_error_no_command(capsys):
    assert main([]) == 1
    assert "subcommand" in capsys.readouterr().err


def test_unreadable_input_is_processing_error(weights_path, tmp_path, capsys):
    code = main([
        "retarget", "--input", str(tmp_path / "missing.png"),
        "--weights", str(weights_path),
        "--epsilon", "0.5", "--output", str(tmp_path / "out.png"),
    ])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_malformed_weights_is_processing_error(sample_png, tmp_path, capsys):
    bad = tmp_path / "bad.dirw"
    bad.write_bytes(b"JUNKJUNKJUNKJUNKJUNKJUNKJUNKJUNK")
    code = main([
        "retarget", "--input", str(sample_png), "--weights", str(bad),
        "--epsilon", "0.5", "--output", str(tmp_path / "out.png"),
    ])
    assert code == 2


def test_retarget_writes_expected_shape(sample_png, weights_path, tmp_path, capsys):
    out = tmp_path / "out.png"
    dump = tmp_path / "dump"
    code = main([
        "retarget", "--input", str(sample_png), "--weights", str(weights_path),
        "--epsilon", "0.5", "--output", str(out),
        "--inversion-iterations", "5", "--seed", "3",
        "--dump-intermediate", str(dump),
    ])
    assert code == 0
    img = load_image(out)
    assert (img.height, img.width) == (48, 32)
    payload = json.loads(capsys.readouterr().out)
    assert set(payload["metrics"]) == {"frr", "fd"}
    assert (dump / "3_fused.png").exists()
    assert (dump / "1_inversion.csv").exists()


def test_retarget_rows_axis(sample_png, weights_path, tmp_path):
    out = tmp_path / "rows.png"
    code = main([
        "retarget", "--input", str(sample_png), "--weights", str(weights_path),
        "--epsilon", "0.75", "--axis", "rows", "--output", str(out),
        "--inversion-iterations", "4",
    ])
    assert code == 0
    img = load_image(out)
    assert (img.height, img.width) == (36, 64)


def test_baseline_methods(sample_png, tmp_path):
    for method in ("scl", "cr", "sc", "colrm"):
        out = tmp_path / f"{method}.png"
        code = main([
            "baseline", "--method", method, "--input", str(sample_png),
            "--epsilon", "0.5", "--output", str(out),
        ])
        assert code == 0
        img = load_image(out)
        assert (img.height, img.width) == (48, 32)


def test_baseline_crop_manual_offset(sample_png, tmp_path):
    out = tmp_path / "cr.png"
    code = main([
        "baseline", "--method", "cr", "--input", str(sample_png),
        "--epsilon", "0.5", "--output", str(out), "--offset", "0",
    ])
    assert code == 0
    cropped = load_image(out)
    original = load_image(sample_png)
    assert np.array_equal(cropped.data, original.data[:, :32])


def test_metrics_json(sample_png, weights_path, capsys):
    code = main([
        "metrics", "--original", str(sample_png),
        "--retargeted", str(sample_png), "--weights", str(weights_path),
    ])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["frr"] == pytest.approx(1.0)
    assert payload["fd"] == pytest.approx(0.0, abs=1e-9)


def test_compare_outputs(sample_png, weights_path, tmp_path, capsys):
    out_dir = tmp_path / "cmp"
    code = main([
        "compare", "--input", str(sample_png), "--weights", str(weights_path),
        "--epsilon", "0.5", "--out-dir", str(out_dir),
        "--inversion-iterations", "4",
    ])
    assert code == 0
    scores = json.loads((out_dir / "scores.json").read_text())
    assert set(scores) == {"urs", "scl", "cr", "sc", "colrm"}
    for entry in scores.values():
        assert set(entry) == {"frr", "fd", "millis"}
    blobs = {(out_dir / f"{op}.png").read_bytes() for op in scores}
    assert len(blobs) == 5  # five distinct outputs
    grid = load_image(out_dir / "grid.png")
    assert grid.width > 64 + 5 * 32
