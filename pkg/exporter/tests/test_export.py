"""Cross-validation of the exporter against the engine.

The engine (deepir) is exercised strictly through the files the exporter
writes: the DIRW weights and the DIRF activation fixtures. Pretrained
weights need a download, so these tests run on the seeded random source;
set DEEPIR_EXPORT_PRETRAINED=1 to also validate the downloaded checkpoint.
"""

import os

import numpy as np
import pytest

from deepir_export.export import export

from deepir.backbone import TOPOLOGY, extract_pyramid, load_weights
from deepir.formats import read_feature_dump
from deepir.imgio import load_image, save_image
from deepir.tensors import Image


@pytest.fixture(scope="module")
def fixture_image_path(tmp_path_factory):
    rng = np.random.default_rng(7)
    ys, xs = np.mgrid[0:72, 0:56].astype(np.float64)
    data = np.stack(
        [
            255 * xs / 55,
            128 + 90 * np.sin(ys / 6.0),
            np.minimum(255, (ys + xs)),
        ],
        axis=2,
    )
    data[20:40, 10:30] = [230, 40, 40]
    data += rng.uniform(-5, 5, data.shape)
    path = tmp_path_factory.mktemp("fixture") / "fixture.png"
    save_image(path, Image(np.clip(data, 0, 255).astype(np.float32)))
    return path


@pytest.fixture(scope="module")
def exported(tmp_path_factory, fixture_image_path):
    out_dir = tmp_path_factory.mktemp("export")
    result = export(
        out_dir / "vgg19.dirw",
        fixture_image_path,
        out_dir / "fixtures",
        source="random",
        seed=11,
    )
    return result


def test_roundtrip_loads_with_crc(exported):
    bundle = load_weights(exported["weights"])
    assert [l.name for l in bundle.layers] == [name for name, _, _ in TOPOLOGY]
    for layer, (_, in_c, out_c) in zip(bundle.layers, TOPOLOGY):
        assert layer.weights.shape == (out_c, in_c, 3, 3)
    assert bundle.scale == pytest.approx(1.0)
    assert np.allclose(bundle.mean_rgb, [123.675, 116.28, 103.53], atol=1e-3)


def test_engine_matches_reference_activations(exported, fixture_image_path):
    bundle = load_weights(exported["weights"])
    pyramid = extract_pyramid(load_image(fixture_image_path), bundle)
    worst = 0.0
    for level, path in enumerate(exported["fixtures"], start=1):
        reference = read_feature_dump(path)
        assert reference.layer == level
        engine = pyramid.level(level)
        assert engine.data.shape == reference.data.shape
        diff = float(np.abs(engine.data - reference.data).max())
        worst = max(worst, diff)
        assert diff < 1e-3, f"level {level}: max abs diff {diff}"
    print(f"max abs diff across levels: {worst:.2e}")


def test_export_deterministic(tmp_path, fixture_image_path):
    a = tmp_path / "a.dirw"
    b = tmp_path / "b.dirw"
    export(a, fixture_image_path, tmp_path / "fa", source="random", seed=3)
    export(b, fixture_image_path, tmp_path / "fb", source="random", seed=3)
    assert a.read_bytes() == b.read_bytes()
    for level in range(1, 5):
        assert (tmp_path / "fa" / f"level_{level}.dirf").read_bytes() == (
            tmp_path / "fb" / f"level_{level}.dirf"
        ).read_bytes()


def test_different_seeds_differ(tmp_path, fixture_image_path):
    a = tmp_path / "a.dirw"
    b = tmp_path / "b.dirw"
    export(a, fixture_image_path, tmp_path / "fa", source="random", seed=1)
    export(b, fixture_image_path, tmp_path / "fb", source="random", seed=2)
    assert a.read_bytes() != b.read_bytes()


def test_cli_entrypoint(tmp_path, fixture_image_path):
    from deepir_export.export import main

    code = main([
        "--out", str(tmp_path / "w.dirw"),
        "--fixture", str(fixture_image_path),
        "--fixture-out", str(tmp_path / "fixtures"),
        "--source", "random",
    ])
    assert code == 0
    assert (tmp_path / "w.dirw").exists()
    assert (tmp_path / "fixtures" / "level_4.dirf").exists()


@pytest.mark.skipif(
    os.environ.get("DEEPIR_EXPORT_PRETRAINED") != "1",
    reason="pretrained checkpoint needs a download; set DEEPIR_EXPORT_PRETRAINED=1",
)
def test_pretrained_export(tmp_path, fixture_image_path):
    result = export(
        tmp_path / "vgg19.dirw", fixture_image_path, tmp_path / "fixtures",
        source="pretrained",
    )
    bundle = load_weights(result["weights"])
    pyramid = extract_pyramid(load_image(fixture_image_path), bundle)
    for level, path in enumerate(result["fixtures"], start=1):
        reference = read_feature_dump(path)
        assert float(np.abs(pyramid.level(level).data - reference.data).max()) < 1e-3
