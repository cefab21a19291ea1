import json
import math
import pathlib

import numpy as np
import pytest

import stripnet

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"


def test_parameter_counts():
    assert stripnet.analytic_parameter_count("vanilla") == 7_759_521
    assert stripnet.analytic_parameter_count("residual") == 9_895_073
    assert stripnet.analytic_parameter_count("dense") == 14_327_681
    assert stripnet.PUBLISHED_PARAMETERS["dense"] - 14_327_681 == 1_152_000
    assert stripnet.UNet("residual", base_filters=2, depth=2, height=16, width=16).parameter_count == \
        stripnet.analytic_parameter_count("residual", base_filters=2, depth=2)


def test_half_bits_match_numpy():
    rng = np.random.default_rng(0)
    values = np.concatenate([
        rng.standard_normal(20000) * 10.0 ** rng.integers(-8, 5, 20000),
        [0.0, -0.0, 1.0, 65504.0, 2.0 ** -24, 1.0 + 2.0 ** -11, 1.0 + 3 * 2.0 ** -11],
    ])
    ours = stripnet.float_to_half_bits(values)
    assert np.array_equal(ours, values.astype(np.float16).view(np.uint16))
    assert stripnet.float_to_half_bits(np.array([1.0]))[0] == 0x3C00
    every = np.arange(0x7C00, dtype=np.uint16)
    assert np.array_equal(stripnet.half_bits_to_float(every), every.view(np.float16).astype(np.float64))


def test_npy_matches_numpy_save(tmp_path):
    rng = np.random.default_rng(1)
    for dtype in ["<f8", "<f4", "<f2", "<i2", "i1", "u1"]:
        for shape in [(), (3,), (2, 5), (4, 1, 3)]:
            a = np.asarray(rng.standard_normal(shape) * 50).astype(dtype)
            ours, theirs = tmp_path / "ours.npy", tmp_path / "theirs.npy"
            stripnet.write_npy(ours, a)
            np.save(theirs, a)
            assert ours.read_bytes() == theirs.read_bytes()
            assert np.array_equal(stripnet.read_npy(ours), a.astype(np.float64))


def test_nifti_fixture():
    v = stripnet.read_nifti(FIXTURES / "nifti_f32_be.nii")
    i, j, k = np.meshgrid(np.arange(4), np.arange(4), np.arange(4), indexing="ij")
    assert np.array_equal(v, i + 4 * j + 16 * k)


def test_znorm_and_losses():
    out, mean, std = stripnet.znorm(np.array([[[1.0, 2.0, 3.0, 4.0]]]), np.ones((1, 1, 4)))
    assert mean == 2.5 and std == pytest.approx(math.sqrt(1.25))
    assert np.allclose(out.ravel(), [-1.34164, -0.44721, 0.44721, 1.34164], atol=1e-5)
    with pytest.raises(stripnet._stripnet.DataError):
        stripnet.znorm(np.full((2, 2, 2), 3.0))
    assert stripnet.bce_loss(np.full(3, 0.5), np.array([1.0, 0.0, 1.0])) == pytest.approx(math.log(2))
    assert stripnet.dice(np.array([1.0, 0, 1, 0]), np.array([1.0, 1, 0, 0])) == 0.5
    assert abs(stripnet.adam_scalar_step(1.0, 1.0) - 0.99999) <= 1e-12
    assert stripnet.effective_lr(1) == pytest.approx(1e-5 / (1 + 1.99e-7), rel=1e-15)


def test_model_forward_fit_and_checkpoint(tmp_path):
    images, masks = zip(*(stripnet.phantom_slice(16, 16, s) for s in range(4)))
    x = np.stack(images).astype(np.float32) / 500.0 - 1.0
    y = np.stack(masks).astype(np.float32)
    net = stripnet.UNet("dense", base_filters=4, depth=2, height=16, width=16, seed=3)
    p = net.forward(x)
    assert p.shape == (4, 16, 16) and p.dtype == np.float32
    assert np.all((p > 0) & (p < 1))
    trace = net.fit_batch(x, y, learning_rate=1e-2, updates=30)
    assert len(trace) == 30 and net.updates == 30
    assert trace[-1][0] < trace[0][0]
    net.save(tmp_path / "m.ssck")
    back = stripnet.UNet.load(tmp_path / "m.ssck")
    assert back.architecture == "dense"
    assert np.array_equal(back.forward(x), net.forward(x))
    with pytest.raises(ValueError):
        net.forward(np.zeros((1, 10, 10), np.float32))


def test_skull_strip_identity():
    rng = np.random.default_rng(2)
    prob, z, raw = rng.random((2, 3, 3)), rng.standard_normal((2, 3, 3)), rng.random((2, 3, 3)) * 900
    mask, stripped, stripped_raw = stripnet.skull_strip(prob, z, raw)
    assert np.array_equal(mask, (prob >= 0.5).astype(np.float64))
    assert np.array_equal(stripped, mask * z)
    assert np.array_equal(stripped_raw, mask * raw)


def test_gradcheck_smoke():
    cases = stripnet.gradcheck(seeds=1)
    assert {c["name"] for c in cases} >= {"conv2d", "maxpool2", "unet_dense"}
    assert all(c["passed"] for c in cases)


def test_pipeline_round_trip(tmp_path):
    raw = tmp_path / "raw"
    raw.mkdir()
    scans, masks = [], []
    for s in range(3):
        scan, mask = stripnet.phantom_scan(4, 16, 16, seed=s)
        scans.append(raw / f"p{s}.npy")
        masks.append(raw / f"p{s}_mask.npy")
        stripnet.write_npy(scans[-1], scan.astype(np.float32))
        stripnet.write_npy(masks[-1], mask.astype(np.uint8))
    common = {
        "data.scans": ",".join(map(str, scans)),
        "data.masks": ",".join(map(str, masks)),
        "augment.factor": 2,
        "model.base_filters": 2,
        "model.depth": 2,
        "train.batch_size": 4,
        "train.max_epochs": 1,
        "train.learning_rate": 1e-3,
        "train.val_fraction": 0.3,
    }
    assert stripnet.augment(overrides={**common, "out": tmp_path / "aug"}) == (3, 6)
    report = stripnet.train(overrides={**common, "out": tmp_path / "run", "data.dataset": tmp_path / "aug"})
    assert report["epochs"] == 1
    manifest = json.loads(pathlib.Path(report["checkpoint"]).with_name("manifest.json").read_text())
    assert manifest["seed"] == 0
    pred = stripnet.predict(overrides={"predict.checkpoint": report["checkpoint"], "predict.volume": scans[0],
                                       "predict.ground_truth": masks[0], "out": tmp_path / "pred"})
    assert np.array_equal(pred["mask"], (pred["probability"] >= 0.5).astype(np.float64))
    assert 0.0 <= pred["metrics"]["dice"] <= 1.0
    with pytest.raises(stripnet._stripnet.ConfigError):
        stripnet.train(overrides={"no.such.key": 1})
