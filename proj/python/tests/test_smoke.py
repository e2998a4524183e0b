import numpy as np
import pytest

import trunet


def small_config():
    c = trunet.ModelConfig.tiny()
    c.width_mult = 1 / 16
    c.heads = 2
    c.input_size = 32
    c.max_tokens = 4
    return c


def test_config_round_trip_and_counts():
    c = trunet.ModelConfig.tiny()
    assert trunet.ModelConfig.from_text(c.to_text()) == c
    assert trunet.param_count(c) == 1042061
    assert trunet.param_count(trunet.ModelConfig.full()) == 73062113
    with pytest.raises(trunet.ConfigError):
        trunet.ModelConfig.from_text("bogus=1\n")


def test_predict_shape_and_range():
    model = trunet.Model(small_config(), seed=1)
    x = np.random.default_rng(0).random((2, 3, 32, 32), dtype=np.float32)
    p = model.predict(x)
    assert p.shape == (2, 1, 32, 32)
    assert ((p > 0) & (p < 1)).all()
    assert model.predict(x[0]).shape == (1, 1, 32, 32)
    with pytest.raises(ValueError):
        model.predict(np.zeros((1, 3, 30, 30), np.float32))


def test_checkpoint_round_trip(tmp_path):
    model = trunet.Model(small_config(), seed=2)
    model.save(tmp_path / "m.trk")
    back = trunet.Model.load(tmp_path / "m.trk")
    assert back.config == model.config
    assert back.names() == model.names()
    for name in model.names()[:5]:
        np.testing.assert_array_equal(back.parameter(name), model.parameter(name))
    raw = bytearray((tmp_path / "m.trk").read_bytes())
    raw[len(raw) // 2] ^= 1
    (tmp_path / "bad.trk").write_bytes(bytes(raw))
    with pytest.raises(trunet.ChecksumError):
        trunet.Model.load(tmp_path / "bad.trk")


def test_synth_and_metrics():
    a = trunet.synth_dataset(3, 32, seed=4)
    b = trunet.synth_dataset(3, 32, seed=4)
    assert [s[0] for s in a] == [s[0] for s in b]
    for (_, img, mask), (_, img2, _) in zip(a, b):
        np.testing.assert_array_equal(img, img2)
        assert img.shape == (3, 32, 32)
        assert set(np.unique(mask)) <= {0.0, 1.0}
        c = trunet.confusion(mask, mask)
        assert c.fp == 0 and c.fn == 0 and c.tp == int(mask.sum())
    m = trunet.metrics(1, 1, 1, 1)
    assert m["dsc"] == pytest.approx(0.5)
    assert m["iou"] == pytest.approx(1 / 3)
    assert m["f2"] == pytest.approx(0.5)


def test_gradcheck_primitives():
    cases = trunet.gradcheck("primitive")
    assert len(cases) > 8
    assert all(passed for _, _, _, passed in cases)


def test_cli_in_process(tmp_path):
    code, out, err = trunet.run_cli(["--out", str(tmp_path / "d"), "synth", "--n", "3", "--size", "32"])
    assert code == 0, err
    assert (tmp_path / "d" / "manifest.txt").exists()
    code, _, err = trunet.run_cli(["--out", str(tmp_path / "d"), "synth"], {"TRUN_BOGUS": "1"})
    assert code == 1
    assert err.startswith("error[config]: ")
