"""Binary checkpoint format: round trips, naming, corruption handling."""

import numpy as np
import pytest

from tamperloc.checkpoint import (
    FORMAT_VERSION,
    MAGIC,
    CheckpointData,
    apply_checkpoint,
    collect_entries,
    load_checkpoint,
    save_checkpoint,
)
from tamperloc.model import build_model
from tamperloc.optim import AdamW
from tamperloc.tensor import Tensor

from conftest import tiny_model_config


def make_checkpoint(seed=0, with_optimizer=False):
    cfg = tiny_model_config()
    model = build_model(cfg, seed=seed)
    opt = None
    if with_optimizer:
        opt = AdamW(list(model.named_parameters()), lr=1e-3)
        rng = np.random.default_rng(seed)
        for _, p in opt.params:
            p.grad = rng.normal(0, 1e-3, p.data.shape)
        opt.step()
    data = CheckpointData(
        model_config=cfg.to_dict(),
        epoch=3,
        step=7,
        rng_state={"bit_generator": "PCG64", "state": {"state": 1, "inc": 2}},
        arrays=collect_entries(model, opt),
    )
    return cfg, model, opt, data


class TestRoundTrip:
    def test_save_load_save_is_byte_identical(self, tmp_path):
        _, _, _, data = make_checkpoint(with_optimizer=True)
        first = tmp_path / "a.ckpt"
        second = tmp_path / "b.ckpt"
        save_checkpoint(first, data)
        save_checkpoint(second, load_checkpoint(first))
        assert first.read_bytes() == second.read_bytes()

    def test_metadata_survives(self, tmp_path):
        cfg, _, _, data = make_checkpoint()
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, data)
        back = load_checkpoint(path)
        assert back.epoch == 3 and back.step == 7
        assert back.model_config == cfg.to_dict()
        assert back.rng_state["bit_generator"] == "PCG64"

    def test_arrays_survive_bitwise(self, tmp_path):
        _, _, _, data = make_checkpoint(with_optimizer=True)
        path = tmp_path / "arrays.ckpt"
        save_checkpoint(path, data)
        back = load_checkpoint(path)
        assert set(back.arrays) == set(data.arrays)
        for name, arr in data.arrays.items():
            assert np.array_equal(back.arrays[name], arr), name

    def test_loaded_model_predicts_bitwise_identically(self, rng, tmp_path):
        cfg, model, _, data = make_checkpoint(seed=5)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, data)

        model.eval()
        x = Tensor(rng.random((1, 3, 64, 64)))
        ref = model.forward_full(x).data.copy()

        fresh = build_model(cfg)  # all-zero weights until applied
        apply_checkpoint(fresh, load_checkpoint(path))
        fresh.eval()
        assert np.array_equal(fresh.forward_full(x).data, ref)

    def test_optimizer_state_round_trip(self, tmp_path):
        cfg, model, opt, data = make_checkpoint(seed=2, with_optimizer=True)
        path = tmp_path / "opt.ckpt"
        save_checkpoint(path, data)

        fresh_model = build_model(cfg)
        fresh_opt = AdamW(list(fresh_model.named_parameters()), lr=1e-3)
        apply_checkpoint(fresh_model, load_checkpoint(path), fresh_opt)
        assert fresh_opt.t == 7
        for key, arr in opt.state_arrays().items():
            assert np.array_equal(fresh_opt.state_arrays()[key], arr), key


class TestNaming:
    def test_parameter_names_unique_and_branch_disjoint(self):
        model = build_model(tiny_model_config(), seed=0)
        names = [n for n, _ in model.named_parameters()]
        assert len(names) == len(set(names))
        rgb = {n for n in names if n.startswith("rgb.")}
        noise = {n for n in names if n.startswith("noise.")}
        assert rgb and noise
        assert {n[len("rgb."):] for n in rgb} == {n[len("noise."):] for n in noise}

    def test_entries_cover_params_buffers_and_optimizer(self):
        _, model, opt, data = make_checkpoint(with_optimizer=True)
        kinds = {k.partition("/")[0] for k in data.arrays}
        assert kinds == {"param", "buffer", "adamw"}
        n_params = sum(1 for _ in model.named_parameters())
        assert sum(1 for k in data.arrays if k.startswith("param/")) == n_params
        assert sum(1 for k in data.arrays if k.startswith("adamw/m/")) == n_params


class TestCorruption:
    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOTACKPT" + b"\x00" * 64)
        with pytest.raises(ValueError, match="bad magic"):
            load_checkpoint(path)

    def test_wrong_version_rejected(self, tmp_path):
        _, _, _, data = make_checkpoint()
        path = tmp_path / "v.ckpt"
        save_checkpoint(path, data)
        raw = bytearray(path.read_bytes())
        raw[len(MAGIC)] = FORMAT_VERSION + 1
        path.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="version"):
            load_checkpoint(path)

    def test_truncated_payload_rejected(self, tmp_path):
        _, _, _, data = make_checkpoint()
        path = tmp_path / "t.ckpt"
        save_checkpoint(path, data)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) // 2])
        with pytest.raises(ValueError, match="truncated"):
            load_checkpoint(path)

    def test_missing_parameter_rejected(self, tmp_path):
        cfg, _, _, data = make_checkpoint()
        some_param = next(k for k in data.arrays if k.startswith("param/"))
        del data.arrays[some_param]
        path = tmp_path / "missing.ckpt"
        save_checkpoint(path, data)
        with pytest.raises(KeyError, match="missing parameters"):
            apply_checkpoint(build_model(cfg), load_checkpoint(path))

    def test_shape_mismatch_rejected(self, tmp_path):
        cfg, _, _, data = make_checkpoint()
        some_param = next(k for k in data.arrays if k.startswith("param/"))
        data.arrays[some_param] = np.zeros((3, 3, 3))
        path = tmp_path / "shape.ckpt"
        save_checkpoint(path, data)
        with pytest.raises(ValueError, match="shape mismatch"):
            apply_checkpoint(build_model(cfg), load_checkpoint(path))

    def test_unknown_parameter_rejected(self, tmp_path):
        cfg, _, _, data = make_checkpoint()
        data.arrays["param/phantom.weight"] = np.zeros(3)
        path = tmp_path / "phantom.ckpt"
        save_checkpoint(path, data)
        with pytest.raises(KeyError, match="phantom"):
            apply_checkpoint(build_model(cfg), load_checkpoint(path))
