"""Tests for the assembled dual-stream model and checkpointing."""

import numpy as np
import pytest

import skelzsl.autodiff as ad
from skelzsl.errors import ConfigurationError, DimensionError, FormatError
from skelzsl.model import (Checkpoint, DualStreamModel, ModelConfig,
                           ProjectionHeads, load_checkpoint, save_checkpoint)

TOY = dict(frames=12, t_hat=6, joints=4, persons=1, channels=8, hidden=6,
           n_s=5, n_t=7, n_e=3, alphas=(0.3, 0.5, 0.7), embed_dim=4)


def toy_model(seed=0, **overrides):
    cfg = ModelConfig(**{**TOY, **overrides})
    return DualStreamModel(cfg, seed=seed, dtype=ad.VERIFY_DTYPE)


def toy_coords(rng, batch, cfg):
    return rng.standard_normal((batch, cfg.frames, cfg.joints * cfg.persons, 3))


class TestModelConfig:
    def test_alpha_count_must_match_phase_count(self):
        with pytest.raises(ConfigurationError, match="retention fractions"):
            ModelConfig(**{**TOY, "alphas": (0.3, 0.5)})

    def test_dimension_arithmetic_is_checked(self):
        with pytest.raises(Exception):
            ModelConfig(**{**TOY, "frames": 13})  # not divisible by t_hat

    def test_manifest_round_trip(self):
        cfg = ModelConfig(**TOY)
        assert ModelConfig.from_manifest(cfg.to_manifest()) == cfg

    def test_manifest_is_json_friendly(self):
        import json
        doc = ModelConfig(**TOY).to_manifest()
        assert json.loads(json.dumps(doc)) == doc


class TestDualStreamModel:
    def test_parameter_namespace(self):
        model = toy_model()
        names = set(model.parameters())
        assert {"prototype.s0", "prototype.t0"} <= names
        for e in range(3):
            assert f"refine.s{e}.w1" in names
            assert f"gates.t{e}.recall.w1" in names
            assert f"heads.s{e}.w2" in names
            assert f"heads.t{e}.b2" in names
        assert "heads.psi.w1" in names
        assert any(n.startswith("encoder.") for n in names)

    def test_forward_shapes(self):
        model = toy_model()
        cfg = model.config
        rng = np.random.default_rng(0)
        coords = toy_coords(rng, 2, cfg)
        spatial, temporal = model.forward(ad.Tensor(coords))
        assert len(spatial) == cfg.n_e and len(temporal) == cfg.n_e
        for p in spatial:
            assert p.data.shape == (2, cfg.channels, cfg.n_s)
        for p in temporal:
            assert p.data.shape == (2, cfg.channels, cfg.n_t)

    def test_phase_features_are_attribute_means(self):
        model = toy_model()
        rng = np.random.default_rng(1)
        coords = toy_coords(rng, 2, model.config)
        spatial, temporal = model.forward(ad.Tensor(coords))
        xs, xt = model.phase_features(ad.Tensor(coords))
        for x, p in zip(xs + xt, spatial + temporal):
            assert np.allclose(x.data, p.data.mean(axis=-1), rtol=1e-12)

    def test_same_seed_same_parameters(self):
        a, b = toy_model(seed=5), toy_model(seed=5)
        for name, p in a.parameters().items():
            assert np.array_equal(p.data, b.parameters()[name].data)

    def test_different_seed_different_parameters(self):
        a, b = toy_model(seed=5), toy_model(seed=6)
        assert any(not np.array_equal(p.data, b.parameters()[name].data)
                   for name, p in a.parameters().items())

    def test_shared_components_collapse_the_namespace(self):
        solo = toy_model()
        tied = toy_model(share_refiners=True, share_gates=True, share_heads=True)
        assert len(tied.parameters()) < len(solo.parameters())
        names = set(tied.parameters())
        assert "refine.s0.w1" in names and "refine.s1.w1" not in names
        assert "gates.t0.recall.w1" in names and "gates.t1.recall.w1" not in names
        assert "heads.s0.w1" in names and "heads.s1.w1" not in names

    def test_shared_heads_reuse_the_same_object(self):
        tied = toy_model(share_heads=True)
        assert tied.heads.spatial[0] is tied.heads.spatial[2]
        assert tied.heads.temporal[0] is tied.heads.temporal[1]
        assert tied.heads.spatial[0] is not tied.heads.temporal[0]


class TestProjectionHeads:
    def test_parameters_cover_every_phase(self):
        rng = np.random.default_rng(0)
        heads = ProjectionHeads.create(rng, 8, 6, 4, 3, np.float64)
        names = set(heads.parameters())
        assert len(names) == (3 + 3 + 1) * 4  # per-phase heads plus psi

    def test_shared_heads_deduplicate(self):
        rng = np.random.default_rng(0)
        heads = ProjectionHeads.create(rng, 8, 6, 4, 3, np.float64, shared=True)
        assert len(set(heads.parameters())) == (1 + 1 + 1) * 4


class TestCheckpoint:
    def test_model_round_trip_is_bit_exact(self):
        model = toy_model(seed=9)
        ckpt = Checkpoint.from_model(model, meta={"seed": 9})
        rebuilt = ckpt.to_model(dtype=np.float32)
        for name, p in rebuilt.parameters().items():
            assert np.array_equal(p.data, ckpt.params[name])

    def test_rebuilt_model_reproduces_outputs(self):
        model = toy_model(seed=3)
        rng = np.random.default_rng(2)
        coords = toy_coords(rng, 2, model.config).astype(np.float32)
        ckpt = Checkpoint.from_model(model, meta={"seed": 3})
        rebuilt = ckpt.to_model(dtype=np.float32)
        xs_a, _ = DualStreamModel.phase_features(rebuilt, ad.Tensor(coords))
        rebuilt2 = ckpt.to_model(dtype=np.float32)
        xs_b, _ = rebuilt2.phase_features(ad.Tensor(coords))
        for a, b in zip(xs_a, xs_b):
            assert np.array_equal(a.data, b.data)

    def test_name_mismatch_is_rejected(self):
        ckpt = Checkpoint.from_model(toy_model())
        del ckpt.params["prototype.s0"]
        with pytest.raises(FormatError, match="prototype.s0"):
            ckpt.to_model()

    def test_shape_mismatch_is_rejected(self):
        ckpt = Checkpoint.from_model(toy_model())
        ckpt.params["prototype.s0"] = ckpt.params["prototype.s0"][:, :2]
        with pytest.raises(DimensionError, match="prototype.s0"):
            ckpt.to_model()

    def test_file_round_trip_is_bit_exact(self, tmp_path):
        model = toy_model(seed=4)
        ckpt = Checkpoint.from_model(model, meta={"seed": 4, "note": "x"})
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, ckpt)
        loaded = load_checkpoint(path)
        assert loaded.model_config == ckpt.model_config
        assert loaded.meta == ckpt.meta
        assert set(loaded.params) == set(ckpt.params)
        for name, arr in ckpt.params.items():
            assert np.array_equal(loaded.params[name], arr)

    def test_manifest_lists_parameters_sorted(self, tmp_path):
        import json
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, Checkpoint.from_model(toy_model()))
        doc = json.loads((tmp_path / "model.ckpt.json").read_text())
        names = [e["name"] for e in doc["params"]]
        assert names == sorted(names)

    def test_truncated_payload_is_rejected(self, tmp_path):
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, Checkpoint.from_model(toy_model()))
        payload = tmp_path / "model.ckpt.bin"
        payload.write_bytes(payload.read_bytes()[:-8])
        with pytest.raises(FormatError, match="offset"):
            load_checkpoint(path)

    def test_wrong_kind_is_rejected(self, tmp_path):
        import json
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, Checkpoint.from_model(toy_model()))
        mpath = tmp_path / "model.ckpt.json"
        doc = json.loads(mpath.read_text())
        doc["kind"] = "features"
        mpath.write_text(json.dumps(doc))
        with pytest.raises(FormatError, match="not a checkpoint"):
            load_checkpoint(path)
