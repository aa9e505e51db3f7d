import json

import numpy as np
import pytest

from skelzsl.errors import CompletenessError, DomainError, FormatError
from skelzsl.fileio import payload_path
from skelzsl.semantics import (SemanticBank, class_base_directions, load_bank, pool_class,
                               save_bank, synth_bank)


def build_bank(num_classes=3, n_e=3, n_a=2, d=4, seed=0):
    rng = np.random.default_rng(seed)
    cells = {(y, s, e): rng.standard_normal((n_a, d)).astype(np.float32)
             for y in range(num_classes) for s in ("s", "t") for e in range(n_e)}
    return SemanticBank(list(range(num_classes)), n_e, n_a, d, cells)


class TestBankValidation:
    def test_missing_cell_named(self):
        bank = build_bank()
        cells = dict(bank.cells)
        del cells[(1, "t", 2)]
        with pytest.raises(CompletenessError, match=r"class 1, stream t, phase 2"):
            SemanticBank(bank.classes, 3, 2, 4, cells)

    def test_wrong_cell_shape(self):
        bank = build_bank()
        cells = dict(bank.cells)
        cells[(0, "s", 0)] = np.zeros((2, 5), dtype=np.float32)
        with pytest.raises(ValueError, match="shape"):
            SemanticBank(bank.classes, 3, 2, 4, cells)

    def test_duplicate_classes_rejected(self):
        with pytest.raises(DomainError, match="duplicate"):
            SemanticBank([0, 0], 1, 1, 2, {(0, s, 0): np.zeros((1, 2)) for s in ("s", "t")})

    def test_unknown_cell_lookup(self):
        bank = build_bank()
        with pytest.raises(KeyError, match="class 9"):
            bank.cell(9, "s", 0)

    def test_subset_keeps_cells(self):
        bank = build_bank(num_classes=4)
        sub = bank.subset([1, 3])
        assert sub.classes == [1, 3]
        assert np.array_equal(sub.cell(3, "t", 1), bank.cell(3, "t", 1))


class TestPoolClass:
    def test_single_row_unchanged(self):
        bank = build_bank(n_a=1)
        assert np.array_equal(pool_class(bank, 0, 0, "s"), bank.cell(0, "s", 0)[0])

    def test_opposite_rows_cancel(self):
        v = np.array([1.5, -2.0, 0.25], dtype=np.float32)
        cells = {(0, s, 0): np.stack([v, -v]) for s in ("s", "t")}
        bank = SemanticBank([0], 1, 2, 3, cells)
        assert np.array_equal(pool_class(bank, 0, 0, "t"), np.zeros(3, dtype=np.float32))

    def test_frozen_mean_oracle(self):
        rows = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], dtype=np.float32)
        cells = {(0, s, 0): rows for s in ("s", "t")}
        bank = SemanticBank([0], 1, 3, 2, cells)
        assert np.allclose(pool_class(bank, 0, 0, "s"), [2.0 / 3.0, 2.0 / 3.0], atol=1e-7)

    def test_matches_brute_force(self):
        bank = build_bank(seed=3)
        for y in bank.classes:
            for s in ("s", "t"):
                for e in range(bank.n_e):
                    block = bank.cell(y, s, e)
                    brute = sum(block[i] for i in range(block.shape[0])) / block.shape[0]
                    assert np.allclose(pool_class(bank, y, e, s), brute, atol=1e-7)

    def test_bad_phase_rejected(self):
        bank = build_bank()
        with pytest.raises(DomainError):
            pool_class(bank, 0, 5, "s")
        with pytest.raises(DomainError):
            pool_class(bank, 0, 0, "x")


class TestBankFile:
    def test_round_trip_bit_exact(self, tmp_path):
        bank = build_bank(num_classes=4, seed=5)
        path = tmp_path / "bank.json"
        save_bank(path, bank)
        loaded = load_bank(path)
        assert loaded.classes == bank.classes
        assert (loaded.n_e, loaded.n_a, loaded.d) == (bank.n_e, bank.n_a, bank.d)
        for key, block in bank.cells.items():
            assert loaded.cell(*key).tobytes() == block.tobytes()

    def test_truncation_names_first_missing_cell(self, tmp_path):
        bank = build_bank(num_classes=8, seed=6)
        path = tmp_path / "bank.json"
        save_bank(path, bank)
        cell_bytes = bank.n_a * bank.d * 4
        # keep exactly the cells before (class 7, stream t, phase 2): 47 of 48
        keep = 47 * cell_bytes
        raw = open(payload_path(path), "rb").read()
        with open(payload_path(path), "wb") as fh:
            fh.write(raw[:keep])
        with pytest.raises(CompletenessError, match=r"class 7, stream t, phase 2"):
            load_bank(path)

    def test_declared_d_mismatch(self, tmp_path):
        bank = build_bank(seed=7)
        path = tmp_path / "bank.json"
        save_bank(path, bank)
        manifest = json.load(open(path))
        manifest["d"] = bank.d - 1
        json.dump(manifest, open(path, "w"))
        with pytest.raises(FormatError, match="unexpected data"):
            load_bank(path)

    def test_two_phase_bank_warns_but_loads(self, tmp_path):
        bank = build_bank(n_e=2)
        path = tmp_path / "bank.json"
        save_bank(path, bank)
        with pytest.warns(UserWarning, match="2 phases"):
            loaded = load_bank(path)
        assert loaded.n_e == 2

    def test_phase_labels_survive(self, tmp_path):
        bank = build_bank()
        path = tmp_path / "bank.json"
        save_bank(path, bank)
        assert load_bank(path).phase_labels["t"] == ["start", "mid", "end"]


class TestSynthBank:
    def test_deterministic(self):
        a = synth_bank(5, 3, 8, seed=11)
        b = synth_bank(5, 3, 8, seed=11)
        for key in a.cells:
            assert a.cell(*key).tobytes() == b.cell(*key).tobytes()

    def test_different_seeds_differ(self):
        a = synth_bank(5, 3, 8, seed=11)
        b = synth_bank(5, 3, 8, seed=12)
        assert not np.array_equal(a.cell(0, "s", 0), b.cell(0, "s", 0))

    def test_base_directions_orthonormal(self):
        bases = class_base_directions(6, 6, seed=13)
        gram = bases @ bases.T
        assert np.allclose(gram, np.eye(6), atol=1e-6)

    def test_extra_classes_beyond_d_are_unit(self):
        bases = class_base_directions(5, 3, seed=14)
        assert np.allclose(np.linalg.norm(bases, axis=1), 1.0, atol=1e-6)

    def test_perturbation_magnitude_decreases_with_phase(self):
        num, d, seed = 6, 6, 15
        bank = synth_bank(num, 4, d, seed=seed)
        bases = class_base_directions(num, d, seed)
        per_phase = []
        for e in range(bank.n_e):
            gaps = [np.linalg.norm(bank.cell(y, s, e).mean(axis=0) - bases[y])
                    for y in range(num) for s in ("s", "t")]
            per_phase.append(np.mean(gaps))
        assert per_phase[0] > per_phase[1] > per_phase[2]

    def test_shapes_and_grid(self):
        bank = synth_bank(3, 2, 10, seed=16)
        assert bank.classes == [0, 1, 2]
        assert bank.cell(2, "t", 1).shape == (2, 10)
