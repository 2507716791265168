import h5py
import numpy as np
import pytest

from plpredict.data import DataError, Manifest, list_sample_ids, load_samples
from plpredict.normalize import compute_stats, denormalize, normalize
from plpredict.predict import reconstruct


class TestContractReading:
    def test_loads_all_samples(self, dataset):
        path, _, ids = dataset
        samples = load_samples(path)
        assert [s.sample_id for s in samples] == ids
        s = samples[0]
        assert s.features.shape[0] == 4
        assert s.fspl_db.shape == s.pathloss_db.shape == s.valid.shape
        assert s.features.dtype == np.float32

    def test_residual_reconstructs_truth_bitwise(self, dataset):
        path, _, _ = dataset
        for s in load_samples(path):
            np.testing.assert_array_equal(
                reconstruct(s.residual_db, s.fspl_db), s.pathloss_db
            )

    def test_height_layers_match_grid(self, dataset):
        path, _, _ = dataset
        s = load_samples(path)[0]
        np.testing.assert_array_equal(s.height_layers(), [0, 1, 2])

    def test_missing_dataset_rejected(self, dataset):
        path, _, ids = dataset
        with h5py.File(path, "a") as f:
            del f[f"samples/{ids[0]}/fspl_db"]
        with pytest.raises(DataError, match="fspl_db"):
            load_samples(path, [ids[0]])

    def test_unknown_id_rejected(self, dataset):
        path, _, _ = dataset
        with pytest.raises(DataError):
            load_samples(path, ["nope"])

    def test_version_guard(self, dataset):
        path, _, ids = dataset
        with h5py.File(path, "a") as f:
            f[f"samples/{ids[0]}"].attrs["format_version"] = 2
        with pytest.raises(DataError, match="format_version"):
            load_samples(path, [ids[0]])

    def test_list_ids(self, dataset):
        path, _, ids = dataset
        assert list_sample_ids(path) == ids


class TestManifest:
    def test_load_and_split_ids(self, dataset):
        path, mpath, ids = dataset
        manifest = Manifest.load(mpath)
        assert manifest.ids("train") == ids[:3]
        assert manifest.ids("val") == ids[3:4]
        assert manifest.ids("test") == ids[4:]

    def test_bad_manifest_rejected(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"train": 3}')
        with pytest.raises(DataError):
            Manifest.load(bad)

    def test_unknown_split_rejected(self, dataset):
        _, mpath, _ = dataset
        with pytest.raises(DataError):
            Manifest.load(mpath).ids("holdout")


class TestNormalization:
    def test_round_trip(self, dataset):
        path, _, _ = dataset
        samples = load_samples(path)
        stats = compute_stats(s.features for s in samples)
        x = samples[0].features
        back = denormalize(normalize(x, stats), stats)
        np.testing.assert_allclose(back, x, atol=1e-4)

    def test_occupancy_untouched(self, dataset):
        path, _, _ = dataset
        samples = load_samples(path)
        stats = compute_stats(s.features for s in samples)
        normed = normalize(samples[0].features, stats)
        np.testing.assert_array_equal(normed[0], samples[0].features[0])

    def test_train_only_stats_differ_from_pooled(self, dataset):
        # split hygiene: statistics must come from training scenes only
        path, mpath, _ = dataset
        manifest = Manifest.load(mpath)
        train_stats = compute_stats(
            s.features for s in load_samples(path, manifest.ids("train"))
        )
        pooled_stats = compute_stats(s.features for s in load_samples(path))
        assert not np.allclose(train_stats.mean, pooled_stats.mean)

    def test_zero_std_channel_unit_divisor(self, rng):
        volumes = [np.zeros((4, 3, 3, 3), np.float32) for _ in range(2)]
        for v in volumes:
            v[3] = rng.normal(size=(3, 3, 3))
        stats = compute_stats(volumes)
        assert stats.std[1] == 1.0 and stats.std[2] == 1.0
        normed = normalize(volumes[0], stats)
        assert np.isfinite(normed).all()
        np.testing.assert_array_equal(normed[1], 0.0)
