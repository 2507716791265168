import json
import shutil
import subprocess

import h5py
import numpy as np
import pytest

from plpredict.cli import main
from plpredict.data import load_samples


class TestCli:
    def test_train_then_predict(self, dataset, tmp_path):
        path, mpath, ids = dataset
        weights = tmp_path / "model.pt"
        code = main(["train", "--dataset", str(path), "--manifest", str(mpath),
                     "--out", str(weights), "--epochs", "2", "--lr", "1e-3"])
        assert code == 0
        assert weights.exists()

        pred_path = tmp_path / "pred.h5"
        code = main(["predict", "--dataset", str(path), "--weights", str(weights),
                     "--out", str(pred_path), "--manifest", str(mpath),
                     "--split", "test"])
        assert code == 0
        preds = load_samples(pred_path)
        truth = {s.sample_id: s for s in load_samples(path)}
        assert [p.sample_id for p in preds] == ids[4:]
        for p in preds:
            t = truth[p.sample_id]
            assert p.pathloss_db.shape == t.pathloss_db.shape
            assert np.isfinite(p.pathloss_db).all()
            # everything except the prediction is carried over bit-exact
            np.testing.assert_array_equal(p.fspl_db, t.fspl_db)
            np.testing.assert_array_equal(p.features, t.features)

    def test_predict_explicit_ids(self, dataset, tmp_path):
        path, mpath, ids = dataset
        weights = tmp_path / "model.pt"
        assert main(["train", "--dataset", str(path), "--manifest", str(mpath),
                     "--out", str(weights), "--epochs", "1"]) == 0
        out = tmp_path / "two.h5"
        assert main(["predict", "--dataset", str(path), "--weights", str(weights),
                     "--out", str(out), "--ids", ",".join(ids[:2])]) == 0
        with h5py.File(out, "r") as f:
            assert sorted(f["samples"].keys()) == ids[:2]

    def test_missing_dataset_is_io_error(self, tmp_path):
        code = main(["train", "--dataset", str(tmp_path / "nope.h5"),
                     "--manifest", str(tmp_path / "m.json"),
                     "--out", str(tmp_path / "w.pt")])
        assert code == 3

    def test_console_script(self):
        proc = subprocess.run(["plpredict", "--help"], capture_output=True, text=True)
        assert proc.returncode == 0
        assert "train" in proc.stdout and "predict" in proc.stdout


@pytest.mark.skipif(shutil.which("voxelray") is None,
                    reason="dataset producer CLI not installed")
class TestProducerIntegration:
    def test_full_loop_through_external_interfaces(self, tmp_path):
        """Producer builds a dataset; this package trains, predicts, and the
        producer's eval consumes the prediction file."""
        d = tmp_path / "d.h5"
        m = tmp_path / "m.json"
        build = subprocess.run(
            ["voxelray", "dataset", "build", "--out", str(d), "--scenes", "2",
             "--tx-per-scene", "2", "--seed", "4", "--heights", "0.6:1.0:0.2",
             "--rooms", "1:1", "--room-size", "3.2:3.2", "--depth", "3.0:3.0"],
            capture_output=True, text=True,
        )
        assert build.returncode == 0, build.stderr
        split = subprocess.run(
            ["voxelray", "split", "--dataset", str(d), "--out", str(m),
             "--test-scenes", "1"],
            capture_output=True, text=True,
        )
        assert split.returncode == 0, split.stderr

        weights = tmp_path / "model.pt"
        assert main(["train", "--dataset", str(d), "--manifest", str(m),
                     "--out", str(weights), "--epochs", "3", "--lr", "1e-3"]) == 0
        pred = tmp_path / "pred.h5"
        assert main(["predict", "--dataset", str(d), "--weights", str(weights),
                     "--out", str(pred), "--manifest", str(m), "--split", "test"]) == 0

        report_path = tmp_path / "report.json"
        ev = subprocess.run(
            ["voxelray", "eval", "--pred", str(pred), "--truth", str(d),
             "--out", str(report_path)],
            capture_output=True, text=True,
        )
        assert ev.returncode == 0, ev.stderr
        report = json.loads(report_path.read_text())
        assert np.isfinite(report["mae_db"]) and report["mae_db"] >= 0.0
        assert report["rmse_db"] >= report["mae_db"]
