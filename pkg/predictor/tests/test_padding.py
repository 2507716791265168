import numpy as np
import pytest

from plpredict.padding import PAPER_TARGET, PadError, auto_target, pad_center


class TestPadCenter:
    def test_identity_when_already_at_target(self, rng):
        x = rng.normal(size=(4, 224, 224, 64)).astype(np.float32)
        padded = pad_center(x)
        assert padded.offsets == (0, 0, 0)
        np.testing.assert_array_equal(padded.data, x)

    def test_centering_offsets_hand_case(self):
        padded = pad_center(np.zeros((4, 100, 100, 30), np.float32))
        assert padded.offsets == (62, 62, 17)
        assert padded.data.shape == (4, *PAPER_TARGET)

    def test_extra_voxel_goes_high_side(self):
        padded = pad_center(np.ones((1, 3, 3, 3), np.float32), target=(4, 4, 4))
        assert padded.offsets == (0, 0, 0)
        assert padded.data[0, 3, 0, 0] == 0.0  # high side got the extra slot
        padded = pad_center(np.ones((1, 2, 2, 2), np.float32), target=(5, 5, 5))
        assert padded.offsets == (1, 1, 1)

    def test_crop_inverts_bitwise(self, rng):
        x = rng.normal(size=(4, 37, 22, 15)).astype(np.float32)
        padded = pad_center(x, target=(48, 48, 16))
        np.testing.assert_array_equal(padded.crop(), x)

    def test_crop_applies_to_other_volumes(self, rng):
        x = rng.normal(size=(4, 10, 8, 6)).astype(np.float32)
        padded = pad_center(x, target=(16, 16, 8))
        other = rng.normal(size=(1, 16, 16, 8)).astype(np.float32)
        cropped = padded.crop(other)
        assert cropped.shape == (1, 10, 8, 6)
        np.testing.assert_array_equal(cropped, other[:, 3:13, 4:12, 1:7])

    def test_padding_is_zero(self, rng):
        x = rng.normal(size=(2, 5, 5, 5)).astype(np.float32) + 10
        padded = pad_center(x, target=(8, 8, 8))
        total = padded.data.sum()
        assert total == pytest.approx(x.sum(), rel=1e-6)

    def test_oversize_rejected_with_guidance(self):
        with pytest.raises(PadError, match="tile or downscale"):
            pad_center(np.zeros((4, 300, 10, 10), np.float32))

    def test_wrong_rank_rejected(self):
        with pytest.raises(PadError):
            pad_center(np.zeros((10, 10, 10), np.float32))


class TestAutoTarget:
    def test_rounds_up_to_multiple(self):
        assert auto_target([(24, 20, 12), (30, 18, 10)], multiple=8) == (32, 24, 16)

    def test_exact_multiples_kept(self):
        assert auto_target([(16, 8, 8)], multiple=4) == (16, 8, 8)
