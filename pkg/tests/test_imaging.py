import numpy as np
import pytest

from coae.imaging import (
    MIN_IMAGE_DIM,
    Rng,
    crop_patch,
    derive_seed,
    load_image,
    pad_to_multiple,
    save_image,
    synth_pristine,
    to_image,
    to_tensor,
    validate_image,
)


class TestRng:
    def test_same_key_same_stream(self):
        a = Rng(3).spawn(1, 2).gen.random(8)
        b = Rng(3).spawn(1, 2).gen.random(8)
        assert np.array_equal(a, b)

    def test_different_keys_differ(self):
        a = Rng(3).spawn(1, 2).gen.random(8)
        b = Rng(3).spawn(1, 3).gen.random(8)
        assert not np.array_equal(a, b)

    def test_counter_based_values_are_frozen(self):
        # the generator contract fixes these values on every platform; frozen
        # here so a silent generator change cannot slip by
        v = Rng(0).gen.random(3)
        assert np.allclose(
            v,
            [0.014067035665647709, 0.2577672456246177, 0.47156538101528966],
            rtol=0,
            atol=0,
        )

    def test_derive_seed_stable(self):
        s1 = derive_seed(5, 1, 2)
        s2 = derive_seed(5, 1, 2)
        s3 = derive_seed(5, 2, 1)
        assert s1 == s2 == 848428732679402809
        assert s1 != s3


class TestValidate:
    def test_accepts_valid(self):
        img = np.zeros((MIN_IMAGE_DIM, MIN_IMAGE_DIM, 3))
        assert validate_image(img) is img

    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError):
            validate_image(np.zeros((32, 32)))

    def test_rejects_out_of_range(self):
        img = np.full((32, 32, 3), 1.5)
        with pytest.raises(ValueError):
            validate_image(img)

    def test_rejects_nan(self):
        img = np.zeros((32, 32, 3))
        img[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            validate_image(img)

    def test_rejects_small(self):
        with pytest.raises(ValueError):
            validate_image(np.zeros((8, 8, 3)))


class TestSynth:
    def test_shapes_and_range(self):
        imgs = synth_pristine(3, (40, 56), 0)
        assert len(imgs) == 3
        for im in imgs:
            assert im.shape == (40, 56, 3)
            assert im.min() >= 0.0 and im.max() <= 1.0

    def test_deterministic(self):
        a = synth_pristine(2, 32, 9)
        b = synth_pristine(2, 32, 9)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_contents_differ_across_indices(self):
        a, b = synth_pristine(2, 32, 9)
        assert not np.array_equal(a, b)

    def test_seeds_differ(self):
        a = synth_pristine(1, 32, 1)[0]
        b = synth_pristine(1, 32, 2)[0]
        assert not np.array_equal(a, b)

    def test_square_int_size(self):
        assert synth_pristine(1, 48, 0)[0].shape == (48, 48, 3)

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            synth_pristine(1, 8, 0)


class TestCrop:
    def test_exact_size_and_bounds(self):
        img = synth_pristine(1, (40, 50), 0)[0]
        patch = crop_patch(img, (32, 32), Rng(0).spawn(1))
        assert patch.shape == (32, 32, 3)

    def test_full_size_identity(self):
        img = synth_pristine(1, 32, 0)[0]
        patch = crop_patch(img, (32, 32), Rng(0).spawn(1))
        assert np.array_equal(patch, img)

    def test_patch_larger_rejected(self):
        img = synth_pristine(1, 32, 0)[0]
        with pytest.raises(ValueError):
            crop_patch(img, (64, 64), Rng(0))

    def test_deterministic_given_rng_key(self):
        img = synth_pristine(1, (64, 64), 0)[0]
        a = crop_patch(img, (16, 16), Rng(5).spawn(2))
        b = crop_patch(img, (16, 16), Rng(5).spawn(2))
        assert np.array_equal(a, b)


class TestIo:
    def test_png_roundtrip_8bit_exact(self, tmp_path):
        img = synth_pristine(1, 32, 3)[0]
        p = tmp_path / "x.png"
        save_image(img, p)
        back = load_image(p)
        # quantized to 8 bits on save; reloading reproduces that quantization
        assert np.allclose(back, np.round(img * 255) / 255, atol=1e-12)

    def test_png_write_deterministic(self, tmp_path):
        img = synth_pristine(1, 32, 3)[0]
        p1, p2 = tmp_path / "a.png", tmp_path / "b.png"
        save_image(img, p1)
        save_image(img, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_load_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "nope.png")


class TestTensor:
    def test_tensor_roundtrip(self):
        img = synth_pristine(1, 32, 0)[0]
        t = to_tensor(img)
        assert t.shape == (3, 32, 32)
        back = to_image(t)
        assert np.allclose(back, img, atol=1e-7)


class TestPad:
    def test_pad_to_multiple(self):
        img = np.zeros((33, 38, 3))
        out = pad_to_multiple(img, 4)
        assert out.shape == (36, 40, 3)

    def test_already_multiple_is_identity(self):
        img = synth_pristine(1, 32, 0)[0]
        assert pad_to_multiple(img, 4) is img or np.array_equal(pad_to_multiple(img, 4), img)
