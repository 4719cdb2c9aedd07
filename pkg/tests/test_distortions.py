import numpy as np
import pytest

from coae.distortions import (
    DISTORTION_TYPES,
    GENERATOR_VERSION,
    DistortionSpec,
    apply_distortion,
    build_corpus,
    pseudo_mos,
)
from coae.imaging import synth_pristine
from coae.manifest import read_manifest


@pytest.fixture(scope="module")
def img():
    return synth_pristine(1, (40, 48), 2)[0]


class TestSpec:
    def test_ten_types(self):
        assert len(DISTORTION_TYPES) == 10
        assert len(set(DISTORTION_TYPES)) == 10

    def test_level_tables_frozen(self):
        # one resolved-parameter spot check per type, against the level rules
        assert DistortionSpec.create("gaussian_blur", 3).params == {"sigma": 0.8 * 3}
        assert DistortionSpec.create("gaussian_noise", 5).params == {"sigma": 0.1}
        assert DistortionSpec.create("impulse_noise", 2).params == {"prob": 0.02}
        assert DistortionSpec.create("quantize", 1).params == {"levels": 64}
        assert DistortionSpec.create("quantize", 5).params == {"levels": 4}
        assert DistortionSpec.create("contrast_decrease", 4).params == {"gain": 1.0 - 0.6}
        assert DistortionSpec.create("overexposure", 2).params == {"offset": 0.2}
        assert DistortionSpec.create("underexposure", 3).params == {"offset": pytest.approx(-0.3)}
        assert DistortionSpec.create("pixelate", 5).params == {"block": 6}
        assert DistortionSpec.create("color_saturation", 5).params == {"gain": pytest.approx(0.1)}
        mb = DistortionSpec.create("motion_blur", 2, seed=9).params
        assert mb["length"] == 5
        assert mb["angle_deg"] in (0.0, 45.0, 90.0, 135.0)

    def test_motion_blur_angle_seeded(self):
        a = DistortionSpec.create("motion_blur", 2, seed=9).params
        b = DistortionSpec.create("motion_blur", 2, seed=9).params
        assert a == b

    def test_bad_level(self):
        with pytest.raises(ValueError):
            DistortionSpec.create("gaussian_blur", 0)
        with pytest.raises(ValueError):
            DistortionSpec.create("gaussian_blur", 6)

    def test_unknown_type(self):
        with pytest.raises(ValueError):
            DistortionSpec.create("vortex", 1)


class TestApply:
    @pytest.mark.parametrize("type_id", DISTORTION_TYPES)
    @pytest.mark.parametrize("level", [1, 5])
    def test_shape_range_determinism(self, img, type_id, level):
        spec = DistortionSpec.create(type_id, level, seed=7)
        out1 = apply_distortion(img, spec)
        out2 = apply_distortion(img, spec)
        assert out1.shape == img.shape
        assert out1.min() >= 0.0 and out1.max() <= 1.0
        assert np.array_equal(out1, out2)

    @pytest.mark.parametrize("type_id", DISTORTION_TYPES)
    def test_changes_image(self, img, type_id):
        spec = DistortionSpec.create(type_id, 5, seed=7)
        assert not np.array_equal(apply_distortion(img, spec), img)

    @pytest.mark.parametrize("type_id", ["gaussian_noise", "impulse_noise"])
    def test_stochastic_types_vary_with_seed(self, img, type_id):
        a = apply_distortion(img, DistortionSpec.create(type_id, 3, seed=1))
        b = apply_distortion(img, DistortionSpec.create(type_id, 3, seed=2))
        assert not np.array_equal(a, b)

    @pytest.mark.parametrize("type_id", DISTORTION_TYPES)
    def test_severity_grows_with_level(self, img, type_id):
        # distance from the pristine image is monotone nondecreasing in level
        dists = []
        for level in (1, 3, 5):
            out = apply_distortion(img, DistortionSpec.create(type_id, level, seed=3))
            dists.append(float(np.abs(out - img).mean()))
        assert dists[0] <= dists[1] <= dists[2]
        assert dists[0] < dists[2]


class TestPseudoMos:
    def test_mapping(self):
        assert pseudo_mos(0) == 1.0
        assert pseudo_mos(1) == pytest.approx(0.8)
        assert pseudo_mos(5) == pytest.approx(0.0)

    def test_monotone(self):
        vals = [pseudo_mos(level) for level in range(6)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestBuildCorpus:
    def test_counts_and_layout(self, tmp_path):
        pristine = synth_pristine(3, 32, 5)
        man = build_corpus(pristine, ["gaussian_blur", "pixelate"], [1, 4], tmp_path, seed=9, name="c")
        assert len(man.records) == 3 + 3 * 2 * 2
        assert len(man.pristine_records()) == 3
        assert man.corpus_seed == 9
        assert man.generator_version == GENERATOR_VERSION
        for rec in man.records:
            assert (tmp_path / rec.image_path).exists()
        back = read_manifest(tmp_path / "manifest.jsonl")
        assert back.records == man.records

    def test_rebuild_byte_identical(self, tmp_path):
        pristine = synth_pristine(2, 32, 5)
        d1, d2 = tmp_path / "one", tmp_path / "two"
        m1 = build_corpus(pristine, ["gaussian_noise"], [2], d1, seed=3, name="c")
        m2 = build_corpus(pristine, ["gaussian_noise"], [2], d2, seed=3, name="c")
        assert (d1 / "manifest.jsonl").read_bytes() == (d2 / "manifest.jsonl").read_bytes()
        for r1, r2 in zip(m1.records, m2.records):
            assert (d1 / r1.image_path).read_bytes() == (d2 / r2.image_path).read_bytes()

    def test_seed_changes_stochastic_outputs(self, tmp_path):
        pristine = synth_pristine(1, 32, 5)
        m1 = build_corpus(pristine, ["gaussian_noise"], [3], tmp_path / "a", seed=1, name="c")
        m2 = build_corpus(pristine, ["gaussian_noise"], [3], tmp_path / "b", seed=2, name="c")
        p1 = (tmp_path / "a" / m1.distorted_records()[0].image_path).read_bytes()
        p2 = (tmp_path / "b" / m2.distorted_records()[0].image_path).read_bytes()
        assert p1 != p2

    def test_pseudo_mos_attached(self, tmp_path):
        pristine = synth_pristine(1, 32, 5)
        man = build_corpus(pristine, ["gaussian_blur"], [1, 5], tmp_path, seed=0, name="c")
        by_level = {r.level: r.pseudo_mos for r in man.records}
        assert by_level[0] == 1.0
        assert by_level[1] == pytest.approx(0.8)
        assert by_level[5] == pytest.approx(0.0)

    def test_empty_inputs_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            build_corpus([], ["gaussian_blur"], [1], tmp_path, seed=0, name="c")
        pristine = synth_pristine(1, 32, 5)
        with pytest.raises(ValueError):
            build_corpus(pristine, [], [1], tmp_path, seed=0, name="c")
