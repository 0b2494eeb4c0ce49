"""Planted-scene generators: oracle labels, symmetry augmentation, corpora."""

import numpy as np
import pytest

import declutter.scoring as scoring_mod
from declutter.synthetic import (
    BASE_AES,
    BASE_CONTENT,
    CONTENT_PER_ELEMENT,
    ELEMENTS_PER_SCENE,
    NICE,
    NICE_BONUS,
    UGLY,
    UGLY_MARGIN,
    dihedral_variants,
    make_inpaint_corpus,
    make_planted_dataset,
    make_planted_scene,
    recovery_training_set,
    sign_recovery_accuracy,
)

SCENES = make_planted_dataset(12, seed=7)


class TestSceneStructure:
    @pytest.mark.parametrize("scene", SCENES)
    def test_element_count_fixed(self, scene):
        assert len(scene.masks.masks) == ELEMENTS_PER_SCENE
        assert len(scene.planted_signs) == ELEMENTS_PER_SCENE

    @pytest.mark.parametrize("scene", SCENES)
    def test_both_types_present(self, scene):
        assert NICE in scene.planted_signs
        assert UGLY in scene.planted_signs

    @pytest.mark.parametrize("scene", SCENES)
    def test_masks_pairwise_disjoint(self, scene):
        stack = np.stack([m.mask for m in scene.masks.masks])
        assert stack.sum(axis=0).max() == 1

    @pytest.mark.parametrize("scene", SCENES)
    def test_image_and_labels_in_unit_range(self, scene):
        assert scene.image.min() >= 0.0 and scene.image.max() <= 1.0
        assert 0.0 <= scene.y_aes <= 1.0
        assert 0.0 <= scene.y_content <= 1.0

    def test_deterministic_generation(self):
        a = make_planted_scene(123)
        b = make_planted_scene(123)
        np.testing.assert_array_equal(a.image, b.image)
        assert a.planted_signs == b.planted_signs

    def test_different_seeds_differ(self):
        a = make_planted_scene(1)
        b = make_planted_scene(2)
        assert not np.array_equal(a.image, b.image)

    def test_dataset_seeds_are_disjoint(self):
        images = [s.image.tobytes() for s in SCENES]
        assert len(set(images)) == len(images)


class TestOracleLabels:
    @pytest.mark.parametrize("scene", SCENES)
    def test_aesthetic_label_formula(self, scene):
        n_nice = scene.planted_signs.count(NICE)
        n_ugly = scene.planted_signs.count(UGLY)
        expected = BASE_AES + (NICE_BONUS * n_nice - UGLY_MARGIN * n_ugly) / ELEMENTS_PER_SCENE
        assert scene.y_aes == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("scene", SCENES)
    def test_content_label_counts_elements(self, scene):
        expected = BASE_CONTENT + CONTENT_PER_ELEMENT * ELEMENTS_PER_SCENE
        assert scene.y_content == pytest.approx(expected, abs=1e-12)

    def test_each_extra_ugly_costs_a_fixed_margin(self):
        def label(n_ugly):
            n_nice = ELEMENTS_PER_SCENE - n_ugly
            return BASE_AES + (NICE_BONUS * n_nice - UGLY_MARGIN * n_ugly) / ELEMENTS_PER_SCENE

        steps = [label(u) - label(u + 1) for u in range(ELEMENTS_PER_SCENE)]
        expected = (NICE_BONUS + UGLY_MARGIN) / ELEMENTS_PER_SCENE
        np.testing.assert_allclose(steps, expected, atol=1e-12)

    @pytest.mark.parametrize("scene", SCENES)
    def test_scene_label_is_mean_of_leave_one_out_labels(self, scene):
        """The self-consistency that makes the true counterfactual head a
        zero-loss optimum: dropping element i leaves a (k-1)-element scene
        whose label uses the same per-element mean, and the average of
        those k labels reproduces the full scene's label exactly."""
        k = ELEMENTS_PER_SCENE
        values = [NICE_BONUS if s == NICE else -UGLY_MARGIN for s in scene.planted_signs]
        loo = [BASE_AES + (sum(values) - v) / (k - 1) for v in values]
        assert np.mean(loo) == pytest.approx(scene.y_aes, abs=1e-12)

    @pytest.mark.parametrize("scene", SCENES)
    def test_planted_sign_matches_value_relative_to_scene_mean(self, scene):
        """With uniform aggregation weights a true counterfactual head gives
        q_i proportional to v_i - mean(v); planted signs must agree."""
        values = np.array(
            [NICE_BONUS if s == NICE else -UGLY_MARGIN for s in scene.planted_signs]
        )
        centered = values - values.mean()
        for c, sign in zip(centered, scene.planted_signs):
            assert (c > 0 and sign == NICE) or (c < 0 and sign == UGLY)


class TestElementTextures:
    def test_textures_are_zero_mean_around_background(self):
        scene = make_planted_scene(42)
        for mask in scene.masks.masks:
            region = scene.image[mask.mask.astype(bool)]
            assert abs(region.mean() - 0.5) < 0.05

    def test_ugly_regions_rougher_than_nice(self):
        scene = make_planted_scene(42)

        def roughness(mask):
            sel = mask.mask.astype(bool)
            grad = np.abs(np.diff(scene.image, axis=0)).sum(axis=-1)
            return grad[sel[1:, :]].mean()

        nice_r = [
            roughness(m)
            for m, s in zip(scene.masks.masks, scene.planted_signs)
            if s == NICE
        ]
        ugly_r = [
            roughness(m)
            for m, s in zip(scene.masks.masks, scene.planted_signs)
            if s == UGLY
        ]
        assert min(ugly_r) > 0.1 and max(nice_r) > 0.1  # both are textured


class TestDihedralVariants:
    def test_yields_eight_distinct_views(self):
        scene = make_planted_scene(5)
        images = [img for img, _ in dihedral_variants(scene.image, scene.masks)]
        assert len(images) == 8
        assert len({img.tobytes() for img in images}) == 8

    def test_first_variant_is_identity(self):
        scene = make_planted_scene(5)
        first_img, first_masks = next(iter(dihedral_variants(scene.image, scene.masks)))
        np.testing.assert_array_equal(first_img, scene.image)
        np.testing.assert_array_equal(
            first_masks.masks[0].mask, scene.masks.masks[0].mask
        )

    def test_masks_track_the_image(self):
        """Each element's pixel multiset under its mask is invariant: the
        mask is transformed by the same rigid motion as the image."""
        scene = make_planted_scene(5)
        reference = [
            np.sort(scene.image[m.mask.astype(bool)], axis=None)
            for m in scene.masks.masks
        ]
        for img, masks in dihedral_variants(scene.image, scene.masks):
            for ref, m in zip(reference, masks.masks):
                got = np.sort(img[m.mask.astype(bool)], axis=None)
                np.testing.assert_array_equal(got, ref)

    def test_mask_areas_and_identity_preserved(self):
        scene = make_planted_scene(5)
        areas = [int(m.mask.sum()) for m in scene.masks.masks]
        for _, masks in dihedral_variants(scene.image, scene.masks):
            assert [int(m.mask.sum()) for m in masks.masks] == areas
            assert [m.index for m in masks.masks] == [1, 2, 3, 4]

    def test_training_set_expansion_factor(self):
        scenes = SCENES[:3]
        rows = recovery_training_set(scenes)
        assert len(rows) == 8 * len(scenes)
        # labels ride along unchanged
        assert {r[2] for r in rows[:8]} == {scenes[0].y_aes}
        assert {r[3] for r in rows[:8]} == {scenes[0].y_content}


class TestSignRecoveryAccuracy:
    class _FakeAssessment:
        def __init__(self, contributions):
            self.contributions = contributions

    def test_perfect_and_inverted_predictions(self, monkeypatch):
        scenes = SCENES[:4]

        def perfect(image, masks, model):
            for s in scenes:
                if s.image is image:
                    return self._FakeAssessment([float(x) for x in s.planted_signs])
            raise AssertionError("unexpected scene")

        monkeypatch.setattr(scoring_mod, "analyze_scene", perfect)
        assert sign_recovery_accuracy(None, scenes) == 1.0

        def inverted(image, masks, model):
            for s in scenes:
                if s.image is image:
                    return self._FakeAssessment([-float(x) for x in s.planted_signs])
            raise AssertionError("unexpected scene")

        monkeypatch.setattr(scoring_mod, "analyze_scene", inverted)
        assert sign_recovery_accuracy(None, scenes) == 0.0

    def test_zero_contribution_counts_as_nice(self, monkeypatch):
        scene = make_planted_scene(9)
        monkeypatch.setattr(
            scoring_mod,
            "analyze_scene",
            lambda *a: self._FakeAssessment([0.0] * ELEMENTS_PER_SCENE),
        )
        expected = scene.planted_signs.count(NICE) / ELEMENTS_PER_SCENE
        assert sign_recovery_accuracy(None, [scene]) == pytest.approx(expected)


class TestInpaintCorpus:
    def test_shapes_and_range(self):
        corpus = make_inpaint_corpus(5, size=24, seed=1)
        assert len(corpus) == 5
        for img in corpus:
            assert img.shape == (24, 24, 3)
            assert img.min() >= 0.0 and img.max() <= 1.0

    def test_deterministic(self):
        a = make_inpaint_corpus(3, size=16, seed=2)
        b = make_inpaint_corpus(3, size=16, seed=2)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_images_distinct(self):
        corpus = make_inpaint_corpus(4, size=16, seed=2)
        assert len({img.tobytes() for img in corpus}) == 4
