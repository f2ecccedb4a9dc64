import numpy as np
import pytest

import oracle_impls as oracle
from lgdml import guidance, simcore
from lgdml.errors import (DimMismatch, EmptyList, EmptyTargetList,
                          MissingClassInExternalMatrix, ShapeMismatch)
from lgdml.guidance import GuidanceSpec
from lgdml.trainer import finite_difference_gradient, max_relative_error


def unit_rows(rng, n, d):
    return simcore.normalize_rows(rng.normal(size=(n, d)))


def batch(rng, n=5, d=6, ld=4, n_classes=3):
    emb = unit_rows(rng, n, d)
    y = rng.integers(0, n_classes, size=n)
    s = emb @ emb.T
    lemb = unit_rows(rng, ld + 1, ld)  # one language row per class
    # per-sample language rows from class embeddings
    s_lang = lemb[y % (ld + 1)] @ lemb[y % (ld + 1)].T
    return s, s_lang, y


class TestMaskedImageSimilarity:
    def test_distinct_labels_touch_only_diagonal(self):
        rng = np.random.default_rng(0)
        emb = unit_rows(rng, 4, 5)
        s = emb @ emb.T
        out = guidance.masked_image_similarity(s, [0, 1, 2, 3], 0.3)
        off = ~np.eye(4, dtype=bool)
        np.testing.assert_array_equal(out[off], s[off])
        np.testing.assert_allclose(np.diag(out), 1.3)

    def test_all_same_class_constant(self):
        s = np.random.default_rng(1).normal(size=(3, 3))
        out = guidance.masked_image_similarity(s, [7, 7, 7], 0.5)
        np.testing.assert_allclose(out, 1.5)

    def test_mask_enumeration(self):
        rng = np.random.default_rng(2)
        emb = unit_rows(rng, 4, 5)
        s = emb @ emb.T
        out = guidance.masked_image_similarity(s, [0, 0, 1, 1], 0.2)
        for i in range(4):
            for j in range(4):
                labels = [0, 0, 1, 1]
                want = 1.2 if labels[i] == labels[j] else s[i, j]
                assert abs(out[i, j] - want) < 1e-12


class TestElgMatchLoss:
    def test_zero_when_rows_match_shifted_target(self):
        rng = np.random.default_rng(3)
        lemb = unit_rows(rng, 4, 5)
        s_lang = lemb @ lemb.T
        val, _ = guidance.elg_match_loss(s_lang + 0.4, s_lang, 0.4)
        assert abs(val) < 1e-12

    def test_masked_entry_gradient_exactly_zero(self):
        rng = np.random.default_rng(4)
        s, s_lang, y = batch(rng)
        mask = guidance.same_class_mask(y)
        s_masked = guidance.masked_image_similarity(s, y, 0.5)
        _, grads = guidance.elg_match_loss(s_masked, s_lang, 0.5, mask=mask)
        assert np.all(grads["s_img"][mask] == 0.0)

    def test_value_and_gradient_match_oracle(self):
        rng = np.random.default_rng(5)
        s, s_lang, y = batch(rng)
        mask = guidance.same_class_mask(y)
        s_masked = guidance.masked_image_similarity(s, y, 0.5)
        val, grads = guidance.elg_match_loss(s_masked, s_lang, 0.5, mask=mask)
        assert abs(val - oracle.match_loss(s_masked, s_lang, 0.5)) < 1e-10
        g_fd = finite_difference_gradient(
            lambda x: guidance.elg_match_loss(np.where(mask, 1.5, x), s_lang, 0.5, mask=mask)[0],
            s)
        assert max_relative_error(np.where(mask, 0.0, grads["s_img"]), g_fd) <= 1e-5

    def test_language_shift_invariance(self):
        rng = np.random.default_rng(6)
        s, s_lang, y = batch(rng)
        s_masked = guidance.masked_image_similarity(s, y, 0.5)
        a, _ = guidance.elg_match_loss(s_masked, s_lang, 0.5)
        b, _ = guidance.elg_match_loss(s_masked, s_lang + 3.7, 0.5)
        assert abs(a - b) < 1e-9

    def test_stop_gradient_contract(self):
        rng = np.random.default_rng(7)
        s, s_lang, y = batch(rng)
        _, grads = guidance.elg_match_loss(s, s_lang, 0.5)
        assert np.all(grads["s_lang"] == 0.0)

    @pytest.mark.parametrize("gamma", [0.0, 0.2, 1.0])
    def test_gamma_range(self, gamma):
        rng = np.random.default_rng(8)
        s, s_lang, y = batch(rng)
        mask = guidance.same_class_mask(y)
        s_masked = guidance.masked_image_similarity(s, y, gamma)
        val, _ = guidance.elg_match_loss(s_masked, s_lang, gamma, mask=mask)
        assert val >= 0.0
        assert abs(val - oracle.match_loss(s_masked, s_lang, gamma)) < 1e-10


class TestComposeObjective:
    def test_omega_zero(self):
        g1, g2 = np.ones(3), np.full(3, 5.0)
        val, g = guidance.compose_objective(2.0, g1, 9.0, g2, 0.0)
        assert val == 2.0
        np.testing.assert_array_equal(g, g1)

    def test_zero_match(self):
        val, _ = guidance.compose_objective(2.0, np.zeros(2), 0.0, np.zeros(2), 1.0)
        assert val == 2.0

    def test_linearity(self):
        rng = np.random.default_rng(9)
        g1, g2 = rng.normal(size=4), rng.normal(size=4)
        val, g = guidance.compose_objective(1.5, g1, 2.5, g2, 5.0)
        assert abs(val - (1.5 + 5.0 * 2.5)) < 1e-12
        np.testing.assert_allclose(g, g1 + 5.0 * g2, atol=1e-12)


class TestPseudomatch:
    def setup_method(self):
        rng = np.random.default_rng(10)
        self.s, _, self.y = batch(rng)
        self.mask = guidance.same_class_mask(self.y)
        self.s_masked = guidance.masked_image_similarity(self.s, self.y, 0.5)
        self.targets = []
        for _ in range(3):
            lemb = unit_rows(rng, 5, 4)
            self.targets.append(lemb @ lemb.T)

    def test_single_target_equals_elg(self):
        spec = GuidanceSpec(mode="plg", merge="average", gamma_lang=0.5, k=1)
        a, _ = guidance.pseudomatch_loss(self.s_masked, self.targets[:1], spec, mask=self.mask)
        b, _ = guidance.elg_match_loss(self.s_masked, self.targets[0], 0.5, mask=self.mask)
        assert a == b

    def test_identical_targets_average_equals_multi(self):
        same = [self.targets[0]] * 3
        sa = GuidanceSpec(mode="plg", merge="average", gamma_lang=0.5)
        sm = GuidanceSpec(mode="plg", merge="multi", gamma_lang=0.5)
        a, ga = guidance.pseudomatch_loss(self.s_masked, same, sa, mask=self.mask)
        b, gb = guidance.pseudomatch_loss(self.s_masked, same, sm, mask=self.mask)
        assert abs(a - b) < 1e-12
        np.testing.assert_allclose(ga["s_img"], gb["s_img"], atol=1e-10)

    def test_average_matches_mean_matrix_oracle(self):
        spec = GuidanceSpec(mode="plg", merge="average", gamma_lang=0.5)
        val, _ = guidance.pseudomatch_loss(self.s_masked, self.targets, spec, mask=self.mask)
        want = oracle.match_loss(self.s_masked, np.mean(self.targets, axis=0), 0.5)
        assert abs(val - want) < 1e-10

    def test_multi_is_mean_of_losses(self):
        spec = GuidanceSpec(mode="plg", merge="multi", gamma_lang=0.5)
        val, _ = guidance.pseudomatch_loss(self.s_masked, self.targets, spec, mask=self.mask)
        want = np.mean([oracle.match_loss(self.s_masked, t, 0.5) for t in self.targets])
        assert abs(val - want) < 1e-10

    def test_dense_is_mean_over_pairings(self):
        spec = GuidanceSpec(mode="plg", merge="dense", gamma_lang=0.5, k=2)
        four = self.targets + [self.targets[0]]
        val, _ = guidance.pseudomatch_loss(self.s_masked, four, spec, mask=self.mask)
        want = np.mean([oracle.match_loss(self.s_masked, t, 0.5) for t in four])
        assert abs(val - want) < 1e-10

    def test_empty_targets(self):
        with pytest.raises(EmptyTargetList):
            guidance.pseudomatch_loss(self.s_masked, [], GuidanceSpec(mode="plg"))


class TestFullMatrixKL:
    def test_zero_on_shifted_identity(self):
        rng = np.random.default_rng(11)
        lemb = unit_rows(rng, 4, 5)
        s_lang = lemb @ lemb.T
        val, _ = guidance.full_matrix_kl(s_lang.copy(), s_lang, 0.5)
        assert abs(val) < 1e-12

    def test_one_by_one_is_zero(self):
        val, _ = guidance.full_matrix_kl(np.array([[0.3]]), np.array([[0.9]]), 0.5)
        assert val == 0.0

    def test_matches_flattened_oracle(self):
        rng = np.random.default_rng(12)
        s, s_lang, y = batch(rng, n=4)
        mask = guidance.same_class_mask(y)
        s_masked = guidance.masked_image_similarity(s, y, 0.5)
        val, grads = guidance.full_matrix_kl(s_masked, s_lang, 0.5, mask=mask)
        want = oracle.match_loss(s_masked.reshape(1, -1), s_lang.reshape(1, -1), 0.5)
        assert abs(val - want) < 1e-10
        assert np.all(grads["s_lang"] == 0.0)
        g_fd = finite_difference_gradient(
            lambda x: guidance.full_matrix_kl(np.where(mask, 1.5, x), s_lang, 0.5, mask=mask)[0],
            s)
        assert max_relative_error(np.where(mask, 0.0, grads["s_img"]), g_fd) <= 1e-5


class TestRowwiseL2Loss:
    def test_masked_entries_contribute_nothing(self):
        # class-level language rows have exactly 1 on same-class entries,
        # so the masked image entries (1 + gamma) land on the shifted
        # target exactly; matching the unmasked side then zeroes the loss
        rng = np.random.default_rng(13)
        y = np.array([0, 0, 1, 1, 2])
        class_rows = unit_rows(rng, 3, 4)
        per_sample = class_rows[y]
        s_lang = per_sample @ per_sample.T
        mask = guidance.same_class_mask(y)
        s_img = guidance.masked_image_similarity(s_lang + 0.5, y, 0.5)
        val, _ = guidance.rowwise_l2_loss(s_img, s_lang, 0.5, mask=mask)
        assert abs(val) < 1e-12

    def test_matches_oracle(self):
        rng = np.random.default_rng(14)
        s, s_lang, y = batch(rng)
        mask = guidance.same_class_mask(y)
        s_masked = guidance.masked_image_similarity(s, y, 0.5)
        val, grads = guidance.rowwise_l2_loss(s_masked, s_lang, 0.5, mask=mask)
        assert abs(val - oracle.l2_rows(s_masked, s_lang + 0.5)) < 1e-10
        assert np.all(grads["s_lang"] == 0.0)


class TestClipStyle:
    def test_single_sample_is_zero(self):
        val, _ = guidance.clip_style_loss(np.array([[1.0]]), np.array([[1.0]]), 0.07)
        assert val == 0.0

    def test_temperature_sharpening(self):
        rng = np.random.default_rng(15)
        emb = unit_rows(rng, 5, 6)
        sharp, _ = guidance.clip_style_loss(emb, emb, 0.05)
        blunt, _ = guidance.clip_style_loss(emb, emb, 0.5)
        assert sharp < blunt

    def test_matches_symmetric_cross_entropy_oracle(self):
        rng = np.random.default_rng(16)
        img = unit_rows(rng, 4, 5)
        lang = unit_rows(rng, 4, 5)
        val, grads = guidance.clip_style_loss(img, lang, 0.3)
        assert abs(val - oracle.clip_loss(img, lang, 0.3)) < 1e-10
        assert np.all(grads["lang_emb"] == 0.0)
        g_fd = finite_difference_gradient(
            lambda x: guidance.clip_style_loss(x, lang, 0.3)[0], img)
        assert max_relative_error(grads["img_emb"], g_fd) <= 1e-5

    def test_shape_errors(self):
        with pytest.raises(ShapeMismatch):
            guidance.clip_style_loss(np.ones((3, 2)), np.ones((4, 2)), 0.1)
        with pytest.raises(DimMismatch):
            guidance.clip_style_loss(np.ones((3, 2)), np.ones((3, 4)), 0.1)


class TestPredictHead:
    def test_perfect_alignment(self):
        rng = np.random.default_rng(17)
        emb = unit_rows(rng, 4, 5)
        val, _ = guidance.predict_head_loss(emb, emb)
        assert abs(val - (-1.0)) < 1e-12

    def test_orthogonal_rows(self):
        a = np.array([[1.0, 0.0], [0.0, 1.0]])
        b = np.array([[0.0, 1.0], [1.0, 0.0]])
        val, _ = guidance.predict_head_loss(a, b)
        assert val == 0.0

    def test_matches_oracle_and_bounds(self):
        rng = np.random.default_rng(18)
        a = unit_rows(rng, 5, 6)
        b = unit_rows(rng, 5, 6)
        val, grads = guidance.predict_head_loss(a, b)
        want = -np.mean([np.dot(a[i], b[i]) for i in range(5)])
        assert abs(val - want) < 1e-12
        assert -1.0 <= val <= 1.0
        assert np.all(grads["lang_targets"] == 0.0)


class TestAverageLanguageTargets:
    def test_single_unchanged(self):
        m = np.random.default_rng(19).normal(size=(3, 3))
        np.testing.assert_array_equal(guidance.average_language_targets([m]), m)

    def test_opposite_cancel(self):
        m = np.random.default_rng(20).normal(size=(3, 3))
        np.testing.assert_allclose(guidance.average_language_targets([m, -m]),
                                   np.zeros((3, 3)), atol=1e-15)

    def test_three_random(self):
        rng = np.random.default_rng(21)
        ms = [rng.normal(size=(4, 4)) for _ in range(3)]
        np.testing.assert_allclose(guidance.average_language_targets(ms),
                                   (ms[0] + ms[1] + ms[2]) / 3, atol=1e-12)

    def test_errors(self):
        with pytest.raises(EmptyList):
            guidance.average_language_targets([])
        with pytest.raises(ShapeMismatch):
            guidance.average_language_targets([np.eye(2), np.eye(3)])


class TestExternalTargetGuidance:
    def test_equals_elg_on_same_target(self):
        rng = np.random.default_rng(22)
        s, _, y = batch(rng)
        mask = guidance.same_class_mask(y)
        s_masked = guidance.masked_image_similarity(s, y, 0.5)
        lemb = unit_rows(rng, 3, 4)
        s_ext = lemb @ lemb.T  # class-level matrix, 3 classes
        a, _ = guidance.external_target_guidance(s_masked, s_ext, y, 0.5, mask=mask)
        b, _ = guidance.elg_match_loss(s_masked, s_ext[np.ix_(y, y)], 0.5, mask=mask)
        assert a == b

    def test_identity_external_matrix(self):
        rng = np.random.default_rng(23)
        s, _, y = batch(rng)
        mask = guidance.same_class_mask(y)
        s_masked = guidance.masked_image_similarity(s, y, 0.5)
        ext = np.eye(3)
        a, _ = guidance.external_target_guidance(s_masked, ext, y, 0.5, mask=mask)
        b, _ = guidance.elg_match_loss(s_masked, np.eye(3)[np.ix_(y, y)], 0.5, mask=mask)
        assert a == b

    def test_missing_class(self):
        with pytest.raises(MissingClassInExternalMatrix):
            guidance.external_target_guidance(np.eye(2), np.eye(2), [0, 5], 0.5)


def test_all_guidance_losses_nonnegative_except_predict():
    rng = np.random.default_rng(24)
    s, s_lang, y = batch(rng)
    mask = guidance.same_class_mask(y)
    s_masked = guidance.masked_image_similarity(s, y, 0.5)
    assert guidance.elg_match_loss(s_masked, s_lang, 0.5, mask=mask)[0] >= 0
    assert guidance.full_matrix_kl(s_masked, s_lang, 0.5, mask=mask)[0] >= 0
    assert guidance.rowwise_l2_loss(s_masked, s_lang, 0.5, mask=mask)[0] >= 0
    img = unit_rows(rng, 5, 6)
    lang = unit_rows(rng, 5, 6)
    assert guidance.clip_style_loss(img, lang, 0.3)[0] >= 0
    val, _ = guidance.predict_head_loss(img, lang)
    assert -1.0 <= val <= 1.0


def test_permutation_equivariance():
    rng = np.random.default_rng(25)
    s, s_lang, y = batch(rng)
    mask = guidance.same_class_mask(y)
    s_masked = guidance.masked_image_similarity(s, y, 0.5)
    perm = rng.permutation(len(y))
    pm = np.ix_(perm, perm)
    a, _ = guidance.elg_match_loss(s_masked, s_lang, 0.5, mask=mask)
    b, _ = guidance.elg_match_loss(s_masked[pm], s_lang[pm], 0.5, mask=mask[pm])
    assert abs(a - b) < 1e-6
