import numpy as np
import pytest

from rsvla.errors import DegenerateVectorError, ShapeError
from rsvla.gridcore import FeatureGrid, Roi, l2_normalize
from rsvla.msvlam import (AlignBatch, AlignWeights, BoxPair, LinearMap,
                          RegionMask, align_loss, cosine, cosine_with_grads,
                          default_hard_assignment, global_loss, iou,
                          iou_weights, object_features, object_loss,
                          project_text, region_features, region_hard_loss,
                          region_loss, region_nce_loss, spp, spp_concat)


def make_batch(rng, dim=6, P=2, K=3, M=3):
    def vec():
        return l2_normalize(rng.normal(size=dim)).values

    def box():
        r0, c0 = rng.integers(0, 4, size=2)
        h, w = rng.integers(1, 4, size=2)
        return Roi(int(r0), int(c0), int(r0 + h), int(c0 + w))

    return AlignBatch(
        object_pairs=[BoxPair(box(), box()) for _ in range(P)],
        object_visual=[vec() for _ in range(P)],
        object_text=[vec() for _ in range(P)],
        region_visual=[vec() for _ in range(K)],
        phrases=[vec() for _ in range(M)],
        positive_index=[int(rng.integers(0, M)) for _ in range(K)],
        global_visual=vec(), global_text=vec(),
        hard_assignment=[int(rng.integers(0, M)) for _ in range(K)])


class TestCosine:
    def test_parallel_and_antiparallel(self):
        assert cosine([1.0, 0.0], [2.0, 0.0]) == pytest.approx(1.0)
        assert cosine([1.0, 0.0], [-3.0, 0.0]) == pytest.approx(-1.0)

    def test_orthogonal(self):
        assert cosine([1.0, 0.0], [0.0, 5.0]) == pytest.approx(0.0)

    def test_zero_vector_raises(self):
        with pytest.raises(DegenerateVectorError):
            cosine([0.0, 0.0], [1.0, 0.0])

    def test_scale_invariance(self):
        rng = np.random.default_rng(0)
        u, v = rng.normal(size=5), rng.normal(size=5)
        assert cosine(u, v) == pytest.approx(cosine(3.7 * u, 0.2 * v))

    def test_grads_vanish_at_alignment(self):
        u = np.array([1.0, 2.0, 3.0])
        _, du, dv = cosine_with_grads(u, 2.0 * u)
        np.testing.assert_allclose(du, 0.0, atol=1e-12)
        np.testing.assert_allclose(dv, 0.0, atol=1e-12)


class TestIou:
    def test_worked_example(self):
        # 1x1 overlap over union 4 + 4 - 1
        assert iou(Roi(0, 0, 2, 2), Roi(1, 1, 3, 3)) == pytest.approx(1 / 7)

    def test_identity(self):
        r = Roi(2, 3, 7, 9)
        assert iou(r, r) == pytest.approx(1.0)

    def test_disjoint_and_touching(self):
        assert iou(Roi(0, 0, 2, 2), Roi(5, 5, 7, 7)) == 0.0
        assert iou(Roi(0, 0, 2, 2), Roi(0, 2, 2, 4)) == 0.0

    def test_symmetry(self):
        a, b = Roi(0, 0, 4, 4), Roi(2, 1, 6, 3)
        assert iou(a, b) == iou(b, a)

    def test_containment(self):
        assert iou(Roi(0, 0, 4, 4), Roi(1, 1, 3, 3)) == pytest.approx(4 / 16)


class TestIouWeights:
    def test_sums_to_one_over_random_sets(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            P = int(rng.integers(1, 6))
            pairs = []
            for _ in range(P):
                r0, c0 = rng.integers(0, 6, size=2)
                h, w = rng.integers(1, 5, size=2)
                a = Roi(int(r0), int(c0), int(r0 + h), int(c0 + w))
                r0, c0 = rng.integers(0, 6, size=2)
                h, w = rng.integers(1, 5, size=2)
                b = Roi(int(r0), int(c0), int(r0 + h), int(c0 + w))
                pairs.append(BoxPair(a, b))
            assert sum(iou_weights(pairs)) == pytest.approx(1.0, abs=1e-12)

    def test_all_disjoint_fall_back_to_uniform(self):
        pairs = [BoxPair(Roi(0, 0, 1, 1), Roi(5, 5, 6, 6)) for _ in range(4)]
        assert iou_weights(pairs) == [0.25] * 4

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            iou_weights([])


class TestFeatureExtraction:
    def test_object_features_constant_region(self):
        g = FeatureGrid(np.full((8, 8, 2), 3.0))
        proj = LinearMap.identity(2 * 2 * 2)
        (e,) = object_features(g, [Roi(1, 1, 5, 5)], proj, pool_size=2)
        np.testing.assert_allclose(e.values, 3.0)

    def test_object_features_tiny_box_replicates(self):
        g = FeatureGrid(np.arange(16, dtype=float).reshape(4, 4, 1))
        proj = LinearMap.identity(4)
        (e,) = object_features(g, [Roi(0, 0, 1, 1)], proj, pool_size=2)
        np.testing.assert_allclose(e.values, 0.0)

    def test_region_features_masked_mean(self):
        data = np.zeros((2, 2, 3))
        data[0, 0] = [1.0, 2.0, 3.0]
        data[1, 1] = [5.0, 6.0, 7.0]
        mask = RegionMask(np.array([[True, False], [False, True]]))
        (e,) = region_features(FeatureGrid(data), [mask], LinearMap.identity(3))
        np.testing.assert_allclose(e.values, [3.0, 4.0, 5.0])

    def test_region_mask_dim_mismatch(self):
        g = FeatureGrid(np.zeros((2, 2, 1)))
        mask = RegionMask(np.ones((3, 3), dtype=bool))
        with pytest.raises(ShapeError):
            region_features(g, [mask], LinearMap.identity(1))

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError):
            RegionMask(np.zeros((2, 2), dtype=bool))

    def test_spp_concat_length(self):
        g = FeatureGrid(np.zeros((8, 8, 3)))
        assert spp_concat(g, (1, 2, 4)).size == (1 + 4 + 16) * 3

    def test_spp_constant_input_is_degenerate(self):
        # LayerNorm of a constant projection zeroes out, so the final
        # L2-normalize has nothing to scale
        g = FeatureGrid(np.full((4, 4, 1), 2.0))
        proj = LinearMap(np.ones((3, 21)), np.zeros(3))
        with pytest.raises(DegenerateVectorError):
            spp(g, (1, 2, 4), proj)

    def test_spp_output_unit_norm(self):
        rng = np.random.default_rng(2)
        g = FeatureGrid(rng.normal(size=(8, 8, 2)))
        proj = LinearMap.random(5, 42, rng)
        e = spp(g, (1, 2, 4), proj)
        assert np.linalg.norm(e.values) == pytest.approx(1.0, abs=1e-9)

    def test_spp_level_exceeding_grid_rejected(self):
        with pytest.raises(ValueError):
            spp_concat(FeatureGrid(np.zeros((2, 2, 1))), (1, 2, 4))

    def test_project_text_affine(self):
        proj = LinearMap(np.array([[2.0, 0.0], [0.0, 3.0]]), np.array([1.0, -1.0]))
        np.testing.assert_allclose(project_text([1.0, 1.0], proj).values,
                                   [3.0, 2.0])


class TestLosses:
    def test_object_loss_perfect_alignment_is_near_bound(self):
        # with the literal extra 1/P and weights summing to 1, perfectly
        # aligned pairs leave 1 - 1/P rather than 0
        vs = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
        loss, _, _ = object_loss(vs, [v.copy() for v in vs], [0.5, 0.5])
        assert loss == pytest.approx(1.0 - 0.5)

    def test_object_loss_hand_value(self):
        v = [np.array([1.0, 0.0])]
        o = [np.array([0.0, 1.0])]
        loss, dvs, dos = object_loss(v, o, [1.0])
        assert loss == pytest.approx(1.0)
        np.testing.assert_allclose(dvs[0], [0.0, -1.0])
        np.testing.assert_allclose(dos[0], [-1.0, 0.0])

    def test_object_loss_bounds(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            P = int(rng.integers(1, 5))
            vs = [rng.normal(size=4) for _ in range(P)]
            os_ = [rng.normal(size=4) for _ in range(P)]
            w = rng.uniform(0.01, 1.0, size=P)
            w = list(w / w.sum())
            loss, _, _ = object_loss(vs, os_, w)
            assert 0.0 <= loss <= 2.0

    def test_region_hard_loss_identical_vectors(self):
        p = [np.array([1.0, 1.0])]
        loss, _, _ = region_hard_loss([p[0].copy(), p[0].copy()], p, [0, 0])
        assert loss == pytest.approx(0.0, abs=1e-12)

    def test_region_hard_phrase_grads_accumulate(self):
        rng = np.random.default_rng(4)
        v = [rng.normal(size=3) for _ in range(2)]
        p = [rng.normal(size=3)]
        _, _, dps = region_hard_loss(v, p, [0, 0])
        _, _, dp_a = region_hard_loss([v[0]], p, [0])
        _, _, dp_b = region_hard_loss([v[1]], p, [0])
        np.testing.assert_allclose(dps[0], (dp_a[0] + dp_b[0]) / 2, atol=1e-12)

    def test_region_nce_uniform_scores(self):
        # orthogonal region against identical phrases gives log M
        v = [np.array([1.0, 0.0, 0.0])]
        p = [np.array([0.0, 1.0, 0.0])] * 4
        loss, _, _ = region_nce_loss(v, p, [0], 0.07)
        assert loss == pytest.approx(np.log(4))

    def test_region_nce_dominant_positive(self):
        v = [np.array([1.0, 0.0])]
        p = [np.array([1.0, 0.0]), np.array([-1.0, 0.0])]
        loss, _, _ = region_nce_loss(v, p, [0], 0.01)
        assert loss < 1e-12

    def test_region_nce_uses_raw_dots_not_cosine(self):
        # scaling the region vector changes the loss, which cosine
        # similarity would not
        v = [np.array([0.3, 0.1])]
        p = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
        a, _, _ = region_nce_loss(v, p, [0], 0.5)
        b, _, _ = region_nce_loss([10.0 * v[0]], p, [0], 0.5)
        assert abs(a - b) > 1e-3

    def test_region_nce_shift_stability(self):
        v = [np.array([1000.0, 0.0])]
        p = [np.array([1.0, 0.0]), np.array([0.9, 0.0])]
        loss, dV, dP = region_nce_loss(v, p, [0], 0.07)
        assert np.isfinite(loss)
        assert all(np.isfinite(g).all() for g in dV + dP)

    def test_region_loss_mixture(self):
        assert region_loss(2.0, 4.0, 0.25) == pytest.approx(0.25 * 2 + 0.75 * 4)
        with pytest.raises(ValueError):
            region_loss(1.0, 1.0, 1.5)

    def test_global_loss_endpoints(self):
        l, _, _ = global_loss([1.0, 0.0], [2.0, 0.0])
        assert l == pytest.approx(0.0, abs=1e-12)
        l, _, _ = global_loss([1.0, 0.0], [-1.0, 0.0])
        assert l == pytest.approx(2.0)

    def test_default_hard_assignment_greedy(self):
        p = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
        v = [np.array([0.9, 0.1]), np.array([0.2, 5.0])]
        assert default_hard_assignment(v, p) == [0, 1]


class TestAlignLoss:
    def test_recomposition_identity(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            batch = make_batch(rng)
            w = AlignWeights(alpha=float(rng.uniform(0.1, 1)),
                             beta=float(rng.uniform(0.1, 1)),
                             gamma=float(rng.uniform(0.1, 1)),
                             mu=float(rng.uniform(0, 1)),
                             tau_temp=0.07)
            bd = align_loss(batch, w)
            recomposed = w.alpha * bd.l_obj + w.beta * bd.l_reg + w.gamma * bd.l_glob
            assert abs(bd.l_align - recomposed) <= 1e-12
            assert bd.l_reg == pytest.approx(
                w.mu * bd.l_reg_hard + (1 - w.mu) * bd.l_reg_nce, abs=1e-12)

    def test_bounds(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            bd = align_loss(make_batch(rng), AlignWeights())
            assert 0.0 <= bd.l_obj <= 2.0
            assert 0.0 <= bd.l_reg_hard <= 2.0
            assert 0.0 <= bd.l_glob <= 2.0
            assert bd.l_reg_nce >= 0.0

    def test_gradient_table_complete(self):
        rng = np.random.default_rng(7)
        batch = make_batch(rng, P=2, K=3, M=4)
        bd = align_loss(batch, AlignWeights())
        keys = set(bd.gradients)
        expected = ({f"object_visual.{p}" for p in range(2)}
                    | {f"object_text.{p}" for p in range(2)}
                    | {f"region_visual.{k}" for k in range(3)}
                    | {f"phrase.{j}" for j in range(4)}
                    | {"global_visual", "global_text"})
        assert keys == expected

    def test_default_assignment_used_when_missing(self):
        rng = np.random.default_rng(8)
        batch = make_batch(rng)
        batch.hard_assignment = None
        bd = align_loss(batch, AlignWeights())
        assignment = default_hard_assignment(batch.region_visual, batch.phrases)
        hard, _, _ = region_hard_loss(batch.region_visual, batch.phrases,
                                      assignment)
        assert bd.l_reg_hard == pytest.approx(hard, abs=1e-12)


class TestValidation:
    def test_dim_mismatch_rejected(self):
        rng = np.random.default_rng(9)
        batch = make_batch(rng)
        with pytest.raises(ShapeError):
            AlignBatch(object_pairs=batch.object_pairs,
                       object_visual=batch.object_visual,
                       object_text=batch.object_text,
                       region_visual=[np.ones(3)],
                       phrases=batch.phrases,
                       positive_index=[0],
                       global_visual=batch.global_visual,
                       global_text=batch.global_text)

    def test_positive_index_range_checked(self):
        rng = np.random.default_rng(10)
        batch = make_batch(rng)
        with pytest.raises(ValueError):
            AlignBatch(object_pairs=batch.object_pairs,
                       object_visual=batch.object_visual,
                       object_text=batch.object_text,
                       region_visual=batch.region_visual,
                       phrases=batch.phrases,
                       positive_index=[99] * len(batch.region_visual),
                       global_visual=batch.global_visual,
                       global_text=batch.global_text)

    def test_weight_validation(self):
        with pytest.raises(ValueError):
            AlignWeights(mu=-0.1)
        with pytest.raises(ValueError):
            AlignWeights(tau_temp=0.0)
        with pytest.raises(ValueError):
            AlignWeights(alpha=-1.0)

    def test_linear_map_shape_check(self):
        with pytest.raises(ShapeError):
            LinearMap(np.zeros((2, 3)), np.zeros(3))
        proj = LinearMap.identity(3)
        with pytest.raises(ShapeError):
            proj.apply(np.zeros(4))
