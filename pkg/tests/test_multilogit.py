import json

import numpy as np
import pytest

from catlowrank.lowrank import RankKFactors, truncated_svd
from catlowrank.mca import centered_log_margins, mca_one_step
from catlowrank.multilogit import (
    MultilogitModel,
    block_logsumexp,
    block_softmax,
    choose_lambda,
    fit_majorization,
    gradient_interaction,
    latent_coordinates,
    log_likelihood,
    model_from_dict,
    model_to_dict,
    predict_probabilities,
    probabilities_from_one_step,
    rmse_probabilities,
    taylor_objective,
)
from catlowrank.tables import CategoricalTable, category_margins, encode_indicator

TABLE_X = np.array([[1, 1], [2, 3], [1, 2], [2, 3], [2, 2], [2, 2]])


def make_model(beta, gamma, counts, offsets=None):
    gamma = np.asarray(gamma, dtype=np.float64)
    if offsets is None:
        offsets = np.concatenate([[0], np.cumsum(counts)])[:-1]
    return MultilogitModel(
        beta=np.asarray(beta, dtype=np.float64),
        factors=truncated_svd(gamma, min(gamma.shape)),
        block_offsets=np.asarray(offsets),
        category_counts=tuple(counts),
    )


def random_table(rng, n=30, m=4, levels=(2, 3, 4)):
    counts = tuple(int(rng.choice(levels)) for _ in range(m))
    values = np.column_stack([rng.integers(1, c + 1, size=n) for c in counts])
    for j, c in enumerate(counts):
        values[: c, j] = np.arange(1, c + 1)
    return CategoricalTable(values=values, category_counts=counts)


def random_model(rng, a, scale=0.3):
    gamma = scale * rng.standard_normal(a.entries.shape)
    beta = scale * rng.standard_normal(a.total_categories)
    return make_model(beta, gamma, a.category_counts, a.block_offsets)


def softmax_scalar_loop(theta, counts):
    """Oracle: per-cell softmax computed one block at a time."""
    out = np.zeros_like(theta)
    start = 0
    for c in counts:
        for i in range(theta.shape[0]):
            block = theta[i, start:start + c]
            e = np.exp(block - block.max())
            out[i, start:start + c] = e / e.sum()
        start += c
    return out


def loglik_scalar_loop(theta, a_entries, counts):
    out = 0.0
    start = 0
    for c in counts:
        for i in range(theta.shape[0]):
            block = theta[i, start:start + c]
            lse = np.log(np.exp(block - block.max()).sum()) + block.max()
            out += float(block @ a_entries[i, start:start + c]) - lse
        start += c
    return out


class TestPredictProbabilities:
    def test_independence_model_returns_margins(self):
        rng = np.random.default_rng(0)
        t = random_table(rng)
        a = encode_indicator(t)
        margins = category_margins(a)
        model = make_model(
            centered_log_margins(margins), np.zeros_like(a.entries),
            a.category_counts, a.block_offsets,
        )
        probs = predict_probabilities(model)
        np.testing.assert_allclose(probs.probs, np.tile(margins.p, (t.n, 1)), atol=1e-12)

    def test_two_category_arithmetic(self):
        model = make_model([np.log(3) / 2, -np.log(3) / 2], np.zeros((1, 2)), (2,))
        np.testing.assert_allclose(
            predict_probabilities(model).probs, [[0.75, 0.25]], atol=1e-12
        )

    def test_matches_scalar_loop_and_sums_to_one(self):
        rng = np.random.default_rng(1)
        t = random_table(rng)
        a = encode_indicator(t)
        model = random_model(rng, a)
        probs = predict_probabilities(model).probs
        theta = model.natural_parameters()
        np.testing.assert_allclose(
            probs, softmax_scalar_loop(theta, a.category_counts), atol=1e-12
        )
        bounds = a.boundaries
        for j in range(t.m):
            np.testing.assert_allclose(
                probs[:, bounds[j]:bounds[j + 1]].sum(axis=1), 1.0, atol=1e-12
            )

    def test_blockwise_shift_invariance(self):
        rng = np.random.default_rng(2)
        counts = (3, 2, 4)
        theta = rng.standard_normal((7, 9))
        shifts = rng.standard_normal((7, 3))
        shifted = theta + np.repeat(shifts, counts, axis=1)
        np.testing.assert_allclose(
            block_softmax(theta, counts), block_softmax(shifted, counts), atol=1e-12
        )

    def test_non_finite_parameters_rejected(self):
        model = make_model([np.nan, 0.0], np.zeros((1, 2)), (2,))
        with pytest.raises(ValueError, match="finite"):
            predict_probabilities(model)


class TestLatentCoordinates:
    def test_rank_zero_everything_at_origin(self):
        rng = np.random.default_rng(3)
        t = random_table(rng)
        a = encode_indicator(t)
        margins = category_margins(a)
        beta = centered_log_margins(margins)
        model = MultilogitModel(
            beta=beta,
            factors=RankKFactors(
                u=np.zeros((t.n, 0)), d=np.zeros(0),
                v=np.zeros((a.total_categories, 0)),
            ),
            block_offsets=a.block_offsets,
            category_counts=a.category_counts,
        )
        upoints, vpoints = latent_coordinates(model)
        assert upoints.shape == (t.n, 0) and vpoints.shape == (a.total_categories, 0)
        np.testing.assert_allclose(
            predict_probabilities(model).probs, np.tile(margins.p, (t.n, 1)), atol=1e-12
        )

    def test_nearest_category_dominates(self):
        # one individual near the third of four categories of one variable
        u = np.array([[1.0, 1.0], [-1.5, 0.5]])
        v = np.array([[-1.0, -1.0], [2.0, -1.0], [1.1, 1.2], [-1.0, 2.0]])
        gamma = u @ v.T
        model = make_model(np.zeros(4), gamma, (4,))
        probs = predict_probabilities(model).probs
        assert np.argmax(probs[0]) == 2

    def test_distance_form_matches_inner_product_form(self):
        rng = np.random.default_rng(4)
        t = random_table(rng)
        a = encode_indicator(t)
        model = random_model(rng, a)
        upoints, vpoints = latent_coordinates(model)
        beta_tilde = model.beta + 0.5 * np.sum(vpoints**2, axis=1)
        sq = ((vpoints[None, :, :] - upoints[:, None, :]) ** 2).sum(axis=2)
        probs_dist = block_softmax(beta_tilde[None, :] - 0.5 * sq, a.category_counts)
        np.testing.assert_allclose(
            probs_dist, predict_probabilities(model).probs, atol=1e-10
        )


class TestLogLikelihood:
    def test_entropy_identity_at_independence(self):
        rng = np.random.default_rng(5)
        t = random_table(rng, n=40)
        a = encode_indicator(t)
        margins = category_margins(a)
        model = make_model(
            centered_log_margins(margins), np.zeros_like(a.entries),
            a.category_counts, a.block_offsets,
        )
        expected = t.n * float(np.sum(margins.p * np.log(margins.p)))
        assert log_likelihood(model, a) == pytest.approx(expected, abs=1e-8)

    def test_perfect_model_limit(self):
        t = CategoricalTable(values=TABLE_X, category_counts=(2, 3))
        a = encode_indicator(t)
        for big in (8.0, 16.0):
            gamma = big * (a.entries - 0.5)
            model = make_model(np.zeros(5), gamma, (2, 3), a.block_offsets)
            ll = log_likelihood(model, a)
            assert ll < 0
            assert ll > -t.n * t.m * np.exp(-big / 2)

    def test_scalar_loop_oracle(self):
        rng = np.random.default_rng(6)
        t = random_table(rng)
        a = encode_indicator(t)
        model = random_model(rng, a)
        expected = loglik_scalar_loop(
            model.natural_parameters(), a.entries, a.category_counts
        )
        assert log_likelihood(model, a) == pytest.approx(expected, abs=1e-10)

    def test_layout_mismatch_rejected(self):
        rng = np.random.default_rng(7)
        t = random_table(rng, m=3, levels=(2,))
        a = encode_indicator(t)
        model = make_model(np.zeros(5), np.zeros((t.n, 5)), (2, 3))
        with pytest.raises(ValueError, match="layout"):
            log_likelihood(model, a)


class TestGradient:
    def test_equals_centered_indicator_at_independence(self):
        rng = np.random.default_rng(8)
        t = random_table(rng)
        a = encode_indicator(t)
        margins = category_margins(a)
        model = make_model(
            centered_log_margins(margins), np.zeros_like(a.entries),
            a.category_counts, a.block_offsets,
        )
        np.testing.assert_allclose(
            gradient_interaction(model, a), a.entries - margins.p[None, :], atol=1e-12
        )

    def test_vanishes_for_saturated_model(self):
        t = CategoricalTable(values=TABLE_X, category_counts=(2, 3))
        a = encode_indicator(t)
        gamma = 25.0 * (a.entries - 0.5)
        model = make_model(np.zeros(5), gamma, (2, 3), a.block_offsets)
        assert np.abs(gradient_interaction(model, a)).max() < 1e-4

    def test_finite_differences(self):
        rng = np.random.default_rng(9)
        t = random_table(rng, n=8, m=3, levels=(2, 3))
        a = encode_indicator(t)
        h = 1e-5
        for _ in range(5):
            model = random_model(rng, a)
            gamma = model.interaction()
            grad = gradient_interaction(model, a)
            for _ in range(6):
                i = rng.integers(0, t.n)
                c = rng.integers(0, a.total_categories)
                up, down = gamma.copy(), gamma.copy()
                up[i, c] += h
                down[i, c] -= h
                fd = (
                    loglik_scalar_loop(model.beta[None, :] + up, a.entries, a.category_counts)
                    - loglik_scalar_loop(model.beta[None, :] + down, a.entries, a.category_counts)
                ) / (2 * h)
                assert abs(fd - grad[i, c]) < 1e-6


class TestTaylorObjective:
    def test_zero_interaction_gives_zero(self):
        rng = np.random.default_rng(10)
        t = random_table(rng)
        a = encode_indicator(t)
        beta = rng.standard_normal(a.total_categories)
        assert taylor_objective(a, beta, np.zeros_like(a.entries)) == 0.0

    def test_third_order_error_ratio(self):
        # along constraint-respecting interaction directions at beta0 the
        # expansion is exact to second order, so halving the perturbation
        # scales the error by about eight; directions get a positive skew
        # so their third-order term cannot be accidentally degenerate
        rng = np.random.default_rng(11)
        t = random_table(rng, n=25, m=4)
        a = encode_indicator(t)
        margins = category_margins(a)
        beta0 = centered_log_margins(margins)
        base = log_likelihood(
            make_model(beta0, np.zeros_like(a.entries), a.category_counts, a.block_offsets),
            a,
        )
        bounds = margins.boundaries
        ratios = []
        dir_rng = np.random.default_rng(42)
        for _ in range(20):
            z = dir_rng.standard_normal(a.entries.shape)
            direction = z + 0.5 * (z**2 - 1.0)
            for j in range(t.m):
                sl = slice(bounds[j], bounds[j + 1])
                pj = margins.p[sl]
                direction[:, sl] -= np.outer(direction[:, sl] @ pj, pj / (pj @ pj))
            direction /= np.linalg.norm(direction)

            def err(tscale):
                gamma = tscale * direction
                model = make_model(beta0, gamma, a.category_counts, a.block_offsets)
                return abs(
                    log_likelihood(model, a) - base - taylor_objective(a, beta0, gamma)
                )

            ratios.append(err(0.2) / err(0.1))
        ratios = np.array(ratios)
        assert ((ratios > 6) & (ratios < 10)).all()
        assert np.median(ratios) == pytest.approx(8.0, abs=1.0)


class TestFitMajorization:
    def test_rank_zero_closed_form(self):
        rng = np.random.default_rng(12)
        t = random_table(rng)
        a = encode_indicator(t)
        model, trace = fit_majorization(a, 0)
        assert trace.converged and trace.iterations == 0
        margins = category_margins(a)
        np.testing.assert_allclose(model.beta, centered_log_margins(margins), atol=1e-12)
        np.testing.assert_allclose(
            predict_probabilities(model).probs, np.tile(margins.p, (t.n, 1)), atol=1e-12
        )

    def test_independence_frequency_data(self):
        rows = [[1, 1]] * 2 + [[1, 2]] * 2 + [[2, 1]] * 4 + [[2, 2]] * 4
        t = CategoricalTable(values=np.array(rows), category_counts=(2, 2))
        a = encode_indicator(t)
        with pytest.warns(UserWarning, match="wandering"):
            model, trace = fit_majorization(a, 1, lam=0.0, max_iter=150)
        assert not trace.converged
        margins = category_margins(a)
        beta0 = centered_log_margins(margins)
        assert np.abs(model.beta - beta0).max() < 1e-3
        # one-hot rows make the unpenalized MLE drift, but within the
        # iteration cap the interaction stays at the order of the one-step
        # noise fit rather than saturating
        from catlowrank.mca import one_step_interaction

        noise_scale = np.linalg.svd(
            one_step_interaction(a, margins, 1), compute_uv=False
        )[0]
        assert model.factors.d[0] < 4 * noise_scale

    def test_objective_nondecreasing(self):
        rng = np.random.default_rng(13)
        for trial in range(5):
            t = random_table(rng, n=25, m=4)
            a = encode_indicator(t)
            lam = [0.0, 0.5, 2.0][trial % 3]
            model, trace = fit_majorization(a, 2, lam=lam, max_iter=120)
            steps = np.diff(trace.objective)
            assert steps.min() >= -1e-10 * max(1.0, abs(trace.objective[0]))

    def test_identifiability_after_fit(self):
        rng = np.random.default_rng(14)
        t = random_table(rng, n=30, m=4)
        a = encode_indicator(t)
        margins = category_margins(a)
        model, _ = fit_majorization(a, 2, lam=1.0, max_iter=200)
        gamma = model.interaction()
        bounds = margins.boundaries
        for j in range(t.m):
            np.testing.assert_allclose(
                gamma[:, bounds[j]:bounds[j + 1]] @ margins.block(j), 0.0, atol=1e-8
            )
        for j in range(t.m):
            sl = slice(bounds[j], bounds[j + 1])
            assert abs(model.beta[sl] @ margins.p[sl]) < 1e-10

    def test_majorizer_is_global_minorant(self):
        rng = np.random.default_rng(15)
        t = random_table(rng, n=12, m=3)
        a = encode_indicator(t)
        counts = a.category_counts

        def loglik(theta):
            return float(np.sum(theta * a.entries) - np.sum(block_logsumexp(theta, counts)))

        for _ in range(5):
            theta0 = rng.standard_normal(a.entries.shape)
            probs0 = block_softmax(theta0, counts)
            ll0 = loglik(theta0)
            grad0 = a.entries - probs0
            for _ in range(100):
                theta = theta0 + rng.standard_normal(theta0.shape) * rng.uniform(0.1, 3.0)
                delta = theta - theta0
                surrogate = ll0 + float(np.sum(grad0 * delta)) - 0.25 * float(np.sum(delta**2))
                assert loglik(theta) >= surrogate - 1e-9

    def test_one_step_from_independence_matches_one_step_estimate(self):
        # balanced table: uniform margins make the MM projection and the
        # one-step weighting coincide, so the first iterate spans the same
        # column space
        rng = np.random.default_rng(16)
        base = np.array(
            [[1, 1], [1, 2], [2, 1], [2, 2], [1, 1], [2, 2], [1, 2], [2, 1]] * 3
        )
        t = CategoricalTable(values=base, category_counts=(2, 2))
        a = encode_indicator(t)
        k = 2
        est = mca_one_step(t, k)
        model, trace = fit_majorization(a, k, lam=0.0, max_iter=1, init="cold")
        import scipy.linalg

        angles = scipy.linalg.subspace_angles(model.factors.u, est.factors.u)
        assert angles.max() < 1e-6

    def test_warm_and_cold_starts_agree_on_easy_data(self):
        # with enough shrinkage the penalized landscape has a single
        # attractor; at weaker penalties the rank constraint admits
        # distinct stationary points and init genuinely matters
        from catlowrank.simulate import SimConfig, generate_dataset

        ds = generate_dataset(SimConfig(n=60, m=10, k=2, ratio=1, strength=0.1, seed=3))
        a = encode_indicator(ds.table)
        _, tr_warm = fit_majorization(a, 2, lam=4.0, max_iter=3000, init="mca")
        _, tr_cold = fit_majorization(a, 2, lam=4.0, max_iter=3000, init="cold")
        assert tr_warm.converged and tr_cold.converged
        assert abs(tr_warm.objective[-1] - tr_cold.objective[-1]) < 1e-4 * abs(
            tr_cold.objective[-1]
        )

    def test_bad_arguments(self):
        rng = np.random.default_rng(17)
        t = random_table(rng)
        a = encode_indicator(t)
        with pytest.raises(ValueError, match="nonnegative"):
            fit_majorization(a, 1, lam=-1.0)
        with pytest.raises(ValueError, match="init"):
            fit_majorization(a, 1, init="hot")
        with pytest.raises(ValueError, match="out of range"):
            fit_majorization(a, 100)


class TestRmse:
    def test_identical_inputs(self):
        rng = np.random.default_rng(18)
        t = random_table(rng)
        a = encode_indicator(t)
        model = random_model(rng, a)
        probs = predict_probabilities(model)
        assert rmse_probabilities(probs, probs) == 0.0

    def test_uniform_versus_one_hot_scalar_oracle(self):
        from catlowrank.multilogit import ProbabilityBlocks

        truth = ProbabilityBlocks(
            probs=np.full((2, 3), 1 / 3), block_offsets=np.array([0]),
            category_counts=(3,),
        )
        est = ProbabilityBlocks(
            probs=np.array([[1.0, 0, 0], [1.0, 0, 0]]), block_offsets=np.array([0]),
            category_counts=(3,),
        )
        acc = 0.0
        for i in range(2):
            for c in range(3):
                acc += (truth.probs[i, c] - est.probs[i, c]) ** 2
        expected = np.sqrt(acc / 6)
        assert rmse_probabilities(truth, est) == pytest.approx(expected, abs=1e-15)
        assert expected == pytest.approx(np.sqrt(2 / 9), abs=1e-12)

    def test_shape_mismatch(self):
        from catlowrank.multilogit import ProbabilityBlocks

        a = ProbabilityBlocks(np.full((2, 2), 0.5), np.array([0]), (2,))
        b = ProbabilityBlocks(np.full((3, 2), 0.5), np.array([0]), (2,))
        with pytest.raises(ValueError, match="shapes"):
            rmse_probabilities(a, b)


class TestOneStepProbabilities:
    def test_zero_interaction_returns_margins(self):
        rows = [[1, 1]] * 1 + [[1, 2]] * 1 + [[2, 1]] * 2 + [[2, 2]] * 2
        t = CategoricalTable(values=np.array(rows), category_counts=(2, 2))
        est = mca_one_step(t, 1)
        zeroed = type(est)(
            beta0=est.beta0,
            gamma=np.zeros_like(est.gamma),
            factors=RankKFactors(
                u=np.zeros((t.n, 0)), d=np.zeros(0), v=np.zeros((4, 0))
            ),
            margins=est.margins,
        )
        probs = probabilities_from_one_step(zeroed)
        np.testing.assert_allclose(
            probs.probs, np.tile(est.margins.p, (t.n, 1)), atol=1e-12
        )

    def test_paper_table_simplex(self):
        t = CategoricalTable(values=TABLE_X, category_counts=(2, 3))
        probs = probabilities_from_one_step(mca_one_step(t, 1))
        bounds = probs.boundaries
        for j in range(2):
            np.testing.assert_allclose(
                probs.probs[:, bounds[j]:bounds[j + 1]].sum(axis=1), 1.0, atol=1e-12
            )
        assert probs.probs.min() > 0 and probs.probs.max() < 1


class TestSerialization:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(19)
        t = random_table(rng)
        a = encode_indicator(t)
        model, trace = fit_majorization(a, 1, lam=0.5, max_iter=50)
        payload = model_to_dict(model, trace)
        text = json.dumps(payload)
        restored = model_from_dict(json.loads(text))
        np.testing.assert_array_equal(restored.beta, model.beta)
        np.testing.assert_array_equal(restored.factors.u, model.factors.u)
        assert restored.category_counts == model.category_counts
        np.testing.assert_allclose(
            predict_probabilities(restored).probs,
            predict_probabilities(model).probs,
            atol=0,
        )


class TestChooseLambda:
    def test_smoke_and_determinism(self):
        from catlowrank.simulate import SimConfig, generate_dataset

        ds = generate_dataset(SimConfig(n=30, m=8, k=2, ratio=1, strength=0.5, seed=5))
        a = encode_indicator(ds.table)
        best1, scores1 = choose_lambda(a, 2, lambdas=(0.0, 1.0, 4.0), n_folds=3,
                                       seed=0, max_iter=150)
        best2, scores2 = choose_lambda(a, 2, lambdas=(0.0, 1.0, 4.0), n_folds=3,
                                       seed=0, max_iter=150)
        assert best1 == best2
        assert scores1 == scores2
        assert set(scores1) == {0.0, 1.0, 4.0}
        assert all(np.isfinite(v) for v in scores1.values())
