"""PCA / LDA / (k,l)-NN 与嵌套 LOOCV 测试"""

import json

import numpy as np
import pytest
from scipy import linalg

from apmkit.core.errors import ModelError, PreconditionError
from apmkit.core.model import (
    ModelOptions,
    class_posteriors,
    classify,
    cumulative_variance_ratio,
    fit_classifier,
    fit_knn,
    fit_lda,
    fit_pca,
    knn_kl_classify,
    knn_votes,
    lda_log_odds,
    load_assessment,
    load_model,
    loocv_fold,
    nested_loocv,
    posterior,
    predict_scores,
    project,
    reconstruct,
    save_assessment,
    save_model,
    train_full,
    variance_threshold_dimension,
)
from apmkit.core.models import ConstantModel, FeatureMatrix, LdaModel, TrainedApm, PcaModel


def _clusters(rng, n_per_class, dim, separation, scale=1.0):
    """两个各向同性高斯簇，类 1 沿第一个坐标轴平移"""
    X0 = rng.normal(scale=scale, size=(n_per_class, dim))
    X1 = rng.normal(scale=scale, size=(n_per_class, dim))
    X1[:, 0] += separation
    X = np.vstack([X0, X1])
    y = np.array([0] * n_per_class + [1] * n_per_class)
    return X, y


# ---------------------------------------------------------------- PCA


def test_pca_matches_covariance_eigendecomposition(rng):
    for _ in range(20):
        n = int(rng.integers(10, 51))
        dim = int(rng.integers(2, 31))
        X = rng.normal(size=(n, dim)) @ rng.normal(size=(dim, dim))
        d = int(rng.integers(1, min(n - 1, dim) + 1))
        pca = fit_pca(X, d)

        evals, evecs = linalg.eigh(np.cov(X, rowvar=False))
        order = np.argsort(evals)[::-1][:d]
        np.testing.assert_allclose(
            pca.explained_variance, evals[order], rtol=1e-7, atol=1e-9 * evals.max()
        )
        angles = linalg.subspace_angles(pca.components.T, evecs[:, order])
        # 特征值近似重合时子空间不唯一，只检查间隔明确的情况
        if d == dim or evals[np.argsort(evals)[::-1][d]] < 0.999 * evals[order][-1]:
            assert np.max(angles) < 1e-6


def test_pca_sign_convention(rng):
    pca = fit_pca(rng.normal(size=(15, 6)), 4)
    for component in pca.components:
        assert component[np.argmax(np.abs(component))] > 0


def test_rank_one_reconstruction():
    t = np.linspace(-2.0, 3.0, 9)
    X = np.column_stack([1.0 + 2.0 * t, -0.5 + 0.5 * t])
    pca = fit_pca(X, 1)
    assert pca.explained_variance[0] > 0
    np.testing.assert_allclose(reconstruct(pca, project(pca, X)), X, atol=1e-8)


def test_full_rank_pca_captures_total_variance(rng):
    X = rng.normal(size=(8, 5))
    pca = fit_pca(X, 5)
    total = np.var(X, axis=0, ddof=1).sum()
    assert pca.explained_variance.sum() == pytest.approx(total, rel=1e-8)
    assert cumulative_variance_ratio(pca.explained_variance, pca.total_variance)[-1] == pytest.approx(1.0)


def test_pca_variances_are_nonincreasing(rng):
    pca = fit_pca(rng.normal(size=(30, 10)), 9)
    assert np.all(np.diff(pca.explained_variance) <= 1e-12)
    assert np.all(np.diff(cumulative_variance_ratio(pca.explained_variance, pca.total_variance)) >= 0)


def test_projection_of_mean_is_zero(rng):
    X = rng.normal(size=(12, 4))
    pca = fit_pca(X, 3)
    np.testing.assert_allclose(project(pca, X.mean(axis=0)), 0.0, atol=1e-12)


def test_axis_aligned_pca_is_identity(rng):
    pca = PcaModel(
        center=np.zeros(3),
        components=np.eye(3)[:2],
        explained_variance=np.ones(2),
    )
    X = rng.normal(size=(5, 3))
    np.testing.assert_array_equal(project(pca, X), X[:, :2])


def test_projection_contracts(rng):
    X = rng.normal(size=(20, 7))
    pca = fit_pca(X, 3)
    Z = project(pca, X)
    centered = X - pca.center
    assert np.all(np.linalg.norm(Z, axis=1) <= np.linalg.norm(centered, axis=1) + 1e-12)


def test_pca_argument_checks(rng):
    X = rng.normal(size=(5, 3))
    with pytest.raises(ModelError):
        fit_pca(X, 4)
    with pytest.raises(ModelError):
        fit_pca(X[:1], 1)
    with pytest.raises(ModelError):
        project(fit_pca(X, 2), rng.normal(size=(2, 4)))


def test_standardized_pca_ignores_column_scale(rng):
    X = rng.normal(size=(25, 4))
    scaled = X * np.array([1.0, 10.0, 100.0, 1000.0])
    a = project(fit_pca(X, 2, standardize=True), X)
    b = project(fit_pca(scaled, 2, standardize=True), scaled)
    np.testing.assert_allclose(np.abs(a), np.abs(b), rtol=1e-7, atol=1e-9)


def test_variance_threshold_dimension():
    explained = np.array([5.0, 3.0, 1.5, 0.5])
    assert variance_threshold_dimension(explained, 10.0, 0.5) == 1
    assert variance_threshold_dimension(explained, 10.0, 0.8) == 2
    assert variance_threshold_dimension(explained, 10.0, 0.95) == 3
    assert variance_threshold_dimension(explained, 20.0, 0.95) == 4


# ---------------------------------------------------------------- LDA


def test_lda_midpoint_has_even_odds():
    Z = np.array([[-2.0], [-1.0], [0.0], [0.0], [1.0], [2.0]])
    y = np.array([0, 0, 0, 1, 1, 1])
    model = fit_lda(Z, y)
    assert posterior(model, np.array([0.0])) == pytest.approx(0.5, abs=1e-9)


def test_lda_mahalanobis_midpoint_in_two_dimensions(rng):
    Z, y = _clusters(rng, 20, 2, separation=4.0)
    model = fit_lda(Z, y, priors="equal")
    midpoint = model.class_means.mean(axis=0)
    assert posterior(model, midpoint) == pytest.approx(0.5, abs=1e-9)


def test_lda_posteriors_sum_to_one(rng):
    Z, y = _clusters(rng, 10, 3, separation=2.0)
    model = fit_lda(Z, y)
    for x in rng.normal(size=(5, 3)):
        p0, p1 = class_posteriors(model, x)
        assert p0 + p1 == pytest.approx(1.0, abs=1e-12)
        assert 0.0 < p1 < 1.0


def test_lda_separates_distant_clusters(rng):
    Z, y = _clusters(rng, 50, 2, separation=10.0)
    model = fit_lda(Z, y)
    _, decisions = classify(model, Z)
    assert np.all(decisions == y)
    assert posterior(model, model.class_means[1]) > 0.99


def test_lda_posterior_monotone_along_discriminant(rng):
    Z, y = _clusters(rng, 15, 3, separation=3.0)
    model = fit_lda(Z, y)
    mu0, mu1 = model.class_means
    direction = linalg.solve(model.pooled_covariance, mu1 - mu0)
    steps = [posterior(model, mu0 + t * direction) for t in np.linspace(-0.2, 0.2, 9)]
    assert np.all(np.diff(steps) > 0)


def test_larger_class_one_prior_moves_boundary_toward_class_zero():
    Z = np.array([[-2.0], [-1.0], [0.0], [0.0], [0.5], [1.0], [1.5], [2.0]])
    y = np.array([0, 0, 0, 1, 1, 1, 1, 1])
    empirical = fit_lda(Z, y, priors="empirical")
    equal = fit_lda(Z, y, priors="equal")
    x = empirical.class_means.mean(axis=0)
    assert posterior(empirical, x) > posterior(equal, x)


def test_lda_shrinkage_mixes_in_scaled_identity(rng):
    Z, y = _clusters(rng, 12, 3, separation=1.0)
    plain = fit_lda(Z, y, shrinkage=0.0)
    shrunk = fit_lda(Z, y, shrinkage=0.5)
    target = np.trace(plain.pooled_covariance) / 3 * np.eye(3)
    np.testing.assert_allclose(
        shrunk.pooled_covariance, 0.5 * plain.pooled_covariance + 0.5 * target, atol=1e-12
    )


def test_lda_needs_two_classes(rng):
    with pytest.raises(ModelError):
        fit_lda(rng.normal(size=(4, 2)), [1, 1, 1, 1])


def test_lda_dimension_mismatch(rng):
    Z, y = _clusters(rng, 5, 2, separation=3.0)
    with pytest.raises(ModelError):
        posterior(fit_lda(Z, y), np.zeros(3))


def test_single_class_falls_back_to_constant(rng):
    model = fit_classifier(rng.normal(size=(4, 2)), np.zeros(4, dtype=int), "lda", ModelOptions())
    assert isinstance(model, ConstantModel)
    scores, decisions = classify(model, rng.normal(size=(3, 2)))
    assert scores.tolist() == [0.0, 0.0, 0.0]
    assert decisions.tolist() == [0, 0, 0]


# ---------------------------------------------------------------- (k,l)-NN


def _oracle_votes(features, labels, x, k):
    distance = [float(np.sum((row - x) ** 2)) for row in features]
    ranked = sorted(range(len(features)), key=lambda i: (distance[i], i))
    return int(sum(labels[i] for i in ranked[:k]))


def test_knn_matches_exhaustive_oracle(rng):
    for _ in range(50):
        n = int(rng.integers(3, 15))
        dim = int(rng.integers(1, 4))
        # 整数坐标以制造距离并列
        features = rng.integers(-2, 3, size=(n, dim)).astype(float)
        labels = rng.integers(0, 2, size=n)
        k = int(rng.integers(1, n + 1))
        l = int(rng.integers(1, k + 1))
        model = fit_knn(features, labels, k, l)
        x = rng.integers(-2, 3, size=dim).astype(float)

        votes = _oracle_votes(features, labels, x, k)
        expected = 1 if votes >= l else 0 if votes <= k - l else -1
        assert knn_votes(model, x) == votes
        assert knn_kl_classify(model, x) == expected


def test_nearest_neighbour_never_rejects(rng):
    features = rng.normal(size=(10, 2))
    labels = rng.integers(0, 2, size=10)
    model = fit_knn(features, labels, 1, 1)
    for x in rng.normal(size=(20, 2)):
        nearest = np.argmin(np.sum((features - x) ** 2, axis=1))
        assert knn_kl_classify(model, x) == labels[nearest]


def test_unanimous_rule_rejects_mixed_neighbourhood():
    features = np.array([[0.0], [1.0], [2.0], [10.0]])
    labels = np.array([1, 1, 0, 0])
    model = fit_knn(features, labels, 3, 3)
    assert knn_kl_classify(model, np.array([0.5])) == -1


@pytest.mark.parametrize("k", [1, 3, 5, 7])
def test_majority_rule_never_rejects(rng, k):
    l = (k + 2) // 2
    features = rng.normal(size=(15, 2))
    labels = rng.integers(0, 2, size=15)
    model = fit_knn(features, labels, k, l)
    assert all(knn_kl_classify(model, x) != -1 for x in rng.normal(size=(30, 2)))


def test_knn_parameters_checked(rng):
    with pytest.raises(ModelError):
        fit_knn(rng.normal(size=(3, 2)), [0, 1, 0], 4, 1)
    with pytest.raises(PreconditionError):
        ModelOptions(k=3, l=4)


def test_knn_score_is_vote_fraction():
    features = np.array([[0.0], [1.0], [2.0], [3.0], [4.0]])
    labels = np.array([1, 1, 0, 0, 0])
    scores, decisions = classify(fit_knn(features, labels, 4, 3), np.array([[0.2]]))
    assert scores[0] == pytest.approx(0.5)
    assert decisions[0] == -1


# ---------------------------------------------------------------- 嵌套 LOOCV


def _naive_nested_loocv(X, y, d_max, options):
    """直接按定义的双层循环：每折都重新拟合 PCA 与 LDA

    返回 (后验, d*, 成对排名)；成对排名在 d* 下用去掉 s 与 t 的模型比较两者的对数几率。
    """
    n = len(y)
    posteriors, d_stars, ranks = [], [], []
    for s in range(n):
        outer = [i for i in range(n) if i != s]
        errors = np.zeros(d_max)
        for t in outer:
            inner = [i for i in outer if i != t]
            for d in range(1, d_max + 1):
                pca = fit_pca(X[inner], d)
                model = fit_classifier(project(pca, X[inner]), y[inner], "lda", options)
                _, decision = classify(model, project(pca, X[t]))
                errors[d - 1] += decision[0] != y[t]
        d_star = int(np.argmin(errors) + 1)

        wins = 0.0
        for t in outer:
            inner = [i for i in outer if i != t]
            pca = fit_pca(X[inner], d_star)
            model = fit_lda(project(pca, X[inner]), y[inner], options.shrinkage, options.priors)
            own, other = lda_log_odds(model, project(pca, X[[s, t]]))
            wins += 1.0 if own > other else 0.5 if own == other else 0.0

        pca = fit_pca(X[outer], d_star)
        model = fit_classifier(project(pca, X[outer]), y[outer], "lda", options)
        score, _ = classify(model, project(pca, X[s]))
        posteriors.append(score[0])
        d_stars.append(d_star)
        ranks.append(wins / len(outer))
    return np.array(posteriors), np.array(d_stars), np.array(ranks)


def test_nested_loocv_matches_naive_double_loop(rng):
    X, y = _clusters(rng, 6, 8, separation=1.5)
    options = ModelOptions()
    result = nested_loocv(X, y, d_max=4, options=options)
    posteriors, d_stars, ranks = _naive_nested_loocv(X, y, 4, options)
    np.testing.assert_array_equal(result.d_stars, d_stars)
    np.testing.assert_allclose(result.posteriors, posteriors, rtol=1e-7, atol=1e-9)
    np.testing.assert_allclose(result.scores, ranks, rtol=0, atol=1e-12)
    assert result.outer_score == "pair_rank"


def test_posterior_outer_score(rng):
    X, y = _clusters(rng, 6, 8, separation=1.5)
    result = nested_loocv(X, y, d_max=4, options=ModelOptions(outer_score="posterior"))
    pair = nested_loocv(X, y, d_max=4)
    np.testing.assert_array_equal(result.scores, result.posteriors)
    np.testing.assert_array_equal(result.posteriors, pair.posteriors)
    np.testing.assert_array_equal(result.d_stars, pair.d_stars)
    assert result.outer_score == "posterior"


def test_pair_rank_is_a_fraction_of_folds(rng):
    X, y = _clusters(rng, 7, 6, separation=1.0)
    result = nested_loocv(X, y, d_max=3)
    halves = result.scores * 2 * (len(y) - 1)
    np.testing.assert_allclose(halves, np.round(halves), atol=1e-9)
    assert np.all((result.scores >= 0.0) & (result.scores <= 1.0))


def test_unknown_outer_score_rejected():
    with pytest.raises(PreconditionError):
        ModelOptions(outer_score="logit")


def test_separable_data_has_zero_outer_error(rng):
    X, y = _clusters(rng, 8, 12, separation=12.0)
    result = nested_loocv(X, y, d_max=3)
    assert result.outer_error == 0.0
    assert np.all((result.posteriors > 0.5) == (y == 1))
    # 每个遗址至少胜过全部 8 个背景点，背景点至多胜过其余 7 个背景点
    assert np.all((result.scores > 0.5) == (y == 1))
    assert result.scores[y == 1].min() > result.scores[y == 0].max()
    assert result.rejection_rate == 0.0
    assert result.d_max == 3


def test_smallest_instance_runs():
    X = np.array([[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]])
    result = nested_loocv(X, [0, 1, 1], d_max=1)
    assert len(result.scores) == 3
    assert result.d_stars.tolist() == [1, 1, 1]
    assert len(result.cv_errors[0]) == 1
    assert any("常数分类器" in w for w in result.warnings)


def test_d_star_is_first_minimum(rng):
    X, y = _clusters(rng, 7, 10, separation=2.0)
    result = nested_loocv(X, y, d_max=5)
    for errors, d_star in zip(result.cv_errors, result.d_stars):
        assert len(errors) == 5
        assert d_star == int(np.argmin(errors)) + 1


def test_held_out_row_does_not_influence_its_own_fold(rng):
    X, y = _clusters(rng, 7, 9, separation=1.0)
    options = ModelOptions()
    for s in (0, 5, 13):
        before = loocv_fold(X, y, s, 4, "lda", options)
        tampered = X.copy()
        tampered[s] = 1000.0
        after = loocv_fold(tampered, y, s, 4, "lda", options)
        assert after.d_star == before.d_star
        np.testing.assert_allclose(after.record, before.record, rtol=0, atol=1e-12)


def test_oversized_d_max_is_capped_with_warning(rng):
    X, y = _clusters(rng, 4, 20, separation=3.0)
    result = nested_loocv(X, y, d_max=50)
    assert result.d_max == 5
    assert any("截断" in w for w in result.warnings)


def test_default_d_max_has_no_warning(rng):
    X, y = _clusters(rng, 4, 20, separation=3.0)
    result = nested_loocv(X, y)
    assert result.d_max == 5
    assert not result.warnings


def test_nested_loocv_preconditions(rng):
    X = rng.normal(size=(5, 3))
    with pytest.raises(PreconditionError):
        nested_loocv(X[:2], [0, 1])
    with pytest.raises(PreconditionError):
        nested_loocv(X, [1, 1, 1, 1, 1])
    with pytest.raises(PreconditionError):
        nested_loocv(X, [0, 1, 0, 1, 0], classifier="svm")
    with pytest.raises(PreconditionError):
        nested_loocv(X, [0, 1, 0, 1, 0], classifier="knn", options=ModelOptions(k=5, l=3))


def test_knn_nested_loocv_reports_rejections(rng):
    X, y = _clusters(rng, 8, 6, separation=0.5)
    result = nested_loocv(X, y, d_max=3, classifier="knn", options=ModelOptions(k=4, l=4))
    assert set(np.unique(result.decisions)) <= {-1, 0, 1}
    assert result.rejection_rate == pytest.approx(np.mean(result.decisions == -1))
    assert np.all((result.scores >= 0) & (result.scores <= 1))


def test_variance_threshold_strategy(rng):
    X, y = _clusters(rng, 6, 8, separation=2.0)
    options = ModelOptions(strategy="variance_threshold", variance_threshold=0.9)
    result = nested_loocv(X, y, d_max=5, options=options)
    for record, d_star in zip(result.cv_errors, result.d_stars):
        assert np.all(np.diff(record) >= -1e-12)
        hits = [i + 1 for i, r in enumerate(record) if r >= 0.9 - 1e-12]
        assert d_star == (hits[0] if hits else 5)


def test_parallel_loocv_is_identical(rng):
    X, y = _clusters(rng, 6, 10, separation=1.5)
    serial = nested_loocv(X, y, d_max=4)
    parallel = nested_loocv(X, y, d_max=4, n_jobs=3)
    assert serial.to_dict() == parallel.to_dict()


def test_feature_matrix_input_keeps_ids(rng):
    X, y = _clusters(rng, 4, 5, separation=4.0)
    features = FeatureMatrix(
        ids=[f"s{i}" for i in range(8)],
        labels=y,
        values=X,
        columns=[f"c{i}" for i in range(5)],
    )
    result = nested_loocv(features, d_max=2)
    assert result.ids == features.ids


# ---------------------------------------------------------------- 全量训练


def test_train_full_classifies_training_rows(rng):
    X, y = _clusters(rng, 10, 6, separation=10.0)
    apm = train_full(X, y, d_max=3)
    _, decisions = predict_scores(apm, X)
    assert np.all(decisions == y)
    assert apm.d_star == int(np.argmin(apm.cv_record)) + 1


def test_train_full_with_single_candidate_dimension(rng):
    X, y = _clusters(rng, 5, 4, separation=2.0)
    assert train_full(X, y, d_max=1).d_star == 1


def test_class_mean_scores_on_its_side(rng):
    X, y = _clusters(rng, 10, 5, separation=8.0)
    apm = train_full(X, y, d_max=2)
    scores, _ = predict_scores(apm, np.vstack([X[y == 0].mean(axis=0), X[y == 1].mean(axis=0)]))
    assert scores[0] < 0.5 < scores[1]


def test_predict_on_empty_matrix(rng):
    X, y = _clusters(rng, 5, 3, separation=4.0)
    scores, decisions = predict_scores(train_full(X, y, d_max=2), np.zeros((0, 3)))
    assert scores.shape == (0,)
    assert decisions.shape == (0,)


@pytest.mark.parametrize("classifier, options", [("lda", ModelOptions()), ("knn", ModelOptions(k=3, l=2))])
def test_model_json_round_trip(tmp_path, rng, classifier, options):
    X, y = _clusters(rng, 6, 5, separation=3.0)
    apm = train_full(X, y, d_max=3, classifier=classifier, options=options)
    save_model(apm, tmp_path / "model.json")
    loaded = load_model(tmp_path / "model.json")
    assert loaded.to_dict() == apm.to_dict()
    queries = rng.normal(size=(4, 5))
    for a, b in zip(predict_scores(apm, queries), predict_scores(loaded, queries)):
        np.testing.assert_array_equal(a, b)


def test_model_version_checked(rng):
    X, y = _clusters(rng, 4, 3, separation=3.0)
    document = train_full(X, y, d_max=2).to_dict()
    document["version"] = "something-else"
    with pytest.raises(ModelError):
        TrainedApm.from_dict(document)


def test_trained_apm_rejects_inconsistent_d_star(rng):
    pca = fit_pca(rng.normal(size=(6, 3)), 2)
    lda = LdaModel(np.zeros((2, 2)), np.eye(2), np.log([0.5, 0.5]))
    with pytest.raises(ModelError):
        TrainedApm(pca=pca, classifier=lda, cv_record=[0.3, 0.1], d_star=1)


def test_fitted_models_satisfy_their_invariants(rng):
    X, y = _clusters(rng, 6, 5, separation=2.0)
    pca = fit_pca(X, 4)
    np.testing.assert_allclose(pca.components @ pca.components.T, np.eye(4), atol=1e-10)
    lda = fit_lda(project(pca, X), y, priors="empirical")
    np.testing.assert_array_equal(lda.pooled_covariance, lda.pooled_covariance.T)
    assert np.exp(lda.log_priors).sum() == pytest.approx(1.0)


@pytest.mark.parametrize(
    "components, explained",
    [
        (np.array([[2.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), np.ones(2)),
        (np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), np.ones(2)),
        (np.eye(3)[:2], np.ones(3)),
        (np.eye(4)[:2], np.ones(2)),
    ],
)
def test_pca_model_rejects_bad_components(components, explained):
    with pytest.raises(ModelError):
        PcaModel(center=np.zeros(3), components=components, explained_variance=explained)


@pytest.mark.parametrize(
    "means, covariance, log_priors",
    [
        (np.zeros((2, 2)), np.array([[1.0, 0.5], [0.0, 1.0]]), np.log([0.5, 0.5])),
        (np.zeros((2, 2)), np.eye(2), np.log([0.5, 0.6])),
        (np.zeros((3, 2)), np.eye(2), np.log([0.5, 0.5])),
        (np.zeros((2, 2)), np.eye(3), np.log([0.5, 0.5])),
    ],
)
def test_lda_model_rejects_bad_parameters(means, covariance, log_priors):
    with pytest.raises(ModelError):
        LdaModel(means, covariance, log_priors)


def test_hand_edited_model_document_rejected(rng):
    X, y = _clusters(rng, 6, 4, separation=3.0)
    document = train_full(X, y, d_max=2).to_dict()
    broken = json.loads(json.dumps(document))
    broken["pca"]["components"][0] = [2.0 * v for v in broken["pca"]["components"][0]]
    with pytest.raises(ModelError):
        TrainedApm.from_dict(broken)
    broken = json.loads(json.dumps(document))
    broken["classifier"]["log_priors"] = [float(np.log(0.5)), float(np.log(0.6))]
    with pytest.raises(ModelError):
        TrainedApm.from_dict(broken)


def test_assessment_json_round_trip(tmp_path, rng):
    X, y = _clusters(rng, 5, 4, separation=2.0)
    result = nested_loocv(X, y, d_max=2)
    save_assessment(result, tmp_path / "assess.json")
    assert load_assessment(tmp_path / "assess.json").to_dict() == result.to_dict()
