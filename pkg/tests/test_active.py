"""Acquisition scores, hull containment, selection strategies, and the loop."""

import numpy as np
import pytest

from ccr.active import (
    ActiveConfig,
    HullDomain,
    PerturbKernel,
    Reservoir,
    active_loop,
    find_boundary_pairs,
    hull_contains,
    needs_refit,
    perturb_candidates,
    score,
    score_values,
    select_boundary_pairs,
    select_from_reservoir,
    select_in_hull,
    selection_keys,
)
from ccr.benchmarks import f2
from ccr.data import Dataset
from ccr.mlp import MlpConfig, fit_classifier
from ccr.pipeline import CcrConfig


class FixedProbaClassifier:
    """Test double returning predetermined probability rows."""

    def __init__(self, proba):
        self.proba = np.atleast_2d(np.asarray(proba, dtype=float))
        self.num_classes = self.proba.shape[1]

    def predict_proba(self, X):
        X = np.atleast_2d(X)
        reps = int(np.ceil(X.shape[0] / self.proba.shape[0]))
        return np.tile(self.proba, (reps, 1))[: X.shape[0]]


def linear_boundary_classifier(boundary=0.0, sharpness=30.0):
    class _C:
        num_classes = 2

        def predict_proba(self, X):
            X = np.atleast_2d(X)
            p1 = 1.0 / (1.0 + np.exp(-sharpness * (X[:, 0] - boundary)))
            return np.column_stack([1.0 - p1, p1])

    return _C()


class TestScores:
    def test_uniform_binary(self):
        c = FixedProbaClassifier([[0.5, 0.5]])
        x = np.zeros(2)
        assert score(c, x, "uncertainty").value == pytest.approx(0.5)
        assert score(c, x, "entropy").value == pytest.approx(np.log(2.0))
        assert score(c, x, "margin").value == pytest.approx(0.0)

    def test_certain_case(self):
        c = FixedProbaClassifier([[1.0, 0.0]])
        x = np.zeros(2)
        assert score(c, x, "uncertainty").value == pytest.approx(1.0)
        assert score(c, x, "entropy").value == pytest.approx(0.0, abs=1e-12)
        assert score(c, x, "margin").value == pytest.approx(1.0)

    def test_margin_three_class(self):
        c = FixedProbaClassifier([[0.6, 0.3, 0.1]])
        assert score(c, np.zeros(1), "margin").value == pytest.approx(0.3)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="score kind"):
            score_values(FixedProbaClassifier([[1.0]]), np.zeros((1, 1)), "nope")

    def test_entropy_maximal_at_uniform(self):
        rng = np.random.default_rng(0)
        raw = rng.dirichlet(np.ones(4), size=500)
        c = FixedProbaClassifier(raw)
        ent = score_values(c, np.zeros((500, 1)), "entropy")
        assert np.all(ent <= np.log(4.0) + 1e-12)
        uniform = FixedProbaClassifier([[0.25, 0.25, 0.25, 0.25]])
        assert score_values(uniform, np.zeros((1, 1)), "entropy")[0] == pytest.approx(np.log(4.0))

    def test_needs_refit_threshold(self):
        assert needs_refit(FixedProbaClassifier([[0.6, 0.4]]), np.zeros((1, 1)))
        assert not needs_refit(FixedProbaClassifier([[0.95, 0.05]]), np.zeros((1, 1)))


class TestReservoir:
    def test_most_uncertain_selected(self):
        cand = np.array([[0.9], [0.51], [0.99]])
        c = linear_boundary_classifier(0.5, sharpness=50.0)
        res = Reservoir(cand)
        chosen = select_from_reservoir(c, res, 1, "uncertainty")
        assert chosen[0, 0] == 0.51

    def test_batch_exhausts(self):
        cand = np.random.default_rng(0).uniform(size=(5, 1))
        res = Reservoir(cand)
        chosen = select_from_reservoir(linear_boundary_classifier(), res, 5)
        assert sorted(chosen[:, 0]) == sorted(cand[:, 0])
        assert res.remaining == 0

    def test_consumed_not_reselected(self):
        cand = np.array([[0.5], [0.6], [0.7]])
        c = linear_boundary_classifier(0.5)
        res = Reservoir(cand)
        first = select_from_reservoir(c, res, 1)
        second = select_from_reservoir(c, res, 1)
        assert first[0, 0] != second[0, 0]

    def test_empty_reservoir(self):
        with pytest.raises(ValueError, match="empty"):
            select_from_reservoir(
                linear_boundary_classifier(), Reservoir(np.empty((0, 1))), 1
            )

    def test_overdraw_rejected(self):
        res = Reservoir(np.zeros((2, 1)))
        with pytest.raises(ValueError, match="exceeds"):
            select_from_reservoir(linear_boundary_classifier(), res, 3)

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(1)
        for trial in range(100):
            n = int(rng.integers(5, 60))
            proba1 = rng.uniform(size=n)
            c = FixedProbaClassifier(np.column_stack([proba1, 1 - proba1]))
            cand = rng.uniform(size=(n, 2))
            kind = ("uncertainty", "entropy", "margin")[trial % 3]
            keys = selection_keys(c, cand, kind)
            expected = cand[int(np.argmin(keys))]
            chosen = select_from_reservoir(c, Reservoir(cand), 1, kind)
            assert np.array_equal(chosen[0], expected)

    def test_margin_equals_uncertainty_selection_on_binary(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n = int(rng.integers(5, 50))
            proba1 = rng.uniform(size=n)
            c = FixedProbaClassifier(np.column_stack([proba1, 1 - proba1]))
            cand = rng.uniform(size=(n, 1))
            by_margin = select_from_reservoir(c, Reservoir(cand), 3, "margin")
            by_unc = select_from_reservoir(c, Reservoir(cand), 3, "uncertainty")
            assert np.array_equal(np.sort(by_margin, axis=0), np.sort(by_unc, axis=0))


class TestHull:
    def test_interval(self):
        domain = HullDomain(np.array([[0.0], [1.0]]))
        assert hull_contains(domain, np.array([0.5]))
        assert not hull_contains(domain, np.array([2.0]))

    def test_vertices_inside(self):
        rng = np.random.default_rng(0)
        V = rng.normal(size=(8, 3))
        domain = HullDomain(V)
        for v in V:
            assert hull_contains(domain, v)

    def test_triangle(self):
        domain = HullDomain(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
        assert hull_contains(domain, np.array([0.25, 0.25]))
        assert not hull_contains(domain, np.array([1.0, 1.0]))

    def test_dimension_check(self):
        domain = HullDomain(np.array([[0.0, 0.0]]))
        with pytest.raises(ValueError, match="dimension"):
            hull_contains(domain, np.array([1.0]))

    def test_matches_barycentric_brute_force(self):
        # on a simplex the barycentric coordinates are unique: solve directly
        rng = np.random.default_rng(3)
        for d in (1, 2, 3, 4):
            for _ in range(20):
                V = rng.normal(size=(d + 1, d))
                if abs(np.linalg.det(V[1:] - V[0])) < 1e-3:
                    continue  # too flat for a stable reference solve
                domain = HullDomain(V)
                A = np.vstack([V.T, np.ones(d + 1)])
                w = rng.dirichlet(np.ones(d + 1))
                inside_pt = w @ V
                outside_pt = V[0] + 2.0 * (V[0] - V[1:].mean(axis=0))
                for z in (inside_pt, outside_pt):
                    bary = np.linalg.solve(A, np.concatenate([z, [1.0]]))
                    brute = bool(np.all(bary >= -1e-8))
                    assert hull_contains(domain, z) == brute


class TestSelectInHull:
    def test_finds_low_certainty_point(self):
        rng = np.random.default_rng(4)
        V = rng.uniform(-1, 1, size=(30, 2))
        domain = HullDomain(V)
        c = linear_boundary_classifier(0.0, sharpness=8.0)
        z = select_in_hull(c, domain, starts=8, seed=0)
        assert hull_contains(domain, z)
        assert score_values(c, z[None, :], "uncertainty")[0] <= 0.55

    def test_flat_objective_returns_interior_point(self):
        V = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        domain = HullDomain(V)
        c = FixedProbaClassifier([[1.0, 0.0]])
        z = select_in_hull(c, domain, starts=4, seed=1)
        assert hull_contains(domain, z)


class TestBoundaryPairs:
    def test_pair_refinement_on_segment(self):
        data = np.array([[-1.0], [1.0]])
        c = linear_boundary_classifier(0.2, sharpness=12.0)
        domain = HullDomain(data)
        batch = select_boundary_pairs(c, data, k=1, domain=domain)
        assert batch.shape == (1, 1)
        z = batch[0]
        assert hull_contains(domain, z)
        assert abs(z[0] - 0.2) < 0.01  # near the proba-0.5 crossing
        ends = score_values(c, data, "uncertainty")
        assert score_values(c, z[None, :], "uncertainty")[0] <= ends.min()

    def test_unanimous_labels_empty(self):
        data = np.random.default_rng(5).uniform(2, 3, size=(10, 1))
        c = linear_boundary_classifier(0.0, sharpness=50.0)
        batch = select_boundary_pairs(c, data, k=3, domain=HullDomain(data))
        assert batch.shape[0] == 0

    def test_full_neighborhood_deduplicates(self):
        rng = np.random.default_rng(6)
        left = rng.uniform(-2, -1, size=(4, 1))
        right = rng.uniform(1, 2, size=(5, 1))
        data = np.vstack([left, right])
        c = linear_boundary_classifier(0.0, sharpness=50.0)
        pairs = find_boundary_pairs(c, data, k=data.shape[0] - 1)
        assert len(pairs.pairs) == 4 * 5

    def test_k_validation(self):
        with pytest.raises(ValueError, match="k"):
            find_boundary_pairs(linear_boundary_classifier(), np.zeros((3, 1)), 0)


class TestPerturb:
    def test_zero_width_box(self):
        centers = np.random.default_rng(0).normal(size=(3, 2))
        kernel = PerturbKernel(kind="uniform_box", width=0.0, samples_per_center=2)
        cand = perturb_candidates(kernel, centers, seed=0)
        assert np.allclose(cand, np.repeat(centers, 2, axis=0))

    def test_counts(self):
        centers = np.zeros((2, 3))
        kernel = PerturbKernel(kind="gaussian", width=0.5, samples_per_center=3)
        assert perturb_candidates(kernel, centers, seed=1).shape == (6, 3)

    def test_deterministic(self):
        centers = np.random.default_rng(1).normal(size=(4, 2))
        kernel = PerturbKernel(kind="gaussian", width=0.3, samples_per_center=2)
        a = perturb_candidates(kernel, centers, seed=9)
        b = perturb_candidates(kernel, centers, seed=9)
        assert np.array_equal(a, b)

    def test_local_covariance_draws(self):
        rng = np.random.default_rng(2)
        reference = rng.normal(size=(50, 2)) @ np.array([[2.0, 0.0], [0.9, 0.1]])
        kernel = PerturbKernel(kind="local_covariance", samples_per_center=200,
                               neighbors=20, reference=reference)
        cand = perturb_candidates(kernel, reference[:1], seed=3)
        assert cand.shape == (200, 2)
        spread = cand.std(axis=0)
        assert spread[0] > spread[1]  # follows the anisotropic local structure

    def test_degenerate_covariance_falls_back(self):
        reference = np.zeros((10, 2))
        reference[:, 0] = np.nan
        kernel = PerturbKernel(kind="local_covariance", width=0.1,
                               samples_per_center=2, reference=reference)
        with pytest.warns(UserWarning, match="degenerate"):
            cand = perturb_candidates(kernel, np.zeros((1, 2)), seed=0)
        assert cand.shape == (2, 2)

    def test_reference_required(self):
        kernel = PerturbKernel(kind="local_covariance")
        with pytest.raises(ValueError, match="reference"):
            perturb_candidates(kernel, np.zeros((1, 2)), seed=0)


def f2_pool(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 1))
    return Dataset(X, f2(X[:, 0]))


def small_ccr():
    return CcrConfig(num_clusters=2, mlp=MlpConfig(hidden_width=20, max_epochs=30, seed=0), seed=0)


class TestActiveLoop:
    def test_zero_budget_single_entry(self):
        initial = f2_pool(60, 0)
        cfg = ActiveConfig(strategy="hull", ccr=small_ccr(), seed=0)
        model, history = active_loop(lambda p: float(f2(p[0])), initial, cfg, 0, 10)
        assert len(history) == 1
        assert history[0]["n_train"] == 60
        assert model.num_classes >= 1

    def test_history_length_contract(self):
        initial = f2_pool(60, 1)
        pool = f2_pool(300, 2)
        cfg = ActiveConfig(strategy="reservoir", reservoir=pool.inputs,
                           ccr=small_ccr(), seed=1)
        lookup = {pool.inputs[i].tobytes(): pool.outputs[i] for i in range(pool.n)}
        _, history = active_loop(lambda p: float(lookup[p.tobytes()]), initial, cfg, 25, 10)
        assert len(history) == 25 // 10 + 1
        assert history[-1]["n_train"] == 60 + 20  # two full batches of 10

    def test_bookkeeping_no_duplicates(self):
        initial = f2_pool(60, 3)
        pool = f2_pool(200, 4)
        cfg = ActiveConfig(strategy="reservoir", reservoir=pool.inputs,
                           ccr=small_ccr(), seed=2)
        lookup = {pool.inputs[i].tobytes(): pool.outputs[i] for i in range(pool.n)}
        collected = []
        def oracle(p):
            collected.append(p.tobytes())
            return float(lookup[p.tobytes()])
        _, history = active_loop(oracle, initial, cfg, 30, 10)
        assert len(collected) == len(set(collected)) == 30
        assert history[-1]["n_train"] == 90

    def test_failing_oracle_skips_points(self):
        initial = f2_pool(60, 5)
        pool = f2_pool(100, 6)
        cfg = ActiveConfig(strategy="reservoir", reservoir=pool.inputs,
                           ccr=small_ccr(), seed=3)
        calls = {"n": 0}
        def flaky(p):
            calls["n"] += 1
            if calls["n"] % 3 == 0:
                raise RuntimeError("labeling failed")
            return float(f2(p[0]))
        _, history = active_loop(flaky, initial, cfg, 10, 10)
        assert history[-1]["points_added"] < 10
        assert history[-1]["n_train"] == 60 + history[-1]["points_added"]

    def test_metrics_recorded_with_test_data(self):
        initial = f2_pool(80, 7)
        test = f2_pool(100, 8)
        pool = f2_pool(200, 9)
        cfg = ActiveConfig(strategy="reservoir", reservoir=pool.inputs,
                           ccr=small_ccr(), test_data=test, seed=4)
        lookup = {pool.inputs[i].tobytes(): pool.outputs[i] for i in range(pool.n)}
        _, history = active_loop(lambda p: float(lookup[p.tobytes()]), initial, cfg, 10, 10)
        assert all(h["l2"] is not None and h["r2"] is not None for h in history)

    def test_all_strategy_outputs_inside_hull(self):
        initial = f2_pool(80, 10)
        domain = HullDomain(initial.inputs)
        lo, hi = initial.inputs.min(), initial.inputs.max()
        pool_inputs = np.random.default_rng(11).uniform(lo, hi, size=(150, 1))
        kernel = PerturbKernel(kind="gaussian", width=0.05, samples_per_center=3)
        for strategy in ("reservoir", "hull", "boundary", "perturb"):
            seen = []
            cfg = ActiveConfig(strategy=strategy, reservoir=pool_inputs,
                               kernel=kernel, ccr=small_ccr(), seed=5, k_neighbors=3)
            def oracle(p):
                seen.append(p.copy())
                return float(f2(p[0]))
            active_loop(oracle, initial, cfg, 10, 5)
            assert seen, strategy
            for p in seen:
                assert hull_contains(domain, p), strategy

    def test_invalid_config(self):
        with pytest.raises(ValueError, match="strategy"):
            ActiveConfig(strategy="nope")
        with pytest.raises(ValueError, match="reservoir"):
            active_loop(lambda p: 0.0, f2_pool(60, 12),
                        ActiveConfig(strategy="reservoir", ccr=small_ccr()), 5, 5)
