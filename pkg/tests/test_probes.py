import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentstitch import probes
from latentstitch.data import AttributeTable
from latentstitch.errors import DimensionMismatch, EmptySet, NoConvergence, SingleClassPool, ZeroBaseline


def table_with_counts(n_pos, n_neg, attribute="attr"):
    ids = [f"p{i}" for i in range(n_pos)] + [f"n{i}" for i in range(n_neg)]
    values = np.array([[1]] * n_pos + [[-1]] * n_neg, dtype=np.int8)
    return AttributeTable(names=[attribute], ids=ids, values=values), ids


# --- balanced subsets ---------------------------------------------------------


def test_balanced_subset_80_percent_rule():
    table, ids = table_with_counts(300, 1000)
    sub = probes.balanced_subset(table, "attr", ids, seed=0)
    assert sub.per_class == 240


def test_balanced_subset_small_pool():
    table, ids = table_with_counts(10, 10)
    sub = probes.balanced_subset(table, "attr", ids, seed=0)
    assert sub.per_class == 8


def test_balanced_subset_single_class():
    table, ids = table_with_counts(10, 0)
    with pytest.raises(SingleClassPool):
        probes.balanced_subset(table, "attr", ids, seed=0)


def test_balanced_subset_explicit_per_class_capped():
    table, ids = table_with_counts(120, 90)
    sub = probes.balanced_subset(table, "attr", ids, seed=0, per_class=100)
    assert sub.per_class == 90
    sub = probes.balanced_subset(table, "attr", ids, seed=0, per_class=50)
    assert sub.per_class == 50


@given(st.integers(min_value=0, max_value=1000))
@settings(max_examples=25, deadline=None)
def test_balanced_subset_deterministic_and_order_invariant(seed):
    table, ids = table_with_counts(40, 25)
    rng = np.random.default_rng(seed)
    shuffled = [ids[i] for i in rng.permutation(len(ids))]
    a = probes.balanced_subset(table, "attr", ids, seed=7)
    b = probes.balanced_subset(table, "attr", shuffled, seed=7)
    assert a.pos_ids == b.pos_ids
    assert a.neg_ids == b.neg_ids
    assert set(a.pos_ids).isdisjoint(a.neg_ids)


# --- lasso ---------------------------------------------------------------------


def test_lasso_zero_alpha_matches_ols_slope():
    x = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    w, b, _, _ = probes.lasso_cd(x, y, alpha=0.0)
    xc = x - x.mean()
    slope = float(xc.ravel() @ (y - y.mean()) / (xc.ravel() @ xc.ravel()))
    assert abs(w[0] - slope) <= 1e-6
    assert abs(b - (y.mean() - slope * x.mean())) <= 1e-6


def test_lasso_scalar_soft_threshold_closed_form():
    # standardized single feature: <x,x>/n = 1, <x, y - ybar>/n = 0.3
    x = np.array([[-1.0], [-1.0], [1.0], [1.0]])
    y = 0.3 * x.ravel() + 0.5
    w, b, _, _ = probes.lasso_cd(x, y, alpha=0.1)
    assert w[0] == pytest.approx(0.2, abs=1e-12)
    assert b == pytest.approx(0.5, abs=1e-12)


def test_lasso_null_threshold_exact_zero():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((50, 8))
    y = rng.standard_normal(50)
    yc = y - y.mean()
    xc = x - x.mean(axis=0)
    lam_max = np.abs(xc.T @ yc).max() / 50
    w, _, _, _ = probes.lasso_cd(x, y, alpha=lam_max * 1.000001)
    assert np.all(w == 0.0)


def test_lasso_zero_variance_feature_skipped():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((40, 3))
    x[:, 1] = 2.5  # constant column
    y = x[:, 0] * 0.5
    w, _, _, _ = probes.lasso_cd(x, y, alpha=0.01)
    assert w[1] == 0.0


def kkt_violation_raw(x, y, w, b, alpha):
    # independent KKT check straight from the uncentered definition
    n = len(y)
    r = y - x @ w - b
    corr = x.T @ r / n
    worst = 0.0
    for j in range(x.shape[1]):
        if w[j] != 0.0:
            worst = max(worst, abs(abs(corr[j]) - alpha))
        else:
            worst = max(worst, max(abs(corr[j]) - alpha, 0.0))
    return worst


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=25, deadline=None)
def test_lasso_kkt_conditions(seed):
    rng = np.random.default_rng(seed)
    n, d = 60, 12
    x = rng.standard_normal((n, d))
    beta = np.zeros(d)
    beta[:3] = rng.standard_normal(3)
    y = x @ beta + 0.2 * rng.standard_normal(n)
    alpha = 0.05
    tol = 1e-6
    w, b, _, _ = probes.lasso_cd(x, y, alpha=alpha, tol=tol)
    assert kkt_violation_raw(x, y, w, b, alpha) <= 10 * tol


def test_lasso_objective_non_increasing():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((80, 20))
    y = x @ rng.standard_normal(20) + rng.standard_normal(80)
    _, _, _, objectives = probes.lasso_cd(x, y, alpha=0.02, record_objective=True)
    assert len(objectives) >= 1
    assert all(b <= a + 1e-12 for a, b in zip(objectives, objectives[1:]))


def test_lasso_no_convergence_reports_gap():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((30, 10))
    y = rng.standard_normal(30)
    with pytest.raises(NoConvergence, match="duality gap"):
        probes.lasso_cd(x, y, alpha=1e-4, tol=1e-14, max_iter=2)


def test_fit_lasso_standardize_smoke():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((60, 4)) * np.array([1.0, 10.0, 0.1, 5.0])
    y = (x[:, 0] > 0).astype(float)
    probe = probes.fit_lasso(x, y, alpha=0.05, standardize=True, attribute="a", model_id="m")
    assert probes.accuracy(probe, x, y) >= 0.9


# --- prediction and scoring ------------------------------------------------------


def test_predict_constant_probes():
    x = np.random.default_rng(6).standard_normal((5, 3))
    high = probes.Probe(attribute="a", model_id="m", w=np.zeros(3), b=0.7, alpha=0.0)
    low = probes.Probe(attribute="a", model_id="m", w=np.zeros(3), b=0.2, alpha=0.0)
    assert probes.predict(high, x).tolist() == [1] * 5
    assert probes.predict(low, x).tolist() == [0] * 5


def test_predict_matches_brute_force():
    x = np.array([[1.0, -2.0], [0.5, 0.5], [-1.0, 3.0]])
    probe = probes.Probe(attribute="a", model_id="m", w=np.array([0.2, 0.4]), b=0.1, alpha=0.0)
    expected = [1 if x[i] @ probe.w + probe.b >= 0.5 else 0 for i in range(3)]
    assert probes.predict(probe, x).tolist() == expected


def test_predict_tie_classifies_positive():
    probe = probes.Probe(attribute="a", model_id="m", w=np.array([1.0]), b=0.0, alpha=0.0)
    assert probes.predict(probe, np.array([[0.5]])).tolist() == [1]


def test_accuracy_trivials():
    probe = probes.Probe(attribute="a", model_id="m", w=np.array([1.0]), b=0.0, alpha=0.0)
    x = np.array([[1.0], [-1.0]])
    assert probes.accuracy(probe, x, [1, 0]) == 1.0
    assert probes.accuracy(probe, x, [0, 1]) == 0.0
    with pytest.raises(EmptySet):
        probes.accuracy(probe, np.zeros((0, 1)), [])


def test_match_percent_trivials():
    probe = probes.Probe(attribute="a", model_id="m", w=np.array([1.0]), b=0.0, alpha=0.0)
    x = np.array([[1.0], [-1.0], [2.0]])
    assert probes.match_percent(probe, x, x) == 100.0
    assert probes.match_percent(probe, x, -x) == 0.0
    with pytest.raises(DimensionMismatch):
        probes.match_percent(probe, x, x[:2])


def test_match_percent_coin_flip_oracle():
    # independent fair coins on both sides: expectation 50, +/-7 over 5 seeds
    observed = []
    for seed in range(5):
        rng = np.random.default_rng(seed)
        probe = probes.Probe(attribute="a", model_id="m", w=np.array([1.0]), b=0.5, alpha=0.0)
        native = rng.choice([-1.0, 1.0], size=(200, 1))
        mapped = rng.choice([-1.0, 1.0], size=(200, 1))
        observed.append(probes.match_percent(probe, native, mapped))
    assert abs(np.mean(observed) - 50.0) <= 7.0


def test_accuracy_delta():
    assert probes.accuracy_delta(0.8, 0.8) == 0.0
    assert probes.accuracy_delta(0.8, 0.88) == pytest.approx(10.0)
    assert probes.accuracy_delta(0.5, 0.45) == pytest.approx(-10.0)
    with pytest.raises(ZeroBaseline):
        probes.accuracy_delta(0.0, 0.5)


# --- serialization -----------------------------------------------------------------


def test_probe_round_trip(tmp_path):
    probe = probes.Probe(
        attribute="Smiling", model_id="NF",
        w=np.array([0.0, -0.25, 1.5]), b=0.125, alpha=0.1,
    )
    path = tmp_path / "p.lprb"
    probes.save_probe(probe, path)
    back = probes.load_probe(path)
    assert (back.attribute, back.model_id, back.alpha, back.threshold) == ("Smiling", "NF", 0.1, 0.5)
    np.testing.assert_array_equal(back.w, probe.w)
    assert back.b == probe.b


def test_probe_report(tmp_path):
    rows = [
        {"model": "m", "attribute": "a", "alpha": 0.005, "train_n_per_class": 240,
         "holdout_accuracy": 0.875},
    ]
    path = tmp_path / "report.csv"
    probes.write_probe_report(rows, path)
    text = path.read_text()
    assert text.splitlines()[0] == "model,attribute,alpha,train_n_per_class,holdout_accuracy"
    assert "m,a,0.005,240,0.875" in text
