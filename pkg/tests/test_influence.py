import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zshot.autodiff import SolverDiagnostics, grad, hvp_exact
from zshot.convex import LogisticLoss, Point, fit_logistic
from zshot.influence import (
    DenseHessian,
    InfluenceEngine,
    InfluenceScore,
    detections,
    head_features,
    head_problem,
    influence_domain,
    influence_example,
    order_scores,
    random_expected,
    rank_flip_suspects,
    read_influence_report,
    write_influence_report,
)
from zshot.model import SequenceLoss, model_layout


def _logistic(seed=0, n=20, dim=3, l2=0.05):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, dim))
    y = (X @ np.ones(dim) + rng.normal(size=n) > 0).astype(float)
    pts = [Point(f"p{i:02d}", X[i], y[i]) for i in range(n)]
    loss = LogisticLoss(l2=l2)
    return loss, fit_logistic(loss, pts), pts


def _explicit(loss, params, pts, z, t, damping=0.01):
    H = loss.hessian(params.values, pts) + damping * np.eye(len(params))
    gz = loss.value_and_grad(params.values, [z])[1]
    gt = loss.value_and_grad(params.values, [t])[1]
    return -gt @ np.linalg.solve(H, gz)


def test_example_influence_matches_explicit_inverse():
    loss, params, pts = _logistic()
    engine = InfluenceEngine(loss, params, pts, tol=1e-12)
    for z in pts[:5]:
        got = influence_example(engine, z, pts[7]).value
        assert got == pytest.approx(_explicit(loss, params, pts, z, pts[7]), rel=1e-8)


def test_dense_and_operator_paths_agree():
    loss, params, pts = _logistic(seed=1)
    a = InfluenceEngine(loss, params, pts, tol=1e-12)
    b = InfluenceEngine(loss, params, pts, tol=1e-12, dense=True)
    np.testing.assert_allclose(b.operator.matrix, loss.hessian(params.values, pts), rtol=1e-10, atol=1e-12)
    for z in pts[:3]:
        assert a.influence([z], [pts[0]]).value == pytest.approx(b.influence([z], [pts[0]]).value, rel=1e-9)


def test_zero_gradient_subject_has_zero_influence():
    loss, params, pts = _logistic(l2=0.0)
    engine = InfluenceEngine(loss, params, pts)
    zero = Point("zero", np.zeros(3), 1.0)
    assert engine.influence([zero], [pts[0]]).value == 0.0


class Group(list):
    domain = None


def test_influence_is_additive_over_subjects():
    loss, params, pts = _logistic(seed=2)
    engine = InfluenceEngine(loss, params, pts, tol=1e-12)
    batch = Group(pts[:6])
    batch.domain = "grp"
    whole = influence_domain(engine, batch, pts[10])
    assert whole.subject == "grp"
    parts = sum(engine.influence([z], [pts[10]]).value for z in pts[:6])
    assert whole.value == pytest.approx(parts, rel=1e-8, abs=1e-12)
    many = engine.influence_many(pts[:6], [pts[10]])
    assert [s.subject for s in many] == [p.id for p in pts[:6]]
    assert sum(s.value for s in many) == pytest.approx(whole.value, rel=1e-8)


def test_singleton_domain_equals_example():
    loss, params, pts = _logistic(seed=3)
    engine = InfluenceEngine(loss, params, pts)
    assert influence_domain(engine, [pts[4]], pts[1]).value == influence_example(engine, pts[4], pts[1]).value


@given(seed=st.integers(0, 200))
def test_self_influence_is_non_positive(seed):
    loss, params, pts = _logistic(seed=seed, n=12)
    for s in InfluenceEngine(loss, params, pts, tol=1e-10).self_influence(pts):
        assert s.converged
        assert s.value <= 0.0


def test_test_solves_are_cached():
    loss, params, pts = _logistic()
    engine = InfluenceEngine(loss, params, pts, dense=True)
    engine.influence([pts[0]], [pts[1]])
    calls = engine.operator.calls
    engine.influence([pts[2]], [pts[1]])
    assert engine.operator.calls == calls


def test_empty_inputs_rejected():
    loss, params, pts = _logistic()
    with pytest.raises(ValueError):
        InfluenceEngine(loss, params, [])
    with pytest.raises(ValueError):
        InfluenceEngine(loss, params, pts).influence([], [pts[0]])


def _score(subject, value, converged=True):
    return InfluenceScore(subject, "t", value, SolverDiagnostics(1, 0.0, converged))


def test_order_scores_rules():
    scores = [_score("b", -1.0), _score("a", -1.0), _score("c", -5.0), _score("d", -9.0, converged=False), _score("e", math.nan)]
    assert [s.subject for s in order_scores(scores)] == ["c", "a", "b", "d", "e"]
    assert [s.subject for s in order_scores(scores, descending=True)] == ["a", "b", "c", "e", "d"]


def test_detections_and_random_baseline():
    ranking = ["x", "f1", "y", "f2"]
    assert detections(ranking, {"f1", "f2"}, 0) == 0
    assert detections(ranking, {"f1", "f2"}, 2) == 1
    assert detections(ranking, {"f1", "f2"}, 10) == 2
    assert random_expected(100, 10, 10) == pytest.approx(1.0)
    assert random_expected(100, 10, 200) == pytest.approx(10.0)
    assert random_expected(0, 0, 5) == 0.0


def test_self_influence_ranking_is_ascending():
    loss, params, pts = _logistic(seed=5)
    engine = InfluenceEngine(loss, params, pts, tol=1e-10)
    ranking = rank_flip_suspects(engine)
    values = {s.subject: s.value for s in engine.self_influence(pts)}
    assert [values[i] for i in ranking] == sorted(values.values())
    validated = rank_flip_suspects(engine, validation=pts[:3])
    assert sorted(validated) == sorted(p.id for p in pts)


def test_report_round_trip(tmp_path):
    loss, params, pts = _logistic()
    engine = InfluenceEngine(loss, params, pts)
    scores = engine.influence_many(pts[:4], [pts[5]])
    path = tmp_path / "influence.csv"
    write_influence_report(scores, path)
    assert path.read_text().splitlines()[0] == "subject_id,test_id,value,iterations,residual,converged"
    rows = read_influence_report(path)
    assert [float(r["value"]) for r in rows] == [s.value for s in scores]
    assert all(r["converged"] == "1" for r in rows)


# -- restricted output-layer problems on the parser ---------------------------------
def _full(tiny_config):
    return SequenceLoss(tiny_config, model_layout(tiny_config))


def _block_slice(tiny_config, names):
    layout = model_layout(tiny_config)
    return np.concatenate([np.arange(layout[n].offset, layout[n].stop) for n in names])


def test_head_gradient_and_hessian_match_full_model(tiny_config, tiny_params, tiny_examples):
    loss, hp, feats = head_problem(tiny_params, tiny_config, tiny_examples, "head")
    idx = _block_slice(tiny_config, ["domain_W"])
    full_g = grad(_full(tiny_config), tiny_params, tiny_examples, use_tape=True).values
    np.testing.assert_allclose(grad(loss, hp, feats).values, full_g[idx], rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(grad(loss, hp, feats, use_tape=True).values, full_g[idx], rtol=1e-10, atol=1e-14)
    rng = np.random.default_rng(0)
    v = rng.normal(size=len(hp))
    big = np.zeros(len(tiny_params))
    big[idx] = v
    full_hv = hvp_exact(_full(tiny_config), tiny_params, big, tiny_examples).values[idx]
    np.testing.assert_allclose(hvp_exact(loss, hp, v, feats).values, full_hv, rtol=1e-9, atol=1e-12)


def test_output_block_loss_matches_full_model(tiny_config, tiny_params, tiny_examples):
    loss, op, feats = head_problem(tiny_params, tiny_config, tiny_examples, "output")
    full = _full(tiny_config)
    np.testing.assert_allclose(
        np.asarray(loss(op.values, feats)), np.asarray(full(tiny_params.values, tiny_examples)), rtol=1e-12
    )
    idx = _block_slice(tiny_config, ["out_U", "domain_W"])
    full_g = grad(full, tiny_params, tiny_examples, use_tape=True).values
    np.testing.assert_allclose(grad(loss, op, feats).values, full_g[idx], rtol=1e-10, atol=1e-14)


def test_per_example_head_gradients(tiny_config, tiny_params, tiny_examples):
    loss, hp, feats = head_problem(tiny_params, tiny_config, tiny_examples, "head")
    G = loss.per_example_grads(hp.values, feats)
    for row, f in zip(G, feats):
        np.testing.assert_allclose(row, grad(loss, hp, [f], use_tape=True).values, rtol=1e-10, atol=1e-14)


def test_unknown_block(tiny_config, tiny_params, tiny_examples):
    with pytest.raises(ValueError):
        head_problem(tiny_params, tiny_config, tiny_examples, "encoder")


def test_full_model_influence_exact_vs_fd(tiny_config, tiny_params, tiny_examples):
    full = _full(tiny_config)
    a = InfluenceEngine(full, tiny_params, tiny_examples, damping=1.0, tol=1e-10, max_iter=2000)
    b = InfluenceEngine(full, tiny_params, tiny_examples, damping=1.0, tol=1e-10, max_iter=2000, method="fd")
    va = a.influence([tiny_examples[0]], [tiny_examples[2]])
    vb = b.influence([tiny_examples[0]], [tiny_examples[2]])
    if va.converged and vb.converged:
        assert va.value == pytest.approx(vb.value, rel=1e-3)
    feats = head_features(tiny_params, tiny_config, tiny_examples[0])
    assert feats.steps.shape == (len(tiny_examples[0].target), 4 * tiny_config.hidden_dim)


def test_lstm_head_influence_ranks_leave_one_out():
    """Influence against retraining on the domain head of a trained LSTM parser.

    The retraining objective is the mean head loss plus
    ``damping/2 * |theta - theta_sgd|^2``, whose Hessian is the damped one the
    influence solve uses; without the anchor the head loss is flat along
    saturating directions and leave-one-out minimisers are ill-defined.
    """
    from zshot.autodiff import HessianOperator
    from zshot.data_io import build_vocab, sample_subsets
    from zshot.model import ModelConfig, TrainConfig, init_params, train
    from zshot.synth import separable_fixture

    lam = 0.01
    fx = separable_fixture(50, 20)
    cfg = ModelConfig(vocab=build_vocab(fx.train), domains=("alpha", "beta"), hidden_dim=4, embed_dim=4, max_decode_len=20)
    data = sample_subsets(fx.train, [15], 0)[15]
    assert len(data) == 30
    params = train(init_params(cfg, 0), data, cfg, TrainConfig(epochs=5), seed=0).params
    loss, hp, feats = head_problem(params, cfg, data, "head")
    anchor = hp.values.copy()

    def fit(theta, items):
        for _ in range(50):
            _, g = loss.value_and_grad(theta, items)
            g = g + lam * (theta - anchor)
            if np.linalg.norm(g) < 1e-12:
                break
            H = DenseHessian(HessianOperator(loss, hp.with_values(theta), items)).matrix
            theta = theta - np.linalg.solve(H + lam * np.eye(len(theta)), g)
        return theta

    theta = fit(anchor, feats)
    engine = InfluenceEngine(loss, hp.with_values(theta), feats, damping=lam, tol=1e-12, dense=True)
    refits = [fit(theta, [f for f in feats if f.id != z.id]) for z in feats]
    n = len(feats)

    def ranks(a):
        return np.argsort(np.argsort(a))

    for ex in fx.test[:3]:
        test = head_features(params, cfg, ex)
        base = float(loss(theta, [test])[0])
        predicted = [-engine.influence([z], [test]).value / n for z in feats]
        actual = [float(loss(t, [test])[0]) - base for t in refits]
        assert np.corrcoef(ranks(predicted), ranks(actual))[0, 1] >= 0.5
