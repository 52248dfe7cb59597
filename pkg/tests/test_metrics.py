import math

import numpy as np
import pytest
import scipy.linalg

from conftest import random_motion, random_segment
from lltn.data import DyadSegment, MotionSequence
from lltn.metrics import (
    AffectModel,
    MetricsReport,
    MetricValue,
    _psd_sqrt,
    affect,
    bootstrap_se,
    diversity,
    evaluate,
    fd_motion,
    frame_affects,
    frechet_distance,
    l2_affect,
    l2_metric,
    paired_fd,
    shannon_index,
    variation,
    window_affect,
)
from lltn.vq import MotionTokenSequence


def test_l2_identity_and_offset():
    rng = np.random.default_rng(0)
    seq = random_motion(rng, 40, d_m=5)
    assert l2_metric(seq, seq) == 0.0
    shifted = MotionSequence(seq.frames + np.eye(1, 8, 2) * 0.25, seq.fps)
    assert l2_metric(shifted, seq) == pytest.approx(0.25, rel=1e-12)


def test_l2_matches_brute_force():
    rng = np.random.default_rng(1)
    a = random_motion(rng, 33, d_m=5)
    b = random_motion(rng, 33, d_m=5)
    oracle = np.mean([math.sqrt(((a.frames[t] - b.frames[t]) ** 2).sum()) for t in range(33)])
    assert l2_metric(a, b) == pytest.approx(oracle, rel=1e-12)


def test_frechet_identical_sets():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(200, 12))
    assert frechet_distance(x, x) <= 1e-8


def test_frechet_closed_form_gaussian_means():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(10_000, 2))
    b = rng.normal(size=(10_000, 2)) + np.array([3.0, 4.0])
    fd = frechet_distance(a, b)
    assert abs(fd - 25.0) / 25.0 < 0.05


def _closed_form_fd(mu1, s1, mu2, s2):
    """Oracle via scipy's general matrix sqrt of S1 @ S2."""
    cross = scipy.linalg.sqrtm(s1 @ s2)
    if np.iscomplexobj(cross):
        cross = cross.real
    return float(((mu1 - mu2) ** 2).sum() + np.trace(s1 + s2 - 2 * cross))


def test_frechet_matches_analytic_oracle():
    rng = np.random.default_rng(4)
    for trial in range(3):
        d = 4
        mu1, mu2 = rng.normal(size=d), rng.normal(size=d)
        a1 = rng.normal(size=(d, d))
        a2 = rng.normal(size=(d, d))
        s1 = a1 @ a1.T + 0.5 * np.eye(d)
        s2 = a2 @ a2.T + 0.5 * np.eye(d)
        x = rng.multivariate_normal(mu1, s1, size=10_000)
        y = rng.multivariate_normal(mu2, s2, size=10_000)
        want = _closed_form_fd(mu1, s1, mu2, s2)
        got = frechet_distance(x, y)
        assert abs(got - want) / want < 0.05


def test_psd_sqrt_reconstruction():
    rng = np.random.default_rng(5)
    for d in (3, 10, 40):
        a = rng.normal(size=(d, d))
        spd = a @ a.T + 0.1 * np.eye(d)
        root = _psd_sqrt(spd)
        err = np.linalg.norm(root @ root - spd) / np.linalg.norm(spd)
        assert err <= 1e-6


def test_fd_motion_identity_and_reduction():
    rng = np.random.default_rng(6)
    seqs = [random_motion(rng, 64, d_m=4) for _ in range(6)]
    fe, fp = fd_motion(seqs, seqs, window=32)
    assert fe <= 1e-8 and fp <= 1e-8
    # single-window sets reduce to frechet_distance on flattened windows
    a = [random_motion(rng, 32, d_m=4) for _ in range(30)]
    b = [random_motion(rng, 32, d_m=4) for _ in range(30)]
    fe, fp = fd_motion(a, b, window=32)
    flat_a = np.stack([s.expression.reshape(-1) for s in a])
    flat_b = np.stack([s.expression.reshape(-1) for s in b])
    assert fe == pytest.approx(frechet_distance(flat_a, flat_b), rel=1e-9)


def test_window_slicing_matches_brute_force():
    from lltn.metrics import _split_windows

    rng = np.random.default_rng(7)
    seq = random_motion(rng, 77, d_m=4)
    expr, pose = _split_windows(seq, 32)
    assert expr.shape == (2, 32 * 4) and pose.shape == (2, 32 * 3)
    for w in range(2):
        np.testing.assert_array_equal(expr[w], seq.expression[32 * w : 32 * (w + 1)].reshape(-1))
        np.testing.assert_array_equal(pose[w], seq.rotation[32 * w : 32 * (w + 1)].reshape(-1))


def test_variation_cases():
    const = MotionSequence(np.ones((20, 8)))
    assert variation(const) == 0.0
    frames = np.zeros((40, 8))
    frames[:, 2] = np.tile([1.0, -1.0], 20)
    assert variation(MotionSequence(frames)) == pytest.approx(1.0 / 8)


def test_diversity_cases():
    rng = np.random.default_rng(8)
    const = MotionSequence(np.ones((20, 8)))
    assert diversity(const, rng) == 0.0
    two = MotionSequence(np.stack([np.zeros(8), np.ones(8)]))
    d = diversity(two, rng)
    assert d == pytest.approx(math.sqrt(8.0), rel=1e-12)
    one = MotionSequence(np.ones((1, 8)))
    assert diversity(one, rng) == 0.0


def test_diversity_expectation_matches_all_pairs():
    rng = np.random.default_rng(9)
    seq = random_motion(rng, 9, d_m=4)
    T = 9
    dists = [
        np.linalg.norm(seq.frames[i] - seq.frames[j])
        for i in range(T)
        for j in range(T)
        if i != j
    ]
    oracle = float(np.mean(dists))
    samples = [diversity(seq, np.random.default_rng(1000 + k)) for k in range(3000)]
    assert np.mean(samples) == pytest.approx(oracle, rel=0.02)


def test_paired_fd_identity_and_oracle():
    rng = np.random.default_rng(10)
    gt = [random_motion(rng, 64, d_m=4) for _ in range(5)]
    spk = [random_motion(rng, 64, d_m=4) for _ in range(5)]
    assert paired_fd(gt, spk, gt, window=32) <= 1e-8
    pred = [random_motion(rng, 64, d_m=4) for _ in range(5)]
    got = paired_fd(pred, spk, gt, window=32)
    # oracle: frechet on pre-concatenated matrices
    def windows(ls, ss):
        es, ps = [], []
        for l, s in zip(ls, ss):
            ef = np.concatenate([l.expression, s.expression], axis=1)
            pf = np.concatenate([l.rotation, s.rotation], axis=1)
            es.append(ef[:64].reshape(2, -1))
            ps.append(pf[:64].reshape(2, -1))
        return np.concatenate(es), np.concatenate(ps)

    pe, pp = windows(pred, spk)
    ge, gp = windows(gt, spk)
    want = frechet_distance(pe, ge) + frechet_distance(pp, gp)
    assert got == pytest.approx(want, rel=1e-9)


def test_affect_clamp_and_window():
    model = AffectModel(np.zeros(5))
    assert affect(model, np.ones(5)) == 0.0
    model = AffectModel(np.full(5, 10.0))
    assert affect(model, np.ones(5)) == 1.0
    assert affect(model, -np.ones(5)) == -1.0
    rng = np.random.default_rng(11)
    seq = random_motion(rng, 70, d_m=5)
    model = AffectModel(rng.normal(size=5) * 0.1)
    series = window_affect(model, seq, 1.0)
    raw = frame_affects(model, seq)
    assert len(series) == 70 - 30 + 1
    for i in (0, 10, 40):
        assert series[i] == pytest.approx(raw[i : i + 30].mean(), abs=1e-12)


def test_l2_affect_cases():
    rng = np.random.default_rng(12)
    seq = random_motion(rng, 90, d_m=5)
    model = AffectModel(rng.normal(size=5) * 0.05)
    assert l2_affect(model, seq, seq) == 0.0
    # constant offset of 0.1 in affect: add offset via bias'd clone
    frames = seq.frames.copy()
    model_w = np.zeros(5)
    model_w[0] = 1.0
    m = AffectModel(model_w)
    frames[:, 0] = 0.2
    a = MotionSequence(frames, seq.fps)
    frames2 = frames.copy()
    frames2[:, 0] = 0.3
    b = MotionSequence(frames2, seq.fps)
    assert l2_affect(m, a, b) == pytest.approx(0.1, rel=1e-9)
    assert l2_affect(m, b, a) == l2_affect(m, a, b)


def test_shannon_index_degenerate_and_uniform():
    a = MotionTokenSequence((3,) * 50, 8)
    assert shannon_index([a]) == 0.0
    uniform = MotionTokenSequence(tuple(range(256)) * 4, 8)
    assert shannon_index([uniform]) == pytest.approx(math.log(256), rel=1e-12)


def test_bootstrap_se():
    rng = np.random.default_rng(13)
    assert bootstrap_se(np.full(50, 3.3), 2000, rng) <= 1e-12
    data = rng.normal(size=400)
    se = bootstrap_se(data, 10_000, rng)
    assert abs(se - 1 / math.sqrt(400)) / (1 / math.sqrt(400)) < 0.15
    r1 = bootstrap_se(data, 500, np.random.default_rng(7))
    r2 = bootstrap_se(data, 500, np.random.default_rng(7))
    assert r1 == r2
    # order invariance
    r3 = bootstrap_se(data[::-1].copy(), 500, np.random.default_rng(7))
    assert r1 == r3


def _toy_dataset(rng, n=6, T=64, d_m=4):
    segs = []
    for i in range(n):
        segs.append(
            DyadSegment(
                f"e/{i}",
                random_motion(rng, T, d_m),
                random_motion(rng, T, d_m),
                (),
            )
        )
    return segs


def test_evaluate_ground_truth_is_perfect():
    rng = np.random.default_rng(14)
    dataset = _toy_dataset(rng)
    model = AffectModel(rng.normal(size=4) * 0.1)
    report = evaluate(
        [seg.listener for seg in dataset], dataset, None, model,
        seed=0, window=32, resamples=200, fd_resamples=20,
    )
    assert report.l2.value == 0.0
    assert report.fd_expression.value <= 1e-8
    assert report.fd_pose.value <= 1e-8
    assert report.pfd.value <= 1e-8
    assert report.l2_affect.value == 0.0
    assert report.variation.value == pytest.approx(report.gt_variation.value)
    assert report.num_segments == 6


def test_evaluate_aggregation_matches_hand_sum():
    rng = np.random.default_rng(15)
    dataset = _toy_dataset(rng, n=3)
    preds = [random_motion(rng, 64, d_m=4) for _ in range(3)]
    model = AffectModel(rng.normal(size=4) * 0.1)
    report = evaluate(preds, dataset, None, model, seed=0, window=32,
                      resamples=100, fd_resamples=10)
    want_l2 = np.mean([l2_metric(p, seg.listener) for p, seg in zip(preds, dataset)])
    assert report.l2.value == pytest.approx(want_l2, rel=1e-12)
    want_aff = np.mean([l2_affect(model, p, s.listener) for p, s in zip(preds, dataset)]) * 100
    assert report.l2_affect.value == pytest.approx(want_aff, rel=1e-12)
    want_var = np.mean([variation(p) for p in preds])
    assert report.variation.value == pytest.approx(want_var, rel=1e-12)


def test_evaluate_order_invariance():
    rng = np.random.default_rng(16)
    dataset = _toy_dataset(rng, n=5)
    preds = [random_motion(rng, 64, d_m=4) for _ in range(5)]
    model = AffectModel(rng.normal(size=4) * 0.1)
    r1 = evaluate(preds, dataset, None, model, seed=3, resamples=300, fd_resamples=15)
    order = [3, 1, 4, 0, 2]
    r2 = evaluate([preds[i] for i in order], [dataset[i] for i in order], None, model,
                  seed=3, resamples=300, fd_resamples=15)
    for name in ("l2", "variation", "diversity", "l2_affect"):
        a, b = getattr(r1, name), getattr(r2, name)
        assert a.value == pytest.approx(b.value, rel=1e-9, abs=1e-12), name
        assert a.se == pytest.approx(b.se, rel=1e-6, abs=1e-12), name
    # FD goes through an eigen-decomposition of pooled covariances, so
    # reordering shifts it only at float-noise level
    for name in ("fd_expression", "fd_pose", "pfd"):
        a, b = getattr(r1, name), getattr(r2, name)
        assert a.value == pytest.approx(b.value, rel=1e-6), name
        assert a.se == pytest.approx(b.se, rel=1e-4, abs=1e-9), name


def test_evaluate_warns_without_speaker():
    rng = np.random.default_rng(17)
    dataset = [
        DyadSegment(f"n/{i}", random_motion(rng, 64, d_m=4), None, ()) for i in range(3)
    ]
    model = AffectModel(np.zeros(4))
    with pytest.warns(UserWarning, match="speaker"):
        report = evaluate([s.listener for s in dataset], dataset, None, model,
                          seed=0, resamples=50, fd_resamples=5)
    assert report.pfd is None


def test_report_json_round_trip():
    rng = np.random.default_rng(18)
    dataset = _toy_dataset(rng, n=3)
    model = AffectModel(np.zeros(4))
    report = evaluate([s.listener for s in dataset], dataset, None, model,
                      seed=0, resamples=50, fd_resamples=5)
    back = MetricsReport.from_json(report.to_json())
    assert back == report
    table = report.table("full")
    assert "L2 Affect" in table and "GT" in table
