import itertools

import numpy as np
import pytest

from weakkam import (PathSample, birkhoff_integral, check_factorization,
                     classify_segment, compute_constants, decompose_path,
                     factor_pseudo_orbit, generate_paths,
                     livsic_lower_bound_scan, weighted_action)
from weakkam.livsic import normalize_points


@pytest.fixture(scope="module")
def constants(atlas, cobound):
    phi, _ = cobound
    from weakkam import estimate_k_gamma
    h = atlas.hyper
    return compute_constants(atlas, phi,
                             estimate_k_gamma(h.sigma_u, h.sigma_s, h.eta))


def _flow_path(model, start, T, n=120):
    times = np.linspace(0.0, T, n)
    pts = model.flow_map(np.asarray(start, dtype=float), times)
    return PathSample(times, pts, model, max_step=2 * T / n)


def test_path_sample_validation(model):
    with pytest.raises(ValueError):
        PathSample(np.array([0.0, 0.0]), np.zeros((2, 3)), model)
    with pytest.raises(ValueError):
        PathSample(np.array([0.0, 1.0]), np.zeros((2, 3)), model,
                   max_step=0.1)


def test_normalize_points_roof_wrap(model):
    A = model.base_matrix.astype(float)
    p = np.array([0.2, 0.7, model.roof + 0.3])
    q = normalize_points(model, p)
    assert np.abs(q[:2] - np.mod(A @ p[:2], 1.0)).max() < 1e-12
    assert abs(q[2] - 0.3) < 1e-12


def test_weighted_action_on_true_orbit_is_birkhoff(model, cobound):
    phi, _ = cobound
    start = np.array([0.3, 0.1, 0.2])
    T = 2.0
    path = _flow_path(model, start, T, n=400)
    a = weighted_action(path, phi, 100.0, 0.0)
    b = float(birkhoff_integral(model, phi, start, T, 0.001))
    # the deviation term vanishes on an exact orbit, any weight is free
    assert abs(a - b) < 5e-4


def test_weighted_action_additive_under_restriction(model, cobound):
    phi, _ = cobound
    path = _flow_path(model, np.array([0.6, 0.2, 0.4]), 2.0, n=201)
    t_mid = path.times[100]
    left = path.restrict(0.0, t_mid)
    right = path.restrict(t_mid, 2.0)
    total = weighted_action(path, phi, 3.0, 0.1)
    split = (weighted_action(left, phi, 3.0, 0.1)
             + weighted_action(right, phi, 3.0, 0.1))
    assert abs(total - split) < 1e-10


def test_weighted_action_rejects_negative_weight(model, cobound):
    phi, _ = cobound
    path = _flow_path(model, np.array([0.1, 0.1, 0.1]), 1.0)
    with pytest.raises(ValueError):
        weighted_action(path, phi, -1.0, 0.0)


def test_constants_hierarchy(constants):
    c = constants
    assert c.c1 > 0 and c.a_star > 0 and c.delta_lambda > 0
    assert c.c4 >= max(c.c2, c.c3)
    assert c.lip_gamma >= 1.0 and c.n_gamma > 0


def test_classify_flow_following_is_pseudo(model, atlas, cobound, constants):
    phi, _ = cobound
    # start on a box center so the chart time starts at 0
    start = atlas.boxes[0].center + np.array([0.01, 0.01, 0.0])
    path = _flow_path(model, start, 2.0, n=200)
    seg = classify_segment(path, atlas, phi, constants)
    assert seg.kind == "pseudo"
    assert seg.boundary == "plus"
    assert seg.y_within_eps
    assert seg.bound_margin >= 0.0
    assert 0.0 < seg.exit_time < path.duration


def test_classify_anti_flow_escapes(model, atlas, cobound, constants):
    phi, _ = cobound
    start = atlas.boxes[0].center + np.array([0.01, 0.01, 0.0])
    times = np.linspace(0.0, 2.0, 200)
    pts = model.flow_map(start, -times)
    path = PathSample(times, pts, model, max_step=0.05)
    seg = classify_segment(path, atlas, phi, constants)
    assert seg.kind == "escaped"
    assert seg.boundary == "minus"


def test_classify_short_path_is_trapped(model, atlas, cobound, constants):
    phi, _ = cobound
    start = atlas.boxes[0].center.copy()
    path = _flow_path(model, start, 0.05, n=10)
    seg = classify_segment(path, atlas, phi, constants)
    assert seg.kind == "trapped"
    assert seg.bound_margin >= 0.0


def test_decompose_path_blocks_partition(model, atlas, cobound, constants):
    phi, _ = cobound
    paths = generate_paths(atlas, "pseudo_splice", 3, seed=5)
    for path in paths:
        blocks = decompose_path(path, atlas, phi, constants)
        assert blocks
        assert all(b.block_type in ("I", "II", "III") for b in blocks)
        assert abs(blocks[0].t_start - path.times[0]) < 1e-9
        assert abs(blocks[-1].t_end - path.times[-1]) < 1e-6
        for a, b in zip(blocks, blocks[1:]):
            assert abs(a.t_end - b.t_start) < 1e-9


def _oracle_factorization(xs):
    """Independent recursive statement of the maximal-last-occurrence rule."""
    N = len(xs) - 1

    def extend(ik):
        if ik >= N:
            return []
        occ = [i for i in range(ik + 1, N + 1) if xs[i] == xs[ik]]
        if not occ:
            return [ik + 1] + extend(ik + 1)
        j = occ[-1]
        nxt = j + 1 if j < N else N
        return [nxt] + ([] if nxt >= N else extend(nxt))

    return [0] + extend(0)


def test_factorization_exhaustive_against_oracle():
    # all consecutive-distinct sequences, length <= 7, alphabet of size 4
    alphabet = "abcd"
    checked = 0
    for n in range(2, 8):
        for xs in itertools.product(alphabet, repeat=n):
            if any(a == b for a, b in zip(xs, xs[1:])):
                continue
            idx = factor_pseudo_orbit(list(xs))
            assert idx == _oracle_factorization(list(xs)), xs
            cert = check_factorization(list(xs), idx)
            assert cert["passed"], (xs, idx, cert)
            checked += 1
    assert checked > 4000


def test_factorization_guards():
    with pytest.raises(ValueError):
        factor_pseudo_orbit(["a"])
    with pytest.raises(ValueError):
        factor_pseudo_orbit(["a", "a", "b"])


def test_lower_bound_scan_passes(atlas, cobound, constants):
    phi, _ = cobound
    rep = livsic_lower_bound_scan(atlas, phi, constants, n_paths=60, seed=2)
    assert rep["passed"], rep
    assert rep["margin"] > 0.0
    assert rep["n_paths"] >= 60


def test_periodic_splice_family_closes(model, atlas):
    paths = generate_paths(atlas, "periodic_splice", 4, seed=7)
    for path in paths:
        assert np.abs(path.points[-1] - path.points[0]).max() < 1e-12
