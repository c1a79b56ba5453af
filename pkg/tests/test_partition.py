import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sagp.errors import DatasetTooSmallError, InvalidInputError
from sagp.partition import RpScheme, build_full_rp, load_scheme, locate, prune, save_scheme


def uneven_quarter_points():
    """15 points with 3, 3, 7 and 2 in the four bottom-layer quarters."""
    counts = (3, 3, 7, 2)
    pts = []
    for q, c in enumerate(counts):
        pts += list(q / 4 + (np.arange(c) + 0.5) / (4 * c))
    return np.array(pts)[:, None]


def test_binary_three_layers():
    s = build_full_rp(1, 2, 3)
    assert [len(layer) for layer in s.layers] == [1, 2, 4]
    assert len(s.components) == 7
    assert all(c.active for c in s.components)


def test_single_layer_root():
    s = build_full_rp(3, 2, 1)
    assert len(s.components) == 1
    assert s[0].box.lower == (0.0,) * 3 and s[0].box.upper == (1.0,) * 3


def test_mixed_branching_counts():
    s = build_full_rp(2, (2, 3), 2)
    assert [len(layer) for layer in s.layers] == [1, 6]


def test_half_width_per_layer():
    s = build_full_rp(2, (2, 3), 3)
    leaf = s[s.layers[2][0]]
    assert leaf.half_width == pytest.approx((1 / 8, 1 / 18))


@pytest.mark.parametrize("args", [(1, 2, 0), (1, 1, 2), (0, 2, 2), (2, (2,), 2)])
def test_build_rejects_bad_arguments(args):
    with pytest.raises(InvalidInputError):
        build_full_rp(*args)


def test_children_nested_in_parent():
    s = build_full_rp(2, (2, 3), 3)
    for c in s.components:
        if c.parent is None:
            continue
        p = s[c.parent].box
        assert all(pl <= cl and cu <= pu for pl, cl, cu, pu in zip(p.lower, c.box.lower, c.box.upper, p.upper))


def test_prune_uneven_quarters():
    X = uneven_quarter_points()
    s = prune(build_full_rp(1, 2, 3, m=3), X)
    assert s.active_ids == [0, 1, 2, 5]
    assert s.counts == (15, 6, 9, 3, 3, 7, 2)


def test_prune_n_equals_m_keeps_only_root(rng):
    X = rng.uniform(size=(4, 1))
    s = prune(build_full_rp(1, 2, 4, m=4), X)
    assert s.active_ids == [0]


def test_prune_dense_grid_keeps_everything():
    m, L = 3, 3
    X = ((np.arange(64) + 0.5) / 64)[:, None]
    s = prune(build_full_rp(1, 2, L, m), X)
    per_leaf = np.bincount(np.minimum((X[:, 0] * 4).astype(int), 3))
    assert per_leaf.min() >= m and len(X) >= m * 7
    assert all(c.active for c in s.components)


def test_prune_too_small():
    with pytest.raises(DatasetTooSmallError):
        prune(build_full_rp(1, 2, 2, m=5), np.array([[0.1], [0.5]]))


def test_prune_rejects_points_outside_cube():
    with pytest.raises(InvalidInputError):
        prune(build_full_rp(1, 2, 2, m=1), np.array([[1.5]]))


@settings(max_examples=40, deadline=None)
@given(
    st.integers(1, 2),
    st.integers(1, 4),
    st.integers(1, 6),
    st.integers(10, 500),
    st.integers(0, 2**31),
)
def test_prune_postconditions(d, L, m, n, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, d)) ** rng.uniform(0.3, 3.0)
    try:
        s = prune(build_full_rp(d, 2, L, m), X)
    except DatasetTooSmallError:
        assert n < m
        return
    active = set(s.active_ids)
    for j in active:
        c = s[j]
        if c.parent is not None:
            assert c.parent in active
        need = m * (1 + len(s.descendants(j, active_only=True)))
        assert s.counts[j] >= need
    for layer in s.layers:
        assert sum(s[j].box.volume for j in layer) == pytest.approx(1.0)


def test_locate_uneven_quarters():
    s = prune(build_full_rp(1, 2, 3, m=3), uneven_quarter_points())
    assert locate(0.9, s) == [0, 2]
    assert locate(0.6, s) == [0, 2, 5]
    assert locate(0.1, s) == [0, 1]


def test_locate_border_goes_to_lower_sibling():
    s = build_full_rp(1, 2, 3)
    assert locate(0.25, s) == [0, 1, 3]
    assert locate(0.0, s) == [0, 1, 3]
    assert locate(1.0, s) == [0, 2, 6]


def test_locate_outside():
    with pytest.raises(InvalidInputError):
        locate(1.2, build_full_rp(1, 2, 2))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=2), st.integers(1, 4))
def test_locate_one_component_per_active_layer(x, L):
    s = build_full_rp(2, (2, 3), L)
    path = locate(np.array(x), s)
    assert path[0] == 0
    assert [s[j].layer for j in path] == list(range(1, L + 1))
    assert all(s[j].box.contains(np.array(x)) for j in path)


def test_scheme_roundtrip(tmp_path):
    s = prune(build_full_rp(1, 2, 3, m=3), uneven_quarter_points())
    path = tmp_path / "scheme.json"
    save_scheme(s, path)
    back = load_scheme(path)
    assert back == s
    assert back.counts == s.counts
    assert back.fingerprint() == s.fingerprint()
    assert RpScheme.from_dict(s.to_dict()).active_ids == [0, 1, 2, 5]
