import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fuzzymarket.errors import InvalidDomainError, InvalidInputError, InvalidWeightsError
from fuzzymarket.fuzzy import (
    GaussianOpinion,
    closeness,
    compose_conditional,
    compose_oracle,
    compose_oracle_bruteforce,
    weighted_average,
)

centers = st.floats(-50, 50)
sdvs = st.floats(0, 10)
opinions = st.builds(GaussianOpinion, centers, sdvs)


def test_opinion_rejects_bad_values():
    with pytest.raises(InvalidInputError):
        GaussianOpinion(0.0, -1.0)
    with pytest.raises(InvalidInputError):
        GaussianOpinion(math.nan, 1.0)
    with pytest.raises(InvalidInputError):
        GaussianOpinion(0.0, math.inf)


def test_membership_peak_and_crisp():
    assert GaussianOpinion(3.0, 2.0).membership(3.0) == 1.0
    crisp = GaussianOpinion(3.0, 0.0)
    assert crisp.membership(3.0) == 1.0
    assert crisp.membership(3.1) == 0.0


@pytest.mark.parametrize(
    "a, b, expected",
    [
        ((5, 1), (5, 3), 1.0),
        ((0, 0.5), (1, 0.5), math.exp(-1)),
        ((0, 0), (1, 0), 0.0),
        ((4, 0), (4, 0), 1.0),
    ],
)
def test_closeness_examples(a, b, expected):
    assert closeness(GaussianOpinion(*a), GaussianOpinion(*b)) == pytest.approx(expected, rel=1e-15)


@given(opinions, opinions)
def test_closeness_symmetric_and_bounded(a, b):
    c = closeness(a, b)
    assert c == closeness(b, a)
    assert 0.0 <= c <= 1.0


@given(opinions, opinions, st.floats(0.01, 5))
def test_closeness_grows_with_uncertainty(a, b, extra):
    wider = GaussianOpinion(a.center, a.sdv + extra)
    assert closeness(wider, b) >= closeness(a, b)


def test_weighted_average_examples():
    o = GaussianOpinion(3.0, 1.5)
    assert weighted_average([o], [1.0]) == o
    avg = weighted_average([GaussianOpinion(0, 1), GaussianOpinion(10, 3)], [0.5, 0.5])
    assert (avg.center, avg.sdv) == (5.0, 2.0)
    same = weighted_average([o] * 7, [1 / 7] * 7)
    assert same.center == pytest.approx(3.0, abs=1e-15)
    assert same.sdv == pytest.approx(1.5, abs=1e-15)


@pytest.mark.parametrize("weights", [[0.5, 0.6], [-0.5, 1.5], [1.0], [math.nan, 1.0]])
def test_weighted_average_rejects_weights(weights):
    ops = [GaussianOpinion(0, 1), GaussianOpinion(1, 1)]
    with pytest.raises(InvalidWeightsError):
        weighted_average(ops, weights)


@given(st.lists(opinions, min_size=1, max_size=8), st.data())
def test_weighted_average_stays_in_hull(ops, data):
    raw = data.draw(st.lists(st.floats(0.01, 1), min_size=len(ops), max_size=len(ops)))
    w = np.asarray(raw) / math.fsum(raw)
    if abs(math.fsum(w) - 1) > 1e-12:
        return
    avg = weighted_average(ops, w)
    cs = [o.center for o in ops]
    ss = [o.sdv for o in ops]
    assert min(cs) - 1e-9 <= avg.center <= max(cs) + 1e-9
    assert min(ss) - 1e-9 <= avg.sdv <= max(ss) + 1e-9


@pytest.mark.parametrize(
    "sx, v, expected",
    [(0.0, (7, 2), (7, 2)), (1.5, (7, 2), (7, 3.5)), (0.3, (-4, 0), (-4, 0.3))],
)
def test_compose_conditional_examples(sx, v, expected):
    out = compose_conditional(sx, GaussianOpinion(*v))
    assert (out.center, out.sdv) == expected


def test_compose_oracle_examples():
    v = GaussianOpinion(0.0, 1.0)
    grid, mu = compose_oracle(1.0, v, (-10.0, 10.0), 10_001)
    assert mu[np.argmin(np.abs(grid))] == pytest.approx(1.0, abs=1e-3)
    assert mu[np.argmin(np.abs(grid - 2.0))] == pytest.approx(math.exp(-1), abs=1e-3)


@given(st.floats(0.1, 3), st.floats(-5, 5), st.floats(0.1, 3))
def test_oracle_matches_bruteforce(sx, c, sv):
    v = GaussianOpinion(c, sv)
    dom = (c - 5 * (sx + sv), c + 5 * (sx + sv))
    g1, m1 = compose_oracle(sx, v, dom, 301)
    g2, m2 = compose_oracle_bruteforce(sx, v, dom, 301)
    np.testing.assert_array_equal(g1, g2)
    np.testing.assert_allclose(m1, m2, rtol=0, atol=1e-14)


@pytest.mark.parametrize("domain, points", [((1.0, 1.0), 200), ((2.0, 1.0), 200), ((0.0, 1.0), 99), ((0, math.inf), 200)])
def test_oracle_rejects_bad_domain(domain, points):
    with pytest.raises(InvalidDomainError):
        compose_oracle(1.0, GaussianOpinion(0, 1), domain, points)
