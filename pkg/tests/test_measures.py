import itertools

import numpy as np
import pytest

from conftest import F1, F2, Z1, Z2Z, ball
from greenlab.errors import ValidationError
from greenlab.groups import IDENTITY, multiply, parse_word
from greenlab.measures import (StepMeasure, dirac, generates_check, moment_report, n_step_probabilities,
                               parse_measure, reflect, sample_walk, srw, transition_matrix)
from greenlab.parallel import pmap, stream
from greenlab.walks import WalkModel


def test_srw_atoms():
    m = srw(F2)
    assert sorted(m.atoms.values()) == [0.25] * 4
    assert {str(k) for k in m.atoms} == {str(parse_word(F2, t)) for t in ("a", "a^-1", "b", "b^-1")}
    assert sorted(srw(Z1).atoms.values()) == [0.5, 0.5]
    assert len(srw(Z2Z).support) == 6
    assert all(p == pytest.approx(1 / 6) for _, p in srw(Z2Z).support)


def test_reflect_examples():
    assert reflect(srw(F2)).atoms == srw(F2).atoms
    m = parse_measure(F1, "a:2/3, a^-1:1/3")
    assert reflect(m).atoms == {parse_word(F1, "a^-1"): 2 / 3, parse_word(F1, "a"): 1 / 3}
    assert reflect(dirac(F2, "a b")).atoms == {parse_word(F2, "b^-1 a^-1"): 1.0}


def test_measure_validation():
    with pytest.raises(ValidationError):
        parse_measure(F2, "a:0.5, b:0.4")
    with pytest.raises(ValidationError):
        parse_measure(F2, "a:0.5, a:0.5")
    with pytest.raises(ValidationError):
        parse_measure(F2, "a:1.5, b:-0.5")
    with pytest.raises(ValidationError):
        parse_measure(F2, "a")


def test_n_step_examples():
    b = ball("free(2)", 4)
    d = n_step_probabilities(b, srw(F2), "e", 2)
    # 16 two-step products, 4 of which cancel
    prods = [multiply(F2, g, h) for g, h in itertools.product([g for g, _ in srw(F2).support], repeat=2)]
    assert d.probs[2, 0] == pytest.approx(sum(p == IDENTITY for p in prods) / 16) == 0.25
    assert d.probs[0, 0] == 1.0 and d.probs[0, 1:].sum() == 0.0
    bz = ball("abelian(1)", 4)
    dz = n_step_probabilities(bz, srw(Z1), "e", 2)
    assert dz.probs[2, 0] == pytest.approx(0.5)
    assert dz.probs[2, bz.index("a^2")] == pytest.approx(0.25)
    assert dz.probs[2, bz.index("a^-2")] == pytest.approx(0.25)


def test_n_step_rejects_long_support():
    with pytest.raises(ValidationError):
        n_step_probabilities(ball("free(2)", 1), dirac(F2, "a^2"), "e", 1)


@pytest.mark.parametrize("spec_text,mtext", [
    ("free(2)", "srw"),
    ("free(2)", "a:0.5, b a:0.3, b^-1:0.2"),
    ("product(abelian(2), abelian(1))", "x:0.3, x^-1 a:0.2, y:0.1, y^-1:0.1, a^-1:0.3"),
])
def test_conservation_and_time_reversal(spec_text, mtext):
    b = ball(spec_text, 5)
    m = parse_measure(b.spec, mtext)
    d = n_step_probabilities(b, m, "e", 9)
    assert np.allclose(d.probs.sum(axis=1) + d.absorbed, 1.0, atol=1e-14)
    P = transition_matrix(b, m).toarray()
    Ph = transition_matrix(b, reflect(m)).toarray()
    P3, Ph3 = np.linalg.matrix_power(P, 3), np.linalg.matrix_power(Ph, 3)
    # p^k(x,y) = p̂^k(y,x) for pairs whose k-step paths cannot leave the ball
    inner = np.nonzero(b.dist <= b.radius - 3 * m.max_step // 2 - 1)[0]
    sub = np.ix_(inner, inner)
    assert np.allclose(P3[sub], Ph3.T[sub], atol=1e-15)


def test_sample_walk_examples():
    assert sample_walk(F2, srw(F2), 5, 0) == [IDENTITY]
    path = sample_walk(F1, dirac(F1, "a"), 1, 3)
    assert path == [parse_word(F1, t) for t in ("e", "a", "a^2", "a^3")]
    assert sample_walk(F2, srw(F2), 11, 50) == sample_walk(F2, srw(F2), 11, 50)
    assert sample_walk(F2, srw(F2), 11, 50) != sample_walk(F2, srw(F2), 12, 50)


def test_step_frequencies_within_four_sigma():
    m = parse_measure(F2, "a:0.4, a^-1:0.1, b:0.3, b^-1:0.2")
    model = WalkModel(m)
    n = 100_000
    draws = model.draw(stream(123, 9), (n,))
    counts = np.bincount(draws, minlength=4)
    for (g, p), c in zip(m.support, counts):
        assert abs(c - n * p) <= 4 * np.sqrt(n * p * (1 - p))


def test_moment_report_examples():
    assert moment_report(srw(F2), (2.0,)).exp_moments[2.0] == 2.0
    m = parse_measure(F1, "e:0.5, a^2:0.5")
    rep = moment_report(m, (3.0,))
    assert rep.exp_moments[3.0] == pytest.approx(5.0)
    assert rep.tail_mass[rep.max_step] == 0.0
    assert rep.max_step == 2


def test_generates_check_examples():
    assert generates_check(ball("free(2)", 2), srw(F2), 1)
    assert not generates_check(ball("free(1)", 4), dirac(F1, "a"), 10)
    assert generates_check(ball("free(1)", 4), parse_measure(F1, "a^2:0.5, a^-1:0.5"), 3)


def _scaled_square(k, x):
    return k * x * x


def test_pmap_preserves_order_and_shares_state():
    expect = [3 * i * i for i in range(20)]
    assert pmap(_scaled_square, range(20), workers=3, shared=3) == expect
    assert pmap(_scaled_square, range(20), workers=1, shared=3) == expect


def test_stream_independent_of_call_order():
    a = stream(5, 1, 2).random(4)
    stream(5, 1, 3).random(100)
    assert np.array_equal(a, stream(5, 1, 2).random(4))
    assert not np.array_equal(a, stream(5, 2, 1).random(4))


def test_step_measure_requires_positive_atoms():
    with pytest.raises(ValidationError):
        StepMeasure(F2, ())
