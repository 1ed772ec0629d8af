import math

import numpy as np
import pytest

from conftest import F1, F2, Z1, ball
from greenlab.errors import GreenDivergenceError, PoleError, OutOfBallError, ValidationError
from greenlab.green import (fit_length_tail, green_kernel, green_mc, green_metric, green_rows, green_solve,
                            harmonicity_defect, hit_probability, length_distribution, martin_kernel,
                            spectral_radius_lb, tree_oracle, weighted_green)
from greenlab.groups import build_ball, parse_group
from greenlab.measures import dirac, parse_measure, srw, step_table

LN3 = math.log(3)


def test_tree_oracle_constants():
    o = tree_oracle(2)
    assert (o.green_ee, o.drift, o.green_metric_slope) == (1.5, 0.5, LN3)
    assert o.spectral_radius == pytest.approx(0.8660254, abs=1e-7)
    o3 = tree_oracle(3)
    assert o3.green_ee == pytest.approx(1.25)
    assert o3.spectral_radius == pytest.approx(math.sqrt(5) / 3)
    assert o3.drift == pytest.approx(2 / 3)
    for k in (2, 3, 5):
        ok = tree_oracle(k)
        F = 1 / (2 * k - 1)
        assert ok.green_ee == pytest.approx(1 / (1 - F))
        # F solves the first-passage quadratic q F^2 - (q + 1) F + 1 = 0
        q = 2 * k - 1
        assert q * ok.first_passage**2 - (q + 1) * ok.first_passage + 1 == pytest.approx(0, abs=1e-15)
    with pytest.raises(ValidationError):
        tree_oracle(1)


def test_tree_oracle_cross_validated_on_rank_three():
    spec = parse_group("free(3)")
    b = build_ball(spec, 8)
    o = tree_oracle(3)
    assert green_solve(b, srw(spec), "e", "e").value == pytest.approx(o.green_ee, abs=1e-5)
    assert green_solve(b, srw(spec), "e", "a b").value == pytest.approx(o.green(2), abs=1e-5)
    mc = green_mc(spec, srw(spec), "e", "e", 40_000, 200, seed=4)
    assert abs(mc.value - o.green_ee) <= mc.error


def test_green_solve_tree_values(f2_12, srw_f2):
    assert green_solve(f2_12, srw_f2, "e", "e").value == pytest.approx(1.5, abs=1e-6)
    assert green_solve(f2_12, srw_f2, "e", "a^3").value == pytest.approx(1.5 / 27, abs=1e-6)


def test_green_solve_monotone_in_radius(srw_f2):
    vals = [green_solve(ball("free(2)", R), srw_f2, "e", "a b").value for R in (8, 10, 12)]
    assert vals[0] <= vals[1] <= vals[2]


def test_recurrent_walk_diverges():
    with pytest.raises(GreenDivergenceError):
        green_solve(build_ball(Z1, 100), srw(Z1), "e", "e")


def test_green_mc_examples():
    est = green_mc(F1, dirac(F1, "a"), "e", "a", 10, 5, seed=0)
    assert est.value == 1.0
    one = green_mc(F2, srw(F2), "e", "e", 1, 50, seed=8)
    assert one.value == int(one.value) and one.value >= 1
    assert one == green_mc(F2, srw(F2), "e", "e", 1, 50, seed=8)
    assert one.error == math.inf


def test_green_mc_workers_identical():
    a = green_mc(F2, srw(F2), "e", "a", 9000, 100, seed=3, workers=1)
    b = green_mc(F2, srw(F2), "e", "a", 9000, 100, seed=3, workers=3)
    assert a == b


def _random_pairs(b, n, radius, seed):
    rng = np.random.default_rng(seed)
    pool = np.arange(b.sphere_offsets[radius + 1])
    return [tuple(int(v) for v in rng.choice(pool, 2)) for _ in range(n)]


@pytest.mark.slow
@pytest.mark.parametrize("spec_text,R", [("free(2)", 10), ("product(abelian(2), abelian(1))", 8)])
def test_solver_agrees_with_monte_carlo(spec_text, R):
    b = ball(spec_text, R)
    m = srw(b.spec)
    for k, (x, y) in enumerate(_random_pairs(b, 50, 2, seed=17)):
        s = green_solve(b, m, x, y)
        mc = green_mc(b.spec, m, b.element(x), b.element(y), 20_000, 300, seed=100 + k)
        assert abs(s.value - mc.value) <= 3 * math.hypot(s.error, mc.error), (b.word(x), b.word(y))


def test_green_metric_examples(f2_12, srw_f2):
    for n in range(1, 5):
        assert green_metric(f2_12, srw_f2, "e", f"a^{n}") == pytest.approx(n * LN3, abs=1e-3)
    assert green_metric(f2_12, srw_f2, "a b", "a b") == 0.0
    b = ball("free(1)", 60)
    m = parse_measure(F1, "a:2/3, a^-1:1/3")
    d1, d2 = green_metric(b, m, "e", "a"), green_metric(b, m, "a", "e")
    assert abs(d1 - d2) > 0.1
    # closed forms for the biased walk on Z: G(e,a) = G(e,e), G(a,e) = G(e,e) / 2
    assert d1 == pytest.approx(0.0, abs=1e-9)
    assert d2 == pytest.approx(math.log(2), abs=1e-9)


def test_weighted_green_examples(f2_10, srw_f2):
    w1 = weighted_green(f2_10, srw_f2, "e", "a", 1.0)
    assert w1.value == pytest.approx(green_solve(f2_10, srw_f2, "e", "a").value, abs=1e-10)
    w0 = weighted_green(f2_10, srw_f2, "a", "a", 0.0)
    assert w0.value == 1.0
    assert weighted_green(f2_10, srw_f2, "a", "b", 0.0).value == 0.0
    w = weighted_green(f2_10, srw_f2, "e", "e", 1.1)
    assert not w.diverged and math.isfinite(w.value) and w.last_increment < 1e-8


def test_hit_probability_examples(f2_12, srw_f2):
    assert hit_probability(f2_12, srw_f2, "a^2", "a^-2", "e", 0) == pytest.approx(1.0, abs=1e-10)
    assert hit_probability(f2_12, srw_f2, "a^2 b", "b^-3", "a", 0) == pytest.approx(1.0, abs=1e-10)
    vals = [hit_probability(f2_12, srw_f2, "a^2", "a^-2", f"b^{k}", 0) for k in (1, 2, 3, 4)]
    assert all(0 < v < 1 for v in vals)
    assert all(a > b for a, b in zip(vals, vals[1:]))
    b = ball("free(1)", 8)
    assert hit_probability(b, dirac(F1, "a"), "e", "a^3", "a^-2", 0) == 0.0
    assert hit_probability(f2_12, srw_f2, "a", "b", "a^2", 1) == 1.0


def test_hit_probability_nondecreasing_in_r(f2_12, srw_f2):
    for x, y, z in [("a^3", "b^3", "a b"), ("a b^2", "b^-3", "b^-1 a")]:
        vals = [hit_probability(f2_12, srw_f2, x, y, z, r) for r in range(4)]
        assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))


def test_spectral_radius_examples():
    Z1b = build_ball(Z1, 200)
    v = spectral_radius_lb(Z1b, srw(Z1), iterations=20_000)
    # top eigenvalue of the walk on a path of 2R + 1 vertices
    assert v < 1.0
    assert v == pytest.approx(math.cos(math.pi / 402), abs=1e-8)
    assert spectral_radius_lb(ball("free(1)", 8), dirac(F1, "a")) == 0.0
    with pytest.raises(ValidationError):
        spectral_radius_lb(Z1b, srw(Z1), iterations=5)


def test_martin_kernel_examples(f2_12, srw_f2):
    assert martin_kernel(f2_12, srw_f2, "a", "a^8") == pytest.approx(3.0, abs=1e-3)
    assert martin_kernel(f2_12, srw_f2, "b", "a^8") == pytest.approx(1 / 3, abs=1e-3)
    assert martin_kernel(f2_12, srw_f2, "e", "b^5 a") == 1.0


def test_harmonicity_examples(f2_12, srw_f2):
    assert harmonicity_defect(f2_12, srw_f2, "a^8", "e") < 1e-6
    # neighbours of the pole are still harmonic points
    assert harmonicity_defect(f2_12, srw_f2, "a^8", "a^7") < 1e-6
    with pytest.raises(PoleError):
        harmonicity_defect(f2_12, srw_f2, "a^8", "a^8")
    with pytest.raises(OutOfBallError):
        harmonicity_defect(f2_12, srw_f2, "a^3", "b^12")


def test_length_distribution_examples(f2_10, srw_f2):
    b = ball("free(1)", 5)
    d = length_distribution(b, dirac(F1, "a"), "e", "a", 4)
    assert d.probs.tolist() == [0.0, 1.0, 0.0, 0.0, 0.0]
    dee = length_distribution(f2_10, srw_f2, "e", "e", 200)
    assert dee.probs[0] == pytest.approx(2 / 3, abs=1e-5)
    dodd = length_distribution(f2_10, srw_f2, "e", "a", 60)
    assert np.all(dodd.probs[0::2] == 0.0) and dodd.probs[1] > 0
    with pytest.warns(RuntimeWarning):
        length_distribution(f2_10, srw_f2, "e", "e", 10)


def test_fit_length_tail_examples(f2_12, srw_f2):
    dist = length_distribution(f2_12, srw_f2, "e", "e", 400)
    fit = fit_length_tail(dist, 0)
    assert fit.ok and 0 < fit.phi < 1
    assert fit.margin >= -1e-10
    b = ball("free(1)", 5)
    point = length_distribution(b, dirac(F1, "a"), "e", "a", 40)
    bad = fit_length_tail(point, 1)
    assert not bad.ok and bad.reason


def test_fit_length_tail_off_diagonal(f2_12, srw_f2):
    dist = length_distribution(f2_12, srw_f2, "e", "a^2", 300)
    fit = fit_length_tail(dist, 2)
    assert fit.ok and fit.D >= 0


def test_harnack_and_submultiplicativity(f2_10, srw_f2):
    b, m = f2_10, srw_f2
    rows, _ = green_rows(b, m, [0, b.index("a"), b.index("b^-1 a")])
    table = step_table(b, m)
    mu = np.array([p for _, p in m.support])
    inner = np.nonzero(b.dist <= 6)[0]
    for j in range(rows.shape[1]):
        g = rows[:, j]
        assert np.all(g[table[inner]] >= g[inner, None] * mu - 1e-10)
    gee = rows[0, 0]
    # G(x,z) G(z,y) <= G(e,e) G(x,y) with x = e: uses the row from e and the row from z
    z = b.index("a")
    gz = rows[:, 1]
    gx = rows[:, 0]
    assert np.all(gx[z] * gz[inner] <= gee * gx[inner] + 1e-12)


def test_reversibility_for_symmetric_measure(z2z_8, srw_z2z):
    for x, y in [("x", "a y"), ("a^2", "x^-1 y"), ("e", "y^2 a")]:
        gxy = green_solve(z2z_8, srw_z2z, x, y).value
        gyx = green_solve(z2z_8, srw_z2z, y, x).value
        assert gxy == pytest.approx(gyx, rel=1e-9)


def test_kernel_anchors_agree(f2_10, srw_f2):
    kc = green_kernel(f2_10, srw_f2, "column")
    kr = green_kernel(f2_10, srw_f2, "row")
    for x, y in [("a", "b"), ("a^2 b", "b^-1"), ("e", "a^3")]:
        assert kc.green(x, y) == pytest.approx(kr.green(x, y), rel=1e-8)
        assert kc.metric(x, y) == pytest.approx(kr.metric(x, y), abs=1e-8)
