import pytest
from _tuples import TUPLES, UNIT

from mcgla import filtration as F
from mcgla import mc
from mcgla.gla import bracket, get_algebra
from mcgla.scalar import DT, Q, Ring

alg = get_algebra()


def lemma_element(R, c, p0):
    """Homogeneous leading term written out term by term."""
    pair = {1: "s23", 2: "s31", 3: "s12"}
    x = alg.element("t0*d0") + alg.element("t0", p0, kind="P")
    for (i, j, k), ci in zip(mc.CYCLIC, c):
        x = x + alg.element(f"t0*s0+t{i}*s{i}", R.p[i - 1])
        x = x + alg.element(f"t{i}*{pair[i]}-t{j}*{pair[j]}-t{k}*{pair[k]}", R.sbar(i) ** 2 * Q(ci, 2))
        x = x + alg.element(f"t{i}*L{i}", R.sbar(j) * R.sbar(k))
    return x


def test_kasner_unit_is_mc():
    R = Ring()
    R.bind_p([Q(1)] * 3)
    assert mc.mc_residual(mc.kasner_element(R, R.p, Q(1))).is_zero()


@pytest.mark.parametrize("p, p0, ok", [((1, 2, 3), None, True), ((1, 1, 1), 1, True), ((1, 2, 3), 2, False),
                                        ((0, 3, 4), 2, True), ((2, 2, 2), 1, False)])
def test_kasner_iff(p, p0, ok):
    R = Ring()
    R.bind_p([Q(v) for v in p])
    if p0 is None:
        p0 = R.constant("p0", square=Q(11, 3))
    assert mc.mc_residual(mc.kasner_element(R, R.p, p0)).is_zero() == ok


def test_homogeneous_tuple_gives_lemma_element():
    R = Ring()
    p0 = R.constant("p0", square=Q(11, 3))
    t = mc.homogeneous_tuple(R, [Q(1), Q(2), Q(3)], p0, (1, 1, 1))
    assert mc.leading_element(t) == lemma_element(R, (1, 1, 1), p0)
    assert mc.mc_residual(mc.build_leading_term(t)).is_zero()


def test_time_dependent_naive_coefficient():
    R = Ring()
    f = R.function("f", deps=(0, 1, 2, 3))
    x = alg.element("t0*d0") + alg.element("t0*s0+t1*s1", f)
    z = bracket(alg.element("t0*d0"), alg.element("t0*s0+t1*s1", f))
    assert z == alg.element("t0t1*s1", R.derive(f, DT))
    assert not mc.mc_residual(x).is_zero()


@pytest.mark.parametrize("name", sorted(TUPLES))
def test_leading_term_mc_iff_constraints(name):
    good, bad = TUPLES[name](), TUPLES[name](violate=True)
    assert all(c.is_zero() for c in mc.check_constraints(good))
    assert mc.mc_residual(mc.build_leading_term(good)).is_zero()
    assert not all(c.is_zero() for c in mc.check_constraints(bad))
    assert not mc.mc_residual(mc.build_leading_term(bad)).is_zero()


def test_generic_residual_is_combination_of_constraints():
    # [x, x] = -2/3 A e_000 - sum_i sbar_j sbar_k (4 B_i + 2 tau D_i A) e_i, e_i = theta_0 theta_j sigma_ij + ...
    R = Ring()
    p = [R.function(f"p{i}") for i in (1, 2, 3)]
    t = mc.DataTuple(R, UNIT, p, R.function("p0"), R.function("zeta"), R.function("chi"))
    A, *B = mc.check_constraints(t)
    r = mc.mc_residual(mc.build_leading_term(t))
    e0 = alg.element("t2t3*s23+t3t1*s31+t1t2*s12+2t0t1*s1+2t0t2*s2+2t0t3*s3")
    assert r.component((0, 0, 0)) == e0.scale(A * Q(-2, 3))
    names = {1: "t0t2*s12+t1t2*s2", 2: "t0t3*s23+t2t3*s3", 3: "t0t1*s31+t3t1*s1"}
    for (i, j, k), b in zip(mc.CYCLIC, B):
        alpha = tuple(int(a in (j, k)) for a in (1, 2, 3))
        coef = R.damping(j) * R.damping(k) * (b * -4 - R.tau() * R.derive(A, i) * 2)
        assert r.component(alpha) == alg.element(names[i], coef)
    assert set(r.support()) == {(0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0)}


def test_potential_shift_invariance():
    t = TUPLES["spatial_potentials"]()
    shifted = mc.DataTuple(t.ring, UNIT, t.p, t.p0, t.zeta + 5, t.chi - Q(1, 7))
    assert mc.leading_element(shifted) == mc.leading_element(t)


def test_wrong_p0_shows_in_degree_zero():
    R = Ring()
    t = mc.homogeneous_tuple(R, [Q(1), Q(2), Q(3)], Q(2), (1, 1, 1))
    assert mc.mc_residual(mc.build_leading_term(t)).support() == [(0, 0, 0)]


def test_degenerate_frame_rejected():
    R = Ring()
    with pytest.raises(mc.GaugeError):
        mc.DataTuple(R, [[1, 0, 0], [1, 0, 0], [0, 0, 1]], [1, 2, 3], 1, c={})


def test_nondegenerate_leading_term():
    t = TUPLES["sheared_frame"]()
    assert mc.is_nondegenerate(mc.build_leading_term(t), t.ring)


def test_flags():
    t = TUPLES["sheared_frame"]()
    assert t.anisotropic and t.positive
    assert TUPLES["bianchi_class_a"]().anisotropic is None


def test_tuple_json_round_trip():
    t = TUPLES["sheared_frame"]()
    back = mc.DataTuple.from_json(t.ring, t.to_json())
    assert mc.leading_element(back) == mc.leading_element(t)


# -- gauge action ---------------------------------------------------------------


def _gauge_generator(R):
    a = {(0, 1, 1): alg.element("s23", R.function("F")) + alg.element("s1", R.damping(2) * R.damping(3) * R.function("G")),
         (1, 1, 0): alg.element("s12", R.function("H"))}
    return F.FilteredSeries(a, 6, F.GRADED)


def test_gauge_by_zero_is_identity():
    t = TUPLES["spatial_potentials"]()
    x = mc.build_leading_term(t)
    assert mc.gauge_act(F.FilteredSeries({}, 6, F.GRADED), x) == x


def test_gauge_inverse():
    t = TUPLES["spatial_potentials"](violate=True)
    x = mc.build_leading_term(t)
    a = _gauge_generator(t.ring)
    assert mc.gauge_act(a, mc.gauge_act(-a, x)) == x


def test_gauge_conjugates_residual():
    t = TUPLES["spatial_potentials"](violate=True)
    x = mc.build_leading_term(t)
    a = _gauge_generator(t.ring)
    lhs = mc.mc_residual(mc.gauge_act(a, x))
    rhs = mc.gauge_act(a, mc.mc_residual(x))
    assert lhs == rhs and not lhs.is_zero()


def test_gauge_rejects_non_nilpotent():
    R = Ring()
    R.bind_p([Q(1), Q(2), Q(3)])
    x = F.FilteredSeries({(0, 0, 0): mc.naive_leading_term(R, R.p, 1)}, 6, F.GRADED)
    a = F.FilteredSeries({(0, 0, 0): alg.element("s0")}, 6, F.GRADED)
    with pytest.raises(mc.GaugeError):
        mc.gauge_act(a, x, max_terms=8)


# -- affine gauge -----------------------------------------------------------------


def _naive_plus(R, f, g, p=(1, 2, 3)):
    R.bind_p([Q(v) for v in p])
    p0 = R.constant("p0", square=(R.p[1] * R.p[2] + R.p[2] * R.p[0] + R.p[0] * R.p[1]) * Q(1, 3))
    x = mc.naive_leading_term(R, R.p, p0)
    x = x + alg.element("t2*s3+t3*s2", R.s(2) * R.s(3) * f)
    x = x + alg.element("t1*d0", R.sbar(2) * R.sbar(3) * g)
    return F.FilteredSeries.from_element(x, 6, F.GRADED)


def test_residual_gauge_directions_stay_in_gauge_complement():
    R = Ring()
    R.bind_p([R.function(f"p{i}") for i in (1, 2, 3)])
    base = mc.naive_leading_term(R, R.p, R.function("p0"))
    for alpha, info in mc.gauge_targets().items():
        j, k = info["ijk"][1:]
        for u in (info["directions"][0].scale(R.one()), info["directions"][1].scale(R.damping(j) * R.damping(k))):
            d = F.graded_part(bracket(base, u), alpha)
            assert all(alg.basis[b].plain for b in d.coeffs)


def test_footnote_brackets_normalization():
    # [sigma_jk, p_j (theta_0 sigma_0 + theta_j sigma_j)] = -p_j (theta_j sigma_k + theta_k sigma_j), i.e. unit factor
    x = F.graded_part(bracket(alg.element("s23"), alg.element("t0*s0+t2*s2")), (0, 1, 1))
    assert x == -alg.element("t2*s3+t3*s2")
    x = F.graded_part(bracket(alg.element("s23"), alg.element("t0*s0+t3*s3")), (0, 1, 1))
    assert x == alg.element("t2*s3+t3*s2")


def test_already_affine_is_fixed():
    t = TUPLES["sheared_frame"]()
    x = mc.build_leading_term(t)
    gauges, y = mc.gauge_to_affine(x)
    assert gauges == [] and y == x


def test_affine_gauge_removes_terms():
    R = Ring()
    f, g = R.constant("f"), R.function("g")
    x = _naive_plus(R, f, g)
    assert mc.mc_residual(x).is_zero()
    gauges, y = mc.gauge_to_affine(x)
    (a,) = gauges
    # F = f / (p2 - p3), G = -g (the sigma_1 direction carries sbar_2 sbar_3)
    expect = alg.element("s23", f * Q(-1)) + alg.element("s1", -g * R.damping(2) * R.damping(3))
    assert a.component((0, 1, 1)) == expect
    assert mc.affine_defects(y) == []
    assert mc.mc_residual(y).is_zero()
    assert y.component((2, 1, 1)).is_zero()


def test_isotropic_pair_reported():
    R = Ring()
    x = _naive_plus(R, R.constant("f"), 0, p=(1, 2, 2))
    with pytest.raises(mc.GaugeError) as err:
        mc.gauge_to_affine(x)
    assert err.value.pair == (2, 3)


def test_order_by_order_in_formal_parameter():
    R = Ring()
    t = R.constant("t")
    f1, f2 = R.constant("f1"), R.constant("f2")
    x = _naive_plus(R, f1 * t + f2 * t * t, 0)
    gauges, y = mc.gauge_to_affine(x, param=("t", 2))
    assert len(gauges) == 2
    # order m uses only t^m A^0
    for m, a in zip((1, 2), gauges):
        for c in a.component((0, 1, 1)).coeffs.values():
            assert all(dict(mono).get((0, "t"), 0) == m for mono in c.num)
    assert mc.affine_defects(y, ("t", 2)) == []


def test_outside_gb_rejected():
    R = Ring()
    x = _naive_plus(R, 0, 0)
    bad = x + F.FilteredSeries({(0, 1, 1): alg.element("t0*s1")}, 6, F.GRADED, check=False)
    with pytest.raises(mc.GaugeError):
        mc.gauge_to_affine(bad)
