import numpy as np
import pytest
from scipy.integrate import quad
from hypothesis import given, settings, strategies as st

from mcgla import homogeneous as H
from mcgla.gla import bracket, get_algebra
from mcgla.scalar import FUNC, Q, Ring

alg = get_algebra()


@pytest.fixture(scope="module")
def flat():
    return H.extract_odes(0, 0, 0)


@pytest.fixture(scope="module")
def sphere():
    return H.extract_odes(1, 1, 1)


def generic_sphere_state(ans, a=(0.5, 1.0, 1.5), e=(1.0, 0.5, 2.0)):
    given = {f"e{i}": e[i - 1] for i in (1, 2, 3)} | {f"a{i}": a[i - 1] for i in (1, 2, 3)}
    return H.complete_state(ans, given)


# -- extraction ----------------------------------------------------------------------------


def test_every_slot_gets_an_evolution_equation(sphere):
    assert sphere.names == ["e1", "e2", "e3", "a1", "a2", "a3", "b1", "b2", "b3", "phi"]
    assert set(sphere.evolution) == set(sphere.names)
    assert len(sphere.constraints) == 4


def test_flat_frame_has_kasner_fixed_points(flat):
    # with b = 0 the connection coefficients and the scalar momentum are frozen
    R = flat.ring
    zero_b = {(FUNC, f"b{i}", 0, ()): R.zero() for i in (1, 2, 3)}
    for n in ("a1", "a2", "a3", "phi"):
        assert H.substitute(flat.evolution[n][1], zero_b).is_zero()


def test_sphere_system_is_coupled(sphere, flat):
    # the structure constants tie each b_i to all three frame scales
    frame_rows = [k for k in sphere.constraints if alg.basis[k].label.endswith(("L1", "L2", "L3"))]
    assert len(frame_rows) == 3
    for k in frame_rows:
        assert {"e1", "e2", "e3"} <= {a[1] for a in sphere.constraints[k].atoms()}
        assert not {"e1", "e2", "e3"} <= {a[1] for a in flat.constraints[k].atoms()}


def test_rhs_matches_kasner_element(flat):
    # Remark-style Kasner element: tau-independent connection, exponentially damped frame
    p = (Q(1), Q(2), Q(3))
    y = H.kasner_state(flat, p)
    rhs = flat.rhs(y)
    for i, j, k in ((1, 2, 3), (2, 3, 1), (3, 1, 2)):
        assert rhs[flat.index(f"e{i}")] == pytest.approx(-(p[j - 1] + p[k - 1]) * y[flat.index(f"e{i}")])
        assert rhs[flat.index(f"a{i}")] == 0
    assert np.max(np.abs(flat.mc_residual(y))) < 1e-14


def test_mc_residual_table_matches_bracket(sphere):
    # numeric tables against a fresh bracket of the element evaluated at a state
    y = generic_sphere_state(sphere)
    dy = sphere.rhs(y)
    vals = dict(zip(sphere.names, y))
    dots = dict(zip(sphere.names, dy))
    R = Ring()
    R.set_structure({(2, 3): {1: 1}, (3, 1): {2: 1}, (1, 2): {3: 1}})
    x = alg.element("t0*d0")
    for name, text, kind in H.default_slots():
        x = x + alg.element(text, R.function(name, deps=(0,)), kind)
    res = bracket(x, x)
    for k, e in res.coeffs.items():
        total = 0.0
        for mono, c in e.num.items():
            term = float(c)
            for atom, p in mono:
                term *= (dots if atom[2] else vals)[atom[1]] ** p
            total += term
        assert abs(total) < 1e-12


def test_ansatz_too_small_is_reported():
    slots = [s for s in H.default_slots() if s[0] != "b1"]
    slots.append(("f", "t1*d0", "E"))  # a shift slot couples several time derivatives
    with pytest.raises(H.HomogeneousError):
        H.extract_odes(1, 1, 1, slots=slots)


def test_constraints_propagate(sphere):
    props = H.constraint_propagation(sphere)
    assert all(pr.closed for pr in props)
    hamiltonian = [pr for pr in props if "σ" in pr.label]
    assert len(hamiltonian) >= 1


def test_propagation_detects_a_non_integral(sphere):
    # e1 itself is not propagated by the flow in the constraint span
    R = sphere.ring
    e1 = R.function("e1", deps=(0,))
    gens = list(sphere.constraints.values())
    atoms = [(FUNC, n, 0, ()) for n in sphere.names]
    assert H.ideal_multipliers(H.flow_derivative(sphere, e1), gens, atoms, 1) is None


# -- integration ---------------------------------------------------------------------------


def test_kasner_run_keeps_p_constant(flat):
    y0 = H.kasner_state(flat, (1, 2, 3))
    tr = H.integrate(flat, y0, (0, 40))
    for i, p in zip((1, 2, 3), (1, 2, 3)):
        assert np.max(np.abs(tr.column(f"a{i}") - p)) < 1e-10
    assert np.max(tr.mc_norm) < 1e-10


def test_kasner_exponents_exact(flat):
    tr = H.integrate(flat, H.kasner_state(flat, (1, 2, 3)), (0, 20))
    fit = H.kasner_exponents(flat, tr)
    assert np.allclose(fit.exponents, [1 / 6, 1 / 3, 1 / 2], atol=1e-3)
    assert abs(fit.total - 1) < 1e-3
    assert fit.t_end == pytest.approx(1 / 6, abs=1e-8)  # int_0^inf exp(-6 tau)


@settings(max_examples=8, deadline=None)
@given(st.tuples(*[st.integers(1, 6)] * 3))
def test_kasner_exponents_property(p):
    flat = H.extract_odes(0, 0, 0)
    tr = H.integrate(flat, H.kasner_state(flat, p), (0, 60 / sum(p)), samples=101)
    fit = H.kasner_exponents(flat, tr)
    assert np.allclose(fit.exponents, np.array(p) / sum(p), atol=1e-3)
    assert fit.quadratic >= 0


def test_constraint_violation_rejected(sphere):
    y = generic_sphere_state(sphere)
    y[sphere.index("phi")] += 1e-3
    with pytest.raises(H.HomogeneousError, match="violates"):
        H.integrate(sphere, y, (0, 1))


def test_unsolvable_constraints_rejected(sphere):
    with pytest.raises(H.HomogeneousError):
        generic_sphere_state(sphere, a=(0.3, -0.2, 0.9))


def test_degenerate_frame_rejected(sphere):
    y = H.complete_state(sphere, {"e1": 1, "e2": 1, "e3": 1, "a1": 0, "a2": 0, "a3": 0})
    y[sphere.index("e1")] = -1.0
    with pytest.raises(H.HomogeneousError):
        H.integrate(sphere, y, (0, 1), check=False)


def test_flrw_identity(sphere):
    y0 = H.complete_state(sphere, {"e1": 1, "e2": 1, "e3": 1, "a1": 0, "a2": 0, "a3": 0})
    for span in ((0, 4), (0, -4)):
        tr = H.integrate(sphere, y0, span, samples=41)
        s = tr.scale_factors()
        assert np.allclose(s[0], s[1]) and np.allclose(s[0], s[2])
        q = H.flrw_invariant(sphere, tr)
        assert np.ptp(q) / abs(np.mean(q)) < 1e-6
        # the closed form profile: a = cosh(tau)^(-1/2) with dt/dtau = a^3
        assert np.allclose(s[0], np.cosh(tr.tau) ** -0.5, rtol=1e-9)
        t_ref = [quad(lambda u: np.cosh(u) ** -1.5, 0, x, epsabs=1e-13)[0] for x in tr.tau]
        assert np.allclose(tr.t, t_ref, rtol=1e-8, atol=1e-12)


def test_generic_sphere_trajectory(sphere):
    y0 = generic_sphere_state(sphere)
    tr = H.integrate(sphere, y0, (0, 30))
    assert np.max(tr.mc_norm) < 1e-8
    assert np.max(tr.constraint_norm) < 1e-8
    fit = H.kasner_exponents(sphere, tr)
    assert abs(fit.total - 1) < 1e-3
    assert np.all(fit.exponents > 0) and fit.quadratic >= 0
    # finitely many bulk turning points, monotone in the tail
    tail = np.log(tr.scale_factors()[:, -100:])
    assert np.all(np.diff(tail, axis=1) < 0)
    assert sum(H.oscillation_count(tr)) < 10


def test_backward_tail(sphere):
    tr = H.integrate(sphere, generic_sphere_state(sphere), (0, -45))
    assert np.max(tr.mc_norm) < 1e-8
    fit = H.kasner_exponents(sphere, tr)
    assert abs(fit.total - 1) < 1e-3 and np.all(fit.exponents > 0)
    assert fit.t_end <= tr.t[-1]  # the remaining proper time is below float resolution here


def test_tail_not_reached(sphere):
    tr = H.integrate(sphere, generic_sphere_state(sphere), (0, 3))
    with pytest.raises(H.HomogeneousError, match="tail"):
        H.kasner_exponents(sphere, tr)


def test_determinant_law(sphere):
    tr = H.integrate(sphere, generic_sphere_state(sphere), (0, 10))
    assert H.determinant_law_defect(sphere, tr) < 1e-12
    # integrated form: m tracks A^2 with the chosen normalization
    m = np.prod([tr.column(f"e{i}") for i in (1, 2, 3)], axis=0)
    assert np.max(np.abs(np.log(m) - 2 * tr.log_A)) < 1e-8


def test_proper_time_channel_agrees(sphere):
    y0 = generic_sphere_state(sphere)
    tr = H.integrate(sphere, y0, (0, 5), samples=51)
    Z = H.integrate_proper(sphere, y0, tr.t)
    n = sphere.dim
    assert np.allclose(Z[:n], tr.y, rtol=1e-7, atol=1e-10)
    assert np.allclose(Z[n + 1], tr.tau, rtol=1e-7, atol=1e-9)
