import pytest
from hypothesis import given, settings, strategies as st

from mcgla import filtration as F
from mcgla.gla import GlaElement, bracket, get_algebra
from mcgla.scalar import Q, Ring

alg = get_algebra()
CYC = [(1, 2, 3), (2, 3, 1), (3, 1, 2)]
PAIR = {1: "s23", 2: "s31", 3: "s12"}


def homogeneous_element(R, c, p0):
    """theta_0 d_0 + p0 _theta_0 + sum over cyclic triples, with D_i = L_i."""
    p = R.p
    x = alg.element("t0*d0") + alg.element("t0", kind="P").scale(p0)
    for (i, j, k), ci in zip(CYC, c):
        x = x + alg.element(f"t0*s0+t{i}*s{i}").scale(p[i - 1])
        x = x + alg.element(f"t{i}*{PAIR[i]}-t{j}*{PAIR[j]}-t{k}*{PAIR[k]}").scale(R.sbar(i) ** 2 * Q(ci, 2))
        x = x + alg.element(f"t{i}*L{i}").scale(R.sbar(j) * R.sbar(k))
    return x


@pytest.fixture
def homogeneous():
    R = Ring()
    R.bind_p([Q(1), Q(2), Q(3)])
    R.set_structure({(2, 3): {1: 1}, (3, 1): {2: 1}, (1, 2): {3: 1}})
    p0 = R.constant("p0", square=Q(11, 3))
    return R, homogeneous_element(R, (1, 1, 1), p0)


def test_grade_examples():
    assert F.grade_of(alg.find("σ1")) == (0, 1, 1)
    assert F.grade_of(alg.find("_θ1θ2θ3")) == (2, 2, 2)
    assert F.grade_of(alg.find("-θ1σ23+θ2σ31+θ3σ12")) == (2, 0, 0)


def test_unknown_id():
    with pytest.raises(KeyError):
        F.grade_of(alg.n)


def test_partition_and_permutation_symmetry():
    rows = F.partition_audit()
    assert sum(rows.values()) == alg.n == 160
    assert len(rows) == 11
    for g, n in rows.items():
        for perm in ((1, 2, 0), (2, 0, 1)):
            assert rows[tuple(g[i] for i in perm)] == n


def test_ranks():
    assert F.rank_audit() == {"E_Phi^1": 48, "A^1_GB": 37, "A^0": 11, "A_spec": 28}
    assert F.aspec_ids() <= set(F.gb_ids(1))


def test_filtration_compatible_on_all_basis_pairs():
    assert F.compatibility_defects() == []


def test_bracket_of_two_degree_zero_rows():
    x = alg.element("t0*s0+t1*s1") + alg.element("L2")
    y = alg.element("t2t3*s23+t3t1*s31+t1t2*s12+2t0t1*s1+2t0t2*s2+2t0t3*s3")
    assert F.in_filtration(bracket(x, y), (0, 0, 0))


def test_mixed_rows_land_in_sum():
    a = [b for b in range(alg.n) if alg.grade[b] == (0, 1, 1)]
    b = [b for b in range(alg.n) if alg.grade[b] == (1, 0, 1)]
    for i in a:
        for j in b:
            z = bracket(GlaElement({i: 1}), GlaElement({j: 1}))
            assert F.in_filtration(z, (1, 1, 2))


def test_homogeneous_element_is_mc_in_graded(homogeneous):
    _, x = homogeneous
    X = F.FilteredSeries.from_element(x, order=6, flag=F.GRADED)
    assert X.support() == [(0, 0, 0), (0, 0, 2), (0, 1, 1), (0, 2, 0), (1, 0, 1), (1, 1, 0), (2, 0, 0)]
    assert F.assoc_graded_bracket(X, X).is_zero()


def test_homogeneous_element_not_mc_in_rees(homogeneous):
    # frozen: the Rees self-bracket survives exactly in total degree four
    _, x = homogeneous
    Y = F.FilteredSeries.from_element(x, order=6, flag=F.PP)
    r = F.rees_bracket(Y, Y)
    assert r.support() == [(0, 0, 4), (0, 2, 2), (0, 4, 0), (2, 0, 2), (2, 2, 0), (4, 0, 0)]
    assert r.graded().is_zero()


def test_wrong_p0_breaks_mc(homogeneous):
    R = Ring()
    R.bind_p([Q(1), Q(2), Q(3)])
    R.set_structure({(2, 3): {1: 1}, (3, 1): {2: 1}, (1, 2): {3: 1}})
    x = homogeneous_element(R, (1, 1, 1), Q(2))
    X = F.FilteredSeries.from_element(x, order=6, flag=F.GRADED)
    r = F.assoc_graded_bracket(X, X)
    assert r.support() == [(0, 0, 0)]


def test_membership_violations():
    x = GlaElement({alg.find("σ1"): 1})
    with pytest.raises(F.FiltrationError):
        F.FilteredSeries({(0, 0, 0): x})
    F.FilteredSeries({(0, 1, 1): x})
    F.FilteredSeries({(1, 1, 1): x})
    with pytest.raises(F.FiltrationError):
        F.FilteredSeries({(1, 1, 1): x}, flag=F.GRADED)


def test_pp_requires_matching_damping():
    R = Ring()
    R.bind_p([R.function("p1"), R.function("p2"), R.function("p3")])
    x = GlaElement({alg.find("σ1"): R.damping(2) * R.damping(3) * R.tau()})
    F.FilteredSeries({(0, 1, 1): x}, flag=F.PP)
    with pytest.raises(F.FiltrationError):
        F.FilteredSeries({(0, 1, 1): x.scale(R.damping(1))}, flag=F.PP)


def test_flag_mismatch():
    x = F.FilteredSeries({(0, 0, 0): alg.element("t0*d0")})
    y = F.FilteredSeries({(0, 0, 0): alg.element("t0*d0")}, flag=F.GRADED)
    with pytest.raises(F.FiltrationError):
        F.rees_bracket(x, y)
    with pytest.raises(F.FiltrationError):
        F.assoc_graded_bracket(x, x)


def test_json_round_trip(homogeneous):
    R, x = homogeneous
    X = F.FilteredSeries.from_element(x, order=6)
    back = F.FilteredSeries.from_json(R, X.to_json(), order=6)
    assert back == X
    assert back.to_element(R) == x


# -- properties on random constant-coefficient series -------------------------

deg1 = [b for b in alg.by_degree[1]]


@st.composite
def series(draw, graded=False, D=4):
    terms = {}
    for _ in range(draw(st.integers(1, 4))):
        b = draw(st.sampled_from(deg1))
        g = alg.grade[b]
        extra = (0, 0, 0) if graded else draw(st.sampled_from([(0, 0, 0), (1, 0, 0), (0, 0, 1), (1, 1, 0)]))
        a = F.madd(g, extra)
        if F.total(a) > D:
            continue
        c = Q(draw(st.integers(-3, 3)))
        terms.setdefault(a, GlaElement())
        terms[a] = terms[a] + GlaElement({b: c})
    return F.FilteredSeries(terms, D, F.GRADED if graded else F.REES)


@settings(max_examples=40, deadline=None)
@given(series(graded=True), series(graded=True))
def test_graded_antisymmetry_degree_one(x, y):
    # odd with odd: [x, y] = -(-1)^(1*1) [y, x] = [y, x]
    assert (F.assoc_graded_bracket(x, y) - F.assoc_graded_bracket(y, x)).is_zero()


@settings(max_examples=40, deadline=None)
@given(series(), series(), st.integers(0, 4))
def test_truncation_commutes_with_bracket(x, y, D):
    lhs = F.rees_bracket(x, y).truncate(D)
    rhs = F.rees_bracket(x.truncate(D), y.truncate(D)).truncate(D)
    assert lhs == rhs
    assert not lhs.defects()
