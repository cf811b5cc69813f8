import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anosovlab import slgroup as sg

GOLD = (1 + 5 ** 0.5) / 2
seeds = st.integers(0, 2 ** 32 - 1)


def el(*mats):
    return sg.GroupElement([np.asarray(m, float) for m in mats])


def test_group_shape_validation():
    shape = sg.GroupShape((3, 2), ((0, 1), (1, 1)))
    assert shape.cartan_dim == 3
    assert shape.dual_theta == ((0, 2), (1, 1))
    with pytest.raises(ValueError):
        sg.GroupShape((3,), ())
    with pytest.raises(ValueError):
        sg.GroupShape((3,), ((0, 3),))


def test_determinant_normalized():
    g = el([[2.0, 1.0], [0.0, 3.0]])
    assert abs(np.linalg.det(g.mats[0]) - 1) < 1e-10


def test_cartan_examples():
    c = sg.cartan(sg.GroupElement.identity([2]), [(0, 1)])
    assert np.allclose(c.a[0], 0) and c.approximate
    c = sg.cartan(el(np.diag([np.e ** 2, np.e ** -2])), [(0, 1)])
    assert np.allclose(c.a[0], [2, -2]) and abs(c.gaps[(0, 1)] - 4) < 1e-12
    assert np.allclose(np.abs(c.attractor[(0, 1)][:, 0]), [1, 0])
    c = sg.cartan(el([[2, 1], [1, 1]]), [(0, 1)])
    assert np.allclose(c.a[0], [2 * np.log(GOLD), -2 * np.log(GOLD)], atol=1e-12)


def test_jordan_examples():
    lam = sg.jordan(el([[2, 1], [1, 1]]))
    assert np.allclose(lam[0], [2 * np.log(GOLD), -2 * np.log(GOLD)], atol=1e-12)
    rng = np.random.default_rng(1)
    g = sg.random_element([3, 2], rng)
    for n in range(1, 6):
        for a, b in zip(sg.jordan(g ** n), sg.jordan(g)):
            assert np.allclose(a, n * b, atol=1e-8)


def test_jordan_is_limit_of_cartan():
    P = np.array([[1.0, 0.4, 0.2], [0.3, 1.0, 0.5], [0.1, 0.6, 1.0]])
    g = P @ np.diag([3.0, 1.0, 1 / 3]) @ np.linalg.inv(P)
    lam = np.cumsum(sg.jordan(sg.GroupElement([g]))[0])[:2]
    assert np.allclose(lam, [np.log(3), np.log(3)], atol=1e-12)

    def varpi(n):
        # varpi_j(a(g^n)) = log |Lambda^j g^n|, powers taken inside Lambda^j
        return np.array([np.log(np.linalg.norm(np.linalg.matrix_power(sg.ext_power(g, j), n), 2))
                         for j in (1, 2)])

    # n (varpi(a(g^n))/n - varpi(lambda)) converges geometrically to -G(g^-, g^+)
    e60, e120 = varpi(60) - 60 * lam, varpi(120) - 120 * lam
    assert np.max(np.abs(e60 - e120)) < 1e-6
    assert np.max(np.abs(varpi(60) / 60 - lam)) < 0.05


def test_opposition():
    assert np.allclose(sg.opposition(np.array([1.5, -1.5])), [1.5, -1.5])
    assert np.allclose(sg.opposition(np.array([3, 1, -4])), [4, -1, -3])


@given(seeds)
def test_opposition_involution_and_inverse(seed):
    rng = np.random.default_rng(seed)
    g = sg.random_element([2, 3, 4], rng)
    a = sg.cartan(g).a
    ainv = sg.cartan(g.inv).a
    for x, y in zip(sg.opposition(a), ainv):
        assert np.allclose(x, y, atol=1e-9)
    for x, y in zip(sg.opposition(sg.opposition(a)), a):
        assert np.allclose(x, y)


def test_ext_power_examples():
    g = np.diag([2.0, 3.0, 5.0])
    assert np.allclose(sg.ext_power(g, 2), np.diag([6.0, 10.0, 15.0]))
    rng = np.random.default_rng(0)
    h = sg.random_sl(4, rng)
    assert np.allclose(sg.ext_power(h, 1), h)
    with pytest.raises(ValueError):
        sg.ext_power(h, 4)


@given(seeds)
def test_ext_power_functorial_and_norm(seed):
    rng = np.random.default_rng(seed)
    g, h = sg.random_sl(4, rng), sg.random_sl(4, rng)
    for j in (1, 2, 3):
        assert np.allclose(sg.ext_power(g @ h, j), sg.ext_power(g, j) @ sg.ext_power(h, j),
                           atol=1e-8 * max(1, np.abs(sg.ext_power(g @ h, j)).max()))
    s = np.linalg.svd(g, compute_uv=False)
    top = np.linalg.svd(sg.ext_power(g, 2), compute_uv=False)[0]
    assert abs(top - s[0] * s[1]) < 1e-8 * top


def test_busemann_examples():
    t = 0.7
    g = el(np.diag([np.exp(t), np.exp(-t)]))
    x1 = sg.FlagPoint({(0, 1): np.array([[1.0], [0.0]])})
    x2 = sg.FlagPoint({(0, 1): np.array([[0.0], [1.0]])})
    assert np.allclose(sg.busemann(g, x1, [(0, 1)]), [t])
    assert np.allclose(sg.busemann(g, x2, [(0, 1)]), [-t])


def _random_triples(count, seed, dims=(3, 2), theta=((0, 1), (0, 2), (1, 1))):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        yield (sg.random_element(dims, rng), sg.random_element(dims, rng),
               sg.random_flag(dims, theta, rng))


def test_busemann_cocycle_on_1000_triples():
    theta = ((0, 1), (0, 2), (1, 1))
    worst = 0.0
    for g, h, x in _random_triples(1000, 7):
        lhs = sg.busemann(g @ h, x, theta)
        rhs = sg.busemann(h, x, theta) + sg.busemann(g, h.act(x), theta)
        worst = max(worst, np.max(np.abs(lhs - rhs)))
    assert worst < 1e-9


def test_gromov_examples():
    th = [(0, 1)]
    e1 = np.array([[1.0], [0.0]])
    e2 = np.array([[0.0], [1.0]])
    # the dual flag of e1* is its kernel, the line e2
    x = sg.FlagPoint({(0, 1): e2})
    assert np.allclose(sg.gromov_product(x, sg.FlagPoint({(0, 1): e1}), th), [0.0])
    t = 0.4
    y = sg.FlagPoint({(0, 1): np.array([[np.cos(t)], [np.sin(t)]])})
    assert np.allclose(sg.gromov_product(x, y, th), [np.log(np.cos(t))])
    assert sg.gromov_product(x, sg.FlagPoint({(0, 1): e2}), th)[0] == sg.NON_TRANSVERSE


def test_gromov_equivariance_on_1000_pairs():
    dims, theta = (3, 2), ((0, 1), (1, 1))
    shape = sg.GroupShape(dims, theta)
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(1000):
        g = sg.random_element(dims, rng)
        x = sg.random_flag(dims, theta, rng, dual=True)
        y = sg.random_flag(dims, theta, rng)
        lhs = sg.gromov_product(g.act(x), g.act(y), theta) - sg.gromov_product(x, y, theta)
        rhs = -(sg.busemann(g, x, shape.dual_theta) + sg.busemann(g, y, theta))
        worst = max(worst, np.max(np.abs(lhs - rhs)))
        assert np.all(sg.gromov_product(x, y, theta) <= 1e-12)
    assert worst < 1e-8


@given(seeds)
@settings(max_examples=50)
def test_subadditivity(seed):
    rng = np.random.default_rng(seed)
    theta = [(0, 1), (0, 2), (1, 1)]
    g, h = sg.random_element([3, 2], rng, 2.0), sg.random_element([3, 2], rng, 2.0)
    om = lambda x: sg.cartan(x, theta).omega()
    assert np.all(om(g @ h) <= om(g) + om(h) + 1e-9)


def test_batch_functions_match_scalar():
    rng = np.random.default_rng(2)
    theta = [(0, 1), (0, 2), (1, 1)]
    els = [sg.random_element([3, 2], rng) for _ in range(20)]
    mats = [np.stack([e.mats[i] for e in els]) for i in range(2)]
    om = sg.cartan_omega_batch(mats, theta)
    for k, e in enumerate(els):
        assert np.allclose(om[k], sg.cartan(e, theta).omega(), atol=1e-10)
    att = sg.attractors_batch(mats, theta)
    for k, e in enumerate(els):
        c = sg.cartan(e, theta)
        for s in theta:
            assert sg.principal_angle_batch(att[s][k], c.attractor[s]) < 1e-8


def test_attractor_perturbation_bound():
    rng = np.random.default_rng(9)
    theta = [(0, 1), (0, 2)]
    checked = 0
    for _ in range(200):
        g = sg.random_element([3], rng)
        h = sg.random_element([3], rng, 3.0)
        lhs, rhs = sg.lemma_attractor_bound(g, h, theta)
        assert lhs <= rhs + 1e-12
        checked += 1
    assert checked == 200


def test_cartan_basin():
    g = el(np.diag([np.exp(3), np.exp(-3)]))
    th = [(0, 1)]
    own = sg.cartan(g, th).attractor
    assert sg.cartan_basin_test(g, own, 0.1, th).inside
    # g^-1's top direction is e2; the basin excludes the line transverse-failing flag
    bad = sg.FlagPoint({(0, 1): np.array([[0.0], [1.0]])})
    assert not sg.cartan_basin_test(g, bad, 100.0, th).inside


def test_basin_defect_monotone_in_alpha():
    rng = np.random.default_rng(4)
    th = [(0, 1), (1, 1)]
    g = sg.random_element([2, 2], rng, 3.0)
    ys = [sg.random_flag([2, 2], th, rng) for _ in range(400)]
    sups = []
    for alpha in (0.5, 1.0, 2.0, 4.0):
        vals = [r.defect for r in (sg.cartan_basin_test(g, y, alpha, th) for y in ys) if r.inside]
        sups.append(max(vals) if vals else 0.0)
    assert all(np.isfinite(sups))
    assert all(a <= b + 1e-12 for a, b in zip(sups, sups[1:]))
    # the defect in the basin is bounded by alpha itself (rank one factors)
    assert sups[-1] <= 4.0 + 1e-9


def test_proximality_examples():
    g = el(np.diag([np.e ** 2, np.e ** -2]))
    r = sg.proximality_report(g, [(0, 1)], 0.1, 0.1)
    assert r.proximal and abs(r.defect) < 1e-12
    assert np.allclose(np.abs(r.g_plus[(0, 1)][:, 0]), [1, 0])
    rot = el([[0.0, -1.0], [1.0, 0.0]])
    assert not sg.proximality_report(rot, [(0, 1)], 0.1, 0.1).proximal


def test_proximality_defect_decays_along_powers():
    g = el([[2.0, 1.0, 0.3], [0.5, 1.0, 0.2], [0.1, 0.3, 0.9]])
    th = [(0, 1), (0, 2)]
    d = [sg.proximality_report(g ** n, th, 0.01, 0.01).defect for n in (1, 2, 4, 8, 12, 16)]
    assert d[-1] < 1e-4
    assert all(b <= a + 1e-12 for a, b in zip(d, d[1:]))


def test_quint_defect():
    th = [(0, 1)]
    h = el(np.diag([np.exp(2), np.exp(-2)]))
    assert sg.quint_defect(sg.GroupElement.identity([2]), h, th) < 1e-12
    assert sg.quint_defect(el(np.diag([np.exp(0.5), np.exp(-0.5)])), h, th) < 1e-12
    g = el([[1.0, 0.7], [0.2, 1.3]])
    w = el([[1.5, 0.4], [0.3, 0.9]])
    d = [sg.quint_defect(g, w ** n, th) for n in range(1, 30, 4)]
    assert all(b <= a + 1e-12 for a, b in zip(d, d[1:]))
    assert d[-1] < 1e-6


def test_flag_json_roundtrip():
    rng = np.random.default_rng(0)
    x = sg.random_flag([3, 2], [(0, 1), (1, 1)], rng)
    y = sg.FlagPoint.from_json(x.to_json())
    assert sg.flag_distance(x, y) < 1e-12


def test_principal_angle_accuracy_for_small_angles():
    t = 1e-9
    a = np.array([[1.0], [0.0]])
    b = np.array([[np.cos(t)], [np.sin(t)]])
    assert abs(sg.principal_angle_batch(a, b) - t) < 1e-15


@given(seeds)
@settings(max_examples=30)
def test_functional_invariance(seed):
    rng = np.random.default_rng(seed)
    theta = ((0, 1),)
    phi = sg.Functional((1.3,), theta)
    a = [rng.normal(size=3)]
    a[0] -= a[0].mean()
    # adding a vector killed by varpi_1: (0, t, -t)
    t = rng.normal()
    b = [a[0] + np.array([0.0, t, -t])]
    assert abs(phi.on_cartan(a) - phi.on_cartan(b)) < 1e-12
