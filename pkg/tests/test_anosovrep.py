import json

import numpy as np
import pytest

from anosovlab import anosovrep as ar
from anosovlab import slgroup as sg
from anosovlab.words import conjugacy_array, random_rays, reduce


@pytest.fixture(scope="module")
def schottky():
    return ar.schottky_sl2()


@pytest.fixture(scope="module")
def ledrappier10(schottky):
    return ar.ledrappier_potential(schottky, 10)


def test_evaluation_cache_coherence(schottky):
    rng = np.random.default_rng(0)
    for _ in range(20):
        w = random_rays(2, 9, 1, seed=int(rng.integers(1 << 30)))[0]
        prod = np.eye(2)
        for x in w:
            prod = prod @ schottky.letter(int(x)).mats[0]
        assert np.allclose(schottky(w).mats[0], prod, rtol=1e-12, atol=1e-9)
        assert np.allclose(schottky(w).mats[0], prod)
    letters, mats = schottky.sphere(4)
    for k in (0, 17, len(letters) - 1):
        assert np.allclose(mats[0][k], schottky(letters[k]).mats[0])


def test_rep_json_roundtrip(tmp_path, schottky):
    p = tmp_path / "rep.json"
    schottky.save(p)
    back = ar.Representation.load(p)
    assert back.dims == schottky.dims and back.theta == schottky.theta
    assert np.allclose(back.symbol_mats[0], schottky.symbol_mats[0])
    with pytest.raises(ValueError):
        ar.Representation.from_json({"factor_dims": [2]})


def test_bundled_examples_match_builders():
    for name, build in ar.EXAMPLES.items():
        a, b = ar.load_example(name), build()
        assert a.dims == b.dims and a.theta == b.theta
        for x, y in zip(a.symbol_mats, b.symbol_mats):
            assert np.allclose(x, y, rtol=1e-14)


def test_gap_profile_certifies_schottky(schottky):
    gp = ar.gap_profile(schottky, 10)
    assert gp.certified and gp.mu > 0.5
    # envelope lies above mu n - c on the table
    assert np.all(gp.min_gaps >= gp.mu * gp.lengths - gp.c - 1e-12)


def test_gap_profile_trivial_rep_not_certified():
    gp = ar.gap_profile(ar.trivial_rep(), 6)
    assert not gp.certified
    assert np.allclose(gp.min_gaps, 0)


def test_gap_profile_product_is_min_of_factors():
    f1 = ar.schottky_sl2(*ar.PRODUCT_FACTORS[0])
    f2 = ar.schottky_sl2(*ar.PRODUCT_FACTORS[1])
    pair = ar.generic_pair()
    g1, g2, gp = ar.gap_profile(f1, 10), ar.gap_profile(f2, 10), ar.gap_profile(pair, 10)
    assert gp.certified
    assert np.allclose(gp.per_root[:, 0], g1.min_gaps)
    assert np.allclose(gp.per_root[:, 1], g2.min_gaps)
    assert np.allclose(gp.min_gaps, np.minimum(g1.min_gaps, g2.min_gaps))
    assert min(g1.mu, g2.mu) - 0.1 <= gp.mu <= max(g1.mu, g2.mu)


def test_limit_flag_of_diagonal_ray_is_fixed():
    rep = ar.diagonal_cyclic()
    lf = ar.limit_flag(rep, [1] * 8, 8)
    assert np.allclose(np.abs(lf.flag[(0, 1)][:, 0]), [1, 0])
    assert np.nanmax(lf.estimates) < 1e-14


def test_limit_flag_errors(schottky):
    with pytest.raises(ValueError):
        ar.limit_flag(schottky, [1, 2], 1)
    with pytest.raises(ar.UndefinedAttractor) as info:
        ar.limit_flag(ar.trivial_rep(), [1, 2, 1], 3)
    assert info.value.index == 1


def test_cauchy_rate_matches_envelope_slope(schottky):
    gp = ar.gap_profile(schottky, 12)
    letters, mats = schottky.sphere(12)
    worst = letters[np.argmin(sg.root_gaps_batch(mats, schottky.theta).min(axis=1))]
    est = ar.limit_flag(schottky, worst, 12).estimates[1:]
    rate = -np.polyfit(np.arange(2, 13), np.log(est), 1)[0]
    assert gp.mu - 0.5 <= rate <= gp.mu + 0.5


def test_cauchy_estimates_decay_on_random_rays(schottky):
    for ray in random_rays(2, 20, 10, seed=3):
        est = ar.limit_flag(schottky, ray, 20).estimates[1:]
        assert est[-1] < 1e-5
        assert est[-1] < est[5] * 1e-3


def test_limit_flags_are_equivariant(schottky):
    g = np.array([[1.2, 0.3], [-0.4, 0.9]])
    g = g / np.sqrt(np.linalg.det(g))
    conj = schottky.conjugate(sg.GroupElement([g]))
    for ray in random_rays(2, 20, 5, seed=8):
        x = ar.limit_flag(schottky, ray, 20).flag
        y = ar.limit_flag(conj, ray, 20).flag
        gx = sg.GroupElement([g]).act(x)
        assert sg.flag_distance(gx, y) < 1e-6


def test_transversality_finite_on_schottky(schottky):
    rpt = ar.transversality_audit(schottky, 30, 14, seed=1)
    assert not rpt.violation and np.isfinite(rpt.min_value)
    json.dumps(rpt.to_json())


def test_transversality_rank_one_is_log_sine(schottky):
    a = np.array([[1] * 16])
    b = np.array([[2] * 16])
    val = ar.gromov_matrix(schottky, a, b)[0, 0]
    # xi(a^inf) = e1, xi(b^inf) = R e1 with R the rotation by pi/4
    assert abs(val - np.log(np.sin(np.pi / 4))) < 1e-9


def test_transversality_shrinks_with_agreement(schottky):
    vals = []
    for k in range(1, 8):
        x = np.array([[1] * k + [2] * (16 - k)])
        y = np.array([[1] * k + [-2] * (16 - k)])
        vals.append(ar.gromov_matrix(schottky, x, y)[0, 0])
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_transversality_violation_reported():
    # a reducible rep: both generators fix e1, so all limit flags coincide
    up = np.array([[np.e, 1.0], [0.0, 1 / np.e]])
    up2 = np.array([[np.e ** 1.5, -0.7], [0.0, np.e ** -1.5]])
    rep = ar.Representation([[up], [up2]], [(0, 1)], "borel")
    # the attractors approach e1 like e^{-2n}; by depth 24 the pairing is below
    # the sentinel threshold
    rays = np.array([[1] * 24, [2] * 24])
    rpt = ar.transversality_audit(rep, 2, 24, rays=rays)
    assert rpt.violation
    assert rpt.to_json()["min_value"] is None


def test_limit_cone_examples(schottky):
    c1 = ar.limit_cone(schottky, 6)
    assert c1.dim == 1 and np.allclose(c1.directions, 1.0)
    sp = ar.self_product(schottky)
    c2 = ar.limit_cone(sp, 7)
    assert np.max(np.abs(c2.directions[:, 0] - c2.directions[:, 1])) < 1e-9
    assert c2.dim == 1


def test_limit_cone_generic_pair_stable():
    pair = ar.generic_pair()
    c10, c11 = ar.limit_cone(pair, 10), ar.limit_cone(pair, 11)
    assert c10.dim == 2 and c10.interval[1] - c10.interval[0] > 0.1
    for a, b in zip(c10.interval, c11.interval):
        assert abs(a - b) <= 0.05 * abs(a)
    assert all(c11.contains(d) for d in c11.directions)
    mid = np.mean(c11.interval)
    assert c11.contains([np.cos(mid), np.sin(mid)])
    assert not c11.contains([1.0, -0.2])


def test_limit_cone_hull_in_higher_dimension():
    rep = ar.schottky_product(3)
    cone = ar.limit_cone(rep, 6)
    assert cone.extreme is not None and cone.dim == 3
    assert all(cone.contains(d, tol=1e-8) for d in cone.directions)


def test_jordan_cartan_gap_diagonal_is_zero():
    jc = ar.jordan_cartan_gap(ar.diagonal_cyclic(), 8)
    assert np.max(jc.running_sup) < 1e-12


def test_jordan_cartan_gap_plateaus(schottky):
    jc = ar.jordan_cartan_gap(schottky, 12)
    assert jc.running_sup[-1] / jc.running_sup[7] < 1.2
    assert jc.growth() < 0.05
    ctl = ar.jordan_cartan_gap(schottky, 12, cyclic_only=False)
    # conjugation distortion: the gap over all words keeps growing
    assert ctl.running_sup[-1] > 2 * jc.running_sup[-1]
    assert ctl.growth() > 0.05


def test_ray_omega_matches_direct_cartan():
    pair = ar.generic_pair()
    rays = random_rays(2, 25, 4, seed=2)
    om = ar.ray_omega(pair, rays)
    for r, ray in enumerate(rays):
        for n in (1, 7, 25):
            direct = sg.cartan(pair(ray[:n]), pair.theta).omega()
            assert np.allclose(om[r, n - 1], direct, atol=1e-8)


def test_ledrappier_diagonal_is_constant():
    rep = ar.diagonal_cyclic()
    F = ar.ledrappier_potential(rep, 6)
    # blocks a^7 and A^7; varpi_1(lambda(a^-1)) = varpi_1(lambda(a)) = 1 in SL(2)
    assert len(F.blocks) == 2
    assert np.allclose(F.values, 1.0, atol=1e-14)


def test_ledrappier_commutator_period(schottky):
    w = reduce([1, 2, -1, -2], 2)
    lam = sg.jordan_omega_batch([schottky(w).mats[0][None]], schottky.theta)[0]
    errs = []
    for m in (10, 11, 12):
        F = ar.ledrappier_potential(schottky, m)
        errs.append(np.max(np.abs(F.period(w) - lam)))
        # within the declared budget: four blocks along the period
        assert errs[-1] <= 4 * F.max_error
    assert errs[-1] < 1e-4
    assert errs[2] < errs[1] < errs[0]


def test_ledrappier_refinement_contracts(schottky):
    tops = [ar.ledrappier_potential(schottky, m).refinement.max() for m in (5, 6, 7, 8)]
    ratios = [b / a for a, b in zip(tops, tops[1:])]
    assert all(r < 0.6 for r in ratios)


def test_ledrappier_period_check(schottky, ledrappier10):
    pc = ar.period_check(schottky, ledrappier10, 7)
    assert pc.passed
    assert pc.max_defect < 1e-3


def test_ledrappier_telescoping(schottky, ledrappier10):
    F = ledrappier10
    m = F.depth
    rng = np.random.default_rng(5)
    n = 6
    for ray in random_rays(2, n + m, 20, seed=int(rng.integers(1 << 30))):
        from anosovlab.words import letter_to_symbol
        syms = letter_to_symbol(ray, 2)
        windows = np.lib.stride_tricks.sliding_window_view(syms, m + 1)[:n]
        S = F.evaluate(windows).sum(axis=0)
        head = schottky(ray[:n])
        tail = ar.limit_flag(schottky, ray[n:], m).flag
        direct = sg.busemann(head, tail, schottky.theta)
        assert np.max(np.abs(S - direct)) <= n * F.max_error + 1e-12


def test_ledrappier_json(ledrappier10):
    data = json.loads(json.dumps(ledrappier10.to_json()))
    assert data["depth"] == 10 and len(data["table"]) == 4 * 3 ** 10
    assert data["max_truncation_error"] > 0


def test_ledrappier_rejects_shallow_depth(schottky):
    with pytest.raises(ValueError):
        ar.ledrappier_potential(schottky, 3)


def test_quint_defect_along_prefixes(schottky):
    ray = random_rays(2, 16, 1, seed=9)[0]
    g = schottky.letter(1)
    d = [sg.quint_defect(g, schottky(ray[:n]), schottky.theta) for n in range(2, 16)]
    assert d[-1] < 1e-6
