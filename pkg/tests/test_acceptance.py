"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test records a single PASS/FAIL line (printed in the terminal summary).
"""
import time

import numpy as np
import pytest

from anosovlab import anosovrep as ar
from anosovlab import critical as cr
from anosovlab import patterson as pt
from anosovlab import skewflow as sf
from anosovlab import slgroup as sg
from anosovlab import thermo as th

GOLD = (1 + np.sqrt(5)) / 2


def test_criterion_01_pressure_oracles(acceptance):
    t0 = time.perf_counter()
    full2, gm = th.SubshiftOfFiniteType.full(2), th.SubshiftOfFiniteType.golden_mean()
    zero = th.BlockPotential.constant(full2, 0.0)
    e_transfer = abs(th.pressure_transfer(full2, zero) - np.log(2))
    e_orbits = abs(th.pressure_orbits(full2, zero, 14).value - np.log(2))
    e_golden = abs(th.pressure_transfer(gm, th.BlockPotential.constant(gm, 0.0)) - np.log(GOLD))
    ok = e_transfer < 1e-12 and e_orbits < 1e-2 and e_golden < 1e-12
    acceptance(1, "pressure oracles", ok,
               f"transfer err {e_transfer:.1e}, orbits err {e_orbits:.1e}, golden err {e_golden:.1e}",
               time.perf_counter() - t0, 1.0)


def test_criterion_02_pressure_derivative(acceptance):
    t0 = time.perf_counter()
    sft = th.SubshiftOfFiniteType.free_group(2)
    rng = np.random.default_rng(2024)
    t = 1e-4
    worst = 0.0
    for _ in range(20):
        f = th.BlockPotential.from_symbol_values(sft, rng.normal(size=4))
        g = th.BlockPotential.from_symbol_values(sft, rng.normal(size=4))
        exact = float(th.gibbs_measure(sft, f).expectation(g))
        fd = (th.pressure_transfer(sft, f + g.scale(t))
              - th.pressure_transfer(sft, f + g.scale(-t))) / (2 * t)
        worst = max(worst, abs(fd - exact) / abs(exact))
    acceptance(2, "pressure derivative", worst < 1e-6, f"max relative err {worst:.1e}",
               time.perf_counter() - t0, 10.0)


def test_criterion_03_entropy_homogeneity(acceptance):
    t0 = time.perf_counter()
    F = ar.ledrappier_potential(ar.schottky_sl2(), 8)
    f = F.contract([1.0])
    h = th.entropy_root(F.sft, f)
    hom = max(abs(th.entropy_root(F.sft, f.scale(s)) - h / s) for s in (0.5, 2.0, 10.0))
    closed = 0.0
    for k in (2, 3):
        sft = th.SubshiftOfFiniteType.free_group(k)
        for c in (0.5, 1.0, 3.0):
            root = th.entropy_root(sft, th.BlockPotential.constant(sft, c))
            closed = max(closed, abs(root - np.log(2 * k - 1) / c))
    acceptance(3, "entropy homogeneity and constant roof", hom < 1e-8 and closed < 1e-10,
               f"homogeneity err {hom:.1e}, closed form err {closed:.1e}",
               time.perf_counter() - t0, 5.0)


def test_criterion_04_cocycle_identities(acceptance):
    t0 = time.perf_counter()
    dims, theta = (3, 2), ((0, 1), (0, 2), (1, 1))
    dual = sg.GroupShape(dims, theta).dual_theta
    rng = np.random.default_rng(4)
    bus, gro = 0.0, 0.0
    for _ in range(1000):
        g, h = sg.random_element(dims, rng), sg.random_element(dims, rng)
        x = sg.random_flag(dims, theta, rng)
        lhs = sg.busemann(g @ h, x, theta)
        rhs = sg.busemann(h, x, theta) + sg.busemann(g, h.act(x), theta)
        bus = max(bus, np.max(np.abs(lhs - rhs)))
        xd = sg.random_flag(dims, theta, rng, dual=True)
        diff = sg.gromov_product(g.act(xd), g.act(x), theta) - sg.gromov_product(xd, x, theta)
        pred = -(sg.busemann(g, xd, dual) + sg.busemann(g, x, theta))
        gro = max(gro, np.max(np.abs(diff - pred)))
    acceptance(4, "Busemann cocycle and Gromov equivariance", bus < 1e-8 and gro < 1e-8,
               f"cocycle err {bus:.1e}, equivariance err {gro:.1e}", time.perf_counter() - t0, 5.0)


def test_criterion_05_ledrappier_periods(acceptance):
    t0 = time.perf_counter()
    rep = ar.schottky_sl2()
    F = ar.ledrappier_potential(rep, 12)
    pc = ar.period_check(rep, F, 8)
    ratio = float(np.max(np.abs(pc.periods - pc.jordan).max(axis=1) / pc.allowed))
    acceptance(5, "Ledrappier periods vs eigenvalues (m = 12, L <= 8)", pc.passed,
               f"{len(pc.words)} classes, max defect {pc.max_defect:.1e}, "
               f"worst defect/budget {ratio:.2f}", time.perf_counter() - t0, 60.0)


def test_criterion_06_jordan_cartan_bounded(acceptance):
    t0 = time.perf_counter()
    jc = ar.jordan_cartan_gap(ar.schottky_sl2(), 12)
    growth = jc.running_sup[11] / jc.running_sup[9] - 1
    acceptance(6, "Jordan-Cartan running sup (L 10 -> 12)", growth < 0.05,
               f"growth {100 * growth:.2f}%", time.perf_counter() - t0, 60.0)


def test_criterion_07_critical_identity(acceptance):
    t0 = time.perf_counter()
    rel = {}
    for name, phi in (("schottky_sl2", [1.0]), ("pair", [1.0, 1.0])):
        rep = ar.load_example(name)
        M = cr.model(rep, 8)
        assert ar.gap_profile(rep, 10).certified
        h = cr.entropy_of_functional(M, phi)
        est = cr.critical_exponent_count(rep, phi, 12)
        rel[name] = abs(est.delta - h) / h
    acceptance(7, "counting exponent equals pressure root (L = 12)",
               max(rel.values()) < 0.1,
               ", ".join(f"{k} rel diff {v:.2%}" for k, v in rel.items()),
               time.perf_counter() - t0, 120.0)


def test_criterion_08_manhattan_geometry(acceptance):
    t0 = time.perf_counter()
    base = cr.model(ar.schottky_sl2(), 8)
    h = cr.entropy_of_functional(base, [1.0])
    sp = cr.model(ar.self_product(ar.schottky_sl2()), 8)
    ang = np.linspace(0.05, np.pi / 2 - 0.05, 9)
    line = cr.manhattan_hypersurface(sp, np.stack([np.cos(ang), np.sin(ang)], 1))
    line_err = max(abs(p.phi.vector.sum() - h) for p in line)

    M = cr.model(ar.generic_pair(), 8)
    grid = cr.direction_grid(M, 12)
    triples = [(grid[i], grid[i + 1 + j], grid[i + 2 + 2 * j])
               for i in range(5) for j in range(2)][:10]
    below = [cr.convexity_triple(M, *tr) for tr in triples]
    convex = all(b.below >= -1e-9 and b.h_chord_mid <= 1 + 1e-6 for b in below)
    angles = [cr.tangency_audit(M, cr.critical_point(M, d)).angle for d in grid[2:10:3]]
    ok = line_err < 1e-6 and convex and len(below) == 10 and max(angles) < 1e-2
    acceptance(8, "Manhattan line, convexity and tangency", ok,
               f"line err {line_err:.1e}, min offset below chord {min(b.below for b in below):.2e}, "
               f"max tangent angle {max(angles):.1e} rad", time.perf_counter() - t0, 300.0)


@pytest.fixture(scope="module")
def schottky_delta():
    rep = ar.schottky_sl2()
    return rep, cr.entropy_of_functional(cr.model(rep, 8), [1.0])


def test_criterion_09_shadow_lemma(acceptance, schottky_delta):
    t0 = time.perf_counter()
    rep, delta = schottky_delta
    out = {}
    for L in (10, 12):
        nu = pt.patterson_sum(rep, [1.0], delta + 0.02, L)
        out[L] = pt.shadow_statistics(rep, [1.0], nu, 1.0, L, delta)
    slope = out[12].slope
    # bounded C / C': the central spread of log nu(shadow) + delta phi(a) is stable in L
    stable = out[12].spread_q < 1.5 * out[10].spread_q
    acceptance(9, "shadow lemma regression (L = 12)", 0.9 <= slope <= 1.1 and stable,
               f"slope {slope:.3f}, spread L=10 {out[10].spread_q:.2f}, L=12 {out[12].spread_q:.2f}",
               time.perf_counter() - t0, 120.0)


def test_criterion_10_quasi_invariance(acceptance, schottky_delta):
    t0 = time.perf_counter()
    rep, delta = schottky_delta
    tab = pt.quasi_invariance_test(rep, [1.0], [delta + 0.3, delta + 0.1, delta + 0.02],
                                   [8, 10, 12], [(1,), (2,), (-1,), (-2,)])
    frac = tab.decrease_fraction()
    acceptance(10, "quasi-invariance errors decrease along s and L", frac >= 0.8,
               f"strictly decreasing in {frac:.0%} of bins, max error {tab.max_error():.1e}",
               time.perf_counter() - t0, 120.0)


def test_criterion_11_skew_dichotomy(acceptance):
    t0 = time.perf_counter()
    targets = {1: (0.5, 0.15), 2: (1.0, 0.2), 3: (1.5, 0.25)}
    alphas, ok = {}, True
    for D, (target, tol) in targets.items():
        cm = sf.coin_model(D)
        fit = sf.mixing_exponent(cm.sft, cm.chain, cm.K, 2.0, 400, 100_000, seed=D)
        alphas[D] = fit.alpha
        ok &= fit.applicable and abs(fit.alpha - target) < tol
    verdicts = {}
    for D in (1, 3):
        cm = sf.coin_model(D)
        verdicts[D] = sf.recurrence_stats(cm.sft, cm.chain, cm.K, 2.0, 400, 100_000,
                                          seed=10 + D).verdict
    ok &= verdicts[1] == "recurrent" and verdicts[3] == "transient"
    acceptance(11, "skew-product dichotomy", ok,
               ", ".join(f"alpha(D={D}) {a:.3f}" for D, a in alphas.items())
               + f", verdicts {verdicts[1]}/{verdicts[3]}", time.perf_counter() - t0, 600.0)


def test_criterion_12_conical_survey(acceptance):
    t0 = time.perf_counter()
    two = sf.conical_mass_survey(ar.load_example("pair"), [1.0, 1.0], 0.5, 1000, 1000, seed=12)
    four = sf.conical_mass_survey(ar.load_example("product4"), [1.0] * 4, 0.5, 1000, 1000,
                                  seed=12)
    three = sf.conical_mass_survey(ar.load_example("product3"), [1.0] * 3, 0.5, 300, 500,
                                   seed=12)
    f2 = [two.fractions[h] for h in two.horizons]
    f4 = [four.fractions[h] for h in four.horizons]
    ok = (f2[1] >= f2[0] and f4[1] <= f4[0]
          and two.verdict == "conical mass -> 1" and four.verdict == "conical mass -> 0"
          and three.label == sf.PAPER_OPEN and three.verdict is None)
    acceptance(12, "conical survey |theta| = 2 vs 4", ok,
               f"|theta|=2 {f2[0]:.3f} -> {f2[1]:.3f}, |theta|=4 {f4[0]:.3f} -> {f4[1]:.3f}, "
               f"|theta|=3 label {three.label}", time.perf_counter() - t0, 600.0)


def test_criterion_13_livsic(acceptance):
    t0 = time.perf_counter()
    sft = th.SubshiftOfFiniteType.free_group(2)
    rng = np.random.default_rng(13)
    F = th.BlockPotential(sft, 3, rng.normal(size=(len(sft.blocks(3)), 2)))
    u = th.BlockPotential(sft, 3, rng.normal(size=(len(sft.blocks(3)), 2)))
    cob = th.livsic_test(sft, F, F + u.shifted() - u, 8)
    c = np.array([0.6, -0.8])
    const = th.livsic_test(sft, F, F + c, 8)
    ok = cob < 1e-12 and abs(const - np.linalg.norm(c)) < 1e-12
    acceptance(13, "Livsic coboundary detection", ok,
               f"coboundary {cob:.1e}, constant {const:.12f} (expected 1)",
               time.perf_counter() - t0, 5.0)
