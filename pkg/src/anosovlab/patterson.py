"""Patterson measures on flag spaces, built by orbit summation.

``nu_s`` puts mass ``e^{-s phi(a(rho(gamma)))}`` on the Cartan attractor
``U_theta(rho(gamma))`` of every ``gamma`` in a ball. Quasi-invariance,
shadow estimates, covering multiplicities and Bowen-Margulis pair weights
are all evaluated on these finite atomic measures.

For representations into SL(2, R) a flag is a line, parametrized by its
angle in ``[0, pi)``; shadows are arcs and the shadow and covering
computations use sorted angles. Other groups go through a generic (slower)
membership test.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
import scipy.stats

from . import anosovrep as ar
from . import slgroup as sg
from .slgroup import Functional
from .words import words_to_codes


def _coeffs(phi) -> np.ndarray:
    return phi.vector if isinstance(phi, Functional) else np.asarray(phi, float)


@dataclass
class AtomicMeasure:
    """Finitely many weighted flags, one per group element of a ball."""
    words: np.ndarray            # (N, L) letters, zero padded
    lengths: np.ndarray          # (N,) word lengths
    planes: dict                 # root -> (N, d, k) orthonormal bases
    weights: np.ndarray          # (N,) normalized, positive
    provenance: dict
    sphere_mass: np.ndarray      # normalized mass per radius 0..L
    skipped: int = 0
    dual: bool = False

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def tail_mass(self) -> float:
        return float(self.sphere_mass[-1])

    def is_sl2(self) -> bool:
        return len(self.planes) == 1 and next(iter(self.planes.values())).shape[1:] == (2, 1)

    def angles(self) -> np.ndarray:
        """Angles in [0, pi) of the lines (SL(2) only)."""
        if not self.is_sl2():
            raise ValueError("angles are defined for SL(2) line measures")
        v = next(iter(self.planes.values()))[:, :, 0]
        return np.mod(np.arctan2(v[:, 1], v[:, 0]), np.pi)

    def integrate(self, values: np.ndarray) -> float:
        return float(self.weights @ values)

    def cylinder_mass(self, prefix) -> float:
        p = np.asarray(prefix)
        k = len(p)
        sel = (self.lengths >= k) & np.all(self.words[:, :k] == p, axis=1)
        return float(self.weights[sel].sum())

    def to_json(self) -> dict:
        atoms = []
        for n in range(self.size):
            w = self.words[n, :self.lengths[n]]
            atoms.append({"word": [int(x) for x in w], "weight": float(self.weights[n]),
                          "flag": {f"{i},{j}": p[n].tolist() for (i, j), p in self.planes.items()}})
        return {"provenance": self.provenance, "skipped": self.skipped,
                "sphere_mass": self.sphere_mass.tolist(), "atoms": atoms}

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def patterson_sum(rep: ar.Representation, phi, s: float, L: int, complete_tail: bool = False,
                  dual: bool = False, gap_tol: float = 1e-9) -> AtomicMeasure:
    """nu_s over the ball of radius L.

    ``dual=True`` builds the measure on the opposite flag space: atoms
    ``U_{i theta}(rho(gamma))`` with weights ``e^{-s phi(a_theta(rho(gamma)^-1))}``.

    ``complete_tail=True`` multiplies the weights of the outermost sphere by
    ``1 / (1 - q)``, ``q`` the ratio of the last two sphere masses. This
    stands in for the mass of all longer words, whose attractors lie close
    to those of their length-L prefixes.
    """
    c = _coeffs(phi)
    theta_w = rep.dual_theta if dual else rep.theta
    if L == 0:
        d_planes = {}
        for i, j in rep.theta:
            d = rep.dims[i]
            key, k = ((i, d - j), d - j) if dual else ((i, j), j)
            d_planes[key] = np.eye(d)[None, :, :k]
        return AtomicMeasure(np.zeros((1, 0), dtype=np.int8), np.zeros(1, dtype=int), d_planes,
                             np.ones(1), {"s": s, "L": 0, "phi": c.tolist()}, np.ones(1), 0, dual)
    words, lengths, planes, logw, skipped, masses = [], [], [], [], 1, [0.0]
    for n in range(1, L + 1):
        letters, mats = rep.sphere(n)
        om = sg.cartan_omega_batch(mats, theta_w)
        gaps = sg.root_gaps_batch(mats, rep.theta).min(axis=1)
        keep = gaps > gap_tol
        skipped += int((~keep).sum())
        lw = -s * (om[keep] @ c)
        pl = sg.attractors_batch([m[keep] for m in mats], rep.theta, dual=dual)
        padded = np.zeros((int(keep.sum()), L), dtype=np.int8)
        padded[:, :n] = letters[keep]
        words.append(padded)
        lengths.append(np.full(len(padded), n))
        planes.append(pl)
        logw.append(lw)
    if not any(len(lw) for lw in logw):
        raise ValueError(f"attractor undefined for all {skipped} elements of the ball")
    top = max(lw.max() for lw in logw if len(lw))
    w = [np.exp(lw - top) for lw in logw]
    sphere = np.array([0.0] + [x.sum() for x in w])
    completed = False
    if complete_tail and L >= 2 and sphere[-2] > 0:
        q = sphere[-1] / sphere[-2]
        if q < 1:
            w[-1] = w[-1] / (1 - q)
            sphere[-1] = w[-1].sum()
            completed = True
    weights = np.concatenate(w)
    Z = weights.sum()
    merged = {key: np.concatenate([p[key] for p in planes]) for key in planes[0]}
    prov = {"s": float(s), "L": int(L), "phi": c.tolist(), "dual": dual,
            "tail_completed": completed, "log_normalizer": float(np.log(Z) + top)}
    return AtomicMeasure(np.concatenate(words), np.concatenate(lengths), merged, weights / Z,
                         prov, sphere / Z, skipped, dual)


def sphere_fraction(nu: AtomicMeasure, k: int) -> float:
    """Mass carried by spheres of radius >= L - k."""
    return float(nu.sphere_mass[max(0, len(nu.sphere_mass) - 1 - k):].sum())


# ---------------------------------------------------------------------------
# quasi-invariance

@dataclass
class QuasiInvarianceTable:
    s_values: list
    L_values: list
    etas: list
    bins: list
    errors: np.ndarray            # (len(etas), len(bins), len(s), len(L))
    empty: list                   # (eta index, bin index) pairs never hit

    def decrease_fraction(self) -> float:
        """Fraction of (eta, bin) cells whose error strictly decreases along
        s (at the largest L) and along L (at the smallest s)."""
        e = self.errors
        along_s = np.all(np.diff(e[:, :, :, -1], axis=2) < 0, axis=2)
        along_L = np.all(np.diff(e[:, :, 0, :], axis=2) < 0, axis=2)
        ok = along_s & along_L
        mask = np.ones(ok.shape, dtype=bool)
        for a, b in self.empty:
            mask[a, b] = False
        return float(ok[mask].mean()) if mask.any() else 0.0

    def max_error(self) -> float:
        return float(np.nanmax(self.errors))


def _prefix_bins(rank: int, depth: int) -> list:
    from .words import sphere_array
    return [tuple(int(x) for x in row) for row in sphere_array(rank, depth)]


@dataclass
class _QIData:
    """Per-sphere ingredients of the quasi-invariance sums for one eta."""
    eta_len: int
    n_bins: int
    spheres: list                 # per radius n: (phi_a, phi_a_lhs, phi_beta, bin index) or None


def _qi_data(rep: ar.Representation, c: np.ndarray, eta: tuple, L: int, bins: list) -> _QIData:
    ge = rep(eta).inv
    depth = len(bins[0]) if bins else 0
    raw = words_to_codes(np.array(bins), rep.rank)
    order = np.argsort(raw)
    codes_sorted = raw[order]
    spheres = []
    for n in range(1, L + 1):
        letters, mats = rep.sphere(n)
        phi_a = sg.cartan_omega_batch(mats, rep.theta) @ c
        if not (len(eta) < n and n >= depth):
            spheres.append((phi_a, None, None, None))
            continue
        prod = [gm @ m for gm, m in zip(ge.mats, mats)]
        phi_lhs = sg.cartan_omega_batch(prod, rep.theta) @ c
        planes = sg.attractors_batch(mats, rep.theta)
        beta = sg.busemann_batch([np.broadcast_to(gm, m.shape) for gm, m in zip(ge.mats, mats)],
                                 planes, rep.theta) @ c
        codes = words_to_codes(letters[:, :depth], rep.rank)
        pos = np.minimum(np.searchsorted(codes_sorted, codes), len(bins) - 1)
        idx = np.where(codes_sorted[pos] == codes, order[pos], -1)
        spheres.append((phi_a, phi_lhs, beta, idx))
    return _QIData(len(eta), len(bins), spheres)


def _qi_errors(data: _QIData, s: float, L: int, kappa: float) -> np.ndarray:
    Z = 0.0
    lhs = np.zeros(data.n_bins)
    rhs = np.zeros(data.n_bins)
    for n in range(1, L + 1):
        phi_a, phi_lhs, beta, idx = data.spheres[n - 1]
        w = np.exp(-s * phi_a)
        Z += w.sum()
        if phi_lhs is None or n > L - data.eta_len:
            continue
        ok = idx >= 0
        np.add.at(lhs, idx[ok], np.exp(-s * phi_lhs[ok]))
        np.add.at(rhs, idx[ok], w[ok] * np.exp(-kappa * beta[ok]))
    return np.abs(lhs - rhs) / Z


def quasi_invariance_errors(rep: ar.Representation, phi, s: float, L: int, eta,
                            bins: list, exponent: float | None = None) -> np.ndarray:
    """|nu_s(eta^-1 B) - int_B e^{-s phi(beta(eta^-1, x))} dnu_s(x)| per bin.

    Both sides are summed over the atoms ``gamma'`` with
    ``|eta| < |gamma'| <= L - |eta|`` (so that ``eta^-1 gamma'`` stays in the
    ball), and normalized by the mass of the whole ball. A bin is the
    cylinder of words starting with a given prefix.
    """
    eta = tuple(int(x) for x in eta)
    if not eta:
        return np.zeros(len(bins))
    data = _qi_data(rep, _coeffs(phi), eta, L, bins)
    return _qi_errors(data, s, L, s if exponent is None else exponent)


def quasi_invariance_test(rep: ar.Representation, phi, s_values, L_values, etas,
                          bin_depth: int = 2) -> QuasiInvarianceTable:
    bins = _prefix_bins(rep.rank, bin_depth)
    etas = [tuple(int(x) for x in e) for e in etas]
    c = _coeffs(phi)
    err = np.zeros((len(etas), len(bins), len(s_values), len(L_values)))
    for a, eta in enumerate(etas):
        if not eta:
            continue
        data = _qi_data(rep, c, eta, max(L_values), bins)
        for b, s in enumerate(s_values):
            for k, L in enumerate(L_values):
                err[a, :, b, k] = _qi_errors(data, s, L, s)
    empty = [(a, b) for a in range(len(etas)) for b in range(len(bins))
             if np.all(err[a, b] == 0) and len(etas[a])]
    return QuasiInvarianceTable(list(s_values), list(L_values), etas, bins, err, empty)


def fit_exponent(rep: ar.Representation, phi, s: float, L: int, eta, bin_depth: int = 2) -> float:
    """Exponent kappa minimizing the summed bin errors with e^{-kappa phi(beta)}."""
    bins = _prefix_bins(rep.rank, bin_depth)
    data = _qi_data(rep, _coeffs(phi), tuple(int(x) for x in eta), L, bins)
    res = scipy.optimize.minimize_scalar(
        lambda k: _qi_errors(data, s, L, k).sum(),
        bounds=(0.5 * s, 1.5 * s), method="bounded", options={"xatol": 1e-6})
    return float(res.x)


# ---------------------------------------------------------------------------
# shadows (SL(2) arcs)

def _line_angle(v: np.ndarray) -> np.ndarray:
    return np.mod(np.arctan2(v[..., 1], v[..., 0]), np.pi)


def _map_angle(g: np.ndarray, ang: np.ndarray) -> np.ndarray:
    v = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    return _line_angle(np.einsum("nij,nj->ni", g, v))


def shadow_arcs(mats: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Counterclockwise arcs [start, end) in [0, pi) of the shadows
    g B_alpha(g), where B_alpha(g) = {y : log |det[w, y]| > -alpha} and w is
    the dual attractor of g^-1."""
    u, sv, vt = np.linalg.svd(mats)
    w_ang = _line_angle(vt[:, 1, :])          # right singular vector of the small value
    c = np.arcsin(min(1.0, np.exp(-alpha)))
    # the basin is the complement of the arc (w - c, w + c); g preserves orientation
    start = _map_angle(mats, w_ang + c)
    end = _map_angle(mats, w_ang - c)
    return start, end


def arc_masses(atom_angles: np.ndarray, atom_weights: np.ndarray, start: np.ndarray,
               end: np.ndarray) -> np.ndarray:
    order = np.argsort(atom_angles)
    a = atom_angles[order]
    cum = np.concatenate([[0.0], np.cumsum(atom_weights[order])])
    total = cum[-1]
    cs = cum[np.searchsorted(a, start, side="left")]
    ce = cum[np.searchsorted(a, end, side="left")]
    return np.where(start <= end, ce - cs, total - (cs - ce))


def arc_cover_counts(atom_angles: np.ndarray, start: np.ndarray, end: np.ndarray) -> np.ndarray:
    """Number of arcs containing each atom."""
    order = np.argsort(atom_angles)
    a = atom_angles[order]
    n = len(a)
    diff = np.zeros(n + 1)
    i0 = np.searchsorted(a, start, side="left")
    i1 = np.searchsorted(a, end, side="left")
    plain = start <= end
    np.add.at(diff, i0[plain], 1)
    np.add.at(diff, i1[plain], -1)
    wrap = ~plain
    np.add.at(diff, i0[wrap], 1)
    diff[0] += wrap.sum()
    np.add.at(diff, i1[wrap], -1)
    counts = np.cumsum(diff)[:n]
    out = np.empty(n)
    out[order] = counts
    return out


def shadow_masses_generic(rep: ar.Representation, nu: AtomicMeasure, mats: list, alpha: float,
                          chunk: int = 256) -> np.ndarray:
    """nu(rho(gamma) B_alpha(rho(gamma))) by direct membership (any group)."""
    theta = rep.theta
    out = np.empty(len(mats[0]))
    for start in range(0, len(out), chunk):
        sl = slice(start, start + chunk)
        ms = [m[sl] for m in mats]
        inv = [np.linalg.inv(m) for m in ms]
        dual = sg.attractors_batch(inv, theta, dual=True)
        inside = np.ones((len(ms[0]), nu.size), dtype=bool)
        for i, j in theta:
            d = rep.dims[i]
            y = np.einsum("gab,nbk->gnak", inv[i], nu.planes[(i, j)])
            y = np.linalg.qr(y)[0]
            W = np.broadcast_to(dual[(i, d - j)][:, None], y.shape[:2] + (d, d - j))
            p = np.abs(np.linalg.det(np.concatenate([W, y], axis=-1)))
            with np.errstate(divide="ignore"):
                inside &= np.log(p) > -alpha
        out[sl] = inside.astype(float) @ nu.weights
    return out


@dataclass
class ShadowReport:
    slope: float
    intercept: float
    r2: float
    spread: float                 # max - min of log nu(shadow) + delta phi(a)
    spread_q: float               # 1%-99% quantile spread of the same
    count: int
    empty: int
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)

    def csv(self) -> str:
        rows = ["x,log_mass"] + [f"{a:.12g},{b:.12g}" for a, b in zip(self.x, self.y)]
        return "\n".join(rows) + "\n"


def shadow_statistics(rep: ar.Representation, phi, nu: AtomicMeasure, alpha: float, L: int,
                      delta: float, lengths: tuple[int, int] | None = None) -> ShadowReport:
    """Regression of log nu(gamma B_alpha(gamma)) on -delta phi(a(rho(gamma)))
    over L/2 <= |gamma| <= L."""
    c = _coeffs(phi)
    lo, hi = lengths if lengths is not None else ((L + 1) // 2, L)
    xs, ys, empty = [], [], 0
    sl2 = nu.is_sl2()
    ang = nu.angles() if sl2 else None
    for n in range(lo, hi + 1):
        _, mats = rep.sphere(n)
        x = -delta * (sg.cartan_omega_batch(mats, rep.theta) @ c)
        if sl2:
            st, en = shadow_arcs(mats[0], alpha)
            m = arc_masses(ang, nu.weights, st, en)
        else:
            m = shadow_masses_generic(rep, nu, mats, alpha)
        ok = m > 0
        empty += int((~ok).sum())
        xs.append(x[ok])
        ys.append(np.log(m[ok]))
    x, y = np.concatenate(xs), np.concatenate(ys)
    fit = scipy.stats.linregress(x, y)
    resid = y - x
    q = np.quantile(resid, [0.01, 0.99])
    return ShadowReport(float(fit.slope), float(fit.intercept), float(fit.rvalue ** 2),
                        float(resid.max() - resid.min()), float(q[1] - q[0]), len(x), empty, x, y)


def shadow_mass(rep: ar.Representation, nu: AtomicMeasure, word, alpha: float) -> float:
    g = rep(word)
    mats = [m[None] for m in g.mats]
    if nu.is_sl2():
        st, en = shadow_arcs(mats[0], alpha)
        return float(arc_masses(nu.angles(), nu.weights, st, en)[0])
    return float(shadow_masses_generic(rep, nu, mats, alpha)[0])


# ---------------------------------------------------------------------------
# coverings

@dataclass
class CoveringReport:
    t: int
    alpha: float
    max_multiplicity: int
    histogram: dict
    uncovered: int
    atoms: int


def covering_audit(rep: ar.Representation, alpha: float, t: int, atom_depth: int | None = None
                   ) -> CoveringReport:
    """Multiplicity of the shadow covering {gamma B_alpha(gamma) : t <= |gamma| <= t+1}
    over limit-flag atoms (attractors of words of length ``atom_depth``)."""
    depth = t + 4 if atom_depth is None else atom_depth
    _, amats = rep.sphere(depth)
    planes = sg.attractors_batch(amats, rep.theta)
    if not (len(rep.dims) == 1 and rep.dims[0] == 2):
        raise NotImplementedError("covering audit is implemented for SL(2)")
    ang = _line_angle(planes[rep.theta[0]][:, :, 0])
    counts = np.zeros(len(ang))
    for n in (t, t + 1):
        _, mats = rep.sphere(n)
        st, en = shadow_arcs(mats[0], alpha)
        counts += arc_cover_counts(ang, st, en)
    vals, freq = np.unique(counts.astype(int), return_counts=True)
    return CoveringReport(t, alpha, int(counts.max()), dict(zip(vals.tolist(), freq.tolist())),
                          int((counts == 0).sum()), len(ang))


# ---------------------------------------------------------------------------
# Bowen-Margulis samples

@dataclass
class BowenMargulisSample:
    x_index: np.ndarray           # atoms of the dual measure
    y_index: np.ndarray           # atoms of nu
    gromov: np.ndarray            # phi(G(x, y))
    weights: np.ndarray           # e^{-delta phi(G)}
    rejected: int

    @property
    def ess(self) -> float:
        w = self.weights
        return float(w.sum() ** 2 / (w ** 2).sum())


def bowen_margulis_sample(rep: ar.Representation, phi, nu: AtomicMeasure, nubar: AtomicMeasure,
                          n: int, seed: int, delta: float, max_reject: float = 0.5,
                          separated: bool = False) -> BowenMargulisSample:
    """Pairs (x, y) ~ nubar x nu with importance weight e^{-delta [x, y]_phi}.

    The weight is not integrable near the diagonal (the Bowen-Margulis
    measure of a neighbourhood of the diagonal is infinite), so the
    effective sample size stalls as n grows. ``separated=True`` keeps only
    pairs whose words start with different letters; these flags lie in
    disjoint cylinders, the weights are bounded and the ESS grows linearly.
    Dropped pairs are not counted as rejections.
    """
    c = _coeffs(phi)
    rng = np.random.default_rng(seed)
    xi = rng.choice(nubar.size, size=n, p=nubar.weights)
    yi = rng.choice(nu.size, size=n, p=nu.weights)
    if separated:
        keep = (nubar.lengths[xi] > 0) & (nu.lengths[yi] > 0) & \
            (nubar.words[xi, 0] != nu.words[yi, 0])
        xi, yi = xi[keep], yi[keep]
        n = len(xi)
    G = sg.gromov_batch({k: v[xi] for k, v in nubar.planes.items()},
                        {k: v[yi] for k, v in nu.planes.items()}, rep.theta, rep.dims)
    ok = np.all(np.isfinite(G), axis=1)
    rejected = int((~ok).sum())
    if rejected > max_reject * n:
        raise ValueError(f"rejection rate {rejected / n:.2f}: flags are not separated")
    g = G[ok] @ c
    return BowenMargulisSample(xi[ok], yi[ok], g, np.exp(-delta * g), rejected)


# ---------------------------------------------------------------------------
# consistency diagnostics

def atom_limit_distance(rep: ar.Representation, n: int, extension: int = 12, count: int = 200,
                        seed: int = 0) -> float:
    """max over sampled |gamma| = n of d(U(rho(gamma)), U(rho(gamma w))) for a
    random continuation w of length ``extension`` (a limit-flag proxy)."""
    from .words import random_rays
    rng = np.random.default_rng(seed)
    letters, mats = rep.sphere(n)
    pick = rng.choice(len(letters), size=min(count, len(letters)), replace=False)
    words = letters[pick].astype(int)
    ext = random_rays(rep.rank, extension + 1, len(pick), seed)
    # continuations must not cancel: resample the first letter where needed
    bad = ext[:, 0] == -words[:, -1]
    ext[bad, 0] = -ext[bad, 0]
    ok = ext[:, 0] != -ext[:, 1]
    words, ext = words[ok], ext[ok]
    long = np.concatenate([words, ext], axis=1)
    a = ar.limit_planes(rep, words)
    b = ar.limit_planes(rep, long)
    return float(sg.flag_distance_batch(a, b).max())


def fourier_moments(nu: AtomicMeasure, count: int = 20) -> np.ndarray:
    """Integrals of cos(2k t), sin(2k t), k = 1..count/2, over line angles."""
    t = nu.angles()
    ks = np.arange(1, count // 2 + 1)
    vals = np.concatenate([np.cos(2 * ks[:, None] * t), np.sin(2 * ks[:, None] * t)])
    return vals @ nu.weights
