"""Critical exponents, the critical hypersurface and dynamical intersection.

Everything is computed from a :class:`Model`, which bundles a
representation with its Ledrappier potential ``F``. For a functional
``phi`` the entropy ``h_phi`` is the root of ``s -> P(-s phi(F))``; the
critical hypersurface is ``{phi : h_phi = 1}`` and, by homogeneity
``h_{t phi} = h_phi / t``, its point in the direction ``psi`` is
``h_psi psi``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.stats

from . import anosovrep as ar
from . import slgroup as sg
from . import thermo as th
from .slgroup import Functional


class OutsideDualCone(ValueError):
    """The functional is not positive on the sampled limit cone."""


@dataclass
class Model:
    rep: ar.Representation
    F: ar.SftPotential
    cone: ar.LimitConeSample

    @property
    def sft(self) -> th.SubshiftOfFiniteType:
        return self.F.sft

    @property
    def theta(self):
        return self.rep.theta

    def functional(self, coeffs) -> Functional:
        return Functional(tuple(coeffs), self.theta)

    def scalar(self, phi) -> th.BlockPotential:
        return self.F.contract(_coeffs(phi))

    def cone_span(self, tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
        """Orthonormal bases of span(L) and of its annihilator."""
        u, s, vt = np.linalg.svd(self.cone.directions, full_matrices=True)
        r = int(np.sum(s > tol * s[0]))
        return vt[:r].T, vt[r:].T


def _coeffs(phi) -> np.ndarray:
    return phi.vector if isinstance(phi, Functional) else np.asarray(phi, float)


_models: dict = {}


def model(rep: ar.Representation, m: int = 8, cone_L: int = 6) -> Model:
    key = (id(rep), m, cone_L)
    if key not in _models or _models[key].rep is not rep:
        _models[key] = Model(rep, ar.ledrappier_potential(rep, m), ar.limit_cone(rep, cone_L))
    return _models[key]


def check_dual_cone(M: Model, phi) -> float:
    c = _coeffs(phi)
    low = float((M.cone.directions @ c).min())
    if low <= 0:
        raise OutsideDualCone(f"functional {c.tolist()} is outside int(L*): min on cone {low:.3g}")
    return low


def entropy_of_functional(M: Model, phi) -> float:
    """h_phi, the root of P(-s phi(F)) = 0."""
    check_dual_cone(M, phi)
    return th.entropy_root(M.sft, M.scalar(phi))


# ---------------------------------------------------------------------------
# counting

@dataclass
class CountingEstimate:
    delta: float
    stderr: float
    window: tuple[float, float]
    samples: int                  # orbit points in the top window
    t_grid: np.ndarray
    log_counts: np.ndarray


def orbit_lengths(rep: ar.Representation, phi, L: int) -> tuple[np.ndarray, float]:
    """phi(a(rho(gamma))) for 1 <= |gamma| <= L, and min over the sphere L."""
    c = _coeffs(phi)
    vals = [ar.sphere_omega(rep, n) @ c for n in range(1, L + 1)]
    return np.concatenate(vals), float(vals[-1].min())


def critical_exponent_count(rep: ar.Representation, phi, L: int, points: int = 40,
                            min_samples: int = 50) -> CountingEstimate:
    """Slope of log #{gamma : phi(a(rho(gamma))) <= t} over t in [t_max/2, t_max],
    where t_max is the smallest phi-length on the sphere of radius L (below
    it the count over the ball is complete)."""
    vals, t_max = orbit_lengths(rep, phi, L)
    if t_max <= 0:
        raise OutsideDualCone("phi-lengths are not positive on the sphere")
    vals = np.sort(vals)
    t = np.linspace(t_max / 2, t_max, points)
    counts = np.searchsorted(vals, t, side="right")
    if counts[0] < min_samples:
        raise ValueError(f"too few orbit points in the top window ({counts[0]})")
    fit = scipy.stats.linregress(t, np.log(counts))
    return CountingEstimate(float(fit.slope), float(fit.stderr), (t_max / 2, t_max),
                            int(counts[-1] - counts[0]), t, np.log(counts))


# ---------------------------------------------------------------------------
# critical hypersurface

@dataclass
class CriticalPoint:
    phi: Functional
    direction: np.ndarray         # unit direction psi with phi = scale * psi
    scale: float                  # h_psi
    residual: float               # h_phi - 1
    chain: th.GibbsChain
    mean: np.ndarray              # int F dm_{-phi(F)}

    @property
    def u(self) -> np.ndarray:
        return self.mean / np.linalg.norm(self.mean)

    def intersection_coefficients(self) -> np.ndarray:
        """I_phi(psi) = <psi, mean> / <phi, mean> as a vector of coefficients."""
        return self.mean / float(self.phi.vector @ self.mean)


def critical_point(M: Model, psi, verify: bool = True) -> CriticalPoint:
    d = _coeffs(psi)
    d = d / np.linalg.norm(d)
    h = entropy_of_functional(M, d)
    phi = M.functional(h * d)
    f = M.scalar(phi)
    chain = th.gibbs_measure(M.sft, f.scale(-1.0))
    # pressure of -phi(F) at the root is 0; its residual measures the root error
    resid = th.entropy_root(M.sft, f) - 1.0 if verify else float("nan")
    return CriticalPoint(phi, d, h, resid, chain, chain.expectation(M.F))


def direction_grid(M: Model, count: int, margin: float = 0.05) -> np.ndarray:
    """Unit functionals strictly positive on the sampled cone, for 1-D and 2-D
    restricted Cartan spaces. In 2-D, the dual cone of the angle interval
    [a, b] is the set of angles (b - pi/2, a + pi/2)."""
    D = M.cone.directions.shape[1]
    if D == 1:
        return np.ones((1, 1))
    if D != 2:
        raise NotImplementedError("direction grids are implemented for |theta| <= 2")
    a, b = M.cone.interval
    lo, hi = b - np.pi / 2, a + np.pi / 2
    w = hi - lo
    ang = np.linspace(lo + margin * w, hi - margin * w, count)
    return np.stack([np.cos(ang), np.sin(ang)], axis=1)


def manhattan_hypersurface(M: Model, directions: np.ndarray) -> list[CriticalPoint]:
    return [critical_point(M, d) for d in np.atleast_2d(directions)]


# ---------------------------------------------------------------------------
# dynamical intersection

@dataclass
class Intersection:
    gibbs: float
    periods: float
    band: float
    lower_bound: float | None     # h_phi / h_psi when psi is positive
    agrees: bool


def dynamical_intersection(M: Model, cp: CriticalPoint, psi, T: int = 10) -> Intersection:
    """I_phi(psi) by the Gibbs formula and by the periodic-orbit average
    (1 / #R_t) sum_{tau in R_t} l_tau(psi) / l_tau(phi)."""
    c = _coeffs(psi)
    gibbs = float(c @ cp.mean) / float(cp.phi.vector @ cp.mean)
    per_phi, per_psi = [], []
    for n in range(1, T + 1):
        w = th.periodic_orbits(M.sft, n)
        if len(w):
            P = np.reshape(M.F.periodic_sums(w), (len(w), -1))
            per_phi.append(P @ cp.phi.vector)
            per_psi.append(P @ c)
    lphi, lpsi = np.concatenate(per_phi), np.concatenate(per_psi)
    # R_t is complete for t below the shortest phi-period among words of length T
    t = float(lphi[-len(per_phi[-1]):].min())

    def avg(tt):
        sel = lphi <= tt
        return float(np.mean(lpsi[sel] / lphi[sel]))

    est, half = avg(t), avg(t / 2)
    band = abs(est - half)
    lower = None
    try:
        check_dual_cone(M, c)
        lower = 1.0 / entropy_of_functional(M, c)   # h_phi = 1
    except OutsideDualCone:
        pass
    return Intersection(gibbs, est, band, lower, abs(gibbs - est) <= band + 1e-12)


# ---------------------------------------------------------------------------
# tangency and convexity

@dataclass
class TangencyReport:
    angle: float                  # radians, between the numerical tangent and ker I_phi
    angle_half_step: float
    tangents: np.ndarray
    u_pairing: float              # max |T(u_phi)| / |T|
    warning: str | None


def _tangent_basis(d: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(np.concatenate([d[:, None], np.eye(len(d))], axis=1))
    return q[:, 1:len(d)]


def _tangents(M: Model, d: np.ndarray, step: float) -> np.ndarray:
    out = []
    for e in _tangent_basis(d).T:
        pts = []
        for sgn in (1, -1):
            dd = d + sgn * step * e
            dd = dd / np.linalg.norm(dd)
            pts.append(entropy_of_functional(M, dd) * dd)
        out.append((pts[0] - pts[1]) / (2 * step))
    return np.array(out)


def _angle(T: np.ndarray, u: np.ndarray) -> float:
    return float(max(np.arcsin(min(1.0, abs(t @ u) / (np.linalg.norm(t) * np.linalg.norm(u))))
                     for t in T))


def tangency_audit(M: Model, cp: CriticalPoint, step: float = 1e-3) -> TangencyReport:
    """Angle between T_phi Q (central differences along the hypersurface) and
    ker I_phi = {psi : psi(u_phi) = 0}. In the coefficient space the kernel
    is the orthogonal complement of the mean vector, so the angle is
    arcsin(|T . u| / (|T| |u|))."""
    T1 = _tangents(M, cp.direction, step)
    T2 = _tangents(M, cp.direction, step / 2)
    a1, a2 = _angle(T1, cp.mean), _angle(T2, cp.mean)
    warning = None
    rel = np.linalg.norm(T1 - T2) / max(np.linalg.norm(T2), 1e-300)
    if rel > 1e-2:
        warning = "curvature: halving the step changes the tangent by more than 1%"
    elif rel < 1e-12 and a1 > 1e-6:
        warning = "noise: tangent estimate insensitive to the step"
    return TangencyReport(a2, a1, T2, a2, warning)


@dataclass
class ConvexityTriple:
    h_chord_mid: float            # h at the midpoint of the chord between the ends
    below: float                  # signed offset of the middle curve point toward the origin
    degenerate: bool              # ends have proportional projections to span(L)


def convexity_triple(M: Model, psi1, psi2, psi3) -> ConvexityTriple:
    p = [critical_point(M, d, verify=False).phi.vector for d in (psi1, psi2, psi3)]
    mid = 0.5 * (p[0] + p[2])
    h_mid = entropy_of_functional(M, mid)
    chord = p[2] - p[0]
    normal = np.array([-chord[1], chord[0]]) if len(chord) == 2 else None
    below = float("nan")
    if normal is not None:
        if normal @ p[0] < 0:
            normal = -normal           # normal points away from the origin
        below = float(normal @ (p[0] - p[1]) / np.linalg.norm(normal))
    span, _ = M.cone_span()
    q = [span.T @ v for v in (p[0], p[2])]
    degenerate = bool(np.linalg.matrix_rank(np.stack(q), tol=1e-9) < 2) if span.shape[1] >= 2 \
        else True
    return ConvexityTriple(h_mid, below, degenerate)


def growth_direction_angles(points: Sequence[CriticalPoint]) -> np.ndarray:
    """Angles of u_phi along a 2-D grid (monotone when the map is injective)."""
    return np.array([np.arctan2(cp.u[1], cp.u[0]) for cp in points])


# ---------------------------------------------------------------------------
# export

def hypersurface_csv(points: Sequence[CriticalPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    D = len(points[0].direction) if points else 0
    w.writerow([f"dir{k}" for k in range(D)] + ["scale"] + [f"phi{k}" for k in range(D)]
               + ["h_residual"] + [f"u{k}" for k in range(D)])
    for cp in points:
        w.writerow([f"{x:.12g}" for x in cp.direction] + [f"{cp.scale:.12g}"]
                   + [f"{x:.12g}" for x in cp.phi.vector] + [f"{cp.residual:.3e}"]
                   + [f"{x:.12g}" for x in cp.u])
    return buf.getvalue()


def manhattan_svg(points: Sequence[CriticalPoint], size: int = 400, chords: bool = True) -> str:
    """A plain SVG of a 2-D critical curve, with the chord between its ends."""
    P = np.array([cp.phi.vector for cp in points])
    if P.shape[1] != 2:
        raise ValueError("SVG export needs a 2-D hypersurface")
    hi = 1.1 * P.max()
    pad = 30

    def xy(p):
        return pad + (size - 2 * pad) * p[0] / hi, size - pad - (size - 2 * pad) * p[1] / hi

    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in map(xy, P))
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
             f'<line x1="{pad}" y1="{size - pad}" x2="{size - pad}" y2="{size - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{size - pad}" x2="{pad}" y2="{pad}" stroke="black"/>',
             f'<polyline points="{pts}" fill="none" stroke="navy" stroke-width="2"/>']
    if chords and len(P) > 1:
        (x0, y0), (x1, y1) = xy(P[0]), xy(P[-1])
        parts.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y1:.2f}" '
                     'stroke="gray" stroke-dasharray="4"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
