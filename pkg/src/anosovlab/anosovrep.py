"""Representations of free groups into products of SL(d, R).

The :class:`Representation` evaluates words, caches spheres of the Cayley
graph as stacks of matrices, and carries the root subset ``theta``. On top
of it live the Anosov diagnostics (gap profiles, limit flags, transversality,
limit cone, Jordan-Cartan comparison) and the Ledrappier potential, a
locally constant vector potential on the free-group coding whose periods are
the Jordan projections.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.optimize
import scipy.spatial
import scipy.stats

from . import slgroup as sg
from .slgroup import FlagPoint, GroupElement, GroupShape, Root
from .thermo import BlockPotential, SubshiftOfFiniteType
from .words import (ReducedWord, conjugacy_array, extend_symbols, inverse_symbol,
                    letter_to_symbol, random_rays, sphere_size, symbol_to_letter,
                    word_string, ball_cap, ResourceCapError)

DATA_DIR = Path(__file__).parent / "data"


class Representation:
    """rho: F_k -> prod SL(d_i, R), given by generator images."""

    def __init__(self, generators: Sequence, theta: Sequence[Root], name: str = ""):
        gens = [g if isinstance(g, GroupElement) else GroupElement(g) for g in generators]
        if not gens:
            raise ValueError("at least one generator is required")
        dims = gens[0].dims
        if any(g.dims != dims for g in gens):
            raise ValueError("generators have inconsistent factor dimensions")
        self.shape = GroupShape(dims, tuple(tuple(s) for s in theta))
        self.generators = gens
        self.name = name
        k = len(gens)
        # symbol-indexed stacks: symbol s < k is generator s, s >= k its inverse
        self.symbol_mats = [np.stack([g.mats[i] for g in gens] + [g.inv.mats[i] for g in gens])
                            for i in range(len(dims))]
        self._cache: dict[tuple, GroupElement] = {}
        self._spheres: dict[int, tuple] = {}

    # -- basic data --------------------------------------------------------
    @property
    def rank(self) -> int:
        return len(self.generators)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.shape.dims

    @property
    def theta(self) -> tuple[Root, ...]:
        return self.shape.theta

    @property
    def dual_theta(self) -> tuple[Root, ...]:
        return self.shape.dual_theta

    def with_theta(self, theta) -> "Representation":
        return Representation(self.generators, theta, self.name)

    def letter(self, x: int) -> GroupElement:
        g = self.generators[abs(x) - 1]
        return g if x > 0 else g.inv

    def __call__(self, word) -> GroupElement:
        letters = tuple(int(x) for x in (word.letters if isinstance(word, ReducedWord) else word))
        g = self._cache.get(letters)
        if g is None:
            if not letters:
                g = GroupElement.identity(self.dims)
            else:
                g = self(letters[:-1]) @ self.letter(letters[-1])
            self._cache[letters] = g
        return g

    def evaluate_batch(self, words: np.ndarray) -> list:
        """Per-factor stacks ``(N, d, d)`` of rho(row), multiplied left to right."""
        words = np.asarray(words)
        syms = letter_to_symbol(words, self.rank)
        out = []
        for i, d in enumerate(self.dims):
            m = np.broadcast_to(np.eye(d), (len(words), d, d)).copy()
            for t in range(words.shape[1]):
                m = m @ self.symbol_mats[i][syms[:, t]]
            out.append(m)
        return out

    def sphere(self, n: int) -> tuple[np.ndarray, list]:
        """(letters ``(N, n)``, per-factor matrices) for the sphere of radius n,
        rows in lexicographic symbol order."""
        if n in self._spheres:
            return self._spheres[n]
        if sphere_size(self.rank, n) > ball_cap():
            raise ResourceCapError(f"sphere of radius {n} exceeds cap {ball_cap()}")
        if n == 0:
            res = (np.zeros((1, 0), dtype=np.int8), [np.eye(d)[None] for d in self.dims])
        else:
            prev_letters, prev_mats = self.sphere(n - 1)
            prev = letter_to_symbol(prev_letters, self.rank).astype(np.int8)
            syms = extend_symbols(prev, self.rank)
            m = 2 * self.rank
            parent = np.repeat(np.arange(len(prev)), m)
            if n > 1:
                new = np.tile(np.arange(m), len(prev))
                parent = parent[new != inverse_symbol(np.repeat(prev[:, -1], m), self.rank)]
            last = syms[:, -1].astype(np.int64)
            mats = [pm[parent] @ sm[last] for pm, sm in zip(prev_mats, self.symbol_mats)]
            res = (symbol_to_letter(syms, self.rank).astype(np.int8), mats)
        self._spheres[n] = res
        return res

    def clear_cache(self) -> None:
        self._spheres.clear()
        self._cache.clear()

    # -- builders ----------------------------------------------------------
    def product(self, other: "Representation", name: str = "") -> "Representation":
        if other.rank != self.rank:
            raise ValueError("ranks differ")
        f = len(self.dims)
        gens = [GroupElement(list(a.mats) + list(b.mats), normalize=False)
                for a, b in zip(self.generators, other.generators)]
        theta = list(self.theta) + [(i + f, j) for i, j in other.theta]
        return Representation(gens, theta, name or f"({self.name},{other.name})")

    def conjugate(self, g: GroupElement) -> "Representation":
        gens = [g @ x @ g.inv for x in self.generators]
        return Representation(gens, self.theta, self.name + "^g")

    def to_json(self) -> dict:
        return {"name": self.name, "factor_dims": list(self.dims),
                "generators": [[m.tolist() for m in g.mats] for g in self.generators],
                "theta": [list(s) for s in self.theta]}

    @classmethod
    def from_json(cls, data: dict) -> "Representation":
        for key in ("factor_dims", "generators", "theta"):
            if key not in data:
                raise ValueError(f"representation file lacks '{key}'")
        dims = [int(d) for d in data["factor_dims"]]
        gens = []
        for g in data["generators"]:
            if len(g) != len(dims):
                raise ValueError("generator does not have one matrix per factor")
            mats = [np.asarray(m, float) for m in g]
            for m, d in zip(mats, dims):
                if m.shape != (d, d):
                    raise ValueError("generator matrix has the wrong shape")
            gens.append(GroupElement(mats))
        return cls(gens, [tuple(s) for s in data["theta"]], data.get("name", ""))

    @classmethod
    def load(cls, path) -> "Representation":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    def __repr__(self):
        return f"Representation({self.name!r}, rank={self.rank}, dims={self.dims}, theta={self.theta})"


# ---------------------------------------------------------------------------
# example representations

def rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def schottky_sl2(length: float = 1.0, angle: float = np.pi / 4, length_b: float | None = None,
                 name: str = "") -> Representation:
    """rho(a) = diag(e^l, e^-l), rho(b) = R rho'(a) R^-1 with R a rotation."""
    lb = length if length_b is None else length_b
    a = np.diag([np.exp(length), np.exp(-length)])
    R = rotation(angle)
    b = R @ np.diag([np.exp(lb), np.exp(-lb)]) @ R.T
    return Representation([[a], [b]], [(0, 1)], name or f"schottky({length},{angle:.4g})")


def diagonal_cyclic(length: float = 1.0) -> Representation:
    """Rank one: rho(a) = diag(e^l, e^-l)."""
    return Representation([[np.diag([np.exp(length), np.exp(-length)])]], [(0, 1)], "diag-cyclic")


def trivial_rep(rank: int = 2) -> Representation:
    return Representation([[np.eye(2)] for _ in range(rank)], [(0, 1)], "trivial")


def self_product(rep: Representation) -> Representation:
    return rep.product(rep, name=f"({rep.name})^2")


def generic_pair() -> Representation:
    """Product of two non-conjugate SL(2) Schottky representations."""
    return schottky_sl2(1.0, np.pi / 4).product(schottky_sl2(1.3, np.pi / 3, 0.9), name="pair")


PRODUCT_FACTORS = [(1.0, np.pi / 4, 1.0), (1.3, np.pi / 3, 0.9), (0.9, 0.6, 1.2), (1.15, 1.0, 1.05)]


def schottky_product(count: int) -> Representation:
    """Product of ``count`` independent SL(2) Schottky representations, |theta| = count."""
    if not 1 <= count <= len(PRODUCT_FACTORS):
        raise ValueError(f"count must be in 1..{len(PRODUCT_FACTORS)}")
    rep = schottky_sl2(*PRODUCT_FACTORS[0])
    for params in PRODUCT_FACTORS[1:count]:
        rep = rep.product(schottky_sl2(*params))
    rep.name = f"schottky^{count}"
    return rep


def sym2(g: np.ndarray) -> np.ndarray:
    """Action of g in SL(2) on quadratic forms in the basis x^2, xy, y^2."""
    (a, b), (c, d) = g
    return np.array([[a * a, a * b, b * b],
                     [2 * a * c, a * d + b * c, 2 * b * d],
                     [c * c, c * d, d * d]])


def symmetric_square(rep: Representation) -> Representation:
    """Irreducible SL(3) image of a one-factor SL(2) representation, with
    both simple roots in theta."""
    if len(rep.dims) != 1 or rep.dims[0] != 2:
        raise ValueError("needs a single SL(2) factor")
    gens = [[sym2(g.mats[0])] for g in rep.generators]
    return Representation(gens, [(0, 1), (0, 2)], f"sym2({rep.name})")


EXAMPLES = {
    "schottky_sl2": lambda: schottky_sl2(),
    "diagonal_cyclic": lambda: diagonal_cyclic(),
    "self_product": lambda: self_product(schottky_sl2()),
    "pair": generic_pair,
    "product3": lambda: schottky_product(3),
    "product4": lambda: schottky_product(4),
    "sym2_schottky": lambda: symmetric_square(schottky_sl2()),
}


def load_example(name: str) -> Representation:
    return Representation.load(DATA_DIR / f"{name}.json")


# ---------------------------------------------------------------------------
# Cartan data over spheres and rays

def sphere_omega(rep: Representation, n: int, theta=None) -> np.ndarray:
    _, mats = rep.sphere(n)
    return sg.cartan_omega_batch(mats, rep.theta if theta is None else theta)


def ray_omega(rep: Representation, rays: np.ndarray, theta=None) -> np.ndarray:
    """a_theta(rho(prefix_n)) in fundamental-weight coordinates for every
    prefix length n = 1..N of every ray; shape ``(R, N, |theta|)``.

    Products are accumulated in the exterior powers with a running log scale,
    so long rays neither overflow nor lose the top singular value.
    """
    theta = rep.theta if theta is None else theta
    rays = np.atleast_2d(rays)
    R, N = rays.shape
    syms = letter_to_symbol(rays, rep.rank)
    out = np.empty((R, N, len(theta)))
    for c, (i, j) in enumerate(theta):
        G = rep.symbol_mats[i] if j == 1 else sg.ext_power(rep.symbol_mats[i], j)
        D = G.shape[-1]
        M = np.broadcast_to(np.eye(D), (R, D, D)).copy()
        logscale = np.zeros(R)
        for t in range(N):
            M = M @ G[syms[:, t]]
            s = np.abs(M).max(axis=(1, 2))
            M /= s[:, None, None]
            logscale += np.log(s)
            out[:, t, c] = np.log(np.linalg.svd(M, compute_uv=False)[:, 0]) + logscale
    return out


# ---------------------------------------------------------------------------
# gap profile

@dataclass
class GapProfile:
    lengths: np.ndarray
    min_gaps: np.ndarray          # min over |gamma| = n and sigma in theta
    per_root: np.ndarray          # (L, |theta|) min over the sphere per root
    mu: float
    c: float
    mu_lower: float               # lower 95% confidence bound on the slope
    certified: bool

    def to_json(self) -> dict:
        return {"lengths": self.lengths.tolist(), "min_gaps": self.min_gaps.tolist(),
                "per_root": self.per_root.tolist(), "mu": self.mu, "c": self.c,
                "mu_lower": self.mu_lower,
                "verdict": "certified" if self.certified else "not certified"}


def fit_envelope(n: np.ndarray, env: np.ndarray) -> tuple[float, float, float]:
    """Least-squares slope, the constant c making env >= mu n - c hold on the
    table, and the lower 95% confidence bound of the slope."""
    fit = scipy.stats.linregress(n, env)
    mu = float(fit.slope)
    c = float(np.max(mu * n - env))
    q = scipy.stats.t.ppf(0.975, len(n) - 2)
    return mu, c, float(mu - q * fit.stderr)


def gap_profile(rep: Representation, L: int) -> GapProfile:
    """Lower envelope of root gaps over spheres, with an affine fit."""
    if L < 3:
        raise ValueError("need L >= 3 for a fit with a confidence bound")
    per_root = np.array([sg.root_gaps_batch(rep.sphere(n)[1], rep.theta).min(axis=0)
                         for n in range(1, L + 1)])
    n = np.arange(1, L + 1, dtype=float)
    env = per_root.min(axis=1)
    mu, c, lo = fit_envelope(n, env)
    return GapProfile(n, env, per_root, mu, c, lo, bool(lo > 1e-9))


# ---------------------------------------------------------------------------
# limit flags

@dataclass
class LimitFlag:
    flag: FlagPoint
    cauchy: float                 # distance between depth and depth - 1
    estimates: np.ndarray         # distances between successive prefixes 1..depth
    gaps: np.ndarray              # min theta-gap of each prefix


class UndefinedAttractor(ValueError):
    def __init__(self, index: int, gap: float):
        super().__init__(f"attractor undefined at prefix {index} (gap {gap:.3g})")
        self.index = index
        self.gap = gap


def limit_flag(rep: Representation, ray, depth: int, dual: bool = False,
               gap_tol: float = 1e-9) -> LimitFlag:
    """U_theta(rho(prefix_depth)) (or the dual attractor U_{i theta}) with
    successive-prefix Cauchy estimates."""
    letters = np.asarray(ray.letters if isinstance(ray, ReducedWord) else ray)
    if depth < 2:
        raise ValueError("depth must be >= 2")
    if len(letters) < depth:
        raise ValueError("ray is shorter than the requested depth")
    mats = [np.empty((depth, d, d)) for d in rep.dims]
    for n in range(1, depth + 1):
        g = rep(letters[:n])
        for i in range(len(rep.dims)):
            mats[i][n - 1] = g.mats[i]
    gaps = sg.root_gaps_batch(mats, rep.theta).min(axis=1)
    bad = np.flatnonzero(gaps <= gap_tol)
    if len(bad):
        raise UndefinedAttractor(int(bad[0]) + 1, float(gaps[bad[0]]))
    planes = sg.attractors_batch(mats, rep.theta, dual=dual)
    est = np.concatenate([[np.nan], sg.flag_distance_batch(
        {s: p[1:] for s, p in planes.items()}, {s: p[:-1] for s, p in planes.items()})])
    flag = FlagPoint({s: p[-1] for s, p in planes.items()})
    return LimitFlag(flag, float(est[-1]), est, gaps)


def limit_planes(rep: Representation, rays: np.ndarray, dual: bool = False) -> dict:
    """Attractor planes of rho(ray) for a stack of finite rays (truncations)."""
    return sg.attractors_batch(rep.evaluate_batch(rays), rep.theta, dual=dual)


# ---------------------------------------------------------------------------
# transversality

@dataclass
class TransversalityReport:
    min_value: float
    pair: tuple[int, int]
    rays: np.ndarray
    violation: bool

    def to_json(self) -> dict:
        return {"min_value": None if self.violation else self.min_value,
                "pair": [word_string(self.rays[p]) for p in self.pair],
                "violation": self.violation}


def gromov_matrix(rep: Representation, xrays: np.ndarray, yrays: np.ndarray) -> np.ndarray:
    """min over sigma of varpi_sigma G(xi^{i theta}(x), xi^theta(y)) for all
    pairs; rows index x, columns y."""
    xp = limit_planes(rep, xrays, dual=True)
    yp = limit_planes(rep, yrays)
    out = np.full((len(xrays), len(yrays)), np.inf)
    for i, j in rep.theta:
        d = rep.dims[i]
        nx, ny = len(xrays), len(yrays)
        W = np.broadcast_to(xp[(i, d - j)][:, None], (nx, ny, d, d - j))
        Y = np.broadcast_to(yp[(i, j)][None, :], (nx, ny, d, j))
        p = np.abs(np.linalg.det(np.concatenate([W, Y], axis=-1)))
        with np.errstate(divide="ignore"):
            v = np.where(p <= sg.TRANSVERSALITY_TOL, sg.NON_TRANSVERSE, np.log(p))
        out = np.minimum(out, v)
    return out


def transversality_audit(rep: Representation, count: int, depth: int,
                         seed: int = 0, rays: np.ndarray | None = None) -> TransversalityReport:
    """Smallest Gromov product between limit flags of distinct sampled rays."""
    if rays is None:
        rays = random_rays(rep.rank, depth, count, seed)
    rays = np.asarray(rays)
    G = gromov_matrix(rep, rays, rays)
    same = np.all(rays[:, None, :] == rays[None, :, :], axis=-1)
    G[same] = np.inf
    idx = np.unravel_index(np.argmin(G), G.shape)
    val = float(G[idx])
    return TransversalityReport(val, (int(idx[0]), int(idx[1])), rays, val == sg.NON_TRANSVERSE)


# ---------------------------------------------------------------------------
# limit cone and Jordan-Cartan comparison

@dataclass
class LimitConeSample:
    words: np.ndarray             # letters of primitive class representatives (ragged -> list)
    directions: np.ndarray        # unit vectors lambda_theta / |lambda_theta|
    dim: int                      # dimension of the span of the directions
    interval: tuple[float, float] | None = None     # angles, for 2-D E_theta
    extreme: np.ndarray | None = None               # extreme rays otherwise

    def contains(self, v, tol: float = 1e-8) -> bool:
        v = np.asarray(v, float)
        v = v / np.linalg.norm(v)
        if self.directions.shape[1] == 1:
            return bool(v[0] > 0)
        if self.interval is not None:
            ang = np.arctan2(v[1], v[0])
            return bool(self.interval[0] - tol <= ang <= self.interval[1] + tol)
        # nonnegative combination of the extreme rays
        coef, res = scipy.optimize.nnls(self.extreme.T, v)
        return bool(res <= tol)

    def to_json(self) -> dict:
        out = {"dim": self.dim, "count": len(self.directions)}
        if self.interval is not None:
            out["interval"] = list(self.interval)
        if self.extreme is not None:
            out["extreme_rays"] = self.extreme.tolist()
        return out


def class_jordan(rep: Representation, L: int, primitive_only: bool = True):
    """(list of representative arrays, stacked lambda_theta) over classes 1..L."""
    words, lams = [], []
    for n in range(1, L + 1):
        canon, prim = conjugacy_array(rep.rank, n)
        if primitive_only:
            canon = canon[prim]
        if len(canon) == 0:
            continue
        mats = rep.evaluate_batch(canon)
        lams.append(sg.jordan_omega_batch(mats, rep.theta))
        words.extend(list(canon))
    return words, np.concatenate(lams)


def limit_cone(rep: Representation, L: int) -> LimitConeSample:
    words, lam = class_jordan(rep, L)
    dirs = lam / np.linalg.norm(lam, axis=1, keepdims=True)
    D = dirs.shape[1]
    rank = int(np.linalg.matrix_rank(dirs, tol=1e-9)) if D > 1 else 1
    if D == 1:
        return LimitConeSample(words, dirs, 1)
    if D == 2:
        ang = np.arctan2(dirs[:, 1], dirs[:, 0])
        return LimitConeSample(words, dirs, rank, (float(ang.min()), float(ang.max())))
    # extreme rays: vertices of the hull of the directions cut by sum = 1
    pts = dirs / dirs.sum(axis=1, keepdims=True)
    basis = np.linalg.svd(np.eye(D) - 1.0 / D, full_matrices=False)[0][:, :D - 1]
    proj = pts @ basis
    try:
        hull = scipy.spatial.ConvexHull(proj)
        ext = dirs[hull.vertices]
    except scipy.spatial.QhullError:
        ext = dirs[[np.argmin(proj[:, 0]), np.argmax(proj[:, 0])]]
    return LimitConeSample(words, dirs, rank, None, ext)


@dataclass
class JordanCartanGap:
    lengths: np.ndarray
    sup_per_length: np.ndarray
    running_sup: np.ndarray

    def growth(self, last: int = 3) -> float:
        """Relative growth of the running sup over the last ``last`` lengths."""
        r = self.running_sup
        return float(r[-1] / r[-last] - 1.0) if r[-last] > 0 else 0.0


def jordan_cartan_gap(rep: Representation, L: int, cyclic_only: bool = True) -> JordanCartanGap:
    """sup of ||a_theta(rho(gamma)) - lambda_theta(rho(gamma))|| per length."""
    sups = []
    for n in range(1, L + 1):
        letters, mats = rep.sphere(n)
        if cyclic_only and n >= 2:
            keep = letters[:, 0] != -letters[:, -1]
            mats = [m[keep] for m in mats]
        a = sg.cartan_omega_batch(mats, rep.theta)
        lam = sg.jordan_omega_batch(mats, rep.theta)
        sups.append(float(np.linalg.norm(a - lam, axis=1).max()))
    sups = np.array(sups)
    return JordanCartanGap(np.arange(1, L + 1), sups, np.maximum.accumulate(sups))


# ---------------------------------------------------------------------------
# Ledrappier potential

@dataclass
class SftPotential(BlockPotential):
    """Locally constant E_theta-valued potential on the free-group coding.

    ``values[b]`` for a block ``b = x_0 .. x_m`` is
    ``beta_theta(rho(x_0), U_theta(rho(x_1 .. x_m)))``, the truncation of
    ``beta_theta(rho(x_0), xi^theta(sigma x))``.
    """
    errors: np.ndarray | None = None      # truncation error bound per block
    depth: int = 0
    contraction: float = float("nan")     # estimated geometric rate of refinement
    refinement: np.ndarray | None = None  # change of each block from depth m - 1
    rep_name: str = ""

    @property
    def max_error(self) -> float:
        return float(np.max(self.errors)) if self.errors is not None else 0.0

    def period(self, word) -> np.ndarray:
        """Birkhoff sum over the periodic point w w w ... (word in letters)."""
        letters = np.asarray(word.letters if isinstance(word, ReducedWord) else word)
        syms = letter_to_symbol(letters, self.sft.rank)[None, :]
        return np.atleast_1d(self.periodic_sums(syms))[0] if self.dim == 1 else \
            self.periodic_sums(syms)[0]

    def periods(self, words: np.ndarray) -> np.ndarray:
        syms = letter_to_symbol(np.asarray(words), self.sft.rank)
        return np.reshape(self.periodic_sums(syms), (len(words), -1))

    def to_json(self) -> dict:
        labels = [int(x) for x in self.sft.labels]
        table = {word_string([labels[s] for s in b]): np.atleast_1d(v).tolist()
                 for b, v in zip(self.blocks, self.values)}
        return {"depth": self.depth, "width": self.width, "rep": self.rep_name,
                "contraction": self.contraction,
                "max_truncation_error": self.max_error,
                "truncation_errors": None if self.errors is None else self.errors.tolist(),
                "table": table}


TAIL_SAFETY = 1.5

_free_sfts: dict[int, SubshiftOfFiniteType] = {}


def free_group_sft(rank: int) -> SubshiftOfFiniteType:
    """Shared coding shift per rank, so block tables and recodings are reused."""
    if rank not in _free_sfts:
        _free_sfts[rank] = SubshiftOfFiniteType.free_group(rank)
    return _free_sfts[rank]


def _busemann_table(rep: Representation, sft, m: int) -> np.ndarray:
    """beta(rho(x_0), U_theta(rho(x_1..x_m))) on every (m+1)-block."""
    blocks = sft.blocks(m + 1)
    letters, mats = rep.sphere(m)
    tails = sft.blocks(m)
    if len(tails) != len(letters) or not np.array_equal(
            symbol_to_letter(tails[[0, -1]], rep.rank), letters[[0, -1]]):
        raise AssertionError("sphere and block orders disagree")
    gaps = sg.root_gaps_batch(mats, rep.theta).min(axis=1)
    if np.any(gaps <= 1e-9):
        bad = int(np.argmin(gaps))
        raise UndefinedAttractor(m, float(gaps[bad]))
    planes = sg.attractors_batch(mats, rep.theta)
    tail_idx = sft.block_index(blocks[:, 1:])
    head = blocks[:, 0].astype(np.int64)
    out = np.empty((len(blocks), len(rep.theta)))
    for c, (i, j) in enumerate(rep.theta):
        P = planes[(i, j)]
        for s in range(2 * rep.rank):
            sel = head == s
            out[sel, c] = np.log(sg.plane_volume(rep.symbol_mats[i][s], P[tail_idx[sel]]))
    return out


def ledrappier_potential(rep: Representation, m: int = 10) -> SftPotential:
    """The depth-m Ledrappier potential on (m+1)-blocks with truncation errors.

    Refining the depth changes the table by amounts ``d_m`` that decay
    geometrically. The declared error of every block is the tail bound
    ``max d_m * r / (1 - r)`` with ``r`` the larger of the last two observed
    ratios ``max d_m / max d_{m-1}``, times a safety factor of 1.5 (the
    ratio still creeps upward with m). A block's own refinement history is not
    a valid bound: the flag of ``a^m`` does not move under refinement by
    ``a`` but does move when later letters differ.
    """
    if m < 4:
        raise ValueError("depth m must be >= 4")
    sft = free_group_sft(rep.rank)
    blocks = sft.blocks(m + 1)
    tables = [_busemann_table(rep, sft, m - k)[sft.block_index(blocks[:, :m + 1 - k])]
              for k in range(4)]
    steps = [np.linalg.norm(tables[k] - tables[k + 1], axis=1) for k in range(3)]
    tops = [s.max() for s in steps]
    ratios = [tops[k] / tops[k + 1] for k in range(2) if tops[k + 1] > 0]
    r = max(ratios) if ratios else 0.0
    if r >= 1:
        raise ValueError(f"refinements of the potential do not contract (ratio {r:.3g})")
    errors = np.full(len(blocks), TAIL_SAFETY * tops[0] * r / (1.0 - r))
    return SftPotential(sft, m + 1, tables[0], errors=errors, depth=m, contraction=r,
                        rep_name=rep.name, refinement=steps[0])


@dataclass
class PeriodCheck:
    words: list
    periods: np.ndarray
    jordan: np.ndarray
    max_defect: float
    allowed: np.ndarray           # per word: length * max truncation error
    passed: bool


def period_check(rep: Representation, F: SftPotential, L: int) -> PeriodCheck:
    """Birkhoff sums over primitive classes of length <= L against lambda_theta."""
    words, lam, per, allowed = [], [], [], []
    for n in range(1, L + 1):
        canon, prim = conjugacy_array(rep.rank, n)
        canon = canon[prim]
        if len(canon) == 0:
            continue
        lam.append(sg.jordan_omega_batch(rep.evaluate_batch(canon), rep.theta))
        per.append(F.periods(canon))
        syms = letter_to_symbol(canon, rep.rank)
        # error budget: sum of the block errors met along the period
        err = np.zeros(len(canon))
        for i in range(n):
            cols = [(i + t) % n for t in range(F.width)]
            err += F.errors[F.sft.block_index(syms[:, cols])]
        allowed.append(err)
        words.extend(list(canon))
    lam, per, allowed = np.concatenate(lam), np.concatenate(per), np.concatenate(allowed)
    defect = np.linalg.norm(per - lam, axis=1)
    return PeriodCheck(words, per, lam, float(defect.max()), allowed,
                       bool(np.all(defect <= allowed + 1e-12)))
