"""Vector-valued skew products over the coding shift.

The skew map is ``(x, v) -> (sigma x, v - K(x))``, so the fiber after n
steps is ``v - S_n K(x)``. Against the infinite measure ``m x Leb`` the
correlation of the indicator of a cube ``B = [-r, r]^D`` with its image is
``Omega_n = E_m[prod_i (2r - |S_n K_i|)_+]``, computed exactly in the fiber
and by Monte Carlo in the base. Its decay ``n^{-D/2}`` drives the
recurrence/transience dichotomy.

The directional part follows Cartan projections along rays and measures
their distance to the half-line through a growth direction.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.stats

from . import anosovrep as ar
from . import critical as cr
from . import patterson as pt
from . import thermo as th
from .words import letter_to_symbol, symbol_to_letter

PAPER_OPEN = "paper-open"


# ---------------------------------------------------------------------------
# orbits

@dataclass
class SkewTrajectory:
    tape: np.ndarray              # symbols x_0 x_1 ...
    fibers: np.ndarray            # (n + 1, D): v_0, v_1, ..., v_n


def skew_orbit(sft: th.SubshiftOfFiniteType, K: th.BlockPotential, tape, v0, n: int
               ) -> SkewTrajectory:
    tape = np.asarray(tape)
    if len(tape) < n + K.width - 1:
        raise ValueError("tape too short for n steps")
    if not sft.is_admissible(tape):
        raise ValueError("inadmissible tape")
    windows = np.lib.stride_tricks.sliding_window_view(tape[:n + K.width - 1], K.width)
    steps = np.reshape(K.evaluate(windows), (n, -1))
    v0 = np.atleast_1d(np.asarray(v0, float))
    fibers = np.vstack([v0, v0 - np.cumsum(steps, axis=0)])
    return SkewTrajectory(tape, fibers)


def sample_tapes(chain: th.GibbsChain, length: int, count: int, rng, start_states=None
                 ) -> np.ndarray:
    """Symbol tapes of the given length drawn from the Gibbs chain."""
    rec = chain.recoding
    k = rec.width - 1
    traj = chain.sample(length - k + 1, count, rng, start_states)
    states = rec.states
    head = states[traj, 0]
    return np.concatenate([head[:, :-1], states[traj[:, -1]]], axis=1)


def birkhoff_paths(K: th.BlockPotential, tapes: np.ndarray, n: int) -> np.ndarray:
    """S_1 K, ..., S_n K along each tape; shape ``(count, n, D)``."""
    count = len(tapes)
    windows = np.lib.stride_tricks.sliding_window_view(tapes[:, :n + K.width - 1], K.width, axis=1)
    vals = np.reshape(K.evaluate(windows.reshape(-1, K.width)), (count, n, -1))
    return np.cumsum(vals, axis=1)


# ---------------------------------------------------------------------------
# coin models

GOLDEN = (1 + 5 ** 0.5) / 2


@dataclass
class CoinModel:
    sft: th.SubshiftOfFiniteType
    K: th.BlockPotential
    chain: th.GibbsChain
    dim: int


def coin_model(dim: int, arithmetic: bool = False) -> CoinModel:
    """``dim`` independent centered coins on the full shift over 2^dim symbols.

    The non-arithmetic coin takes the values +1 and -GOLDEN with
    probabilities GOLDEN / (1 + GOLDEN) and 1 / (1 + GOLDEN), which makes it
    centered with periods dense in R. The arithmetic coin is the fair +-1
    coin.
    """
    n = 2 ** dim
    bits = (np.arange(n)[:, None] >> np.arange(dim)[None, :]) & 1
    if arithmetic:
        hi, lo, p = 1.0, -1.0, 0.5
    else:
        hi, lo, p = 1.0, -GOLDEN, GOLDEN / (1 + GOLDEN)
    K = np.where(bits == 0, hi, lo)
    prob = np.prod(np.where(bits == 0, p, 1 - p), axis=1)
    sft = th.SubshiftOfFiniteType.full(n)
    chain = th.gibbs_measure(sft, th.BlockPotential.from_symbol_values(sft, np.log(prob)))
    return CoinModel(sft, th.BlockPotential(sft, 1, K), chain, dim)


# ---------------------------------------------------------------------------
# arithmeticity of periods

@dataclass
class PeriodLattice:
    rank: int                     # rank of the real span of the periods
    arithmetic: bool              # periods lie in a lattice
    max_denominator: int
    periods: np.ndarray


def period_lattice(sft: th.SubshiftOfFiniteType, K: th.BlockPotential, T: int = 6,
                   max_denominator: int = 1000, tol: float = 1e-9) -> PeriodLattice:
    """Decide whether the periods of K generate a discrete group.

    The periods are expressed in a basis of D linearly independent periods;
    if every coefficient is a rational with denominator <= max_denominator
    (within tol), the group they span is a lattice."""
    per = []
    for n in range(1, T + 1):
        w = th.periodic_orbits(sft, n)
        if len(w):
            per.append(np.reshape(K.periodic_sums(w), (len(w), -1)))
    P = np.concatenate(per)
    rank = int(np.linalg.matrix_rank(P, tol=1e-9))
    D = P.shape[1]
    if rank < D:
        return PeriodLattice(rank, True, max_denominator, P)
    # greedy basis of D independent periods, shortest first
    order = np.argsort(np.linalg.norm(P, axis=1))
    basis = []
    for i in order:
        cand = basis + [P[i]]
        if np.linalg.matrix_rank(np.array(cand), tol=1e-9) == len(cand):
            basis = cand
        if len(basis) == D:
            break
    coef = np.linalg.solve(np.array(basis).T, P.T).T
    arithmetic = True
    for x in coef.ravel():
        fr = Fraction(float(x)).limit_denominator(max_denominator)
        if abs(float(fr) - x) > tol:
            arithmetic = False
            break
    return PeriodLattice(rank, arithmetic, max_denominator, P)


# ---------------------------------------------------------------------------
# correlations and recurrence

def box_overlap(S: np.ndarray, r: float) -> np.ndarray:
    """prod_i (2r - |S_i|)_+ for fiber displacements S (last axis = D)."""
    return np.prod(np.clip(2 * r - np.abs(S), 0, None), axis=-1)


@dataclass
class CorrelationEstimate:
    n: np.ndarray
    omega: np.ndarray             # mean box correlation per n
    stderr: np.ndarray
    batches: np.ndarray           # (batches, T) per-batch means
    returns: np.ndarray           # per trial: number of n <= T with |S_n|_inf <= r


def _correlation_batch(args) -> tuple[np.ndarray, np.ndarray]:
    chain, K, r, T, size, seed, chunk = args
    rng = np.random.default_rng(seed)
    total = np.zeros(T)
    returns = []
    while size > 0:
        m = min(chunk, size)
        tapes = sample_tapes(chain, T + K.width - 1, m, rng)
        S = birkhoff_paths(K, tapes, T)
        total += box_overlap(S, r).sum(axis=0)
        returns.append((np.abs(S).max(axis=-1) <= r).sum(axis=1))
        size -= m
    return total, np.concatenate(returns)


def box_correlations(sft, chain: th.GibbsChain, K: th.BlockPotential, r: float, T: int,
                     trials: int, seed: int, batches: int = 10, chunk: int = 5000,
                     jobs: int = 1) -> CorrelationEstimate:
    """Batch b draws from its own stream ``SeedSequence(seed).spawn`` so the
    result does not depend on ``jobs``."""
    per_batch = -(-trials // batches)
    sizes = [max(0, min(per_batch, trials - b * per_batch)) for b in range(batches)]
    seeds = np.random.SeedSequence(seed).spawn(batches)
    tasks = [(chain, K, r, T, n, sq, chunk) for n, sq in zip(sizes, seeds)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=min(jobs, batches)) as pool:
            results = list(pool.map(_correlation_batch, tasks))
    else:
        results = [_correlation_batch(t) for t in tasks]
    counts = np.array(sizes, float)
    sums = np.array([r_[0] for r_ in results])
    bm = sums / counts[:, None]
    omega = sums.sum(axis=0) / counts.sum()
    se = bm.std(axis=0, ddof=1) / np.sqrt(batches)
    return CorrelationEstimate(np.arange(1, T + 1), omega, se, bm,
                               np.concatenate([r_[1] for r_ in results]))


def _fit_tail(n: np.ndarray, y: np.ndarray) -> float:
    ok = y > 0
    if ok.sum() < 3:
        raise ValueError("correlation below the noise floor")
    return float(-np.polyfit(np.log(n[ok]), np.log(y[ok]), 1)[0])


@dataclass
class MixingFit:
    alpha: float
    stderr: float
    ci: tuple[float, float]
    window: tuple[int, int]
    applicable: bool
    lattice: PeriodLattice | None = None
    correlations: CorrelationEstimate | None = field(default=None, repr=False)


def mixing_exponent(sft, chain: th.GibbsChain, K: th.BlockPotential, r: float, T: int,
                    trials: int, seed: int, batches: int = 10, check_lattice: bool = True,
                    jobs: int = 1) -> MixingFit:
    """Fit Omega_n ~ c n^{-alpha} over n in [T/4, T]. The scaling law needs
    non-arithmetic periods; for lattice periods the fit is flagged
    inapplicable and not run."""
    lat = period_lattice(sft, K) if check_lattice else None
    if lat is not None and lat.arithmetic:
        return MixingFit(float("nan"), float("nan"), (float("nan"), float("nan")), (T // 4, T),
                         False, lat)
    corr = box_correlations(sft, chain, K, r, T, trials, seed, batches, jobs=jobs)
    lo = max(1, T // 4)
    sel = slice(lo - 1, T)
    n = corr.n[sel]
    if corr.omega[lo - 1] <= 0:
        raise ValueError("correlation below the noise floor before T/4")
    alpha = _fit_tail(n, corr.omega[sel])
    per = np.array([_fit_tail(n, b[sel]) for b in corr.batches])
    se = float(per.std(ddof=1) / np.sqrt(len(per)))
    q = scipy.stats.t.ppf(0.975, len(per) - 1)
    return MixingFit(alpha, se, (alpha - q * se, alpha + q * se), (lo, T), True, lat, corr)


@dataclass
class RecurrenceStats:
    partial_sums: np.ndarray      # cumulative sum of Omega_n
    tail_exponent: float
    ci: tuple[float, float]
    verdict: str                  # "recurrent" or "transient"
    return_counts: np.ndarray     # histogram of the number of returns per trial
    mean_returns: float
    mean_drift: np.ndarray


def recurrence_stats(sft, chain: th.GibbsChain, K: th.BlockPotential, r: float, T: int,
                     trials: int, seed: int, batches: int = 10, center_tol: float = 1e-8,
                     jobs: int = 1) -> RecurrenceStats:
    """Sum of box correlations and a convergence verdict from the tail
    exponent: the series diverges (recurrence) unless the exponent is
    confidently above 1."""
    mean = np.atleast_1d(chain.expectation(K))
    if np.max(np.abs(mean)) > center_tol:
        raise ValueError(f"K is not centered for the Gibbs measure (mean {mean})")
    fit = mixing_exponent(sft, chain, K, r, T, trials, seed, batches, check_lattice=False,
                          jobs=jobs)
    corr = fit.correlations
    if not np.any(corr.returns > 0):
        raise ValueError("box never hit: degenerate geometry")
    verdict = "transient" if fit.ci[0] > 1 else "recurrent"
    hist = np.bincount(corr.returns.astype(int))
    return RecurrenceStats(np.cumsum(corr.omega), fit.alpha, fit.ci, verdict, hist,
                           float(corr.returns.mean()), mean)


# ---------------------------------------------------------------------------
# directional drift

def tube_distance(a: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Distance from points a (last axis) to the half-line R_+ u."""
    u = u / np.linalg.norm(u)
    t = np.clip(a @ u, 0, None)
    return np.linalg.norm(a - t[..., None] * u, axis=-1)


@dataclass
class DriftTrace:
    ray: np.ndarray
    cartan: np.ndarray            # (N, |theta|) a_theta(rho(prefix_n)), n = 1..N
    distance: np.ndarray          # (N,)
    radii: list
    membership: dict              # r -> boolean array over n

    def fraction(self, r: float) -> float:
        return float(self.membership[r].mean())

    def returns_late(self, r: float, frac: float = 0.1) -> bool:
        N = len(self.distance)
        return bool(self.membership[r][int((1 - frac) * N):].any())

    def returns_in_window(self, r: float, H: int | None = None) -> bool:
        """A return to the tube at some n in [sqrt(H), H]."""
        H = len(self.distance) if H is None else H
        return bool(self.membership[r][int(np.sqrt(H)) - 1:H].any())


def directional_drift(rep: ar.Representation, u, ray, N: int, radii: Sequence[float] = (1.0,)
                      ) -> DriftTrace:
    ray = np.asarray(ray)[:N]
    if len(ray) < N:
        raise ValueError("ray shorter than N")
    a = ar.ray_omega(rep, ray[None])[0]
    u = np.asarray(u.u if isinstance(u, cr.CriticalPoint) else u, float)
    dist = tube_distance(a, u)
    return DriftTrace(ray, a, dist, list(radii), {r: dist <= r for r in radii})


def drift_batch(rep: ar.Representation, u: np.ndarray, rays: np.ndarray) -> np.ndarray:
    """Tube distances for many rays, shape ``(R, N)``."""
    a = ar.ray_omega(rep, rays)
    return tube_distance(a, np.asarray(u, float))


# ---------------------------------------------------------------------------
# conical survey

def gibbs_rays(M: cr.Model, cp: cr.CriticalPoint, nu: pt.AtomicMeasure, count: int, N: int,
               seed: int) -> np.ndarray:
    """Rays of N letters: prefixes are atoms of nu (words of length >= the
    state length of the chain) drawn by weight, continued by the Gibbs chain
    of -phi(F)."""
    rng = np.random.default_rng(seed)
    chain = cp.chain
    rec = chain.recoding
    k = rec.width - 1
    eligible = np.flatnonzero(nu.lengths >= k)
    if len(eligible) == 0:
        raise ValueError("Patterson measure has no atoms long enough to seed the chain")
    p = nu.weights[eligible] / nu.weights[eligible].sum()
    pick = eligible[rng.choice(len(eligible), size=count, p=p)]
    rank = M.rep.rank
    out = np.empty((count, N), dtype=np.int8)
    for length in np.unique(nu.lengths[pick]):
        sel = np.flatnonzero(nu.lengths[pick] == length)
        words = nu.words[pick[sel], :length].astype(int)
        syms = letter_to_symbol(words, rank)
        start = M.sft.block_index(syms[:, length - k:])
        if length >= N:
            out[sel] = words[:, :N]
            continue
        traj = chain.sample(N - length + 1, len(sel), rng, start_states=start)
        cont = rec.states[traj[:, 1:], -1]
        out[sel] = symbol_to_letter(np.concatenate([syms, cont], axis=1), rank)
    return out


@dataclass
class ConicalSurvey:
    theta_size: int
    horizons: list
    fractions: dict               # horizon -> fraction with a return in [sqrt(H), H]
    late_fractions: dict          # horizon -> fraction with a return in the last 10%
    stderr: dict
    verdict: str | None
    label: str | None
    diffusion_scale: float        # transverse distance at the largest horizon / sqrt(H)
    radius: float                 # absolute tube radius used

    def to_json(self) -> dict:
        return {"theta_size": self.theta_size, "horizons": self.horizons,
                "fractions": {str(h): v for h, v in self.fractions.items()},
                "late_fractions": {str(h): v for h, v in self.late_fractions.items()},
                "stderr": {str(h): v for h, v in self.stderr.items()},
                "verdict": self.verdict, "label": self.label,
                "diffusion_scale": self.diffusion_scale, "radius": self.radius}


def conical_mass_survey(rep: ar.Representation, phi, r: float, count: int, N: int, seed: int,
                        m: int = 6, s_offset: float = 0.05, nu_L: int = 8,
                        horizons: Sequence[int] | None = None,
                        relative: bool = True) -> ConicalSurvey:
    """Fraction of sampled boundary points whose Cartan projections return to
    the tube around R_+ u_phi in the window [sqrt(H), H], for the horizons N
    and 2N (or the given list).

    With ``relative`` the radius r is in units of the transverse diffusion
    scale (median tube distance at the largest horizon over sqrt(H)), so the
    verdict does not depend on the size of the fluctuations of the example.
    """
    M = cr.model(rep, m)
    cp = cr.critical_point(M, phi, verify=False)
    # cp.phi is critical, so its exponent is 1
    nu = pt.patterson_sum(rep, cp.phi, 1.0 + s_offset, nu_L)
    horizons = [N, 2 * N] if horizons is None else sorted(horizons)
    H = max(horizons)
    rays = gibbs_rays(M, cp, nu, count, H, seed)
    dist = drift_batch(rep, cp.u, rays)
    scale = float(np.median(dist[:, H - 1]) / np.sqrt(H))
    radius = r * scale if relative else r
    member = dist <= radius
    fr, late, se = {}, {}, {}
    for h in horizons:
        hit = member[:, int(np.sqrt(h)) - 1:h].any(axis=1)
        fr[h] = float(hit.mean())
        se[h] = float(np.sqrt(fr[h] * (1 - fr[h]) / count))
        late[h] = float(member[:, int(0.9 * h):h].any(axis=1).mean())
    size = len(rep.theta)
    label = PAPER_OPEN if size == 3 else None
    verdict = None
    if size != 3:
        steps = np.diff([fr[h] for h in horizons])
        if size <= 2:
            verdict = "conical mass -> 1" if np.all(steps >= 0) else "inconclusive"
        else:
            verdict = "conical mass -> 0" if np.all(steps <= 0) else "inconclusive"
    return ConicalSurvey(size, horizons, fr, late, se, verdict, label, scale, radius)


def survey_csv(trace: DriftTrace) -> str:
    buf = io.StringIO()
    buf.write("n,distance," + ",".join(f"a{k}" for k in range(trace.cartan.shape[1])) + "\n")
    for n, (d, a) in enumerate(zip(trace.distance, trace.cartan), start=1):
        buf.write(f"{n},{d:.10g}," + ",".join(f"{x:.10g}" for x in a) + "\n")
    return buf.getvalue()


def summary_json(obj) -> str:
    return json.dumps(obj.to_json() if hasattr(obj, "to_json") else obj, sort_keys=True)


# ---------------------------------------------------------------------------
# consistency between the flow picture and the skew product

def project_kernel(v: np.ndarray, phi: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Projection onto ker phi along u."""
    return v - np.outer(v @ phi / (u @ phi), u).reshape(v.shape)


@dataclass
class DisplacementMean:
    mean: np.ndarray              # Gibbs mean of pi^phi(S_n F) / n
    stderr: np.ndarray
    n: int

    @property
    def zscore(self) -> float:
        return float(np.max(np.abs(self.mean) / np.where(self.stderr > 0, self.stderr, np.inf)))


def projected_displacement(M: cr.Model, cp: cr.CriticalPoint, n: int, trials: int, seed: int
                           ) -> DisplacementMean:
    """Monte Carlo of the projected fiber displacement of the skew orbit
    driven by the Ledrappier potential, which is centered by construction."""
    rng = np.random.default_rng(seed)
    tapes = sample_tapes(cp.chain, n + M.F.width - 1, trials, rng)
    S = birkhoff_paths(M.F, tapes, n)[:, -1]
    P = project_kernel(S, cp.phi.vector, cp.mean) / n
    return DisplacementMean(P.mean(axis=0), P.std(axis=0, ddof=1) / np.sqrt(trials), n)


@dataclass
class VerdictAgreement:
    tube: np.ndarray              # per ray: tube return in the window
    box: np.ndarray               # per ray: box return of the conjugated skew orbit
    slack: float                  # sup |a_theta(prefix_n) - S_n F| over the sample
    stretch: float                # |pi^phi v| <= stretch * dist(v, R u) on the positive side
    agree_forward: float          # fraction with tube(r) => box(stretch (r + slack))
    agree_backward: float         # fraction with box(r) => tube(r + slack)


def recurrence_conical_agreement(M: cr.Model, cp: cr.CriticalPoint, rays: np.ndarray, r: float,
                                 H: int | None = None) -> VerdictAgreement:
    """Compare tube returns of Cartan projections with box returns of the
    projected Birkhoff sums of the Ledrappier potential along the same rays.

    The two sequences differ by a bounded amount, so the verdicts must agree
    once radii are enlarged by the observed slack."""
    rep = M.rep
    m = M.F.width
    N = rays.shape[1] - m + 1
    H = N if H is None else H
    a = ar.ray_omega(rep, rays[:, :N])
    syms = letter_to_symbol(rays.astype(int), rep.rank)
    S = birkhoff_paths(M.F, syms, N)
    slack = float(np.max(np.linalg.norm(a - S, axis=-1)))
    u = cp.u
    phi = cp.phi.vector
    # ratio between the oblique projection and the orthogonal one
    w = phi / np.linalg.norm(phi)
    stretch = float(1.0 / abs(w @ u))
    win = slice(int(np.sqrt(H)) - 1, H)
    dist = tube_distance(a, u)
    proj = np.linalg.norm(project_kernel(S.reshape(-1, S.shape[-1]), phi, u),
                          axis=-1).reshape(S.shape[:2])
    tube = (dist[:, win] <= r).any(axis=1)
    box = (proj[:, win] <= r).any(axis=1)
    fwd = tube <= (proj[:, win] <= stretch * (r + slack)).any(axis=1)
    bwd = box <= (dist[:, win] <= r + slack).any(axis=1)
    return VerdictAgreement(tube, box, slack, stretch, float(fwd.mean()), float(bwd.mean()))


@dataclass
class CorrespondenceReport:
    cylinders: list               # (p, q) two-letter cylinders x_{-1} = p, x_0 = q
    bowen_margulis: np.ndarray
    gibbs: np.ndarray
    zscores: np.ndarray
    ess: float

    @property
    def max_z(self) -> float:
        return float(np.max(np.abs(self.zscores)))


def measure_correspondence(M: cr.Model, cp: cr.CriticalPoint, n: int, seed: int,
                           s_offset: float = 0.02, L: int = 10) -> CorrespondenceReport:
    """Two-letter cylinder masses from Bowen-Margulis importance samples
    against the natural extension of the Gibbs measure.

    A pair (x, y) of dual and direct boundary points codes the bi-infinite
    word whose past is x read backwards; the fiber box is common to both
    sides and cancels after normalization."""
    rep = M.rep
    nu = pt.patterson_sum(rep, cp.phi, 1.0 + s_offset, L, complete_tail=True)
    nub = pt.patterson_sum(rep, cp.phi, 1.0 + s_offset, L, complete_tail=True, dual=True)
    bm = pt.bowen_margulis_sample(rep, cp.phi, nu, nub, n, seed, 1.0)
    xf = nub.words[bm.x_index, 0].astype(int)
    yf = nu.words[bm.y_index, 0].astype(int)
    w = np.where(xf != yf, bm.weights, 0.0)
    Z = w.sum()
    states = cp.chain.recoding.states
    k = rep.rank
    letters = [*range(1, k + 1), *range(-1, -k - 1, -1)]
    cyl, est, gib, z = [], [], [], []
    for p in letters:
        for q in letters:
            if q == -p:
                continue
            sel = (xf == -p) & (yf == q)
            e = w[sel].sum() / Z
            se = np.sqrt(((w * (sel - e)) ** 2).sum()) / Z
            ps, qs = letter_to_symbol(np.array([p, q]), k)
            g = cp.chain.pi[(states[:, 0] == ps) & (states[:, 1] == qs)].sum()
            cyl.append((p, q))
            est.append(e)
            gib.append(g)
            z.append((e - g) / se if se > 0 else np.inf)
    return CorrespondenceReport(cyl, np.array(est), np.array(gib), np.array(z), bm.ess)
