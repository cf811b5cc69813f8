"""Thermodynamic formalism for locally constant potentials on one-sided
subshifts of finite type.

A potential of width ``w`` reads the coordinates ``x_0 .. x_{w-1}``. It is
handled through the block recoding whose states are the admissible
``(w'-1)``-blocks and whose edges are the ``w'``-blocks, ``w' = max(w, 2)``;
the weighted adjacency matrix of that graph is the transfer matrix, and its
Perron data give pressure, the equilibrium (Gibbs) Markov chain and
derivatives of pressure.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.optimize
import scipy.sparse
import scipy.sparse.csgraph
import scipy.spatial

MAX_ORBIT_WORDS = 5_000_000


class ReducibleError(ValueError):
    """The recoded shift is not irreducible (or not aperiodic when required)."""


class SubshiftOfFiniteType:
    """One-sided SFT on symbols ``0..n-1`` with a 0/1 transition matrix."""

    def __init__(self, transitions, labels: Sequence | None = None):
        self.T = np.asarray(transitions, dtype=bool)
        n = self.T.shape[0]
        if self.T.shape != (n, n):
            raise ValueError("transition matrix must be square")
        self.labels = list(labels) if labels is not None else list(range(n))
        self._blocks: dict[int, np.ndarray] = {}

    @property
    def n_symbols(self) -> int:
        return self.T.shape[0]

    @classmethod
    def full(cls, n: int) -> "SubshiftOfFiniteType":
        return cls(np.ones((n, n), dtype=bool))

    @classmethod
    def golden_mean(cls) -> "SubshiftOfFiniteType":
        return cls([[1, 1], [1, 0]])

    @classmethod
    def free_group(cls, rank: int) -> "SubshiftOfFiniteType":
        """Coding of the geodesic flow of F_rank: symbols are letters in the
        order 1..k, -1..-k and a letter may not be followed by its inverse."""
        from .words import inverse_symbol, symbol_to_letter
        m = 2 * rank
        T = np.ones((m, m), dtype=bool)
        T[np.arange(m), inverse_symbol(np.arange(m), rank)] = False
        sft = cls(T, labels=[int(x) for x in symbol_to_letter(np.arange(m), rank)])
        sft.rank = rank
        return sft

    def blocks(self, w: int) -> np.ndarray:
        """All admissible ``w``-blocks in lexicographic order, shape ``(M, w)``."""
        if w < 1:
            raise ValueError("block width must be >= 1")
        if w not in self._blocks:
            if w == 1:
                b = np.arange(self.n_symbols)[:, None]
            else:
                prev = self.blocks(w - 1)
                succ = [np.flatnonzero(self.T[s]) for s in range(self.n_symbols)]
                counts = np.array([len(succ[s]) for s in prev[:, -1]])
                rep = np.repeat(prev, counts, axis=0)
                new = np.concatenate([succ[s] for s in prev[:, -1]]) if len(prev) else \
                    np.zeros(0, dtype=int)
                b = np.concatenate([rep, new[:, None]], axis=1)
            self._blocks[w] = b.astype(np.int8 if self.n_symbols < 128 else np.int64)
        return self._blocks[w]

    def codes(self, blocks: np.ndarray) -> np.ndarray:
        code = np.zeros(blocks.shape[0], dtype=np.int64)
        for j in range(blocks.shape[1]):
            code = code * self.n_symbols + blocks[:, j]
        return code

    def block_index(self, blocks: np.ndarray) -> np.ndarray:
        """Row index of each block in :meth:`blocks` (raises on inadmissible)."""
        w = blocks.shape[1]
        ref = self.codes(self.blocks(w))
        c = self.codes(blocks)
        idx = np.searchsorted(ref, c)
        idx = np.minimum(idx, len(ref) - 1)
        if not np.all(ref[idx] == c):
            raise ValueError("inadmissible block")
        return idx

    def is_admissible(self, word: Sequence[int]) -> bool:
        word = np.asarray(word)
        return bool(np.all(self.T[word[:-1], word[1:]]))


@dataclass
class BlockPotential:
    """A locally constant function given by its values on admissible blocks."""
    sft: SubshiftOfFiniteType
    width: int
    values: np.ndarray  # (M,) scalar or (M, D) vector, aligned with sft.blocks(width)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != len(self.sft.blocks(self.width)):
            raise ValueError("one value per admissible block is required")

    @property
    def blocks(self) -> np.ndarray:
        return self.sft.blocks(self.width)

    @property
    def is_vector(self) -> bool:
        return self.values.ndim == 2

    @property
    def dim(self) -> int:
        return self.values.shape[1] if self.is_vector else 1

    @classmethod
    def constant(cls, sft, c, width: int = 1) -> "BlockPotential":
        n = len(sft.blocks(width))
        c = np.asarray(c, float)
        return cls(sft, width, np.broadcast_to(c, (n,) + c.shape).copy())

    @classmethod
    def from_function(cls, sft, width: int, func: Callable) -> "BlockPotential":
        return cls(sft, width, np.array([func(tuple(b)) for b in sft.blocks(width)]))

    @classmethod
    def from_symbol_values(cls, sft, vals) -> "BlockPotential":
        return cls(sft, 1, np.asarray(vals, float))

    def contract(self, coeffs) -> "BlockPotential":
        """Scalar potential ``phi(F)`` for a coefficient vector ``phi``."""
        return BlockPotential(self.sft, self.width, self.values @ np.asarray(coeffs, float))

    def scale(self, t: float) -> "BlockPotential":
        return BlockPotential(self.sft, self.width, t * self.values)

    def __add__(self, other):
        if isinstance(other, BlockPotential):
            w = max(self.width, other.width)
            return BlockPotential(self.sft, w, self.widen(w).values + other.widen(w).values)
        return BlockPotential(self.sft, self.width, self.values + np.asarray(other, float))

    def __sub__(self, other):
        if isinstance(other, BlockPotential):
            return self + other.scale(-1.0)
        return self + (-np.asarray(other, float))

    def widen(self, w: int) -> "BlockPotential":
        """Same function, tabulated on w-blocks (w >= width)."""
        if w == self.width:
            return self
        if w < self.width:
            raise ValueError("cannot narrow a potential")
        big = self.sft.blocks(w)
        idx = self.sft.block_index(big[:, :self.width])
        return BlockPotential(self.sft, w, self.values[idx])

    def shifted(self) -> "BlockPotential":
        """The function x -> u(sigma x), of width ``width + 1``."""
        big = self.sft.blocks(self.width + 1)
        idx = self.sft.block_index(big[:, 1:])
        return BlockPotential(self.sft, self.width + 1, self.values[idx])

    def evaluate(self, words: np.ndarray) -> np.ndarray:
        """Values on the first ``width`` symbols of each row."""
        return self.values[self.sft.block_index(np.asarray(words)[:, :self.width])]

    def periodic_sums(self, words: np.ndarray) -> np.ndarray:
        """Birkhoff sums over the periodic points ``w w w ...`` (rows ``w``)."""
        words = np.asarray(words)
        n = words.shape[1]
        total = 0.0
        for i in range(n):
            cols = [(i + t) % n for t in range(self.width)]
            total = total + self.evaluate(words[:, cols])
        return total

    def birkhoff(self, tape: Sequence[int], n: int) -> np.ndarray:
        """S_n of the potential along a finite tape of length >= n + width - 1."""
        tape = np.asarray(tape)
        if len(tape) < n + self.width - 1:
            raise ValueError("tape too short")
        windows = np.lib.stride_tricks.sliding_window_view(tape, self.width)[:n]
        return self.evaluate(windows).sum(axis=0)

    def to_json(self) -> dict:
        return {"width": self.width,
                "table": {",".join(str(self.sft.labels[s]) for s in b): np.atleast_1d(v).tolist()
                          for b, v in zip(self.blocks, self.values)}}


# ---------------------------------------------------------------------------
# transfer matrices

class Recoding:
    """Sparse structure of the block graph for potentials of a given width."""

    def __init__(self, sft: SubshiftOfFiniteType, width: int):
        self.sft = sft
        self.width = max(width, 2)
        self.edges = sft.blocks(self.width)
        self.states = sft.blocks(self.width - 1)
        self.src = sft.block_index(self.edges[:, :-1])
        self.dst = sft.block_index(self.edges[:, 1:])
        n = len(self.states)
        self.n_states = n
        pattern = scipy.sparse.csr_matrix(
            (np.ones(len(self.edges)), (self.src, self.dst)), shape=(n, n))
        ncomp, _ = scipy.sparse.csgraph.connected_components(pattern, connection="strong")
        self.irreducible = ncomp == 1
        self.aperiodic = self.irreducible and _aperiodic(pattern)

    def edge_values(self, f: BlockPotential) -> np.ndarray:
        if f.sft is not self.sft:
            raise ValueError("potential lives on another shift")
        return f.widen(self.width).values

    def matrix(self, vals: np.ndarray) -> scipy.sparse.csr_matrix:
        n = self.n_states
        return scipy.sparse.csr_matrix((vals, (self.src, self.dst)), shape=(n, n))


def _aperiodic(pattern) -> bool:
    """Period of an irreducible graph via BFS levels."""
    n = pattern.shape[0]
    level = scipy.sparse.csgraph.breadth_first_order(pattern, 0, return_predecessors=False)
    dist = np.full(n, -1)
    dist[0] = 0
    order = level
    indptr, indices = pattern.indptr, pattern.indices
    for u in order:
        for v in indices[indptr[u]:indptr[u + 1]]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
    coo = pattern.tocoo()
    diffs = dist[coo.row] + 1 - dist[coo.col]
    return int(np.gcd.reduce(np.abs(diffs))) == 1


_recodings: dict = {}


def recoding(sft: SubshiftOfFiniteType, width: int) -> Recoding:
    key = (id(sft), max(width, 2))
    rec = _recodings.get(key)
    if rec is None or rec.sft is not sft:
        rec = Recoding(sft, width)
        _recodings[key] = rec
    return rec


@dataclass
class TransferData:
    recoding: Recoding
    log_eigenvalue: float         # pressure, log of the Perron root
    right: np.ndarray             # h, positive, normalized <nu, h> = 1
    left: np.ndarray              # nu, positive, sum 1
    iterations: int
    edge_values: np.ndarray

    @property
    def pressure(self) -> float:
        return self.log_eigenvalue


def _power_iteration(A, x0, tol: float, max_iter: int):
    x = x0 / x0.sum()
    lam_old = np.nan
    for it in range(1, max_iter + 1):
        y = A @ x
        lam = y.sum()
        if not lam > 0:
            raise ReducibleError("transfer matrix annihilated the positive cone")
        y /= lam
        if it > 2 and abs(lam - lam_old) <= tol * lam and np.max(np.abs(y - x)) <= 10 * tol * np.max(y):
            return lam, y, it
        x, lam_old = y, lam
    raise RuntimeError(f"power iteration did not converge in {max_iter} steps")


def transfer_data(sft: SubshiftOfFiniteType, f: BlockPotential, tol: float = 1e-13,
                  max_iter: int = 200_000, warm: TransferData | None = None) -> TransferData:
    """Perron data of the transfer matrix of ``f`` (scalar potential)."""
    if f.is_vector:
        raise ValueError("scalar potential required")
    rec = recoding(sft, f.width)
    if not rec.irreducible:
        raise ReducibleError("recoded shift is reducible")
    vals = rec.edge_values(f)
    shift = vals.max()
    A = rec.matrix(np.exp(vals - shift))
    n = rec.n_states
    if not rec.aperiodic:
        # a lazy walk has the same Perron vectors and root + 1
        A = A + scipy.sparse.identity(n, format="csr")
    x0 = warm.right.copy() if warm is not None and len(warm.right) == n else np.ones(n)
    y0 = warm.left.copy() if warm is not None and len(warm.left) == n else np.ones(n)
    lam, h, it1 = _power_iteration(A, x0, tol, max_iter)
    _, nu, it2 = _power_iteration(A.T.tocsr(), y0, tol, max_iter)
    if not rec.aperiodic:
        lam = lam - 1.0
    nu = nu / nu.sum()
    h = h / (nu @ h)
    if np.any(h < 0) or np.any(nu < 0):
        raise ReducibleError("Perron vectors are not positive")
    return TransferData(rec, float(np.log(lam) + shift), h, nu, max(it1, it2), vals)


def pressure_transfer(sft: SubshiftOfFiniteType, f: BlockPotential, **kw) -> float:
    """Topological pressure as the log of the Perron root."""
    return transfer_data(sft, f, **kw).pressure


# ---------------------------------------------------------------------------
# periodic orbits

def closed_words(sft: SubshiftOfFiniteType, n: int) -> np.ndarray:
    """Admissible words of length n whose periodic extension is admissible."""
    if len(sft.blocks(1)) * (sft.n_symbols ** max(n - 1, 0)) > 50 * MAX_ORBIT_WORDS \
            and _count_blocks(sft, n) > MAX_ORBIT_WORDS:
        raise OverflowError(f"too many periodic words of period {n}")
    b = sft.blocks(n)
    return b[sft.T[b[:, -1], b[:, 0]]]


def _count_blocks(sft, n):
    v = np.ones(sft.n_symbols)
    for _ in range(n - 1):
        v = sft.T.astype(float) @ v
    return v.sum()


def primitive_mask(words: np.ndarray) -> np.ndarray:
    n = words.shape[1]
    power = np.zeros(len(words), dtype=bool)
    for p in range(2, n + 1):
        if n % p == 0 and all(p % q for q in range(2, p)):
            power |= np.all(words == np.roll(words, -(n // p), axis=1), axis=1)
    return ~power


def least_rotation_mask(sft, words: np.ndarray) -> np.ndarray:
    n = words.shape[1]
    codes = np.stack([sft.codes(np.roll(words, -r, axis=1)) for r in range(n)], axis=1)
    return codes[:, 0] == codes.min(axis=1)


def periodic_orbits(sft: SubshiftOfFiniteType, n: int) -> np.ndarray:
    """One representative (least rotation) per primitive orbit of period n."""
    w = closed_words(sft, n)
    w = w[primitive_mask(w)]
    return w[least_rotation_mask(sft, w)]


@dataclass
class OrbitPressure:
    value: float
    band: float
    horizon: int
    slopes: list
    log_weights: list = field(default_factory=list)


def pressure_orbits(sft: SubshiftOfFiniteType, f: BlockPotential, T: int) -> OrbitPressure:
    """Pressure from periodic orbits of period <= T.

    For each period ``n`` the weight ``W_n = sum n e^{l_tau(f)}`` over primitive
    orbits of period exactly n grows like ``e^{nP}``; the estimate is the last
    increment ``log W_T - log W_{T-1}`` and the band is the spread of the
    last three increments. When only finitely many orbits exist the pressure
    is the largest orbit average.
    """
    if T < 4:
        raise ValueError("T must be >= 4")
    logw, means = [], []
    for n in range(1, T + 1):
        w = closed_words(sft, n)
        if len(w) == 0:
            logw.append(-np.inf)
            continue
        prim = primitive_mask(w)
        s = np.atleast_1d(f.periodic_sums(w[prim])) if prim.any() else np.zeros(0)
        if len(s) == 0:
            logw.append(-np.inf)
            continue
        means.append((s / n).max())
        top = s.max()
        logw.append(top + np.log(np.exp(s - top).sum()))  # = log sum_n-points e^{S_n f}
    logw = np.array(logw)
    finite = np.isfinite(logw)
    if finite[-3:].sum() < 3:
        # finitely many periodic orbits: zero entropy, variational principle
        return OrbitPressure(float(max(means)), 0.0, T, [], list(logw))
    slopes = np.diff(logw)
    last = slopes[-3:]
    return OrbitPressure(float(slopes[-1]), float(last.max() - last.min()), T,
                         list(slopes), list(logw))


# ---------------------------------------------------------------------------
# equilibrium states

@dataclass
class GibbsChain:
    """Stationary Markov chain on the recoded states (the equilibrium state)."""
    recoding: Recoding
    Q: scipy.sparse.csr_matrix
    pi: np.ndarray
    edge_prob: np.ndarray     # P(edge) = pi_src Q_edge, aligned with recoding.edges
    transition: np.ndarray    # Q value of each edge
    pressure: float
    transfer: TransferData | None = None

    def expectation(self, g: BlockPotential) -> np.ndarray:
        return self.edge_prob @ self.recoding.edge_values(g)

    @property
    def entropy(self) -> float:
        q = self.transition
        return float(-(self.edge_prob * np.log(q)).sum())

    def cylinder_measure(self, block: Sequence[int]) -> float:
        """Measure of the cylinder of an admissible block of length >= width - 1."""
        rec = self.recoding
        block = np.asarray(block)
        k = rec.width - 1
        if len(block) < k:
            raise ValueError("block shorter than the state length")
        s0 = rec.sft.block_index(block[None, :k])[0]
        p = self.pi[s0]
        if len(block) > k:
            e = rec.sft.block_index(np.lib.stride_tricks.sliding_window_view(block, rec.width))
            p *= np.prod(self.transition[e])
        return float(p)

    def to_coordinate_text(self) -> str:
        coo = self.Q.tocoo()
        lines = [f"{r} {c} {v:.17g}" for r, c, v in zip(coo.row, coo.col, coo.data)]
        return "\n".join(lines) + "\n"

    def sample(self, length: int, count: int, rng, start_states=None) -> np.ndarray:
        """Trajectories of recoded states, shape ``(count, length)``."""
        n = self.recoding.n_states
        if start_states is None:
            cur = rng.choice(n, size=count, p=self.pi)
        else:
            cur = np.asarray(start_states)
        out = np.empty((count, length), dtype=np.int64)
        out[:, 0] = cur
        indptr, indices, data = self.Q.indptr, self.Q.indices, self.Q.data
        cum = np.empty_like(data)
        for u in range(n):
            cum[indptr[u]:indptr[u + 1]] = np.cumsum(data[indptr[u]:indptr[u + 1]])
        for t in range(1, length):
            u = rng.random(count)
            start, stop = indptr[cur], indptr[cur + 1]
            # position of u inside the row's cumulative distribution
            pos = start.copy()
            span = stop - start
            for k in range(int(span.max())):
                active = (k < span - 1) & (cum[np.minimum(start + k, len(cum) - 1)] < u)
                pos = np.where(active, start + k + 1, pos)
            cur = indices[pos]
            out[:, t] = cur
        return out


def gibbs_measure(sft: SubshiftOfFiniteType, f: BlockPotential, warm=None) -> GibbsChain:
    td = transfer_data(sft, f, warm=warm)
    rec = td.recoding
    if not rec.aperiodic:
        raise ReducibleError("recoded shift is not aperiodic")
    lam = np.exp(td.pressure)
    h = td.right
    q = np.exp(td.edge_values - td.pressure) * h[rec.dst] / h[rec.src]
    pi = td.left * h
    pi = pi / pi.sum()
    Q = rec.matrix(q)
    return GibbsChain(rec, Q, pi, pi[rec.src] * q, q, td.pressure, td)


def gibbs_constant(chain: GibbsChain, f: BlockPotential, max_len: int) -> float:
    """Smallest C with mu[block] / exp(S f - #edges P) in [1/C, C] over all
    blocks of length <= max_len."""
    rec = chain.recoding
    vals = rec.edge_values(f)
    C = 1.0
    for n in range(rec.width, max_len + 1):
        blocks = rec.sft.blocks(n)
        s0 = rec.sft.block_index(blocks[:, :rec.width - 1])
        e = rec.sft.block_index(
            np.lib.stride_tricks.sliding_window_view(blocks, rec.width, axis=1).reshape(-1, rec.width)
        ).reshape(len(blocks), -1)
        logmu = np.log(chain.pi[s0]) + np.log(chain.transition[e]).sum(axis=1)
        logg = vals[e].sum(axis=1) - e.shape[1] * chain.pressure
        r = logmu - logg
        C = max(C, float(np.exp(np.abs(r).max())))
    return C


# ---------------------------------------------------------------------------
# entropy roots, gradients, rotation sets, Abramov, Livsic

def min_orbit_mean(sft, f: BlockPotential, horizon: int = 6) -> float:
    m = np.inf
    for n in range(1, horizon + 1):
        w = periodic_orbits(sft, n)
        if len(w):
            m = min(m, float((np.atleast_1d(f.periodic_sums(w)) / n).min()))
    return m


def entropy_root(sft: SubshiftOfFiniteType, f: BlockPotential, horizon: int = 6,
                 bracket=(1e-6, 1e3), xtol: float = 1e-12, rtol: float = 1e-12) -> float:
    """The unique ``h > 0`` with ``P(-h f) = 0``."""
    if min_orbit_mean(sft, f, horizon) <= 0:
        raise ValueError("potential is not in the positive class (nonpositive periodic mean)")
    state = {"warm": None}
    memo: dict[float, float] = {}

    def P(s):
        if s not in memo:
            td = transfer_data(sft, f.scale(-s), warm=state["warm"])
            state["warm"] = td
            memo[s] = td.pressure
        return memo[s]

    # By convexity P(-s f) lies above its tangent at s = 0, whose zero
    # P(0) / int f dm_0 is a lower bound for the root. Starting there keeps the
    # search away from large s, where the Gibbs state concentrates on one
    # orbit and the spectral gap closes.
    start = 1.0
    try:
        m0 = gibbs_measure(sft, f.scale(0.0))
        slope = float(m0.expectation(f))
        if slope > 0 and m0.pressure > 0:
            start = m0.pressure / slope
    except ReducibleError:
        pass
    # geometric search inside the bracket, widened tenfold on failure
    lo_lim, hi_lim = bracket
    for _ in range(4):
        lo = hi = min(max(start, lo_lim), hi_lim)
        while P(hi) > 0 and hi < hi_lim:
            lo, hi = hi, min(2 * hi, hi_lim)
        while P(lo) < 0 and lo > lo_lim:
            lo, hi = max(lo / 2, lo_lim), lo
        if P(lo) >= 0 >= P(hi):
            break
        lo_lim, hi_lim = lo_lim / 10, hi_lim * 10
    else:
        raise ValueError("no sign change of s -> P(-s f) in the bracket")
    return float(scipy.optimize.brentq(P, lo, hi, xtol=xtol, rtol=rtol))


def pressure_gradient(sft: SubshiftOfFiniteType, F: BlockPotential, phi) -> np.ndarray:
    """Integral of the vector potential F against the equilibrium state of
    -phi(F). The derivative of phi -> P(-phi(F)) is minus this vector."""
    chain = gibbs_measure(sft, F.contract(phi).scale(-1.0))
    return chain.expectation(F)


@dataclass
class RotationSet:
    points: np.ndarray
    vertices: np.ndarray
    dim: int
    equations: np.ndarray | None = None

    def contains(self, v, tol: float = 1e-12) -> bool:
        v = np.atleast_1d(np.asarray(v, float))
        if self.dim == 0:
            return bool(np.allclose(v, self.vertices[0], atol=tol))
        if self.points.shape[1] == 1:
            return bool(self.vertices.min() - tol <= v[0] <= self.vertices.max() + tol)
        return bool(np.all(self.equations[:, :-1] @ v + self.equations[:, -1] <= tol))

    def interior_contains(self, v, margin: float = 1e-12) -> bool:
        v = np.atleast_1d(np.asarray(v, float))
        if self.points.shape[1] == 1:
            return bool(self.vertices.min() + margin < v[0] < self.vertices.max() - margin)
        return bool(np.all(self.equations[:, :-1] @ v + self.equations[:, -1] < -margin))

    def distance(self, v) -> float:
        """Euclidean distance from v to the hull (dimensions 1 and 2)."""
        v = np.atleast_1d(np.asarray(v, float))
        if self.dim == 0:
            return float(np.linalg.norm(v - self.vertices[0]))
        if self.points.shape[1] == 1:
            lo, hi = self.vertices.min(), self.vertices.max()
            return float(max(lo - v[0], v[0] - hi, 0.0))
        if self.points.shape[1] != 2:
            raise NotImplementedError("distance only implemented in dimensions 1 and 2")
        if self.contains(v):
            return 0.0
        V = self.vertices
        best = np.inf
        for a, b in zip(V, np.roll(V, -1, axis=0)):
            t = np.clip(np.dot(v - a, b - a) / max(np.dot(b - a, b - a), 1e-300), 0, 1)
            best = min(best, float(np.linalg.norm(a + t * (b - a) - v)))
        return best

    def hausdorff_to(self, inner: "RotationSet") -> float:
        """Hausdorff distance to a hull contained in this one."""
        return max(inner.distance(v) for v in self.vertices)

    @property
    def diameter(self) -> float:
        V = self.vertices
        return float(max(np.linalg.norm(a - b) for a in V for b in V))


def periodic_means(sft, F: BlockPotential, T: int) -> np.ndarray:
    out = []
    for n in range(1, T + 1):
        w = periodic_orbits(sft, n)
        if len(w):
            s = F.periodic_sums(w)
            out.append(np.reshape(s, (len(w), -1)) / n)
    return np.concatenate(out)


def rotation_set(sft, F: BlockPotential, T: int) -> RotationSet:
    """Convex hull of periodic means of F over primitive orbits of period <= T."""
    if T < 4:
        raise ValueError("T must be >= 4")
    pts = periodic_means(sft, F, T)
    D = pts.shape[1]
    spread = np.ptp(pts, axis=0).max()
    if spread < 1e-12:
        return RotationSet(pts, pts[:1], 0)
    if D == 1:
        return RotationSet(pts, np.array([[pts.min()], [pts.max()]]), 1)
    hull = scipy.spatial.ConvexHull(pts)
    return RotationSet(pts, pts[hull.vertices], D, hull.equations)


@dataclass
class AbramovResult:
    entropy: float
    weights: np.ndarray   # reweighted edge measure f m / int f dm


def abramov(chain: GibbsChain, f: BlockPotential) -> AbramovResult:
    vals = chain.recoding.edge_values(f)
    if np.any(vals[chain.edge_prob > 0] <= 0):
        raise ValueError("roof function must be positive")
    mean = chain.edge_prob @ vals
    return AbramovResult(chain.entropy / mean, chain.edge_prob * vals / mean)


def livsic_test(sft, F: BlockPotential, G: BlockPotential, T: int) -> float:
    """max over primitive orbits of period <= T of |l(F) - l(G)| / period."""
    worst = 0.0
    for n in range(1, T + 1):
        w = periodic_orbits(sft, n)
        if len(w) == 0:
            continue
        d = np.reshape(F.periodic_sums(w) - G.periodic_sums(w), (len(w), -1))
        worst = max(worst, float(np.linalg.norm(d, axis=1).max()) / n)
    return worst


def pressure_report(value: float, method: str, tolerance: float, horizon) -> str:
    return json.dumps({"value": value, "method": method, "tolerance": tolerance,
                       "horizon": horizon}, sort_keys=True)
