"""Structure theory of products of SL(d, R).

Conventions
-----------
* A root is a pair ``(i, j)``: factor ``i`` (0-based) and simple root index
  ``1 <= j <= d_i - 1``. The opposite root is ``(i, d_i - j)``.
* Vectors of the Cartan space restricted to ``theta`` are stored in
  *fundamental-weight coordinates*: one entry per root, the value of
  ``varpi_j`` (sum of the first ``j`` coordinates of factor ``i``).
* A flag in ``F_theta`` stores, for each root ``(i, j)``, an orthonormal
  ``d_i x j`` basis of a ``j``-plane. A flag in ``F_{i theta}`` (a *dual*
  flag) is keyed by the opposite roots and stores ``(d_i - j)``-planes.
* The pairing of a ``(d-j)``-plane ``W`` with a ``j``-plane ``Y`` is
  ``|det [W | Y]|`` for orthonormal bases; it vanishes exactly when the two
  planes are not transverse.

Most functions have a batched twin working on stacks of matrices; the
batched versions are what the higher modules use.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

Root = tuple[int, int]

# Gromov product of non-transverse flags. Returned on purpose, never produced
# by taking log(0).
NON_TRANSVERSE = float("-inf")
TRANSVERSALITY_TOL = 1e-14


@dataclass(frozen=True)
class GroupShape:
    dims: tuple[int, ...]
    theta: tuple[Root, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "theta", tuple((int(i), int(j)) for i, j in self.theta))
        if not self.dims or min(self.dims) < 2:
            raise ValueError("every factor must have dimension >= 2")
        if not self.theta:
            raise ValueError("theta must be nonempty")
        if len(set(self.theta)) != len(self.theta):
            raise ValueError("theta has repeated roots")
        for i, j in self.theta:
            if not 0 <= i < len(self.dims) or not 1 <= j <= self.dims[i] - 1:
                raise ValueError(f"root {(i, j)} out of range for dims {self.dims}")

    @property
    def dual_theta(self) -> tuple[Root, ...]:
        return tuple(opposite_root(self.dims, s) for s in self.theta)

    @property
    def cartan_dim(self) -> int:
        return sum(d - 1 for d in self.dims)

    @property
    def simple_roots(self) -> tuple[Root, ...]:
        return tuple((i, j) for i, d in enumerate(self.dims) for j in range(1, d))

    def with_theta(self, theta) -> "GroupShape":
        return GroupShape(self.dims, tuple(theta))


def opposite_root(dims: Sequence[int], root: Root) -> Root:
    i, j = root
    return (i, dims[i] - j)


def _normalize_det(m: np.ndarray) -> np.ndarray:
    m = np.array(m, dtype=float)
    d = m.shape[0]
    det = np.linalg.det(m)
    if det == 0:
        raise ValueError("singular matrix")
    if det < 0:
        if d % 2 == 0:
            raise ValueError("negative determinant cannot be normalized into SL(d) for even d")
        m = -m
        det = -det
    return m / det ** (1.0 / d)


class GroupElement:
    """One matrix per factor, each renormalized to determinant 1."""

    def __init__(self, mats: Sequence[np.ndarray], normalize: bool = True):
        self.mats = tuple(_normalize_det(m) if normalize else np.asarray(m, float) for m in mats)
        self._inv = None

    @classmethod
    def identity(cls, dims: Sequence[int]) -> "GroupElement":
        return cls([np.eye(d) for d in dims], normalize=False)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(m.shape[0] for m in self.mats)

    @property
    def inv(self) -> "GroupElement":
        if self._inv is None:
            self._inv = GroupElement([np.linalg.inv(m) for m in self.mats], normalize=False)
            self._inv._inv = self
        return self._inv

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement([a @ b for a, b in zip(self.mats, other.mats)], normalize=False)

    def __pow__(self, n: int) -> "GroupElement":
        base, other = (self, self.inv) if n >= 0 else (self.inv, self)
        out = GroupElement([np.linalg.matrix_power(m, abs(n)) for m in base.mats], normalize=False)
        out._inv = GroupElement([np.linalg.matrix_power(m, abs(n)) for m in other.mats],
                                normalize=False)
        out._inv._inv = out
        return out

    def act(self, flag: "FlagPoint") -> "FlagPoint":
        return FlagPoint({s: act_plane(self.mats[s[0]], b) for s, b in flag.planes.items()})

    def __repr__(self):
        return f"GroupElement(dims={self.dims})"


@dataclass
class FlagPoint:
    planes: dict  # root -> (d, j) orthonormal basis

    def __getitem__(self, root: Root) -> np.ndarray:
        return self.planes[root]

    def roots(self):
        return tuple(self.planes)

    def to_json(self) -> dict:
        return {f"{i},{j}": b.tolist() for (i, j), b in self.planes.items()}

    @classmethod
    def from_json(cls, data: Mapping) -> "FlagPoint":
        planes = {}
        for key, b in data.items():
            i, j = (int(t) for t in key.split(","))
            planes[(i, j)] = np.asarray(b, float)
        return cls(planes)

    @classmethod
    def from_vectors(cls, planes: Mapping) -> "FlagPoint":
        """Build from arbitrary spanning vectors (columns)."""
        return cls({s: orthonormalize(np.asarray(b, float).reshape(np.shape(b)[0], -1))
                    for s, b in planes.items()})


@dataclass(frozen=True)
class Functional:
    """A linear form on the restricted Cartan space, sum of c_sigma varpi_sigma."""
    coeffs: tuple[float, ...]
    theta: tuple[Root, ...]

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        object.__setattr__(self, "theta", tuple(tuple(s) for s in self.theta))
        if len(self.coeffs) != len(self.theta):
            raise ValueError("one coefficient per root is required")

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.coeffs)

    def __call__(self, omega_coords) -> np.ndarray:
        return np.asarray(omega_coords) @ self.vector

    def on_cartan(self, a: Sequence[np.ndarray]) -> float:
        """Evaluate on a full Cartan vector (one coordinate list per factor)."""
        return float(self(omega_of_cartan(a, self.theta)))

    def scaled(self, t: float) -> "Functional":
        return Functional(tuple(t * c for c in self.coeffs), self.theta)

    def __add__(self, other: "Functional") -> "Functional":
        assert self.theta == other.theta
        return Functional(tuple(a + b for a, b in zip(self.coeffs, other.coeffs)), self.theta)


def omega_of_cartan(a: Sequence[np.ndarray], theta: Sequence[Root]) -> np.ndarray:
    return np.array([np.sum(np.asarray(a[i])[..., :j], axis=-1) for i, j in theta]).T


@dataclass
class CartanData:
    a: list                       # per factor, descending log singular values
    gaps: dict                    # root -> a_j - a_{j+1}
    attractor: FlagPoint          # U_theta(g): top-j left singular subspaces
    dual_attractor: FlagPoint     # U_{i theta}(g^-1), keyed by opposite roots
    approximate: bool             # True when some gap is (numerically) zero
    theta: tuple = field(default=())

    @property
    def min_gap(self) -> float:
        return min(self.gaps.values())

    def omega(self) -> np.ndarray:
        return omega_of_cartan(self.a, self.theta)


# ---------------------------------------------------------------------------
# linear algebra helpers

def _sign_fix(vecs: np.ndarray) -> np.ndarray:
    """Make the first non-negligible coordinate of each column positive."""
    idx = np.argmax(np.abs(vecs) > 1e-12, axis=-2)
    first = np.take_along_axis(vecs, idx[..., None, :], axis=-2)
    return vecs * np.where(first < 0, -1.0, 1.0)


def orthonormalize(b: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(b)
    if np.min(np.abs(np.diagonal(r, axis1=-2, axis2=-1))) < 1e-13 * max(1.0, np.abs(r).max()):
        raise ValueError("degenerate plane basis")
    return _sign_fix(q)


def act_plane(m: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Orthonormal basis of m(span b), stable when m contracts strongly.

    With m = U S V^T and C = V^T b, the image is spanned by U S C; when the
    top j x j block C_1 of C is invertible the same plane is spanned by
    U S C C_1^-1 S_1^-1 = U [I; S_2 C_2 C_1^-1 S_1^-1], whose columns are far
    from parallel."""
    j = b.shape[1]
    u, s, vt = np.linalg.svd(m)
    c = vt @ b
    c1 = c[:j]
    if np.linalg.cond(c1) > 1e12:
        return orthonormalize(m @ b)
    x = np.linalg.solve(c1.T, c.T).T
    x = s[:, None] * x / s[None, :j]
    return orthonormalize(u @ x)


def orthonormalize_batch(b: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(b)
    return q


def svd_batch(m: np.ndarray):
    """SVD of a stack, left vectors with the deterministic sign convention."""
    u, s, vt = np.linalg.svd(m)
    return _sign_fix(u), s, vt


def log_singular_values(m: np.ndarray) -> np.ndarray:
    """Descending log singular values of determinant-one matrices. The last
    one is recovered from the zero-sum constraint; computed directly it
    carries an absolute error of order eps * s_1 / s_d."""
    with np.errstate(divide="ignore"):
        out = np.log(np.linalg.svd(m, compute_uv=False))
    out[..., -1] = -out[..., :-1].sum(axis=-1)
    return out


def cartan(g: GroupElement, theta: Sequence[Root] | None = None, gap_tol: float = 1e-9) -> CartanData:
    theta = tuple(theta) if theta is not None else tuple(
        (i, j) for i, d in enumerate(g.dims) for j in range(1, d))
    a, att, dual, gaps, svds = [], {}, {}, {}, []
    for m in g.mats:
        try:
            svds.append(svd_batch(m))
        except np.linalg.LinAlgError as exc:
            raise ValueError("SVD failed: ill-conditioned input") from exc
        la = np.log(svds[-1][1])
        la[-1] = -la[:-1].sum()
        a.append(la)
    for (i, j) in theta:
        u, s, vt = svds[i]
        d = g.mats[i].shape[0]
        gaps[(i, j)] = float(a[i][j - 1] - a[i][j])
        att[(i, j)] = u[:, :j]
        # top (d-j) left singular vectors of g^-1 = right singular vectors of g
        # attached to the d-j smallest singular values
        dual[(i, d - j)] = _sign_fix(vt.T[:, j:])
    approximate = min(gaps.values()) <= gap_tol
    return CartanData(a, gaps, FlagPoint(att), FlagPoint(dual), approximate, theta)


def cartan_omega_batch(mats: Sequence[np.ndarray], theta: Sequence[Root]) -> np.ndarray:
    """Fundamental-weight coordinates of a_theta for stacks ``mats[i]: (N, d, d)``."""
    logs = {}
    out = []
    for i, j in theta:
        if i not in logs:
            logs[i] = log_singular_values(mats[i])
        out.append(logs[i][..., :j].sum(axis=-1))
    return np.stack(out, axis=-1)


def root_gaps_batch(mats: Sequence[np.ndarray], theta: Sequence[Root]) -> np.ndarray:
    logs = {}
    out = []
    for i, j in theta:
        if i not in logs:
            logs[i] = log_singular_values(mats[i])
        out.append(logs[i][..., j - 1] - logs[i][..., j])
    return np.stack(out, axis=-1)


def attractors_batch(mats: Sequence[np.ndarray], theta: Sequence[Root], dual: bool = False) -> dict:
    """U_theta of each element (``dual=False``) or U_{i theta} of each element
    (``dual=True``, keyed by opposite roots)."""
    out = {}
    cache = {}
    for i, j in theta:
        if i not in cache:
            cache[i] = svd_batch(mats[i])[0]
        d = mats[i].shape[-1]
        if dual:
            out[(i, d - j)] = cache[i][..., :, :d - j]
        else:
            out[(i, j)] = cache[i][..., :, :j]
    return out


def jordan(g: GroupElement) -> list:
    out = []
    for m, minv in zip(g.mats, g.inv.mats):
        try:
            top = np.sort(np.log(np.abs(np.linalg.eigvals(m))))[::-1]
            # small moduli are read off the inverse, where they are large
            bottom = -np.sort(np.log(np.abs(np.linalg.eigvals(minv))))
        except np.linalg.LinAlgError as exc:
            raise ValueError("eigenvalue solver failed") from exc
        h = (len(top) + 1) // 2
        out.append(np.concatenate([top[:h], bottom[h:]]))
    return out


def jordan_omega_batch(mats: Sequence[np.ndarray], theta: Sequence[Root]) -> np.ndarray:
    logs = {}
    out = []
    for i, j in theta:
        if i not in logs:
            logs[i] = np.sort(np.log(np.abs(np.linalg.eigvals(mats[i]))), axis=-1)[..., ::-1]
        out.append(logs[i][..., :j].sum(axis=-1))
    return np.stack(out, axis=-1)


def opposition(v):
    """Reverse and negate each factor's coordinate list."""
    if isinstance(v, np.ndarray) and v.ndim == 1:
        return -v[::-1]
    return [-np.asarray(x)[::-1] for x in v]


def ext_power(g: np.ndarray, j: int) -> np.ndarray:
    """Matrix of the j-th exterior power on the basis e_I, I increasing
    j-subsets in lexicographic order. Works on stacks."""
    g = np.asarray(g, float)
    d = g.shape[-1]
    if not 1 <= j <= d - 1:
        raise ValueError(f"exterior power index {j} out of range for d={d}")
    subsets = list(itertools.combinations(range(d), j))
    n = len(subsets)
    out = np.empty(g.shape[:-2] + (n, n))
    for a, rows in enumerate(subsets):
        sub = g[..., rows, :]
        for b, cols in enumerate(subsets):
            out[..., a, b] = np.linalg.det(sub[..., :, cols])
    return out


def plane_volume(g: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """||g b_1 ^ ... ^ g b_j|| for an orthonormal basis (stacks allowed)."""
    gb = g @ basis
    gram = np.swapaxes(gb, -1, -2) @ gb
    return np.sqrt(np.abs(np.linalg.det(gram)))


def busemann(g: GroupElement, x: FlagPoint, theta: Sequence[Root]) -> np.ndarray:
    """varpi_sigma(beta_theta(g, x)) for each root: log ||Lambda^j g v_x||."""
    vals = []
    for i, j in theta:
        b = x[(i, j)]
        if b.shape[1] != j or not np.allclose(b.T @ b, np.eye(j), atol=1e-8):
            raise ValueError("degenerate plane basis")
        vals.append(np.log(plane_volume(g.mats[i], b)))
    return np.array(vals)


def busemann_batch(mats: Sequence[np.ndarray], planes: Mapping, theta: Sequence[Root]) -> np.ndarray:
    return np.stack([np.log(plane_volume(mats[i], planes[(i, j)])) for i, j in theta], axis=-1)


def pairing_batch(w: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.abs(np.linalg.det(np.concatenate([w, y], axis=-1)))


def gromov_product(x: FlagPoint, y: FlagPoint, theta: Sequence[Root]) -> np.ndarray:
    """varpi_sigma of the Gromov product of a dual flag ``x`` and a flag ``y``.

    Entries equal :data:`NON_TRANSVERSE` when the planes are not transverse.
    """
    out = []
    for i, j in theta:
        yb = y[(i, j)]
        d = yb.shape[0]
        xb = x[(i, d - j)]
        p = float(pairing_batch(xb, yb))
        out.append(NON_TRANSVERSE if p <= TRANSVERSALITY_TOL else np.log(p))
    return np.array(out)


def gromov_batch(xplanes: Mapping, yplanes: Mapping, theta: Sequence[Root], dims) -> np.ndarray:
    out = []
    for i, j in theta:
        p = pairing_batch(xplanes[(i, dims[i] - j)], yplanes[(i, j)])
        with np.errstate(divide="ignore"):
            out.append(np.where(p <= TRANSVERSALITY_TOL, NON_TRANSVERSE, np.log(p)))
    return np.stack(out, axis=-1)


def flag_distance(x: FlagPoint, y: FlagPoint) -> float:
    """Largest principal angle over all planes of the two flags."""
    return max(float(principal_angle_batch(x[s], y[s])) for s in x.planes)


def principal_angle_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Largest principal angle between stacks of orthonormal bases of equal
    dimension. Uses the sine, ||a - b b^T a||, which stays accurate for
    nearly equal planes where the arccos of a singular value does not."""
    resid = a - b @ (np.swapaxes(b, -1, -2) @ a)
    s = np.linalg.svd(resid, compute_uv=False)[..., 0]
    return np.arcsin(np.clip(s, 0.0, 1.0))


def flag_distance_batch(x: Mapping, y: Mapping) -> np.ndarray:
    return np.max(np.stack([principal_angle_batch(x[s], y[s]) for s in x], axis=-1), axis=-1)


# ---------------------------------------------------------------------------
# basins, proximality, Quint's lemma

@dataclass
class BasinResult:
    inside: bool
    gromov: np.ndarray
    defect: float


def cartan_basin_test(g: GroupElement, y: FlagPoint, alpha: float,
                      theta: Sequence[Root]) -> BasinResult:
    cd = cartan(g, theta)
    if cd.approximate:
        raise ValueError(f"attractor undefined: min gap {cd.min_gap:.3g}")
    gr = gromov_product(cd.dual_attractor, y, theta)
    inside = bool(np.all(gr > -alpha))
    defect = float(np.linalg.norm(cd.omega() - busemann(g, y, theta))) if np.all(
        np.isfinite(gr)) else float("inf")
    return BasinResult(inside, gr, defect)


@dataclass
class ProximalityReport:
    proximal: bool
    g_minus: FlagPoint | None
    g_plus: FlagPoint | None
    gromov: np.ndarray | None
    r_ok: bool
    eps_ok: bool
    defect: float | None


def _invariant_subspace(m: np.ndarray, j: int) -> np.ndarray | None:
    """Span of the generalized eigenvectors of the j eigenvalues of largest
    modulus, or None if that modulus gap is zero."""
    ev = np.sort(np.abs(np.linalg.eigvals(m)))[::-1]
    if not ev[j - 1] > ev[j] * (1 + 1e-9):
        return None
    cut = np.sqrt(ev[j - 1] * ev[j])
    t, z, sdim = scipy.linalg.schur(m, output="real", sort=lambda re, im: np.hypot(re, im) > cut)
    if sdim != j:
        return None
    return orthonormalize(z[:, :j])


def proximality_report(g: GroupElement, theta: Sequence[Root], r: float, eps: float,
                       samples: int = 64, seed: int = 0) -> ProximalityReport:
    """theta-proximality diagnostics.

    The reported defect is ``||a_theta - lambda_theta + G_theta(g-, g+)||``,
    which tends to 0 along powers of a proximal element.
    """
    plus, minus = {}, {}
    for i, j in theta:
        m = g.mats[i]
        d = m.shape[0]
        top = _invariant_subspace(m, j)
        # complementary invariant subspace: top (d-j) subspace of g^-1
        bottom = _invariant_subspace(g.inv.mats[i], d - j)
        if top is None or bottom is None:
            return ProximalityReport(False, None, None, None, False, False, None)
        plus[(i, j)] = top
        minus[(i, d - j)] = bottom
    gp, gm = FlagPoint(plus), FlagPoint(minus)
    gr = gromov_product(gm, gp, theta)
    r_ok = bool(np.all(gr >= -r))
    rng = np.random.default_rng(seed)
    eps_ok = True
    for _ in range(samples):
        x = random_flag(g.dims, theta, rng)
        if np.all(gromov_product(gm, x, theta) >= -1.0 / eps):
            if flag_distance(g.act(x), gp) > eps:
                eps_ok = False
                break
    a = cartan(g, theta).omega()
    lam = omega_of_cartan(jordan(g), theta)
    defect = float(np.linalg.norm(a - lam + gr)) if np.all(np.isfinite(gr)) else float("inf")
    return ProximalityReport(True, gm, gp, gr, r_ok, eps_ok, defect)


def quint_defect(g: GroupElement, h: GroupElement, theta: Sequence[Root]) -> float:
    """||a_theta(gh) - a_theta(h) - beta_theta(g, U_theta(h))||."""
    ch = cartan(h, theta)
    if ch.approximate:
        raise ValueError(f"attractor of h undefined: min gap {ch.min_gap:.3g}")
    lhs = cartan(g @ h, theta).omega() - ch.omega()
    return float(np.linalg.norm(lhs - busemann(g, ch.attractor, theta)))


# ---------------------------------------------------------------------------
# random sampling helpers

def random_sl(d: int, rng, scale: float = 1.0) -> np.ndarray:
    m = np.eye(d) + scale * rng.standard_normal((d, d))
    while np.linalg.det(m) <= 0:
        m = np.eye(d) + scale * rng.standard_normal((d, d))
    return _normalize_det(m)


def random_element(dims: Sequence[int], rng, scale: float = 1.0) -> GroupElement:
    return GroupElement([random_sl(d, rng, scale) for d in dims])


def random_flag(dims: Sequence[int], theta: Sequence[Root], rng, dual: bool = False) -> FlagPoint:
    planes = {}
    for i, j in theta:
        d = dims[i]
        k = d - j if dual else j
        key = (i, d - j) if dual else (i, j)
        planes[key] = orthonormalize(rng.standard_normal((d, k)))
    return FlagPoint(planes)


def lemma_attractor_bound(g: GroupElement, h: GroupElement, theta: Sequence[Root]) -> tuple[float, float]:
    """(d(U(gh), g U(h)), bound) for the attractor perturbation estimate."""
    ch = cartan(h, theta)
    cgh = cartan(g @ h, theta)
    lhs = flag_distance(cgh.attractor, g.act(ch.attractor))
    cond = max(np.linalg.norm(ext_power(g.mats[i], j), 2) * np.linalg.norm(
        ext_power(g.inv.mats[i], j), 2) for i, j in theta)
    return lhs, float(np.exp(-ch.min_gap) * cond)
