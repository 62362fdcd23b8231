"""Distance-based local coordinate charts.

A chart is fixed by a centre x0, d anchors x1..xd and a scale beta:

    Phi(x) = sqrt(d)/beta * (||x - x_l||^2 - ||x0 - x_l||^2)_l

which is a quadratic polynomial in x, so no eigen-decomposition is ever
needed. Charts additionally carry an ambient locality radius around the
centre: a pure distance map is not injective globally (on a circle, the
mirror image of the centre across the anchor maps to 0 as well), so
membership requires both ``||Phi(x)||_inf <= 1`` and ``||x - x0|| <= radius``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .errors import (
    CoverageError,
    DegenerateStarError,
    InsufficientDataError,
    ValidationError,
)
from .manifold_gen import PointCloud, helix_point


@dataclass(frozen=True)
class StarPolicy:
    """Knobs for anchor selection and scale calibration.

    Anchors are drawn from the annulus ``[c1, c2] * r_hat`` around the centre,
    where ``r_hat`` is the median distance of cloud points to their
    ``k_neighbors``-th nearest neighbour. ``beta`` is the largest scale for
    which the secant-ratio spread of the mapped points stays below
    ``spread_bound``; with ``balanced`` it is further reduced so the mapped
    data reaches every face of the cube. The calibrated chart must contain at
    least ``coverage_fraction`` of the centre's k nearest neighbours.

    The locality ball has radius ``radius_factor`` times the largest
    centre-anchor distance. Near an anchor the gradient of its squared
    distance vanishes, so a ball reaching the anchors folds the chart; the
    default 0.6 keeps a clear margin.
    """

    k_neighbors: int = 32
    c1: float = 2.0
    c2: float = 4.0
    gamma_min: float = 0.1
    coverage_fraction: float = 0.8
    spread_bound: float = 10.0
    radius_factor: float = 0.6
    balanced: bool = True

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValidationError("k_neighbors must be >= 1", "k_neighbors")
        if not 0 < self.c1 <= self.c2:
            raise ValidationError("need 0 < c1 <= c2", "c1")
        if not 0 < self.coverage_fraction <= 1:
            raise ValidationError("coverage_fraction must be in (0, 1]", "coverage_fraction")
        if self.spread_bound <= 1:
            raise ValidationError("spread_bound must be > 1", "spread_bound")
        if not self.radius_factor > 0:
            raise ValidationError("radius_factor must be > 0", "radius_factor")


@dataclass(frozen=True)
class CoordinateStar:
    center: np.ndarray
    anchors: np.ndarray  # (d, D)
    beta_star: float
    gamma_proxy: float

    @property
    def d(self) -> int:
        return self.anchors.shape[0]


def gamma_proxy(center, anchors) -> float:
    """Smallest singular value of the column-normalised anchor-difference matrix."""
    A = (np.atleast_2d(anchors) - np.asarray(center)).T
    norms = np.linalg.norm(A, axis=0)
    if np.any(norms == 0):
        return 0.0
    return float(np.linalg.svd(A / norms, compute_uv=False)[-1])


@dataclass(frozen=True)
class ChartMap:
    star: CoordinateStar
    psi0: np.ndarray
    scale: float
    radius: float = math.inf

    @property
    def d(self) -> int:
        return self.star.d

    @property
    def center(self) -> np.ndarray:
        return self.star.center

    @property
    def anchors(self) -> np.ndarray:
        return self.star.anchors

    def sqdist(self, X) -> np.ndarray:
        """Unscaled squared distances to the anchors, shape (n, d)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        diff = X[:, None, :] - self.anchors[None, :, :]
        return np.einsum("nld,nld->nl", diff, diff)

    def phi(self, X) -> np.ndarray:
        return self.scale * (self.sqdist(X) - self.psi0)

    def in_chart(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        near = np.linalg.norm(X - self.center, axis=1) <= self.radius
        return near & (np.max(np.abs(self.phi(X)), axis=1) <= 1.0)

    def to_json(self) -> dict:
        return {
            "center": self.center.tolist(),
            "anchors": self.anchors.tolist(),
            "beta_star": self.star.beta_star,
            "psi0": self.psi0.tolist(),
            "d": self.d,
            "radius": None if math.isinf(self.radius) else self.radius,
            "gamma_proxy": self.star.gamma_proxy,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ChartMap":
        try:
            center = np.asarray(obj["center"], dtype=float)
            anchors = np.atleast_2d(np.asarray(obj["anchors"], dtype=float))
            beta = float(obj["beta_star"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad chart JSON: {exc}", "chart") from None
        if anchors.shape[0] != int(obj.get("d", anchors.shape[0])):
            raise ValidationError("chart JSON: 'd' disagrees with anchor count", "d")
        radius = obj.get("radius")
        return make_chart(center, anchors, beta, math.inf if radius is None else float(radius))


def make_chart(center, anchors, beta_star: float, radius: float = math.inf) -> ChartMap:
    """Chart from an explicit star; psi0 and the scale follow from the formula."""
    center = np.asarray(center, dtype=float).copy()
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float)).copy()
    if anchors.shape[1] != center.shape[0]:
        raise ValidationError("anchors and centre have different ambient dimension", "anchors")
    d, D = anchors.shape
    if d > D:
        raise ValidationError("need d <= D", "d")
    if not beta_star > 0:
        raise ValidationError("beta_star must be > 0", "beta_star")
    center.setflags(write=False)
    anchors.setflags(write=False)
    star = CoordinateStar(center, anchors, float(beta_star), gamma_proxy(center, anchors))
    psi0 = np.sum((anchors - center) ** 2, axis=1)
    psi0.setflags(write=False)
    return ChartMap(star, psi0, math.sqrt(d) / float(beta_star), float(radius))


def phi(x, chart: ChartMap) -> np.ndarray:
    """Chart coordinates; a 1-D input gives a length-d vector."""
    x = np.asarray(x, dtype=float)
    out = chart.phi(x)
    return out[0] if x.ndim == 1 else out


def in_chart(x, chart: ChartMap):
    x = np.asarray(x, dtype=float)
    out = chart.in_chart(x)
    return bool(out[0]) if x.ndim == 1 else out


# ---------------------------------------------------------------------------
# star selection
# ---------------------------------------------------------------------------

def knn_radius(points, k: int, tree: cKDTree | None = None) -> float:
    """Median distance to the k-th nearest neighbour (self excluded)."""
    n = points.shape[0]
    if n < 2:
        return 0.0
    tree = tree or cKDTree(points)
    kk = min(k, n - 1)
    dist, _ = tree.query(points, k=kk + 1)
    return float(np.median(dist[:, -1]))


def local_tangent(X, idx, d):
    """Orthonormal basis (D, d) of the top-d principal directions of X[idx]."""
    P = X[idx] - X[idx].mean(axis=0)
    _, _, vt = np.linalg.svd(P, full_matrices=False)
    return vt[:d].T


def _greedy_anchors(center, X, cand, d, gamma_min, tangent=None):
    diffs = X[cand] - center
    dist = np.linalg.norm(diffs, axis=1)
    if tangent is not None:
        # rank directions by their tangential part; the raw matrix sees the
        # normal components of far anchors and overstates independence
        diffs = diffs @ tangent
        proj = np.linalg.norm(diffs, axis=1)
        keep = proj > 0
        cand, diffs, dist = cand[keep], diffs[keep], dist[keep]
    # gamma ties (always the case for d=1) go to the farthest candidate:
    # the chart reaches less than half the anchor distance on its far side
    order = np.argsort(-dist, kind="stable")
    cand, diffs, dist = cand[order], diffs[order], dist[order]
    unit = diffs / np.linalg.norm(diffs, axis=1)[:, None]
    chosen: list[int] = []
    for _ in range(d):
        best, best_val = -1, -1.0
        for j in range(len(cand)):
            if j in chosen:
                continue
            M = unit[chosen + [j]].T
            val = np.linalg.svd(M, compute_uv=False)[-1]
            if val > best_val + 1e-9:
                best, best_val = j, val
        if best < 0:
            break
        chosen.append(best)
    gamma = gamma_proxy(center, X[cand[chosen]])
    if len(chosen) < d or gamma < gamma_min:
        raise DegenerateStarError(
            f"anchor directions nearly dependent (gamma_proxy={gamma:.3g} < {gamma_min})", gamma)
    return cand[chosen]


def _spread(P, X) -> float:
    lo, hi, count = _kernels.secant_extremes(P, X)
    if count == 0:
        return 1.0
    return math.inf if lo == 0 else hi / lo


def _calibrate_beta(center, anchors, X, knn_idx, policy: StarPolicy):
    d = anchors.shape[0]
    radius = policy.radius_factor * float(np.max(np.linalg.norm(anchors - center, axis=1)))
    dist = np.linalg.norm(X - center, axis=1)
    local = np.flatnonzero(dist <= radius)
    local = local[np.argsort(dist[local], kind="stable")]
    sq = np.sum((X[local][:, None, :] - anchors[None]) ** 2, axis=2)
    psi0 = np.sum((anchors - center) ** 2, axis=1)
    # shrink the locality ball until the distance map is injective on it in the
    # secant sense; far points can share squared distances with near ones
    if _spread(sq, X[local]) > policy.spread_bound:
        lo, hi = min(2, len(local)), len(local)
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if _spread(sq[:mid], X[local[:mid]]) <= policy.spread_bound:
                lo = mid
            else:
                hi = mid - 1
        radius = 0.5 * (dist[local[lo - 1]] + dist[local[lo]]) if lo < len(local) else radius
        local, sq = local[:lo], sq[:lo]
    U = sq - psi0
    t = math.sqrt(d) * np.max(np.abs(U), axis=1)
    order = np.argsort(t, kind="stable")
    ts = t[order]
    # admissible prefix lengths: never split a tie in t
    cuts = np.flatnonzero(np.diff(ts) > 0) + 1
    cuts = np.append(cuts, len(ts))
    cuts = cuts[cuts >= 2]
    if cuts.size == 0:
        raise InsufficientDataError("fewer than two distinct points near the centre")

    def ok(K):
        idx = order[:K]
        return _spread(sq[idx], X[local][idx]) <= policy.spread_bound

    if not ok(cuts[0]):
        raise InsufficientDataError("secant spread bound violated by the nearest neighbours")
    lo, hi = 0, len(cuts) - 1
    while lo < hi:  # largest cut satisfying the spread bound (monotone in K)
        mid = (lo + hi + 1) // 2
        if ok(cuts[mid]):
            lo = mid
        else:
            hi = mid - 1
    K = cuts[lo]
    beta_spread = 0.5 * (ts[K - 1] + ts[K]) if K < len(ts) else ts[K - 1] * (1 + 1e-9)

    def knn_fraction(beta):
        if knn_idx.size == 0:
            return 1.0
        chart = make_chart(center, anchors, beta, radius)
        return float(np.mean(chart.in_chart(X[knn_idx])))

    candidates = []
    if policy.balanced:
        Uin = U[order[:K]]
        ext = np.minimum(Uin.max(axis=0), -Uin.min(axis=0))
        beta_face = math.sqrt(d) * float(ext.min()) * (1 + 1e-12)
        if beta_face > 0:
            candidates.append(beta_face)
    candidates.append(beta_spread)
    for beta in candidates:
        if knn_fraction(beta) >= policy.coverage_fraction:
            return beta, radius
    raise InsufficientDataError("calibrated chart misses too many nearest neighbours")


def select_star(cloud: PointCloud | np.ndarray, center_index: int, d: int,
                policy: StarPolicy = StarPolicy(), *, r_hat: float | None = None,
                tree: cKDTree | None = None) -> ChartMap:
    """Build and calibrate a chart centred on ``cloud[center_index]``.

    Raises InsufficientDataError if the anchor annulus holds fewer than d
    points or calibration fails, DegenerateStarError if the greedily chosen
    anchors are too close to dependent.
    """
    X = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    n = X.shape[0]
    if d < 1:
        raise ValidationError("d must be >= 1", "d")
    if d > X.shape[1]:
        raise ValidationError("d must not exceed the ambient dimension", "d")
    if n < d + 1:
        raise InsufficientDataError(f"need at least {d + 1} points, have {n}")
    tree = tree or cKDTree(X)
    if r_hat is None:
        r_hat = knn_radius(X, policy.k_neighbors, tree)
    center = X[center_index]
    dist = np.linalg.norm(X - center, axis=1)
    cand = np.flatnonzero((dist >= policy.c1 * r_hat) & (dist <= policy.c2 * r_hat) & (dist > 0))
    if cand.size < d:
        raise InsufficientDataError(f"only {cand.size} anchor candidates in the annulus, need {d}")
    k = min(policy.k_neighbors, n - 1)
    _, knn = tree.query(center, k=k + 1)
    knn = np.atleast_1d(knn)
    knn = knn[knn != center_index][:k]
    tangent = local_tangent(X, np.append(knn, center_index), d) if d < X.shape[1] and knn.size >= d else None
    anchor_idx = _greedy_anchors(center, X, cand, d, policy.gamma_min, tangent)
    anchors = X[anchor_idx]
    beta, radius = _calibrate_beta(center, anchors, X, knn, policy)
    return make_chart(center, anchors, beta, radius)


# ---------------------------------------------------------------------------
# atlas
# ---------------------------------------------------------------------------

@dataclass
class Atlas:
    charts: list[ChartMap]
    assignment: np.ndarray
    d: int
    r_hat: float = 0.0
    centers: list[int] = field(default_factory=list)

    def locate(self, X, fallback_tol: float = 1.5):
        """Chart index for each query point and a fallback flag.

        The first chart (in build order) containing the point wins. Otherwise
        the chart minimising ||Phi(x)||_inf among those whose locality ball
        (enlarged by ``fallback_tol``) holds the point is used, if that sup-norm
        is at most ``fallback_tol``; else the index is -1.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[0]
        if not self.charts:
            return np.full(n, -1), np.zeros(n, dtype=bool)
        inside = np.empty((len(self.charts), n), dtype=bool)
        sup = np.empty((len(self.charts), n))
        for c, chart in enumerate(self.charts):
            dist = np.linalg.norm(X - chart.center, axis=1)
            s = np.max(np.abs(chart.phi(X)), axis=1)
            inside[c] = (dist <= chart.radius) & (s <= 1.0)
            sup[c] = np.where(dist <= fallback_tol * chart.radius, s, np.inf)
        hit = inside.any(axis=0)
        idx = np.where(hit, np.argmax(inside, axis=0), -1)
        nearest = np.argmin(sup, axis=0)
        ok = ~hit & (sup[nearest, np.arange(n)] <= fallback_tol)
        idx[ok] = nearest[ok]
        return idx, ok

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "r_hat": self.r_hat,
            "charts": [c.to_json() for c in self.charts],
            "centers": [int(i) for i in self.centers],
            "assignment": [int(i) for i in self.assignment],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Atlas":
        try:
            charts = [ChartMap.from_json(c) for c in obj["charts"]]
            return cls(charts, np.asarray(obj.get("assignment", []), dtype=int), int(obj["d"]),
                       float(obj.get("r_hat", 0.0)), list(obj.get("centers", [])))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"bad atlas JSON: {exc}", "atlas") from None


def build_atlas(cloud: PointCloud | np.ndarray, d: int, policy: StarPolicy = StarPolicy()) -> Atlas:
    """Greedy chart cover of the cloud.

    The uncovered point with the most uncovered neighbours (within r_hat;
    lowest index on ties) becomes the next centre. Uncovered points inside the
    new chart are assigned to it. Centres whose star cannot be built are
    skipped; if points remain uncovered once every candidate centre has been
    tried, CoverageError lists them.
    """
    X = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    n = X.shape[0]
    if n == 0:
        raise ValidationError("cloud is empty", "cloud")
    tree = cKDTree(X)
    r_hat = knn_radius(X, policy.k_neighbors, tree)
    neighbors = tree.query_ball_point(X, r_hat) if n > 1 else [[0]]
    counts = np.array([len(nb) for nb in neighbors], dtype=np.int64)
    uncovered = np.ones(n, dtype=bool)
    tried = np.zeros(n, dtype=bool)
    assignment = np.full(n, -1)
    charts: list[ChartMap] = []
    centers: list[int] = []
    while True:
        cand = uncovered & ~tried
        if not cand.any():
            break
        c = int(np.argmax(np.where(cand, counts, -1)))
        tried[c] = True
        try:
            chart = select_star(X, c, d, policy, r_hat=r_hat, tree=tree)
        except (InsufficientDataError, DegenerateStarError):
            continue
        newly = np.flatnonzero(chart.in_chart(X) & uncovered)
        if newly.size == 0:
            continue
        assignment[newly] = len(charts)
        uncovered[newly] = False
        for j in newly:
            counts[neighbors[j]] -= 1
        charts.append(chart)
        centers.append(c)
    if uncovered.any():
        orphans = np.flatnonzero(uncovered)
        raise CoverageError(f"{orphans.size} points cannot be covered: {orphans[:20].tolist()}"
                            + (" ..." if orphans.size > 20 else ""), orphans)
    return Atlas(charts, assignment, d, r_hat, centers)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DistortionReport:
    min_ratio: float
    max_ratio: float
    n_pairs: int


def distortion_report(chart: ChartMap, cloud: PointCloud, geodesic, *,
                      max_pairs: int = 200_000, seed: int = 0) -> DistortionReport:
    """min / max over in-chart pairs of ||Psi(p) - Psi(q)|| / rho(x, y).

    Psi is the unscaled squared-distance map; ``geodesic(params_i, params_j)``
    is a vectorised oracle on the cloud's intrinsic parameters. Pairs with zero
    geodesic distance are skipped. More than ``max_pairs`` pairs are
    subsampled with a seeded generator.
    """
    if cloud.params is None:
        raise ValidationError("distortion_report needs cloud params for the geodesic oracle", "params")
    idx = np.flatnonzero(chart.in_chart(cloud.points))
    m = idx.size
    if m < 2:
        raise InsufficientDataError("fewer than two in-chart points")
    I, J = np.triu_indices(m, k=1)
    if I.size > max_pairs:
        pick = np.random.default_rng(seed).choice(I.size, max_pairs, replace=False)
        I, J = I[pick], J[pick]
    psi = chart.sqdist(cloud.points[idx])
    P = cloud.params[idx]
    rho = np.asarray(geodesic(P[I], P[J]), dtype=float).reshape(-1)
    keep = rho > 0
    if not keep.any():
        raise InsufficientDataError("no pairs with positive geodesic distance")
    num = np.linalg.norm(psi[I[keep]] - psi[J[keep]], axis=1)
    ratio = num / rho[keep]
    return DistortionReport(float(ratio.min()), float(ratio.max()), int(keep.sum()))


def helix_example_chart(a: float, s0: float = 0.0, s1: float | None = None,
                        half_width: float = math.pi / 8) -> ChartMap:
    """Single-anchor helix chart with the patch |s - s0| <= half_width filling the cube.

    ``s1`` defaults to ``s0 + 5*pi/16``, inside the admissible window
    ``[s0 + pi/4, s0 + 3*pi/8]``. Psi is monotone on the patch, so the largest
    excursion sits at an endpoint and fixes beta.
    """
    if s1 is None:
        s1 = s0 + 5 * math.pi / 16
    center = helix_point(s0, a)
    anchor = helix_point(s1, a)
    ends = helix_point(np.array([s0 - half_width, s0 + half_width]), a)
    psi0 = float(np.sum((center - anchor) ** 2))
    excursion = np.abs(np.sum((ends - anchor) ** 2, axis=1) - psi0)
    beta = float(excursion.max()) * (1 + 1e-12)
    radius = float(np.linalg.norm(anchor - center))
    return make_chart(center, anchor[None, :], beta, radius)
