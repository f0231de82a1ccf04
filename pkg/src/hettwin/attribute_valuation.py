"""Modeling value of network attributes: sample-entropy cost, correlation benefit, K-means levels."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DomainError

LEVEL_NAMES = ("L1", "L2", "L3", "L4")

# levels assumed before any valuation has run (listed by the command-line tool)
DEFAULT_LEVELS = {"throughput": "L1", "delay": "L2", "traffic_load": "L1", "packet_loss": "L2",
                  "mobility_speed": "L4", "channel_quality": "L3"}


@dataclass(frozen=True)
class SampEnConfig:
    m: int = 2
    r: float = 0.2

    def __post_init__(self):
        if self.m < 1:
            raise DomainError("embedding dimension must be >= 1")
        if not self.r > 0:
            raise DomainError("tolerance fraction must be positive")


def _match_counts(x: np.ndarray, m: int, tol: float, chunk: int = 512):
    """Pairs (u != v) among the first N-m templates matching at length m and m+1."""
    n_templates = len(x) - m
    windows = np.lib.stride_tricks.sliding_window_view(x, m + 1)[:n_templates]
    head = windows[:, :m]
    last = windows[:, m]
    b = a = 0
    for start in range(0, n_templates, chunk):
        rows = slice(start, min(start + chunk, n_templates))
        dist_m = np.abs(head[rows, None, :] - head[None, :, :]).max(axis=2)
        dist_m1 = np.maximum(dist_m, np.abs(last[rows, None] - last[None, :]))
        close_m = dist_m < tol
        close_m1 = dist_m1 < tol
        idx = np.arange(rows.start, rows.stop)
        close_m[idx - start, idx] = False
        close_m1[idx - start, idx] = False
        b += int(close_m.sum())
        a += int(close_m1.sum())
    return b, a


def sample_entropy(series, cfg: SampEnConfig | None = None) -> float:
    """Sample entropy in nats with tolerance r*std(series).

    Returns 0 for a constant series and +inf when no template pair survives
    the extension to length m+1.
    """
    cfg = cfg or SampEnConfig()
    x = np.asarray(series, dtype=float).ravel()
    if len(x) < cfg.m + 2:
        raise DomainError(f"sample entropy needs at least m+2 = {cfg.m + 2} samples")
    sd = x.std()
    if sd == 0:
        return 0.0
    z = (x - x.mean()) / sd
    b, a = _match_counts(z, cfg.m, cfg.r)
    if a == 0 or b == 0:
        return float("inf")
    return float(-np.log(a / b))


def sample_entropy_bound(n: int, m: int) -> float:
    """Largest finite sample entropy attainable by a series of length n."""
    k = n - m
    return float(-np.log(2.0 / ((k - 1) * k))) if k > 1 else 0.0


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape or len(x) < 2:
        raise DomainError("pearson needs two equal-length series of at least 2 samples")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise DomainError("correlation is undefined for a zero-variance series")
    return float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))


@dataclass
class GrangerResult:
    triggered: bool
    causal: bool = False
    lag: int = 0
    f_stat: float = float("nan")
    p_value: float = float("nan")
    benefit: float = 0.0
    diagnostic: str = ""


def _lagged(series: np.ndarray, p: int, n: int) -> np.ndarray:
    return np.column_stack([series[p - k:p - k + n] for k in range(1, p + 1)])


def _rss(design: np.ndarray, target: np.ndarray) -> float:
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ coef
    return float(resid @ resid)


def granger_test(x, q, max_lag: int = 2) -> GrangerResult:
    """F-test of whether lags of ``x`` improve an autoregression of ``q``.

    The lag order is picked by BIC on the restricted model.
    """
    x = np.asarray(x, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if x.shape != q.shape:
        raise DomainError("granger test needs aligned series")
    best_p, best_bic = 1, np.inf
    for p in range(1, max_lag + 1):
        n = len(q) - p
        if n <= 2 * p + 2:
            break
        design = np.column_stack([np.ones(n), _lagged(q, p, n)])
        rss = _rss(design, q[p:])
        bic = n * np.log(max(rss, 1e-300) / n) + (p + 1) * np.log(n)
        if bic < best_bic:
            best_p, best_bic = p, bic
    p = best_p
    n = len(q) - p
    if n <= 2 * p + 2:
        return GrangerResult(triggered=True, diagnostic="series too short for the requested lag")
    target = q[p:]
    restricted = np.column_stack([np.ones(n), _lagged(q, p, n)])
    full = np.column_stack([restricted, _lagged(x, p, n)])
    if np.linalg.matrix_rank(full) < full.shape[1]:
        return GrangerResult(triggered=True, lag=p, diagnostic="rank-deficient design; no causality inferred")
    rss_r = _rss(restricted, target)
    rss_u = _rss(full, target)
    df1, df2 = p, n - full.shape[1]
    if rss_u <= 0:
        f_stat = np.inf if rss_r > 0 else 0.0
    else:
        f_stat = max((rss_r - rss_u) / df1, 0.0) / (rss_u / df2)
    p_value = float(stats.f.sf(f_stat, df1, df2)) if np.isfinite(f_stat) else 0.0
    return GrangerResult(triggered=True, lag=p, f_stat=float(f_stat), p_value=p_value)


def granger_refine(x, q, rho: float, max_lag: int = 2, alpha: float = 0.05,
                   trigger: float = 0.3, floor: float = 0.3) -> GrangerResult:
    """Raises a weak correlation benefit to ``floor`` when x Granger-causes q.

    Only runs when |rho| < trigger; the benefit is never lowered.
    """
    if abs(rho) >= trigger:
        return GrangerResult(triggered=False, benefit=rho)
    res = granger_test(x, q, max_lag)
    res.causal = bool(np.isfinite(res.p_value) and res.p_value < alpha)
    sign = 1.0 if rho >= 0 else -1.0
    res.benefit = sign * max(abs(rho), floor) if res.causal else rho
    return res


def aggregate_benefit(rhos, weights) -> float:
    rhos = np.asarray(rhos, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if rhos.shape != weights.shape:
        raise DomainError("one weight per objective is required")
    if abs(weights.sum() - 1.0) > 1e-9:
        raise DomainError("weights must sum to 1")
    return float(weights @ rhos)


@dataclass
class ModelingValue:
    entity: str
    attribute: str
    entropy: float
    benefits: dict
    benefit: float
    level: str | None = None

    @property
    def point(self) -> tuple:
        return (self.entropy, abs(self.benefit))


# ------------------------------------------------------------- clustering

@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    n_iter: int
    objective_history: list
    converged: bool

    @property
    def inertia(self) -> float:
        return self.objective_history[-1]


def _nearest(points: np.ndarray, centroids: np.ndarray):
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    # argmin returns the first minimum, so ties go to the lowest-index centroid
    labels = np.argmin(d2, axis=1)
    return labels, d2


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centres = [points[rng.integers(n)]]
    d2 = ((points - centres[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centres.append(points[idx])
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centres, dtype=float)


def kmeans(points, k: int, seed: int = 0, max_iter: int = 100, n_init: int = 4) -> KMeansResult:
    """Lloyd's algorithm from seeded k-means++ starts; keeps the lowest-objective run."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    distinct = len(np.unique(pts, axis=0))
    if k < 1 or k > distinct:
        raise DomainError(f"cannot form {k} clusters from {distinct} distinct points")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, n_init)):
        centroids = _kmeans_pp(pts, k, rng)
        labels, d2 = _nearest(pts, centroids)
        history = [float(d2[np.arange(len(pts)), labels].sum())]
        converged = False
        it = 0
        for it in range(1, max_iter + 1):
            new_centroids = centroids.copy()
            for c in range(k):
                members = labels == c
                if members.any():
                    new_centroids[c] = pts[members].mean(axis=0)
            centroids = new_centroids
            new_labels, d2 = _nearest(pts, centroids)
            history.append(float(d2[np.arange(len(pts)), new_labels].sum()))
            if np.array_equal(new_labels, labels):
                converged = True
                break
            labels = new_labels
        res = KMeansResult(centroids=centroids, labels=labels, n_iter=it, objective_history=history,
                           converged=converged)
        if best is None or res.inertia < best.inertia - 1e-12:
            best = res
    return best


@dataclass
class ClusterModel:
    centroids: np.ndarray
    raw_centroids: np.ndarray
    labels: np.ndarray
    members: list
    n_iter: int
    objective_history: list
    level_of_cluster: dict
    mean: np.ndarray = field(default_factory=lambda: np.zeros(2))
    scale: np.ndarray = field(default_factory=lambda: np.ones(2))

    def level_of(self, idx: int) -> str:
        return self.level_of_cluster[int(self.labels[idx])]


def _as_points(values) -> np.ndarray:
    if len(values) and isinstance(values[0], ModelingValue):
        return np.array([v.point for v in values], dtype=float)
    return np.asarray(values, dtype=float)


def differentiate(values, k: int = 4, seed: int = 0, n_init: int = 4, tie_tolerance: float = 0.5):
    """Clusters (entropy, |benefit|) points and ranks clusters into levels.

    Features are standardized first. Clusters are ordered by the centroid
    score |benefit| - entropy, highest first, and named L1, L2, ... Two
    neighbouring clusters whose scores differ by less than ``tie_tolerance``
    (in standardized units) are ordered by benefit instead. When ``values``
    are ModelingValue objects their ``level`` is filled in. Returns
    ``(model, levels)``.
    """
    pts = _as_points(values)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DomainError("expected (entropy, |benefit|) pairs")
    pts = pts.copy()
    pts[:, 1] = np.abs(pts[:, 1])
    if len(pts) < k:
        raise DomainError(f"need at least {k} points")
    mean = pts.mean(axis=0)
    scale = pts.std(axis=0)
    scale[scale == 0] = 1.0
    z = (pts - mean) / scale
    res = kmeans(z, k, seed=seed, n_init=n_init)
    score = res.centroids[:, 1] - res.centroids[:, 0]
    order = sorted(range(k), key=lambda c: (-score[c], c))
    benefit = res.centroids[:, 1]
    for i in range(k - 1):
        a, b = order[i], order[i + 1]
        if score[a] - score[b] < tie_tolerance and benefit[b] > benefit[a]:
            order[i], order[i + 1] = b, a
    names = [LEVEL_NAMES[r] if r < len(LEVEL_NAMES) else f"L{r + 1}" for r in range(k)]
    level_of_cluster = {c: names[rank] for rank, c in enumerate(order)}
    levels = [level_of_cluster[int(c)] for c in res.labels]
    model = ClusterModel(centroids=res.centroids, raw_centroids=res.centroids * scale + mean, labels=res.labels,
                         members=[np.flatnonzero(res.labels == c) for c in range(k)], n_iter=res.n_iter,
                         objective_history=res.objective_history, level_of_cluster=level_of_cluster,
                         mean=mean, scale=scale)
    if len(values) and isinstance(values[0], ModelingValue):
        for v, lvl in zip(values, levels):
            v.level = lvl
    return model, levels


# ------------------------------------------------------------- valuation of traces

def evaluate_entity(entity: str, attributes: dict, objectives: dict, weights, cfg: SampEnConfig,
                    max_lag: int = 2, alpha: float = 0.05, trigger: float = 0.3, floor: float = 0.3) -> list:
    """Modeling values for every attribute of one entity.

    ``attributes`` and ``objectives`` map names to aligned sample arrays;
    ``weights`` follows the order of ``objectives``.
    """
    out = []
    obj_names = list(objectives)
    for attr, series in attributes.items():
        x = np.asarray(series, dtype=float)
        h = sample_entropy(x, cfg)
        if not np.isfinite(h):
            h = sample_entropy_bound(len(x), cfg.m)
        rhos = {}
        for name in obj_names:
            q = np.asarray(objectives[name], dtype=float)
            if x.std() == 0 or q.std() == 0:
                rhos[name] = 0.0
                continue
            rho = pearson(x, q)
            rhos[name] = granger_refine(x, q, rho, max_lag, alpha, trigger, floor).benefit
        benefit = aggregate_benefit([rhos[n] for n in obj_names], weights)
        out.append(ModelingValue(entity=entity, attribute=attr, entropy=float(h), benefits=rhos, benefit=benefit))
    return out


def write_valuation_report(values, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["entity_id", "attribute", "entropy", "benefit", "level"])
        for v in values:
            w.writerow([v.entity, v.attribute, repr(float(v.entropy)), repr(float(v.benefit)), v.level or ""])
