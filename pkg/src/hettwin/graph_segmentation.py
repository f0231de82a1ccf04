"""User/BS activity graph, ratio-cut segmentation and target-area selection.

Vertices of the activity graph are ordered BSs first, then users, so vertex
``v < M`` is BS ``v`` and vertex ``M + i`` is user ``i``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .attribute_valuation import kmeans
from .errors import DomainError


# ------------------------------------------------------------------ traffic and load

def traffic_volume(association, rate, user: int, bs: int, horizon: int) -> float:
    """Sum over ticks 0..horizon of a[t, user, bs] * r[t, user].

    ``association`` is either a (T, N, M) 0/1 array or a (T, N) array of
    serving BS indices (-1 for none).
    """
    a = np.asarray(association)
    r = np.asarray(rate, dtype=float)
    if horizon < 0 or horizon >= len(r):
        raise DomainError(f"horizon {horizon} outside the trace (0..{len(r) - 1})")
    sl = slice(0, horizon + 1)
    active = (a[sl, user] == bs) if a.ndim == 2 else a[sl, user, bs].astype(bool)
    return float(np.sum(r[sl, user] * active))


def link_traffic(serving, rate, n_bs: int) -> np.ndarray:
    """Per-tick link traffic a*r as a (T, N, M) array."""
    serving = np.asarray(serving, dtype=int)
    rate = np.asarray(rate, dtype=float)
    T, N = serving.shape
    out = np.zeros((T, N, n_bs))
    t_idx, u_idx = np.nonzero(serving >= 0)
    out[t_idx, u_idx, serving[t_idx, u_idx]] = rate[t_idx, u_idx]
    return out


@dataclass
class LoadState:
    offered: np.ndarray
    capacity: np.ndarray
    zeta: float = 0.8

    def __post_init__(self):
        self.offered = np.asarray(self.offered, dtype=float)
        self.capacity = np.asarray(self.capacity, dtype=float)
        if np.any(~(self.capacity > 0)):
            raise DomainError("capacity must be positive")
        if not 0 < self.zeta <= 1:
            raise DomainError("zeta must lie in (0, 1]")


def load_indicator(state: LoadState) -> np.ndarray:
    """1 where offered traffic reaches zeta times capacity."""
    return (state.offered >= state.zeta * state.capacity).astype(int)


# ------------------------------------------------------------------ demand model

def fit_ar(series, order: int) -> np.ndarray:
    """Least-squares AR coefficients without intercept, phi[0] multiplying lag 1."""
    x = np.asarray(series, dtype=float)
    n = len(x) - order
    if order < 1 or n < 1:
        raise DomainError("series too short for the AR order")
    design = np.column_stack([x[order - k:order - k + n] for k in range(1, order + 1)])
    coef, *_ = np.linalg.lstsq(design, x[order:], rcond=None)
    return coef


@dataclass
class DemandModel:
    """Independent AR(p) per column; columns without enough history fall back to persistence."""

    order: int
    coefficients: np.ndarray
    history: np.ndarray
    persistence: np.ndarray

    @classmethod
    def fit(cls, history, order: int = 2) -> "DemandModel":
        h = np.asarray(history, dtype=float)
        if h.ndim == 1:
            h = h[:, None]
        shape = h.shape[1:]
        flat = h.reshape(len(h), -1)
        coefs = np.zeros((flat.shape[1], order))
        persist = np.ones(flat.shape[1], dtype=bool)
        if len(flat) >= 3 * order:
            for c in np.flatnonzero(np.any(flat != 0, axis=0)):
                col = flat[:, c]
                if np.ptp(col) == 0:
                    continue
                coefs[c] = fit_ar(col, order)
                persist[c] = False
        return cls(order=order, coefficients=coefs.reshape(shape + (order,)), history=h,
                   persistence=persist.reshape(shape))

    def predict(self, steps: int = 1) -> np.ndarray:
        """Recursive prediction ``steps`` ahead (>= 1) of the row after the history.

        Columns whose recursion overflows fall back to persistence.
        """
        if steps < 1:
            raise DomainError("prediction horizon must be at least 1")
        p = self.order
        flat_hist = self.history.reshape(len(self.history), -1)
        coefs = self.coefficients.reshape(-1, p)
        persist = self.persistence.ravel()
        lags = [flat_hist[-k] if k <= len(flat_hist) else np.zeros(flat_hist.shape[1]) for k in range(1, p + 1)]
        last = flat_hist[-1]
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(steps):
                nxt = sum(coefs[:, k] * lags[k] for k in range(p))
                lags = [nxt] + lags[:-1]
        out = np.where(persist | ~np.isfinite(nxt), last, nxt)
        return out.reshape(self.history.shape[1:])


# ------------------------------------------------------------------ activity graph

@dataclass
class ActivityGraph:
    """Bipartite user-BS graph; ``weights`` is (N users, M BSs)."""

    weights: np.ndarray
    potential: np.ndarray
    tau: int = 0
    empty: bool = False

    @property
    def n_users(self) -> int:
        return self.weights.shape[0]

    @property
    def n_bs(self) -> int:
        return self.weights.shape[1]

    def matrix(self) -> np.ndarray:
        """Symmetric (M+N) adjacency of the bipartite embedding, BSs first."""
        N, M = self.weights.shape
        full = np.zeros((M + N, M + N))
        full[M:, :M] = self.weights
        full[:M, M:] = self.weights.T
        return full


def build_adjacency(traffic, potential, order: int = 2, tau: int | None = None) -> ActivityGraph:
    """AR-predicted link traffic, min-max normalized over the potential links.

    ``traffic`` is the (T, N, M) link-traffic history up to tau - 1.
    """
    x = np.asarray(potential, dtype=bool)
    hist = np.asarray(traffic, dtype=float)
    if hist.shape[1:] != x.shape:
        raise DomainError("traffic history does not match the potential-link matrix")
    tau = len(hist) if tau is None else tau
    weights = np.zeros(x.shape)
    if not x.any():
        return ActivityGraph(weights, x, tau, empty=True)
    pred = np.maximum(DemandModel.fit(hist, order).predict(1), 0.0)
    vals = pred[x]
    lo, hi = float(vals.min()), float(vals.max())
    if hi <= 0:
        return ActivityGraph(weights, x, tau, empty=True)
    if hi > lo:
        weights[x] = (vals - lo) / (hi - lo)
    else:
        weights[x] = 1.0
    return ActivityGraph(weights, x, tau)


def update_adjacency(graph: ActivityGraph, satisfied, loaded, ratio, load, capacity, zeta: float,
                     w: float) -> ActivityGraph:
    """Blends the previous weights with a situation term on every potential link.

    ``satisfied`` (N,) and ``loaded`` (M,) are 0/1 flags, ``ratio`` the
    user's achieved-over-required ratio and ``load``/``capacity`` per BS.
    Links of a satisfied user to a loaded BS get a zero situation term.
    """
    if not 0.0 <= w <= 1.0:
        raise DomainError("weighting factor must lie in [0, 1]")
    sat = np.asarray(satisfied, dtype=int)
    ld = np.asarray(loaded, dtype=int)
    headroom = 1.0 - np.asarray(load, dtype=float) / (zeta * np.asarray(capacity, dtype=float))
    delta = np.maximum(np.asarray(ratio, dtype=float)[:, None], headroom[None, :])
    delta = np.clip(delta, 0.0, 1.0)
    delta = np.where(np.outer(sat, ld) == 1, 0.0, delta)
    new = (1.0 - w) * graph.weights + w * delta
    new = np.where(graph.potential, new, 0.0)
    return ActivityGraph(new, graph.potential, graph.tau + 1, empty=not new.any())


# ------------------------------------------------------------------ ratio cut

def ratio_cut(weights, labels) -> float:
    """Sum over segments of cut(U, rest) / |U|."""
    W = np.asarray(weights, dtype=float)
    labels = np.asarray(labels)
    total = 0.0
    for k in np.unique(labels):
        inside = labels == k
        total += W[inside][:, ~inside].sum() / inside.sum()
    return float(total)


@dataclass
class Partition:
    labels: np.ndarray
    n_segments: int
    objective: float
    eigenvalues: np.ndarray = field(default_factory=lambda: np.array([]))
    warnings: list = field(default_factory=list)

    @property
    def segments(self) -> list:
        return [np.flatnonzero(self.labels == k) for k in range(self.n_segments)]


def eigengap_segments(eigenvalues, max_segments: int = 10) -> int:
    ev = np.sort(np.asarray(eigenvalues, dtype=float))
    top = min(max_segments, len(ev) - 1)
    if top < 2:
        return 1
    gaps = ev[2:top + 1] - ev[1:top]
    return int(np.argmax(gaps)) + 2


def _merge_components(comp: np.ndarray, n_comp: int, L: int) -> np.ndarray:
    """Largest components first, each into the currently lightest bin."""
    sizes = np.bincount(comp, minlength=n_comp)
    bins = np.zeros(L)
    target = np.empty(n_comp, dtype=int)
    for c in sorted(range(n_comp), key=lambda c: (-sizes[c], c)):
        b = int(np.argmin(bins))
        target[c] = b
        bins[b] += sizes[c]
    return target[comp]


def _refine(W: np.ndarray, labels: np.ndarray, L: int, max_moves: int = 10_000) -> np.ndarray:
    """Best single-vertex moves until no move lowers the ratio cut."""
    labels = labels.copy()
    deg = W.sum(axis=1)
    for _ in range(max_moves):
        onehot = np.eye(L)[labels]
        to_seg = W @ onehot
        sizes = onehot.sum(axis=0)
        cuts = np.array([deg[labels == k].sum() - to_seg[labels == k, k].sum() for k in range(L)])
        base = cuts / np.maximum(sizes, 1)
        cur = labels
        a_cut = cuts[cur] - deg + 2 * to_seg[np.arange(len(W)), cur]
        a_size = sizes[cur] - 1
        b_cut = cuts[None, :] + deg[:, None] - 2 * to_seg
        b_size = sizes[None, :] + 1
        with np.errstate(divide="ignore", invalid="ignore"):
            new_a = np.where(a_size > 0, a_cut / np.maximum(a_size, 1), np.inf)
        delta = (new_a - base[cur])[:, None] + (b_cut / b_size - base[None, :])
        delta[np.arange(len(W)), cur] = np.inf
        v, k = np.unravel_index(np.argmin(delta), delta.shape)
        if not delta[v, k] < -1e-12:
            break
        labels[v] = k
    return labels


def _fill_empty(W: np.ndarray, labels: np.ndarray, L: int) -> np.ndarray:
    labels = labels.copy()
    for k in range(L):
        if (labels == k).any():
            continue
        best, best_v = np.inf, None
        sizes = np.bincount(labels, minlength=L)
        for v in range(len(W)):
            if sizes[labels[v]] < 2:
                continue
            trial = labels.copy()
            trial[v] = k
            obj = ratio_cut(W, trial)
            if obj < best:
                best, best_v = obj, v
        labels[best_v] = k
    return labels


def ratio_cut_partition(weights, n_segments: int | None = None, seed: int = 0, n_init: int = 8) -> Partition:
    """Spectral ratio-cut partition followed by single-vertex local refinement.

    ``n_segments`` of 0 or None picks the count from the largest eigengap of
    the unnormalized Laplacian.
    """
    W = np.asarray(weights, dtype=float)
    n = len(W)
    if W.shape != (n, n) or not np.allclose(W, W.T):
        raise DomainError("weights must be a symmetric square matrix")
    W = W.copy()
    np.fill_diagonal(W, 0.0)
    lap = np.diag(W.sum(axis=1)) - W
    evals, evecs = np.linalg.eigh(lap)
    L = eigengap_segments(evals) if not n_segments else int(n_segments)
    if n < L:
        raise DomainError(f"cannot split {n} vertices into {L} segments")
    notes = []
    n_comp, comp = connected_components(W > 0, directed=False)
    if n_comp > L:
        msg = f"graph has {n_comp} components for {L} segments; components merged by size"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
        labels = _merge_components(comp, n_comp, L)
        return Partition(labels, L, ratio_cut(W, labels), evals, notes)
    if L == 1:
        labels = np.zeros(n, dtype=int)
        return Partition(labels, 1, 0.0, evals, notes)
    emb = np.round(evecs[:, :L], 12)
    candidates = []
    for k in range(n_init):
        try:
            candidates.append(np.asarray(kmeans(emb, L, seed=seed + k, n_init=1).labels, dtype=int))
        except DomainError:
            break
    if L == 2:
        # threshold sweeps along the Fiedler vector give extra starting points
        order = np.argsort(evecs[:, 1], kind="stable")
        for cut in range(1, n):
            lab = np.zeros(n, dtype=int)
            lab[order[cut:]] = 1
            candidates.append(lab)
    if not candidates:
        lab = np.empty(n, dtype=int)
        lab[np.argsort(evecs[:, 1], kind="stable")] = np.arange(n) * L // n
        candidates.append(lab)
    best = None
    for lab in candidates:
        lab = _refine(W, _fill_empty(W, lab, L), L)
        obj = ratio_cut(W, lab)
        if best is None or obj < best[0] - 1e-12:
            best = (obj, lab)
    labels = best[1]
    # canonical numbering: segments ordered by their smallest vertex
    first = {k: int(np.flatnonzero(labels == k)[0]) for k in range(L)}
    remap = {k: r for r, k in enumerate(sorted(first, key=first.get))}
    labels = np.array([remap[k] for k in labels])
    return Partition(labels, L, ratio_cut(W, labels), evals, notes)


# ------------------------------------------------------------------ target areas

@dataclass
class AreaInputs:
    """Per-segment quantities for target-area selection (local indices)."""

    users: np.ndarray
    bss: np.ndarray
    satisfaction: np.ndarray
    weights: np.ndarray
    potential: np.ndarray
    demand: np.ndarray
    capacity: np.ndarray
    user_cost: np.ndarray
    bs_cost: np.ndarray
    adjacency: np.ndarray | None = None

    def __post_init__(self):
        self.users = np.asarray(self.users, dtype=int)
        self.bss = np.asarray(self.bss, dtype=int)
        self.satisfaction = np.atleast_2d(np.asarray(self.satisfaction, dtype=float))
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        self.potential = np.asarray(self.potential, dtype=bool).reshape(len(self.users), len(self.bss))
        for name in ("demand", "user_cost"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).reshape(len(self.users)))
        for name in ("capacity", "bs_cost"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).reshape(len(self.bss)))
        if self.adjacency is None:
            self.adjacency = np.zeros(self.potential.shape)

    @property
    def unsatisfied(self) -> np.ndarray:
        return np.any(self.satisfaction < 1.0, axis=1)

    @property
    def expected_gain(self) -> np.ndarray:
        """Per-user weighted expected improvement, counting only unmet metrics."""
        met = (self.satisfaction >= 1.0).astype(float)
        benefit = np.maximum(0.0, 1.0 - self.satisfaction)
        return np.sum(self.weights * (1.0 - met) * benefit, axis=1)


def area_efficiency(inputs: AreaInputs, y_user, y_bs) -> float:
    yu = np.asarray(y_user, dtype=bool)
    yb = np.asarray(y_bs, dtype=bool)
    cost = inputs.user_cost[yu].sum() + inputs.bs_cost[yb].sum()
    if cost <= 0:
        return 0.0
    return float(inputs.expected_gain[yu].sum() / cost)


def supply_violation(inputs: AreaInputs, y_user, y_bs) -> float:
    """Amount by which selected demand exceeds the scaled supply (0 when feasible)."""
    yu = np.asarray(y_user, dtype=bool)
    yb = np.asarray(y_bs, dtype=bool)
    nz, mz = int(yu.sum()), int(yb.sum())
    if nz == 0:
        return 0.0
    if mz == 0:
        return float(inputs.demand[yu].sum())
    x = inputs.potential
    deg = x.sum(axis=1)
    # a user's demand is split evenly over its in-range stations; the area holds the share of selected ones
    split = np.where(deg > 0, x[:, yb].sum(axis=1) / np.maximum(deg, 1), 0.0)
    lhs = float((inputs.demand * split)[yu].sum())
    rhs = float((inputs.capacity[yb] * x[np.ix_(yu, yb)].sum(axis=0)).sum() / (mz * nz))
    return max(0.0, lhs - rhs)


def area_connected(inputs: AreaInputs, y_user, y_bs) -> bool:
    yu = np.asarray(y_user, dtype=bool)
    yb = np.asarray(y_bs, dtype=bool)
    need = yu & inputs.unsatisfied
    return bool(np.all(inputs.potential[need][:, yb].any(axis=1))) if need.any() else True


@dataclass
class TargetArea:
    segment: int
    users: np.ndarray
    bss: np.ndarray
    y_user: np.ndarray
    y_bs: np.ndarray
    gain: np.ndarray
    user_cost: np.ndarray
    bs_cost: np.ndarray
    feasible: bool = True
    violation: float = 0.0
    expanded_users: list = field(default_factory=list)
    expanded_bss: list = field(default_factory=list)

    @property
    def member_users(self) -> np.ndarray:
        return self.users[self.y_user]

    @property
    def member_bss(self) -> np.ndarray:
        return self.bss[self.y_bs]

    @property
    def benefit(self) -> float:
        return float(self.gain[self.y_user].sum())

    @property
    def cost(self) -> float:
        return float(self.user_cost[self.y_user].sum() + self.bs_cost[self.y_bs].sum())

    @property
    def eta(self) -> float:
        c = self.cost
        return self.benefit / c if c > 0 else 0.0

    @property
    def is_empty(self) -> bool:
        return not self.y_user.any()

    def to_dict(self) -> dict:
        return {"segment": self.segment, "users": self.member_users.tolist(), "bss": self.member_bss.tolist(),
                "eta": self.eta, "benefit": self.benefit, "cost": self.cost, "feasible": self.feasible,
                "violation": self.violation, "expanded_users": list(self.expanded_users),
                "expanded_bss": list(self.expanded_bss)}


def _state_key(inputs, yu, yb):
    return (-supply_violation(inputs, yu, yb), area_efficiency(inputs, yu, yb))


def _better(key, best) -> bool:
    return key[0] > best[0] + 1e-12 or (key[0] >= best[0] - 1e-12 and key[1] > best[1] + 1e-12)


def _search(inputs: AreaInputs, yu, yb, removals_only: bool, max_steps: int, fixed_bs: bool = False):
    """Best-improvement local search over single toggles, then pairs of toggles."""
    unsat = inputs.unsatisfied
    nu, nb = len(yu), len(yb)
    current = _state_key(inputs, yu, yb)
    for _ in range(max_steps):
        flips = [("u", i) for i in range(nu) if not unsat[i] and (yu[i] or not removals_only)]
        if not fixed_bs:
            flips += [("b", j) for j in range(nb) if yb[j] or not removals_only]
        moves = [(f,) for f in flips]
        if not removals_only:
            moves += [(f, g) for k, f in enumerate(flips) for g in flips[k + 1:]]
        best, best_state = current, None
        for move in moves:
            tu, tb = yu.copy(), yb.copy()
            for kind, idx in move:
                arr = tu if kind == "u" else tb
                arr[idx] = not arr[idx]
            if not tb.any() or not area_connected(inputs, tu, tb):
                continue
            key = _state_key(inputs, tu, tb)
            if _better(key, best):
                best, best_state = key, (tu, tb)
        if best_state is None:
            break
        (yu, yb), current = best_state, best
    return yu, yb, current


def identify_target_area(inputs: AreaInputs, segment: int = 0, strong_threshold: float | None = 0.5,
                         max_steps: int = 1000, max_enumerated_bs: int = 6) -> TargetArea:
    """Greedy selection maximizing benefit per modeling cost.

    Every BS subset (up to ``max_enumerated_bs`` stations, otherwise only the
    full set) is paired with two user starts: the whole segment and the
    unsatisfied users alone. Satisfied users are removed greedily with the
    BSs held fixed, then single and paired add/remove toggles of users and
    BSs polish the result; the best end state wins.
    Unsatisfied users are never removed and must keep an in-range BS. States
    are ranked by supply violation first and efficiency second. Finally users
    and BSs joined to the selection by an adjacency weight above
    ``strong_threshold`` are added (None disables this step).
    """
    nu, nb = len(inputs.users), len(inputs.bss)
    gain = inputs.expected_gain
    unsat = inputs.unsatisfied
    if not unsat.any():
        return TargetArea(segment, inputs.users, inputs.bss, np.zeros(nu, bool), np.zeros(nb, bool), gain,
                          inputs.user_cost, inputs.bs_cost)
    all_b = np.ones(nb, dtype=bool)
    if not area_connected(inputs, unsat, all_b):
        raise DomainError("an unsatisfied user has no potential link to any BS of its segment")
    starts = [all_b]
    if nb <= max_enumerated_bs:
        starts += [np.array([(mask >> j) & 1 for j in range(nb)], dtype=bool) for mask in range(1, (1 << nb) - 1)]
    best = None
    for bs_start in starts:
        if not area_connected(inputs, unsat, bs_start):
            continue
        for user_start in (np.ones(nu, dtype=bool), unsat.copy()):
            yu, yb, _ = _search(inputs, user_start, bs_start.copy(), True, max_steps, fixed_bs=True)
            yu, yb, key = _search(inputs, yu, yb, False, max_steps)
            if best is None or _better(key, best[2]):
                best = (yu, yb, key)
    yu, yb = best[0], best[1]
    area = TargetArea(segment, inputs.users, inputs.bss, yu, yb, gain, inputs.user_cost, inputs.bs_cost)
    if strong_threshold is not None:
        A = inputs.adjacency
        strong = A > strong_threshold
        add_b = ~yb & strong[yu & unsat].any(axis=0)
        yb = yb | add_b
        add_u = ~yu & strong[:, yb].any(axis=1)
        yu = yu | add_u
        area = TargetArea(segment, inputs.users, inputs.bss, yu, yb, gain, inputs.user_cost, inputs.bs_cost,
                          expanded_users=inputs.users[add_u].tolist(), expanded_bss=inputs.bss[add_b].tolist())
    area.violation = supply_violation(inputs, area.y_user, area.y_bs)
    area.feasible = area.violation <= 0
    return area


def exhaustive_target_area(inputs: AreaInputs) -> tuple:
    """Best (eta, y_user, y_bs) over all feasible connected selections holding every unsatisfied user."""
    nu, nb = len(inputs.users), len(inputs.bss)
    unsat = inputs.unsatisfied
    best = (-np.inf, None, None)
    for mu in range(1 << nu):
        yu = np.array([(mu >> i) & 1 for i in range(nu)], dtype=bool)
        if np.any(unsat & ~yu):
            continue
        for mb in range(1, 1 << nb):
            yb = np.array([(mb >> j) & 1 for j in range(nb)], dtype=bool)
            if not area_connected(inputs, yu, yb) or supply_violation(inputs, yu, yb) > 0:
                continue
            eta = area_efficiency(inputs, yu, yb)
            if eta > best[0]:
                best = (eta, yu, yb)
    return best


# ------------------------------------------------------------------ report

def segmentation_report(partition: Partition, n_bs: int, loaded, areas, entity_names=None) -> dict:
    names = entity_names or (lambda v: f"bs{v:02d}" if v < n_bs else f"ue{v - n_bs:03d}")
    return {
        "n_segments": partition.n_segments,
        "ratio_cut": partition.objective,
        "warnings": list(partition.warnings),
        "segments": [[names(int(v)) for v in seg] for seg in partition.segments],
        "load_flags": {f"bs{j:02d}": int(f) for j, f in enumerate(np.asarray(loaded).tolist())},
        "areas": [a.to_dict() for a in areas],
    }


def write_segmentation_report(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
