"""Adversarial search in the space of persistence diagrams.

The objective  W_p(D, D') - lambda * CE(logits(D'), c)  is minimized over
D' by projected gradient descent on the point coordinates: each iteration
recomputes the optimal matching between D and D' (the Wasserstein gradient
is only valid under the current matching), takes a signed step on the
max-normalized combination of the two gradient terms (so the lambda grid
mixes them scale-free) with a linearly decaying step size, and projects
every point back to the feasible region 0 <= birth <= death.  Signed steps
that would push a point through the diagonal are replaced by their
tangential component, sliding the point along it.  D' starts as D plus a
few points just above the diagonal, whose births are spread over the
occupied birth range; sliding such points along the diagonal is metrically
almost free, which is the move an unstable classifier cannot tolerate.

For p = inf the distance term is non-smooth, so descent uses a softmax
(log-sum-exp) surrogate over the matched costs whose temperature shrinks
with the current bottleneck value; reported distances always come from the
exact solver, never the surrogate.

When a budget is given, iterates are additionally projected into a
sufficient feasibility region (originals stay in a metric box around their
start, added points keep their persistence small enough) so that every
iterate is within budget by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import baseline as bl
from . import lipnet as ln
from .metric import (
    INF,
    Matching,
    as_points,
    diagonal_distance,
    matching_cost,
    optimal_matching,
    point_distance,
    _check_p,
)
from .seeds import make_rng
from .stablerank import Reparameterization, stable_rank_point_gradient, stable_rank_vector

FEASIBILITY_SLACK = 1e-9


@dataclass
class AttackConfig:
    lambdas: tuple[float, ...] = (0.1, 1.0, 10.0)
    steps: int = 120
    step_size: float = 1.0
    n_added: int = 10
    init_offset: float = 1e-3
    p: float = INF
    budget: Optional[float] = None
    seed: int = 0
    surrogate_temp: float = 0.05
    early_stop: bool = False  # return on the first in-budget success
    # an added point whose classifier gradient stays zero for this many
    # consecutive steps is re-seeded at a fresh birth position (0 disables);
    # pool-style classifiers have large gradient-dead regions along the
    # diagonal that plain descent cannot cross
    reseed_patience: int = 5

    def __post_init__(self) -> None:
        if isinstance(self.lambdas, (int, float)):
            self.lambdas = (float(self.lambdas),)
        if self.steps < 0 or self.step_size <= 0 or self.n_added < 0:
            raise ValueError("steps, step_size and n_added must be non-negative/positive")
        if self.init_offset <= 0:
            raise ValueError("init_offset must be positive")
        _check_p(self.p)
        if self.budget is not None and self.budget < 0:
            raise ValueError("budget must be non-negative")


@dataclass
class AttackResult:
    """Outcome of one adversarial search.

    distance is always recomputed with the exact metric solver;
    surrogate_gap records |smoothed objective - exact| at the reported
    iterate (only the gradient of the smoothed objective is ever used, so a
    nonzero gap indicates nothing wrong, it is bookkeeping for audits).
    """

    points: np.ndarray  # adversarial diagram
    distance: float  # exact W_p(D, D') from the metric solver
    success: bool
    iterations: int  # total gradient steps spent across the lambda grid
    lam: float = 0.0
    surrogate_gap: float = 0.0


class DeepSetAttackTarget:
    """Gradient interface of the set classifier for the attack."""

    def __init__(self, net: bl.DeepSetNet):
        self.net = net

    def logits(self, points: np.ndarray) -> np.ndarray:
        return bl.deepset_forward(self.net, points)

    def point_gradient(self, points: np.ndarray, grad_logits: np.ndarray) -> np.ndarray:
        return bl.deepset_point_gradient(self.net, points, grad_logits)


class StableRankAttackTarget:
    """Gradient interface of the vectorize-then-classify composition.

    input_mean, when given, is subtracted from the vector before the network
    (training-time feature centering; a translation, so gradients and the
    Lipschitz constant are unaffected).
    """

    def __init__(
        self,
        net: ln.LipschitzNetwork,
        p: float,
        rep: Reparameterization,
        n_dim: Optional[int] = None,
        input_mean: Optional[np.ndarray] = None,
    ):
        self.net = net
        self.p = p
        self.rep = rep
        self.n_dim = n_dim if n_dim is not None else net.input_dim
        self.input_mean = input_mean

    def vector(self, points: np.ndarray) -> np.ndarray:
        vec = stable_rank_vector(points, self.p, self.rep, self.n_dim).values
        return vec if self.input_mean is None else vec - self.input_mean

    def logits(self, points: np.ndarray) -> np.ndarray:
        return ln.forward(self.net, self.vector(points))

    def point_gradient(self, points: np.ndarray, grad_logits: np.ndarray) -> np.ndarray:
        g_vec = ln.input_gradient(self.net, self.vector(points), grad_logits)
        return stable_rank_point_gradient(points, self.p, self.rep, self.n_dim, g_vec)


def _unit(g: np.ndarray) -> np.ndarray:
    scale = float(np.max(np.abs(g))) if g.size else 0.0
    return g / scale if scale > 0 else np.zeros_like(g)


def _surrogate_value(
    origin: np.ndarray, current: np.ndarray, matching: Matching, p: float, temp: float
) -> float:
    """Value of the smoothed distance term whose gradient drives descent."""
    costs = [point_distance(origin[i], current[j], p) for i, j in matching.pairs]
    costs += [diagonal_distance(origin[i], p) for i in matching.unmatched_left]
    costs += [diagonal_distance(current[j], p) for j in matching.unmatched_right]
    if not costs:
        return 0.0
    arr = np.asarray(costs)
    if p != INF:
        return float(np.sum(arr**p) ** (1.0 / p))
    top = arr.max()
    tau = max(temp * top, 1e-12)
    return float(tau * np.log(np.sum(np.exp((arr - top) / tau))) + top)


def _cross_entropy_grad(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    z = logits - logits.max()
    expz = np.exp(z)
    probs = expz / expz.sum()
    loss = -float(np.log(max(probs[label], 1e-300)))
    grad = probs.copy()
    grad[label] -= 1.0
    return loss, grad


def _distance_gradient(
    origin: np.ndarray, current: np.ndarray, matching: Matching, p: float, temp: float
) -> np.ndarray:
    """Gradient of the distance term at the current optimal matching."""
    grad = np.zeros_like(current)
    entries: list[tuple[int, float, np.ndarray]] = []  # (current index or -1, cost, dcost)
    for i, j in matching.pairs:
        delta = current[j] - origin[i]
        if p == INF:
            k = int(np.argmax(np.abs(delta)))
            cost = float(abs(delta[k]))
            dcost = np.zeros(2)
            if cost > 0:
                dcost[k] = 1.0 if delta[k] > 0 else -1.0
        else:
            cost = float(np.sum(np.abs(delta) ** p) ** (1.0 / p))
            if cost > 0:
                dcost = np.abs(delta) ** (p - 1.0) * np.sign(delta) / cost ** (p - 1.0)
            else:
                dcost = np.zeros(2)
        entries.append((j, cost, dcost))
    for j in matching.unmatched_right:
        gap = current[j, 1] - current[j, 0]
        if p == INF:
            cost = 0.5 * gap
            dcost = np.array([-0.5, 0.5])
        else:
            cost = 0.5 * gap * 2.0 ** (1.0 / p)
            dcost = 2.0 ** (1.0 / p) * np.array([-0.5, 0.5])
        entries.append((j, cost, dcost))
    for i in matching.unmatched_left:
        gap = origin[i, 1] - origin[i, 0]
        cost = 0.5 * gap if p == INF else 0.5 * gap * 2.0 ** (1.0 / p)
        entries.append((-1, cost, np.zeros(2)))  # constant in D'
    if not entries:
        return grad
    costs = np.array([c for _, c, _ in entries])
    if p == INF:
        # softmax surrogate for the max; temperature tied to the current value
        tau = max(temp * costs.max(), 1e-12)
        w = np.exp((costs - costs.max()) / tau)
        w /= w.sum()
        for (j, _, dcost), wk in zip(entries, w):
            if j >= 0:
                grad[j] += wk * dcost
    else:
        total = float(np.sum(costs**p))
        if total > 0:
            w_val = total ** (1.0 / p)
            for j, cost, dcost in entries:
                if j >= 0 and cost > 0:
                    grad[j] += w_val ** (1.0 - p) * cost ** (p - 1.0) * dcost
    return grad


def _project_feasible(points: np.ndarray) -> np.ndarray:
    """Nearest point of the cone {0 <= birth <= death}, applied row-wise."""
    pts = points.copy()
    swap = pts[:, 0] > pts[:, 1]
    if swap.any():
        mid = 0.5 * (pts[swap, 0] + pts[swap, 1])
        pts[swap, 0] = mid
        pts[swap, 1] = mid
    np.clip(pts, 0.0, None, out=pts)
    pts[:, 1] = np.maximum(pts[:, 1], pts[:, 0])
    return pts


def _sufficient_cost(points: np.ndarray, origin: np.ndarray, n_orig: int, p: float) -> float:
    """Cost of the explicit matching (original i -> moved i, added -> diagonal).

    An upper bound on W_p(D, D'), feasible by construction; the bottleneck
    solver uses it to prune its candidate search.
    """
    delta = points[:n_orig] - origin
    gaps = points[n_orig:, 1] - points[n_orig:, 0]
    if p == INF:
        cost = float(np.max(np.abs(delta))) if delta.size else 0.0
        if gaps.size:
            cost = max(cost, 0.5 * float(gaps.max()))
        return cost
    c = float(np.sum(np.abs(delta) ** p)) if delta.size else 0.0
    c += float(np.sum((0.5 * gaps * 2.0 ** (1.0 / p)) ** p)) if gaps.size else 0.0
    return c ** (1.0 / p) if c > 0 else 0.0


def _project_budget(
    points: np.ndarray, origin: np.ndarray, n_orig: int, budget: float, p: float
) -> np.ndarray:
    """Shrink displacements so W_p(D, D') <= budget holds by construction.

    Uses the sufficient matching (original i to moved i, added points to the
    diagonal); scaling every displacement and every added persistence gap by
    a common factor scales that matching's cost linearly.
    """
    pts = points.copy()
    delta = pts[:n_orig] - origin
    gaps = pts[n_orig:, 1] - pts[n_orig:, 0]
    cost = _sufficient_cost(pts, origin, n_orig, p)
    if cost <= budget or cost == 0.0:
        return pts
    scale = budget / cost * (1.0 - FEASIBILITY_SLACK)
    pts[:n_orig] = origin + delta * scale
    mid = 0.5 * (pts[n_orig:, 0] + pts[n_orig:, 1])
    pts[n_orig:, 0] = mid - 0.5 * gaps * scale
    pts[n_orig:, 1] = mid + 0.5 * gaps * scale
    return pts


def _initial_points(origin: np.ndarray, config: AttackConfig, rng) -> np.ndarray:
    if config.n_added == 0:
        return origin.copy()
    if len(origin):
        lo, hi = float(origin[:, 0].min()), float(origin[:, 0].max())
    else:
        lo, hi = 0.0, 1.0
    births = rng.uniform(lo, hi if hi > lo else lo + 1.0, size=config.n_added)
    added = np.column_stack([births, births + config.init_offset])
    return np.vstack([origin, added]) if len(origin) else added


def attack(target, diagram, true_class: int, config: AttackConfig, rng_key: int = 0) -> AttackResult:
    """Search for an adversarial diagram near `diagram` under the W_p budget.

    Tries each lambda in config.lambdas and keeps the successful iterate of
    smallest exact distance; on total failure returns the last final iterate.
    Deterministic given (config.seed, rng_key).
    """
    origin = as_points(diagram)
    n_orig = len(origin)
    best: Optional[AttackResult] = None
    last_points = origin.copy()
    last_dist = 0.0
    total_steps = 0

    if len(origin):
        reseed_hi = float(origin[:, 0].max()) * 1.1 + 1e-6
    else:
        reseed_hi = 1.0

    for lam_idx, lam in enumerate(config.lambdas):
        rng = make_rng(config.seed, (rng_key << 8) + lam_idx)
        current = _initial_points(origin, config, rng)
        if config.budget is not None:
            current = _project_budget(current, origin, n_orig, config.budget, config.p)
        aborted = False
        dead_steps = np.zeros(len(current) - n_orig, dtype=int)

        for step in range(config.steps + 1):
            upper = _sufficient_cost(current, origin, n_orig, config.p)
            matching = optimal_matching(origin, current, config.p, upper=upper)
            exact_dist = matching_cost(origin, current, matching, config.p)
            logits = target.logits(current)
            flipped = int(np.argmax(logits)) != true_class
            in_budget = config.budget is None or exact_dist <= config.budget + FEASIBILITY_SLACK
            if flipped and in_budget and (best is None or exact_dist < best.distance):
                gap = abs(
                    _surrogate_value(origin, current, matching, config.p, config.surrogate_temp)
                    - exact_dist
                )
                best = AttackResult(
                    points=current.copy(),
                    distance=exact_dist,
                    success=True,
                    iterations=0,
                    lam=lam,
                    surrogate_gap=gap,
                )
                if config.early_stop:
                    best.iterations = total_steps
                    return best
            if step == config.steps:
                last_points, last_dist = current.copy(), exact_dist
                break
            g_dist = _distance_gradient(
                origin, current, matching, config.p, config.surrogate_temp
            )
            _, g_logits = _cross_entropy_grad(logits, true_class)
            g_ce = target.point_gradient(current, g_logits)
            if not (np.all(np.isfinite(g_dist)) and np.all(np.isfinite(g_ce))):
                aborted = True
                last_points, last_dist = current.copy(), exact_dist
                break
            # normalize both terms so the lambda grid mixes them scale-free
            # (diagram units and classifier loss scales are otherwise incomparable)
            g = _unit(g_dist) - lam * _unit(g_ce)
            step_t = config.step_size * (1.0 - step / config.steps)
            move = -step_t * np.sign(g)
            # a signed step that would push a point through the diagonal is
            # replaced by its tangential component, sliding along it instead
            new_gap = (current[:, 1] + move[:, 1]) - (current[:, 0] + move[:, 0])
            crossing = new_gap < 0
            if crossing.any():
                tangent = 0.5 * (g[crossing, 0] + g[crossing, 1])
                slide = -step_t * np.sign(tangent)
                move[crossing, 0] = slide
                move[crossing, 1] = slide
            current = current + move
            current = _project_feasible(current)
            if config.reseed_patience and len(dead_steps):
                dead = np.max(np.abs(g_ce[n_orig:]), axis=1) == 0.0
                dead_steps = np.where(dead, dead_steps + 1, 0)
                stuck = dead_steps >= config.reseed_patience
                if stuck.any():
                    births = rng.uniform(0.0, reseed_hi, size=int(stuck.sum()))
                    rows = n_orig + np.nonzero(stuck)[0]
                    current[rows, 0] = births
                    current[rows, 1] = births + config.init_offset
                    dead_steps[stuck] = 0
            if config.budget is not None:
                current = _project_budget(current, origin, n_orig, config.budget, config.p)
            total_steps += 1
        if aborted:
            continue

    if best is not None:
        best.iterations = total_steps
        return best
    return AttackResult(
        points=last_points,
        distance=last_dist,
        success=False,
        iterations=total_steps,
        lam=float(config.lambdas[-1]),
    )


def empirical_robust_accuracy(
    target, diagrams, labels, epsilon: float, config: AttackConfig
) -> float:
    """Fraction of samples whose prediction survives attack within radius epsilon.

    Misclassified samples count as non-robust.  epsilon = 0 allows no
    perturbation at all, so it reduces to clean accuracy.
    """
    labels = np.asarray(labels, dtype=np.int64)
    robust = 0
    for i, diagram in enumerate(diagrams):
        pts = as_points(diagram)
        clean = int(np.argmax(target.logits(pts))) == labels[i]
        if not clean:
            continue
        if epsilon == 0.0:
            robust += 1
            continue
        cfg = replace(config, budget=epsilon, early_stop=True)
        result = attack(target, pts, int(labels[i]), cfg, rng_key=i)
        if not (result.success and result.distance <= epsilon + FEASIBILITY_SLACK):
            robust += 1
    return robust / len(labels) if len(labels) else 0.0
