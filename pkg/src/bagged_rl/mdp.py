"""Finite periodic MDPs with per-step discounts and exact tabular solvers.

A period-K process cycles through K state/action spaces. Kernel entry 0 maps
(step K state, action) into step 1; kernel entry k>=1 maps step k into step
k+1 (1-based). Rewards and discounts are per step. The product of the K
discounts must lie in [0, 1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ROW_SUM_TOL = 1e-12


class ConvergenceError(RuntimeError):
    """Raised when a sweep limit is hit; carries the last residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def _as_tensor_list(arrays) -> tuple[np.ndarray, ...]:
    return tuple(np.asarray(a, dtype=float) for a in arrays)


@dataclass(frozen=True)
class TabularPeriodicMdp:
    """Tabular period-K decision process.

    transitions[0] has shape (|S_K|, |A_K|, |S_1|); transitions[k] for k>=1
    has shape (|S_k|, |A_k|, |S_{k+1}|) in 1-based step labels.
    """

    K: int
    state_counts: tuple[int, ...]
    action_counts: tuple[int, ...]
    transitions: tuple[np.ndarray, ...]
    reward_means: tuple[np.ndarray, ...]
    discounts: tuple[float, ...]
    initial_dist: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "state_counts", tuple(int(n) for n in self.state_counts))
        object.__setattr__(self, "action_counts", tuple(int(n) for n in self.action_counts))
        object.__setattr__(self, "transitions", _as_tensor_list(self.transitions))
        object.__setattr__(self, "reward_means", _as_tensor_list(self.reward_means))
        object.__setattr__(self, "discounts", tuple(float(g) for g in self.discounts))
        object.__setattr__(self, "initial_dist", np.asarray(self.initial_dist, dtype=float))

        K = self.K
        if K < 1:
            raise ValueError("K must be positive")
        for name, seq in (("state_counts", self.state_counts),
                          ("action_counts", self.action_counts),
                          ("transitions", self.transitions),
                          ("reward_means", self.reward_means),
                          ("discounts", self.discounts)):
            if len(seq) != K:
                raise ValueError(f"{name} must have length K={K}")
        for k in range(K):
            src = (k - 1) % K
            expected = (self.state_counts[src], self.action_counts[src], self.state_counts[k])
            if self.transitions[k].shape != expected:
                raise ValueError(f"transitions[{k}] has shape {self.transitions[k].shape}, expected {expected}")
            if self.reward_means[k].shape != (self.state_counts[k], self.action_counts[k]):
                raise ValueError(f"reward_means[{k}] shape mismatch")
            if np.any(self.transitions[k] < 0):
                raise ValueError(f"transitions[{k}] has negative entries")
            rows = self.transitions[k].sum(axis=-1)
            if np.max(np.abs(rows - 1.0)) > ROW_SUM_TOL:
                raise ValueError(f"transitions[{k}] rows do not sum to 1")
            if self.discounts[k] < 0:
                raise ValueError("discounts must be nonnegative")
        gbar = float(np.prod(self.discounts))
        if not (0.0 <= gbar < 1.0):
            raise ValueError(f"product of discounts must lie in [0, 1), got {gbar}")
        if self.initial_dist.shape != (self.state_counts[0],):
            raise ValueError("initial_dist must be a distribution over step-1 states")
        if np.any(self.initial_dist < 0) or abs(self.initial_dist.sum() - 1.0) > ROW_SUM_TOL:
            raise ValueError("initial_dist must be a probability vector")

    @property
    def gamma_bar(self) -> float:
        return float(np.prod(self.discounts))

    def to_json(self) -> str:
        payload = {
            "K": self.K,
            "state_counts": list(self.state_counts),
            "action_counts": list(self.action_counts),
            "transitions": [t.tolist() for t in self.transitions],
            "reward_means": [r.tolist() for r in self.reward_means],
            "discounts": list(self.discounts),
            "initial_dist": self.initial_dist.tolist(),
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TabularPeriodicMdp":
        payload = json.loads(text)
        known = {"K", "state_counts", "action_counts", "transitions",
                 "reward_means", "discounts", "initial_dist"}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown keys in decision-process file: {sorted(unknown)}")
        missing = known - set(payload)
        if missing:
            raise ValueError(f"missing keys in decision-process file: {sorted(missing)}")
        return cls(
            K=payload["K"],
            state_counts=payload["state_counts"],
            action_counts=payload["action_counts"],
            transitions=payload["transitions"],
            reward_means=payload["reward_means"],
            discounts=payload["discounts"],
            initial_dist=payload["initial_dist"],
        )


@dataclass(frozen=True)
class QFunctions:
    """Per-step action-value tables, entry k shaped (|S_k|, |A_k|)."""

    tables: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "tables", _as_tensor_list(self.tables))

    def state_values(self) -> list[np.ndarray]:
        return [t.max(axis=1) for t in self.tables]


@dataclass(frozen=True)
class PeriodicPolicy:
    """Per-step stochastic maps, entry k shaped (|S_k|, |A_k|) with unit rows."""

    maps: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "maps", _as_tensor_list(self.maps))
        for m in self.maps:
            if np.any(m < 0) or np.max(np.abs(m.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
                raise ValueError("policy rows must be probability vectors")

    def actions(self) -> list[np.ndarray]:
        """Greedy action per state; only meaningful for deterministic maps."""
        return [m.argmax(axis=1) for m in self.maps]


def discounted_return(rewards, discounts, start=(1, 1)) -> float:
    """Discounted sum of rewards from a 1-based (bag, step) start index.

    The weight at the start index is 1; each later index multiplies the
    running weight by the discount of the step just before it.
    """
    rewards = np.asarray(rewards, dtype=float)
    if rewards.ndim != 2:
        raise ValueError("rewards must be (bags, K)")
    n_bags, K = rewards.shape
    if len(discounts) != K:
        raise ValueError("discounts must have length K")
    d0, k0 = start
    if not (1 <= d0 <= n_bags and 1 <= k0 <= K):
        raise IndexError(f"start {start} outside a {n_bags}x{K} trajectory")
    flat = rewards.ravel()
    gammas = np.asarray(discounts, dtype=float)
    i0 = (d0 - 1) * K + (k0 - 1)
    total = 0.0
    weight = 1.0
    for i in range(i0, flat.size):
        total += weight * flat[i]
        weight *= gammas[i % K]
    return total


def _sweep(mdp: TabularPeriodicMdp, q: list[np.ndarray], next_values) -> None:
    """One in-place backward sweep (step K down to 1).

    next_values(step, q_table) returns the successor-state value vector used
    in the backup for that step's outgoing kernel.
    """
    K = mdp.K
    for k in range(K - 1, -1, -1):
        nxt = (k + 1) % K
        v_next = next_values(nxt, q[nxt])
        q[k] = mdp.reward_means[k] + mdp.discounts[k] * (mdp.transitions[nxt] @ v_next)


def _iterate(mdp: TabularPeriodicMdp, tol: float, max_sweeps: int, next_values,
             residual_fn) -> QFunctions:
    if tol <= 0:
        raise ValueError("tol must be positive")
    gbar = mdp.gamma_bar
    # Successive-difference threshold that guarantees the fixed-point residual
    # is at most tol; degenerate when gbar == 0, where the sweep is exact.
    diff_tol = tol * (1.0 - gbar) / (2.0 * gbar) if gbar > 0 else tol
    q = [np.zeros((ns, na)) for ns, na in zip(mdp.state_counts, mdp.action_counts)]
    residual = np.inf
    for _ in range(max_sweeps):
        prev = [t.copy() for t in q]
        _sweep(mdp, q, next_values)
        diff = max(float(np.max(np.abs(a - b))) for a, b in zip(q, prev))
        if diff <= diff_tol:
            residual = residual_fn(QFunctions(tuple(q)))
            if residual <= tol:
                return QFunctions(tuple(q))
    raise ConvergenceError(
        f"no fixed point within {max_sweeps} sweeps (last residual {residual:.3e})",
        residual=float(residual) if np.isfinite(residual) else float("inf"),
    )


def value_iteration(mdp: TabularPeriodicMdp, tol: float = 1e-10,
                    max_sweeps: int = 10**6) -> QFunctions:
    """Solve the optimality fixed point to sup-norm residual <= tol."""
    return _iterate(mdp, tol, max_sweeps,
                    lambda k, t: t.max(axis=1),
                    lambda q: bellman_residual(mdp, q))


def evaluate_policy(mdp: TabularPeriodicMdp, policy: PeriodicPolicy,
                    tol: float = 1e-10, max_sweeps: int = 10**6) -> QFunctions:
    """Solve the policy-specific fixed point to sup-norm residual <= tol."""
    _check_policy_shapes(mdp, policy)
    return _iterate(mdp, tol, max_sweeps,
                    lambda k, t: (policy.maps[k] * t).sum(axis=1),
                    lambda q: policy_residual(mdp, q, policy))


def policy_state_values(q: QFunctions, policy: PeriodicPolicy) -> list[np.ndarray]:
    """V_k(s) = E_{a~policy} Q_k(s, a)."""
    return [(m * t).sum(axis=1) for m, t in zip(policy.maps, q.tables)]


def greedy_policy(q: QFunctions) -> PeriodicPolicy:
    """Deterministic argmax policy; ties go to the lowest action index."""
    maps = []
    for t in q.tables:
        m = np.zeros_like(t)
        m[np.arange(t.shape[0]), t.argmax(axis=1)] = 1.0
        maps.append(m)
    return PeriodicPolicy(tuple(maps))


def _backup(mdp: TabularPeriodicMdp, q: QFunctions, next_values) -> list[np.ndarray]:
    K = mdp.K
    out = []
    for k in range(K):
        nxt = (k + 1) % K
        v_next = next_values(nxt, q.tables[nxt])
        out.append(mdp.reward_means[k] + mdp.discounts[k] * (mdp.transitions[nxt] @ v_next))
    return out

def bellman_residual(mdp: TabularPeriodicMdp, q: QFunctions) -> float:
    """Sup-norm distance of q from the optimality backup."""
    backed = _backup(mdp, q, lambda k, t: t.max(axis=1))
    return max(float(np.max(np.abs(b - t))) for b, t in zip(backed, q.tables))


def policy_residual(mdp: TabularPeriodicMdp, q: QFunctions, policy: PeriodicPolicy) -> float:
    """Sup-norm distance of q from the policy-expectation backup."""
    backed = _backup(mdp, q, lambda k, t: (policy.maps[k] * t).sum(axis=1))
    return max(float(np.max(np.abs(b - t))) for b, t in zip(backed, q.tables))


def _check_policy_shapes(mdp: TabularPeriodicMdp, policy: PeriodicPolicy) -> None:
    if len(policy.maps) != mdp.K:
        raise ValueError("policy must have K per-step maps")
    for k, m in enumerate(policy.maps):
        if m.shape != (mdp.state_counts[k], mdp.action_counts[k]):
            raise ValueError(f"policy map {k} shape mismatch")


def uniform_policy(mdp: TabularPeriodicMdp) -> PeriodicPolicy:
    return PeriodicPolicy(tuple(
        np.full((ns, na), 1.0 / na) for ns, na in zip(mdp.state_counts, mdp.action_counts)
    ))
