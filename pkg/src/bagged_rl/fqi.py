"""Near-optimal policies by fitted Q-iteration on the pooled basis.

The generative model is (nearly) linear in the pooled basis, so iterating a
ridge regression on one-step lookahead targets over a large random-action
dataset yields a strong weight vector without any deep-learning machinery.
Plain fitted-Q tends to settle into a small limit cycle under the max
operator, so the iteration is damped and the tail iterates are averaged.
"""

from __future__ import annotations

import numpy as np

from .causal_env import BernoulliPolicy, EnvParams, GreedyBasisPolicy, rollout
from .states import POOLED_DIM, StepView, features_pooled


def collect_random_dataset(params: EnvParams, n_episodes: int, horizon: int,
                           seed: int):
    """Random-action episodes flattened into aligned regression arrays.

    Row (t, k) pairs with the features of both actions at the next decision
    time; each bag's last row pairs with the next bag's first decision and
    carries the bag reward (the final bag's last row is dropped). Returns
    (X, next0, next1, rewards, bag_link_mask).
    """
    K = params.K
    rows, next0, next1, rewards, is_link = [], [], [], [], []
    for ep in range(n_episodes):
        rng = np.random.default_rng(np.random.SeedSequence((seed, ep)))
        policy = BernoulliPolicy(0.5, np.random.default_rng(
            np.random.SeedSequence((seed, ep, 1))))
        traj = rollout(params, policy, horizon, rng)
        feats = np.empty((horizon, K, 2, POOLED_DIM))
        e_prev, r_prev = traj.e0, traj.r0
        for d in range(horizon):
            for k in range(K):
                view = StepView(k=k + 1, K=K, e_prev=e_prev, r_prev=r_prev,
                                c=tuple(traj.C[d, :k + 1]),
                                a=tuple(int(x) for x in traj.A[d, :k]),
                                m=tuple(traj.M[d, :k]))
                feats[d, k, 0] = features_pooled(view, 0)
                feats[d, k, 1] = features_pooled(view, 1)
            e_prev, r_prev = traj.E[d], traj.R[d]
        for d in range(horizon):
            for k in range(K):
                a = int(traj.A[d, k])
                if k < K - 1:
                    rows.append(feats[d, k, a])
                    next0.append(feats[d, k + 1, 0])
                    next1.append(feats[d, k + 1, 1])
                    rewards.append(0.0)
                    is_link.append(False)
                elif d < horizon - 1:
                    rows.append(feats[d, k, a])
                    next0.append(feats[d + 1, 0, 0])
                    next1.append(feats[d + 1, 0, 1])
                    rewards.append(traj.R[d])
                    is_link.append(True)
    return (np.asarray(rows), np.asarray(next0), np.asarray(next1),
            np.asarray(rewards), np.asarray(is_link))


def fit_pooled_q(params: EnvParams, n_episodes: int = 3000, horizon: int = 15,
                 gamma_bar: float = 0.9, ridge: float = 1e-3,
                 max_iters: int = 300, damping: float = 0.3, tail: int = 100,
                 seed: int = 0) -> np.ndarray:
    """Damped, tail-averaged fitted-Q iteration; returns pooled weights."""
    X, N0, N1, rew, link = collect_random_dataset(params, n_episodes, horizon, seed)
    n, p = X.shape
    disc = np.where(link, gamma_bar, 1.0)
    gram = X.T @ X + ridge * np.eye(p)
    solve = np.linalg.solve(gram, X.T)
    beta = np.zeros(p)
    acc = np.zeros(p)
    count = 0
    for it in range(max_iters):
        y = rew + disc * np.maximum(N0 @ beta, N1 @ beta)
        beta = (1.0 - damping) * beta + damping * (solve @ y)
        if it >= max_iters - tail:
            acc += beta
            count += 1
    return acc / count


def near_optimal_policy(params: EnvParams, **kwargs) -> GreedyBasisPolicy:
    beta = fit_pooled_q(params, **kwargs)
    return GreedyBasisPolicy(params.K, beta, features_pooled)
