"""Online learners built on one Bayesian linear-regression core.

All learners share the per-episode protocol: reset(e0, r0), then per bag
begin_bag / K times act(context) + observe_mediator / end_bag(e, r, o).
Planning happens in begin_bag once the warm-up is over; warm-up actions are
Bernoulli(0.5) draws from the agent's own stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.special import ndtr

from .states import (ObservedHistory, StepView, bag_action_index,
                     features_pooled, features_rlsvi, features_srlsvi,
                     features_state_kind, features_ts, srlsvi_dim,
                     state_basis_dim, STATE_KINDS)

AGENT_KINDS = ("brlsvi", "brlsvi_step", "srlsvi", "rlsvi", "ts", "rand", "zero")

# (sigma2, tau_const, tau_per_bag) defaults per learner.
_DEFAULT_HYPERS = {
    "brlsvi": (0.005, None, 5.0),
    "brlsvi_step": (0.005, None, 5.0),
    "srlsvi": (1.0, 10.0, None),
    "rlsvi": (0.005, None, 2.0),
    "ts": (0.2, 2.0, None),
}


class ProtocolError(RuntimeError):
    pass


class GaussianPosterior:
    """Normal posterior over regression weights.

    Holds the mean and either the covariance or the lower Cholesky factor of
    the precision; whichever is missing is derived on demand. Sampling goes
    through the precision factor (mean + L^{-T} z).
    """

    def __init__(self, mean, noise_var: float, ridge: float,
                 cov=None, prec_chol=None):
        self.mean = np.asarray(mean, dtype=float)
        self.noise_var = float(noise_var)
        self.ridge = float(ridge)
        if self.noise_var <= 0 or self.ridge <= 0:
            raise ValueError("noise_var and ridge must be positive")
        if cov is None and prec_chol is None:
            raise ValueError("supply cov or prec_chol")
        p = self.mean.shape[0]
        self._cov = None
        self._prec_chol = None
        if cov is not None:
            cov = np.asarray(cov, dtype=float)
            if cov.shape != (p, p):
                raise ValueError("covariance shape does not match the mean")
            if np.max(np.abs(cov - cov.T)) > 1e-10:
                raise ValueError("covariance must be symmetric")
            self._cov = cov
        if prec_chol is not None:
            self._prec_chol = np.asarray(prec_chol, dtype=float)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def cov(self) -> np.ndarray:
        if self._cov is None:
            eye = np.eye(self.dim)
            cov = cho_solve((self._prec_chol, True), eye)
            self._cov = 0.5 * (cov + cov.T)
        return self._cov

    @property
    def prec_chol(self) -> np.ndarray:
        if self._prec_chol is None:
            try:
                self._prec_chol = cholesky(np.linalg.inv(self.cov), lower=True)
            except np.linalg.LinAlgError as exc:
                raise ValueError("covariance must be positive definite") from exc
        return self._prec_chol

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal(self.dim)
        return self.mean + solve_triangular(self.prec_chol, z, trans="T", lower=True)


def posterior_update(X, Y, sigma2: float, lam: float) -> GaussianPosterior:
    """Ridge-regularized Bayesian regression posterior.

    cov = (X'X / sigma2 + lam I)^{-1}, mean = cov X'Y / sigma2. An empty
    design yields the prior (zero mean, covariance I/lam).
    """
    if sigma2 <= 0 or lam <= 0:
        raise ValueError("sigma2 and lam must be positive")
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a matrix")
    n, p = X.shape
    if Y.shape != (n,):
        raise ValueError("Y length must match the number of rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("non-finite values in the regression inputs")
    precision = X.T @ X / sigma2 + lam * np.eye(p)
    L = cholesky(precision, lower=True)
    mean = cho_solve((L, True), X.T @ Y / sigma2) if n else np.zeros(p)
    return GaussianPosterior(mean=mean, noise_var=sigma2, ridge=lam, prec_chol=L)


def ts_prob(posterior: GaussianPosterior, context) -> float:
    """Probability that the four treatment coefficients give the 8-dim basis
    a positive advantage at `context` = [1, E, R, C]."""
    x = np.asarray(context, dtype=float)
    if posterior.dim != 8 or x.shape != (4,):
        raise ValueError("expects an 8-dim posterior and a 4-entry context")
    m = float(x @ posterior.mean[4:8])
    s2 = float(x @ posterior.cov[4:8, 4:8] @ x)
    s = np.sqrt(max(s2, 0.0))
    if s == 0.0:
        return 1.0 if m > 0 else (0.0 if m < 0 else 0.5)
    return float(ndtr(m / s))


@dataclass(frozen=True)
class AgentConfig:
    kind: str
    name: str | None = None
    warmup_L: int = 7
    gamma_bar: float = 0.99
    sigma2: float | None = None
    tau_const: float | None = None
    tau_per_bag: float | None = None
    seed: int = 0
    state_kind: str | None = None
    synthetic_terminal_context: bool = False
    deterministic: bool = False
    trace: bool = False

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ValueError(f"unknown agent kind {self.kind!r}")
        if self.warmup_L < 1:
            raise ValueError("warmup_L must be at least 1")
        if not 0.0 <= self.gamma_bar < 1.0:
            raise ValueError("gamma_bar must lie in [0, 1)")
        if self.state_kind is not None and self.state_kind not in STATE_KINDS:
            raise ValueError(f"unknown state kind {self.state_kind!r}")

    @property
    def display_name(self) -> str:
        if self.name:
            return self.name
        if self.kind == "brlsvi" and self.state_kind:
            return f"brlsvi_{self.state_kind}"
        return self.kind

    def resolved_hypers(self) -> tuple[float, float | None, float | None]:
        base = _DEFAULT_HYPERS.get(self.kind, (1.0, 1.0, None))
        sigma2 = self.sigma2 if self.sigma2 is not None else base[0]
        tau_const, tau_per_bag = self.tau_const, self.tau_per_bag
        if tau_const is None and tau_per_bag is None:
            tau_const, tau_per_bag = base[1], base[2]
        return sigma2, tau_const, tau_per_bag

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown agent config keys: {sorted(unknown)}")
        return cls(**d)


class BaseAgent:
    """Shared protocol plumbing: history, warm-up, phase checks, tracing."""

    warmup_randomizes = True

    def __init__(self, config: AgentConfig, K: int):
        self.config = config
        self.K = K
        self.rng = np.random.default_rng(config.seed)
        sigma2, tau_const, tau_per_bag = config.resolved_hypers()
        self.sigma2 = sigma2
        self._tau_const = tau_const
        self._tau_per_bag = tau_per_bag
        self.gamma_bar = config.gamma_bar
        self.warmup_L = config.warmup_L
        self.trace: list[dict] | None = [] if config.trace else None
        self.history: ObservedHistory | None = None
        self._in_bag = False

    def reseed(self, seed) -> None:
        self.rng = np.random.default_rng(seed)

    def tau(self, d: int) -> float:
        return self._tau_const if self._tau_const is not None else self._tau_per_bag * d

    def lam(self, d: int) -> float:
        return self.tau(d) / self.sigma2

    @property
    def d(self) -> int:
        if self.history is None:
            raise ProtocolError("agent has not been reset")
        return self.history.d

    def reset(self, e0: float, r0: float) -> None:
        self.history = ObservedHistory(self.K, e0, r0)
        self._in_bag = False
        self._reset_state()

    def begin_bag(self) -> None:
        if self.history is None or self._in_bag:
            raise ProtocolError("begin_bag out of order")
        if self._plans and self.d > self.warmup_L:
            self.plan()
        self._in_bag = True
        self._on_bag_start()

    def act(self, c: float) -> int:
        if not self._in_bag:
            raise ProtocolError("act outside an open bag")
        self.history.record_context(c)
        view = self.history.current_view()
        self._on_view(view)
        if self.warmup_randomizes and self.d <= self.warmup_L:
            a = int(self.rng.random() < 0.5)
        else:
            a = self._choose(view)
        self.history.record_action(a)
        return a

    def observe_mediator(self, m: float) -> None:
        if not self._in_bag:
            raise ProtocolError("observe_mediator outside an open bag")
        self.history.record_mediator(m)

    def end_bag(self, e: float, r: float, o: float = float("nan")) -> None:
        if not self._in_bag:
            raise ProtocolError("end_bag outside an open bag")
        self.history.finish_bag(e, r, o)
        self._in_bag = False
        self._after_bag()

    def plan(self) -> None:
        if self.d <= self.warmup_L:
            raise ProtocolError("planning during warm-up")
        self._plan()

    _plans = True

    def _trace_posterior(self, d: int, k: int | None, post: GaussianPosterior) -> None:
        if self.trace is not None:
            self.trace.append({
                "bag": d, "step": k,
                "mean": post.mean.tolist(),
                "cov_diag": np.diag(post.cov).tolist(),
            })

    def _draw(self, post: GaussianPosterior) -> np.ndarray:
        return post.mean.copy() if self.config.deterministic else post.sample(self.rng)

    # hooks
    def _reset_state(self) -> None:
        pass

    def _on_bag_start(self) -> None:
        pass

    def _on_view(self, view: StepView) -> None:
        pass

    def _after_bag(self) -> None:
        pass

    def _plan(self) -> None:
        pass

    def _choose(self, view: StepView) -> int:
        raise NotImplementedError


def _greedy(q0: float, q1: float) -> int:
    return 1 if q1 > q0 else 0


class _RowBuffer:
    """Append-only matrix with amortized growth."""

    def __init__(self, width: int, capacity: int = 64):
        self._data = np.empty((capacity, width))
        self.n = 0

    def add(self, row: np.ndarray) -> None:
        if self.n == self._data.shape[0]:
            grown = np.empty((2 * self._data.shape[0], self._data.shape[1]))
            grown[:self.n] = self._data
            self._data = grown
        self._data[self.n] = row
        self.n += 1

    def view(self) -> np.ndarray:
        return self._data[:self.n]


class PooledValueAgent(BaseAgent):
    """One pooled regression per bag over all decision times; the step-K
    target links bags through the discounted next-bag value. The most recent
    bag's step-K row waits for the next bag's first context, unless the
    synthetic-context shortcut is enabled."""

    def __init__(self, config: AgentConfig, K: int):
        super().__init__(config, K)
        kind = config.state_kind
        if kind is None:
            self._feat = features_pooled
            self.dim = 35
        else:
            self._feat = lambda view, a, _k=kind: features_state_kind(view, a, _k)
            self.dim = state_basis_dim(kind, K)

    def _reset_state(self) -> None:
        self.beta_tilde = np.zeros(self.dim)
        # one aligned record per regression row: features, both next-step
        # feature vectors, reward, and the discount applied to the lookahead
        self._x = _RowBuffer(self.dim)
        self._next0 = _RowBuffer(self.dim)
        self._next1 = _RowBuffer(self.dim)
        self._rew: list[float] = []
        self._disc: list[float] = []
        self._pending: tuple[np.ndarray, float] | None = None

    def _add_row(self, x, view_next: StepView, reward: float, disc: float) -> None:
        self._x.add(x)
        self._next0.add(self._feat(view_next, 0))
        self._next1.add(self._feat(view_next, 1))
        self._rew.append(reward)
        self._disc.append(disc)

    def _on_view(self, view: StepView) -> None:
        if view.k == 1 and self._pending is not None:
            x, r = self._pending
            self._add_row(x, view, r, self.gamma_bar)
            self._pending = None

    def _after_bag(self) -> None:
        t = len(self.history.bags)
        bag = self.history.bags[-1]
        for k in range(1, self.K):
            self._add_row(self._feat(self.history.view(t, k), bag.a[k - 1]),
                          self.history.view(t, k + 1), 0.0, 1.0)
        self._pending = (self._feat(self.history.view(t, self.K), bag.a[-1]), bag.r)

    def _synthetic_row(self):
        """Temporary stand-in for the deferred row: the next bag's first
        context is drawn from past contexts. The real context replaces it in
        later plans."""
        x, r = self._pending
        contexts = [c for bag in self.history.bags for c in bag.c]
        c_tilde = contexts[self.rng.integers(len(contexts))]
        last = self.history.bags[-1]
        view = StepView(k=1, K=self.K, e_prev=last.e, r_prev=last.r,
                        c=(c_tilde,), a=(), m=())
        return x, self._feat(view, 0), self._feat(view, 1), r

    def _plan(self) -> None:
        d = self.d
        X = self._x.view()
        n0, n1 = self._next0.view(), self._next1.view()
        rew = np.asarray(self._rew)
        disc = np.asarray(self._disc)
        if self.config.synthetic_terminal_context and self._pending is not None:
            x, f0, f1, r = self._synthetic_row()
            X = np.vstack([X, x[None, :]])
            n0 = np.vstack([n0, f0[None, :]])
            n1 = np.vstack([n1, f1[None, :]])
            rew = np.append(rew, r)
            disc = np.append(disc, self.gamma_bar)
        next_best = np.maximum(n0 @ self.beta_tilde, n1 @ self.beta_tilde)
        Y = rew + disc * next_best
        post = posterior_update(X, Y, self.sigma2, self.lam(d))
        self._trace_posterior(d, None, post)
        self.beta_tilde = self._draw(post)

    def _choose(self, view: StepView) -> int:
        return _greedy(float(self._feat(view, 0) @ self.beta_tilde),
                       float(self._feat(view, 1) @ self.beta_tilde))


class StepValueAgent(BaseAgent):
    """Separate regression per decision time, refit backward each bag; the
    step-K target uses the previous bag's step-1 draw and the discounted
    next-bag value, the inner targets use the fresh draws from the ongoing
    backward pass. The most recent bag's step-K row is deferred like the
    pooled form."""

    def __init__(self, config: AgentConfig, K: int):
        super().__init__(config, K)
        self.dims = [2 * (k - 1) + 8 for k in range(1, K + 1)]

    def _reset_state(self) -> None:
        self.betas = [np.zeros(p) for p in self.dims]
        self._x = [_RowBuffer(self.dims[i]) for i in range(self.K)]
        next_dims = [self.dims[(i + 1) % self.K] for i in range(self.K)]
        self._n0 = [_RowBuffer(w) for w in next_dims]
        self._n1 = [_RowBuffer(w) for w in next_dims]
        self._r_terminal: list[float] = []
        self._pending: tuple[np.ndarray, float] | None = None

    def _add_row(self, i: int, x: np.ndarray, view_next: StepView) -> None:
        self._x[i].add(x)
        self._n0[i].add(features_rlsvi(view_next, 0))
        self._n1[i].add(features_rlsvi(view_next, 1))

    def _on_view(self, view: StepView) -> None:
        if view.k == 1 and self._pending is not None:
            x, r = self._pending
            self._add_row(self.K - 1, x, view)
            self._r_terminal.append(r)
            self._pending = None

    def _after_bag(self) -> None:
        t = len(self.history.bags)
        bag = self.history.bags[-1]
        for k in range(1, self.K):
            self._add_row(k - 1, features_rlsvi(self.history.view(t, k), bag.a[k - 1]),
                          self.history.view(t, k + 1))
        self._pending = (features_rlsvi(self.history.view(t, self.K), bag.a[-1]), bag.r)

    def _plan(self) -> None:
        d = self.d
        prev_beta1 = self.betas[0]
        new: list[np.ndarray | None] = [None] * self.K
        for k in range(self.K, 0, -1):
            i = k - 1
            X = self._x[i].view()
            best = np.maximum(self._n0[i].view() @ (prev_beta1 if k == self.K else new[k]),
                              self._n1[i].view() @ (prev_beta1 if k == self.K else new[k]))
            if k == self.K:
                Y = np.asarray(self._r_terminal) + self.gamma_bar * best
            else:
                Y = best
            post = posterior_update(X, Y, self.sigma2, self.lam(d))
            self._trace_posterior(d, k, post)
            new[i] = self._draw(post)
        self.betas = new

    def _choose(self, view: StepView) -> int:
        beta = self.betas[view.k - 1]
        return _greedy(float(features_rlsvi(view, 0) @ beta),
                       float(features_rlsvi(view, 1) @ beta))


class RlsviKAgent(BaseAgent):
    """Episodic learner treating each bag as its own horizon-K problem: the
    step-K target is the bag reward alone, and the inner targets use the
    previous bag's draws."""

    def __init__(self, config: AgentConfig, K: int):
        super().__init__(config, K)
        self.dims = [2 * (k - 1) + 8 for k in range(1, K + 1)]

    def _reset_state(self) -> None:
        self.betas = [np.zeros(p) for p in self.dims]
        self._x = [_RowBuffer(self.dims[i]) for i in range(self.K)]
        self._n0 = [_RowBuffer(self.dims[i + 1]) for i in range(self.K - 1)]
        self._n1 = [_RowBuffer(self.dims[i + 1]) for i in range(self.K - 1)]
        self._rewards: list[float] = []

    def _after_bag(self) -> None:
        t = len(self.history.bags)
        bag = self.history.bags[-1]
        for k in range(1, self.K + 1):
            self._x[k - 1].add(features_rlsvi(self.history.view(t, k), bag.a[k - 1]))
            if k < self.K:
                nview = self.history.view(t, k + 1)
                self._n0[k - 1].add(features_rlsvi(nview, 0))
                self._n1[k - 1].add(features_rlsvi(nview, 1))
        self._rewards.append(bag.r)

    def _plan(self) -> None:
        d = self.d
        prev = self.betas
        new: list[np.ndarray | None] = [None] * self.K
        for k in range(self.K, 0, -1):
            X = self._x[k - 1].view()
            if k == self.K:
                Y = np.asarray(self._rewards)
            else:
                Y = np.maximum(self._n0[k - 1].view() @ prev[k],
                               self._n1[k - 1].view() @ prev[k])
            post = posterior_update(X, Y, self.sigma2, self.lam(d))
            self._trace_posterior(d, k, post)
            new[k - 1] = self._draw(post)
        self.betas = new

    def _choose(self, view: StepView) -> int:
        beta = self.betas[view.k - 1]
        return _greedy(float(features_rlsvi(view, 0) @ beta),
                       float(features_rlsvi(view, 1) @ beta))


class SrlsviAgent(BaseAgent):
    """Bag-level learner over the 2^K joint actions; picks the whole bag's
    action vector at bag start and replays it step by step."""

    def __init__(self, config: AgentConfig, K: int):
        super().__init__(config, K)
        self.n_actions = 2**K
        self.dim = srlsvi_dim(K)

    def _reset_state(self) -> None:
        self.beta_tilde = np.zeros(self.dim)
        self._planned: list[int] = []

    def _bag_values(self, e: float, r: float, beta: np.ndarray) -> np.ndarray:
        s = np.array([1.0, e, r])
        return float(beta[:3] @ s) + beta[3:].reshape(self.n_actions, 3) @ s

    def _plan(self) -> None:
        d = self.d
        xs, ys = [], []
        for bag in self.history.bags:
            idx = bag_action_index(bag.a)
            xs.append(features_srlsvi(bag.e_prev, bag.r_prev, idx, self.K))
            next_best = float(self._bag_values(bag.e, bag.r, self.beta_tilde).max())
            ys.append(bag.r + self.gamma_bar * next_best)
        X = np.stack(xs) if xs else np.zeros((0, self.dim))
        Y = np.asarray(ys)
        post = posterior_update(X, Y, self.sigma2, self.lam(d))
        self._trace_posterior(d, None, post)
        self.beta_tilde = self._draw(post)

    def _on_bag_start(self) -> None:
        if self.d > self.warmup_L:
            idx = int(np.argmax(self._bag_values(self.history.e_prev,
                                                 self.history.r_prev,
                                                 self.beta_tilde)))
            self._planned = [(idx >> (self.K - 1 - k)) & 1 for k in range(self.K)]

    def _choose(self, view: StepView) -> int:
        return self._planned[view.k - 1]


class TsAgent(BaseAgent):
    """Stationary-bandit learner on the mediator outcome; refits daily and
    randomizes with the posterior probability of a positive advantage."""

    def _reset_state(self) -> None:
        self.posterior: GaussianPosterior | None = None
        self._x = _RowBuffer(8)
        self._y: list[float] = []

    def _after_bag(self) -> None:
        t = len(self.history.bags)
        bag = self.history.bags[-1]
        for k in range(1, self.K + 1):
            self._x.add(features_ts(self.history.view(t, k), bag.a[k - 1]))
            self._y.append(bag.m[k - 1])

    def _plan(self) -> None:
        post = posterior_update(self._x.view(), np.asarray(self._y),
                                self.sigma2, self.lam(self.d))
        self._trace_posterior(self.d, None, post)
        self.posterior = post

    def _choose(self, view: StepView) -> int:
        p = ts_prob(self.posterior, [1.0, view.e_prev, view.r_prev, view.c[-1]])
        return int(self.rng.random() < p)


class RandAgent(BaseAgent):
    warmup_randomizes = False
    _plans = False

    def _choose(self, view: StepView) -> int:
        return int(self.rng.random() < 0.5)


class ZeroAgent(BaseAgent):
    warmup_randomizes = False
    _plans = False

    def _choose(self, view: StepView) -> int:
        return 0


_AGENT_CLASSES = {
    "brlsvi": PooledValueAgent,
    "brlsvi_step": StepValueAgent,
    "srlsvi": SrlsviAgent,
    "rlsvi": RlsviKAgent,
    "ts": TsAgent,
    "rand": RandAgent,
    "zero": ZeroAgent,
}


def make_agent(config: AgentConfig, K: int) -> BaseAgent:
    return _AGENT_CLASSES[config.kind](config, K)
