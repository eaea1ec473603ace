"""Linear-Gaussian simulation testbed over daily bags of decision times.

Per bag d with K decision times, given the previous bag's engagement E and
reward R:

    C_k = c0 (+ c1*E + c2*R with context feedback) + eps_C
    M_k = m0 + m1*E + m2*R + m3*C_k
          + A_k * (m4 + m5*E + m6*R + m7*C_k + sum_{j<k} m_{7+j} M_j) + eps_M
    E_d = e0 + e1*E + sum_k e_{k+1} A_k + sum_k e_{K+1+k} A_k E (+ e_{2K+2} R) + eps_E
    R_d = r0 + sum_k r_k M_k + r_{K+1} E_d + r_{K+2} R (+ sum_k r_{K+2+k} A_k) + eps_R
    O_d = o0 + o1*R + eps_O

The parenthesised terms are optional coefficient extensions. The treatment
advantage inside M can be floored at zero. Every generated value is clipped
to its configured truncation bounds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr, ndtri

from .states import ObservedHistory, StepView

VARIABLES = ("C", "M", "E", "R", "O")

DEFAULT_TRUNCATION = {
    "C": (-2.575, 1.714),
    "M": (-2.259, 1.684),
    "E": (-1.439, 3.349),
    "R": (-2.285, 4.042),
    "O": (-0.851, 7.230),
}

DEFAULT_STANDARDIZATION = {
    "C": (4.686, 2.089),
    "M": (4.456, 2.279),
    "E": (2.178, 1.514),
    "O": (1.685, 1.980),
}

VARIANT_KINDS = ("vanilla", "enhance_MR", "enhance_AER", "enhance_both",
                 "add_RE", "add_AR", "add_RC", "interaction_MA")

MAX_XI_HALVINGS = 20
ENHANCE_BOTH_MR_SHIFT = 0.03


class ConfigurationError(ValueError):
    pass


class SingularityError(ValueError):
    pass


class DegenerateDenominatorError(RuntimeError):
    pass


def _pairs(d: dict, keys, name: str) -> dict[str, tuple[float, float]]:
    out = {}
    for key in keys:
        if key not in d:
            raise ConfigurationError(f"{name} missing entry for {key}")
        lo, hi = d[key]
        out[key] = (float(lo), float(hi))
    return out


@dataclass(frozen=True)
class EnvParams:
    """All structural-equation coefficients, noise scales and clipping rules."""

    K: int
    theta_C: np.ndarray
    theta_M: np.ndarray | tuple[np.ndarray, ...]
    theta_E: np.ndarray
    theta_R: np.ndarray
    theta_O: np.ndarray
    noise_vars: dict[str, float]
    truncation: dict[str, tuple[float, float]]
    standardization: dict[str, tuple[float, float]]
    clip_advantage_M: bool = True
    nonneg_constraints: bool = True

    def __post_init__(self):
        K = self.K
        object.__setattr__(self, "theta_C", np.asarray(self.theta_C, dtype=float))
        if isinstance(self.theta_M, (tuple, list)) and len(self.theta_M) and \
                np.ndim(self.theta_M[0]) == 1:
            object.__setattr__(self, "theta_M",
                               tuple(np.asarray(v, dtype=float) for v in self.theta_M))
        else:
            object.__setattr__(self, "theta_M", np.asarray(self.theta_M, dtype=float))
        object.__setattr__(self, "theta_E", np.asarray(self.theta_E, dtype=float))
        object.__setattr__(self, "theta_R", np.asarray(self.theta_R, dtype=float))
        object.__setattr__(self, "theta_O", np.asarray(self.theta_O, dtype=float))

        if K < 1:
            raise ConfigurationError("K must be positive")
        if self.theta_C.shape not in ((1,), (3,)):
            raise ConfigurationError("theta_C must have 1 entry, or 3 with context feedback")
        if self.per_step_M:
            if len(self.theta_M) != K:
                raise ConfigurationError("per-step theta_M needs one vector per decision time")
            for k, v in enumerate(self.theta_M, start=1):
                if v.shape != (7 + k,):
                    raise ConfigurationError(f"theta_M for step {k} must have length {7 + k}")
        elif self.theta_M.shape != (8,):
            raise ConfigurationError("shared theta_M must have 8 entries")
        if self.theta_E.shape not in ((2 * K + 2,), (2 * K + 3,)):
            raise ConfigurationError("theta_E must have 2K+2 entries (2K+3 with the reward term)")
        if self.theta_R.shape not in ((K + 3,), (2 * K + 3,)):
            raise ConfigurationError("theta_R must have K+3 entries (2K+3 with direct action terms)")
        if self.theta_O.shape != (2,):
            raise ConfigurationError("theta_O must have 2 entries")

        object.__setattr__(self, "noise_vars",
                           {v: float(self.noise_vars[v]) for v in VARIABLES})
        if any(self.noise_vars[v] < 0 for v in VARIABLES):
            raise ConfigurationError("noise variances must be nonnegative")
        object.__setattr__(self, "truncation", _pairs(self.truncation, VARIABLES, "truncation"))
        for v, (lo, hi) in self.truncation.items():
            if not lo < hi:
                raise ConfigurationError(f"truncation for {v} needs lower < upper")
        object.__setattr__(self, "standardization",
                           _pairs(self.standardization, ("C", "M", "E", "O"), "standardization"))

        if self.nonneg_constraints:
            for k in range(1, K + 1):
                m = self.m_coeffs(k)
                if m[1] < 0 or m[2] < 0:
                    raise ConfigurationError("carry-over mediator coefficients must be nonnegative")
            if np.any(self.theta_R[1:K + 1] < 0):
                raise ConfigurationError("mediator-to-reward coefficients must be nonnegative")

    @property
    def per_step_M(self) -> bool:
        return isinstance(self.theta_M, tuple)

    @property
    def has_context_feedback(self) -> bool:
        return self.theta_C.shape == (3,)

    @property
    def has_reward_to_engagement(self) -> bool:
        return self.theta_E.shape == (2 * self.K + 3,)

    @property
    def has_direct_action_reward(self) -> bool:
        return self.theta_R.shape == (2 * self.K + 3,)

    def m_coeffs(self, k: int) -> np.ndarray:
        return self.theta_M[k - 1] if self.per_step_M else self.theta_M

    def to_json(self) -> str:
        payload = {
            "K": self.K,
            "theta_C": self.theta_C.tolist(),
            "theta_M": [v.tolist() for v in self.theta_M] if self.per_step_M
            else self.theta_M.tolist(),
            "theta_E": self.theta_E.tolist(),
            "theta_R": self.theta_R.tolist(),
            "theta_O": self.theta_O.tolist(),
            "noise_vars": self.noise_vars,
            "truncation": {v: list(b) for v, b in self.truncation.items()},
            "standardization": {v: list(b) for v, b in self.standardization.items()},
            "clip_advantage_M": self.clip_advantage_M,
            "nonneg_constraints": self.nonneg_constraints,
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EnvParams":
        payload = json.loads(text)
        known = {"K", "theta_C", "theta_M", "theta_E", "theta_R", "theta_O",
                 "noise_vars", "truncation", "standardization",
                 "clip_advantage_M", "nonneg_constraints"}
        unknown = set(payload) - known
        if unknown:
            raise ConfigurationError(f"unknown keys in environment file: {sorted(unknown)}")
        missing = known - set(payload)
        if missing:
            raise ConfigurationError(f"missing keys in environment file: {sorted(missing)}")
        return cls(**payload)


def load_env(path) -> EnvParams:
    with open(path) as fh:
        return EnvParams.from_json(fh.read())


@dataclass(frozen=True)
class BagNoise:
    """One bag's exogenous shocks: K context, K mediator, and E/R/O terms."""

    c: np.ndarray
    m: np.ndarray
    e: float
    r: float
    o: float

    @classmethod
    def zeros(cls, K: int) -> "BagNoise":
        return cls(c=np.zeros(K), m=np.zeros(K), e=0.0, r=0.0, o=0.0)

    @classmethod
    def draw(cls, params: EnvParams, rng: np.random.Generator) -> "BagNoise":
        K = params.K
        sd = {v: np.sqrt(params.noise_vars[v]) for v in VARIABLES}
        z = rng.standard_normal(2 * K + 3)
        return cls(c=sd["C"] * z[:K], m=sd["M"] * z[K:2 * K],
                   e=sd["E"] * z[2 * K], r=sd["R"] * z[2 * K + 1],
                   o=sd["O"] * z[2 * K + 2])


@dataclass(frozen=True)
class BagStep:
    C: np.ndarray
    M: np.ndarray
    E: float
    R: float
    O: float


@dataclass(frozen=True)
class BagTrajectory:
    """One episode: initial (E, R) plus per-bag records."""

    e0: float
    r0: float
    C: np.ndarray  # (D, K)
    A: np.ndarray  # (D, K)
    M: np.ndarray  # (D, K)
    E: np.ndarray  # (D,)
    R: np.ndarray  # (D,)
    O: np.ndarray  # (D,)

    @property
    def horizon(self) -> int:
        return self.R.shape[0]

    def total_reward(self) -> float:
        return float(self.R.sum())


def _truncate(params: EnvParams, var: str, x: float) -> float:
    lo, hi = params.truncation[var]
    return min(max(x, lo), hi)


def _context_value(params: EnvParams, e_prev: float, r_prev: float, eps: float) -> float:
    th = params.theta_C
    x = th[0] + eps
    if params.has_context_feedback:
        x += th[1] * e_prev + th[2] * r_prev
    return _truncate(params, "C", x)


def _mediator_value(params: EnvParams, k: int, e_prev: float, r_prev: float,
                    c_k: float, a_k: int, m_prev, eps: float) -> float:
    th = params.m_coeffs(k)
    base = th[0] + th[1] * e_prev + th[2] * r_prev + th[3] * c_k
    adv = th[4] + th[5] * e_prev + th[6] * r_prev + th[7] * c_k
    n_inter = len(th) - 8
    for j in range(1, n_inter + 1):
        adv += th[7 + j] * m_prev[j - 1]
    if params.clip_advantage_M:
        adv = max(0.0, adv)
    return _truncate(params, "M", base + a_k * adv + eps)


def _engagement_value(params: EnvParams, e_prev: float, r_prev: float,
                      actions, eps: float) -> float:
    th, K = params.theta_E, params.K
    x = th[0] + th[1] * e_prev + eps
    for k, a in enumerate(actions, start=1):
        x += th[k + 1] * a + th[K + 1 + k] * a * e_prev
    if params.has_reward_to_engagement:
        x += th[2 * K + 2] * r_prev
    return _truncate(params, "E", x)


def _reward_value(params: EnvParams, e_d: float, r_prev: float,
                  mediators, actions, eps: float) -> float:
    th, K = params.theta_R, params.K
    x = th[0] + th[K + 1] * e_d + th[K + 2] * r_prev + eps
    for k, m in enumerate(mediators, start=1):
        x += th[k] * m
    if params.has_direct_action_reward:
        for k, a in enumerate(actions, start=1):
            x += th[K + 2 + k] * a
    return _truncate(params, "R", x)


def _emission_value(params: EnvParams, r_prev: float, eps: float) -> float:
    th = params.theta_O
    return _truncate(params, "O", th[0] + th[1] * r_prev + eps)


def step_bag(params: EnvParams, prev_E: float, prev_R: float, actions,
             noise: BagNoise | None = None,
             rng: np.random.Generator | None = None) -> BagStep:
    """Generate one bag under a fixed action vector."""
    K = params.K
    actions = [int(a) for a in actions]
    if len(actions) != K:
        raise ValueError(f"need {K} actions, got {len(actions)}")
    if noise is None:
        if rng is None:
            raise ValueError("supply either explicit noise or an rng")
        noise = BagNoise.draw(params, rng)
    C = np.empty(K)
    M = np.empty(K)
    for k in range(1, K + 1):
        C[k - 1] = _context_value(params, prev_E, prev_R, noise.c[k - 1])
        M[k - 1] = _mediator_value(params, k, prev_E, prev_R, C[k - 1],
                                   actions[k - 1], M[:k - 1], noise.m[k - 1])
    E = _engagement_value(params, prev_E, prev_R, actions, noise.e)
    R = _reward_value(params, E, prev_R, M, actions, noise.r)
    O = _emission_value(params, prev_R, noise.o)
    return BagStep(C=C, M=M, E=E, R=R, O=O)


def _truncated_standard_normal(rng: np.random.Generator, lo: float, hi: float) -> float:
    p_lo, p_hi = ndtr(lo), ndtr(hi)
    return float(ndtri(p_lo + rng.random() * (p_hi - p_lo)))


class CausalEnv:
    """Incremental generator revealing contexts before and mediators after
    each action; consumes exactly 2K+3 normal draws per bag regardless of the
    actions, so paired runs on a shared stream see identical shocks."""

    def __init__(self, params: EnvParams, rng: np.random.Generator):
        self.params = params
        self.rng = rng
        self.e_prev: float | None = None
        self.r_prev: float | None = None
        self._noise: BagNoise | None = None
        self._step = 0
        self._c: list[float] = []
        self._a: list[int] = []
        self._m: list[float] = []

    def reset(self, init: tuple[float, float] | None = None) -> tuple[float, float]:
        if init is None:
            e0 = _truncated_standard_normal(self.rng, *self.params.truncation["E"])
            r0 = _truncated_standard_normal(self.rng, *self.params.truncation["R"])
        else:
            e0, r0 = float(init[0]), float(init[1])
        self.e_prev, self.r_prev = e0, r0
        self._noise, self._step = None, 0
        self._c, self._a, self._m = [], [], []
        return e0, r0

    def observe_context(self) -> float:
        if self.e_prev is None:
            raise RuntimeError("reset() must be called first")
        if self._noise is None:
            self._noise = BagNoise.draw(self.params, self.rng)
        if len(self._c) != self._step:
            raise RuntimeError("context already observed for this step")
        c = _context_value(self.params, self.e_prev, self.r_prev, self._noise.c[self._step])
        self._c.append(c)
        return c

    def apply_action(self, a: int) -> float:
        if len(self._c) != self._step + 1:
            raise RuntimeError("observe_context() must precede apply_action()")
        k = self._step + 1
        m = _mediator_value(self.params, k, self.e_prev, self.r_prev,
                            self._c[-1], int(a), self._m, self._noise.m[self._step])
        self._a.append(int(a))
        self._m.append(m)
        self._step += 1
        return m

    def finish_bag(self) -> tuple[float, float, float]:
        if self._step != self.params.K:
            raise RuntimeError("bag has unplayed decision times")
        e = _engagement_value(self.params, self.e_prev, self.r_prev, self._a, self._noise.e)
        r = _reward_value(self.params, e, self.r_prev, self._m, self._a, self._noise.r)
        o = _emission_value(self.params, self.r_prev, self._noise.o)
        self.e_prev, self.r_prev = e, r
        self._noise, self._step = None, 0
        self._c, self._a, self._m = [], [], []
        return e, r, o


def rollout(params: EnvParams, agent, horizon: int, rng: np.random.Generator,
            init: tuple[float, float] | None = None) -> BagTrajectory:
    """Play `agent` (anything with the reset/begin_bag/act/observe_mediator/
    end_bag protocol) for `horizon` bags and record the episode."""
    env = CausalEnv(params, rng)
    e0, r0 = env.reset(init)
    agent.reset(e0, r0)
    K = params.K
    C = np.empty((horizon, K))
    A = np.empty((horizon, K), dtype=int)
    M = np.empty((horizon, K))
    E = np.empty(horizon)
    R = np.empty(horizon)
    O = np.empty(horizon)
    for d in range(horizon):
        agent.begin_bag()
        for k in range(K):
            c = env.observe_context()
            a = agent.act(c)
            m = env.apply_action(a)
            agent.observe_mediator(m)
            C[d, k], A[d, k], M[d, k] = c, a, m
        e, r, o = env.finish_bag()
        agent.end_bag(e, r, o)
        E[d], R[d], O[d] = e, r, o
    return BagTrajectory(e0=e0, r0=r0, C=C, A=A, M=M, E=E, R=R, O=O)


class StatelessPolicy:
    """Non-learning policy with the agent protocol; tracks just enough
    history to build the current step view."""

    def __init__(self):
        self._history: ObservedHistory | None = None

    def reset(self, e0: float, r0: float) -> None:
        self._history = None
        self._e0, self._r0 = e0, r0

    def begin_bag(self) -> None:
        pass

    def act(self, c: float) -> int:
        raise NotImplementedError

    def observe_mediator(self, m: float) -> None:
        if self._history is not None:
            self._history.record_mediator(m)

    def end_bag(self, e: float, r: float, o: float) -> None:
        if self._history is not None:
            self._history.finish_bag(e, r, o)

    def _view(self, K: int, c: float) -> StepView:
        if self._history is None:
            self._history = ObservedHistory(K, self._e0, self._r0)
        self._history.record_context(c)
        return self._history.current_view()

    def _record(self, a: int) -> None:
        if self._history is not None:
            self._history.record_action(a)


class ZeroPolicy(StatelessPolicy):
    def act(self, c: float) -> int:
        return 0

    def observe_mediator(self, m: float) -> None:
        pass

    def end_bag(self, e: float, r: float, o: float) -> None:
        pass


class BernoulliPolicy(StatelessPolicy):
    def __init__(self, p: float, rng: np.random.Generator):
        super().__init__()
        self.p = p
        self.rng = rng

    def act(self, c: float) -> int:
        return int(self.rng.random() < self.p)

    def observe_mediator(self, m: float) -> None:
        pass

    def end_bag(self, e: float, r: float, o: float) -> None:
        pass


class GreedyBasisPolicy(StatelessPolicy):
    """Greedy in a fixed weight vector over a (view, action) feature map."""

    def __init__(self, K: int, beta: np.ndarray, feature_fn):
        super().__init__()
        self.K = K
        self.beta = np.asarray(beta, dtype=float)
        self.feature_fn = feature_fn

    def act(self, c: float) -> int:
        view = self._view(self.K, c)
        q0 = float(self.feature_fn(view, 0) @ self.beta)
        q1 = float(self.feature_fn(view, 1) @ self.beta)
        a = 1 if q1 > q0 else 0
        self._record(a)
        return a


def estimate_ste(params: EnvParams, policy_star, n_episodes: int,
                 horizon_D: int, rng_seed: int) -> float:
    """Standardized treatment effect of policy_star against the never-treat
    policy, from independent seeded Monte Carlo episodes."""
    if n_episodes < 2:
        raise ValueError("need at least 2 episodes")
    totals = {}
    for arm, policy in (("star", policy_star), ("zero", ZeroPolicy())):
        arm_code = 0 if arm == "star" else 1
        vals = np.empty(n_episodes)
        for i in range(n_episodes):
            rng = np.random.default_rng(np.random.SeedSequence((rng_seed, arm_code, i)))
            vals[i] = rollout(params, policy, horizon_D, rng).total_reward()
        totals[arm] = vals
    sd_zero = float(np.std(totals["zero"], ddof=1))
    if sd_zero == 0.0:
        raise DegenerateDenominatorError("never-treat returns have zero variance")
    return float((totals["star"].mean() - totals["zero"].mean()) / sd_zero)


@dataclass(frozen=True)
class VariantSpec:
    """Recipe for deriving a testbed variant from vanilla parameters."""

    kind: str
    xi: float = 0.0
    scale_divisor: float = 1.0
    coeffs: dict | None = None

    def __post_init__(self):
        if self.kind not in VARIANT_KINDS:
            raise ConfigurationError(f"unknown variant kind {self.kind!r}")

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "xi": self.xi, "scale_divisor": self.scale_divisor}
        if self.coeffs is not None:
            out["coeffs"] = self.coeffs
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "VariantSpec":
        known = {"kind", "xi", "scale_divisor", "coeffs"}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown variant keys: {sorted(unknown)}")
        return cls(kind=d["kind"], xi=float(d.get("xi", 0.0)),
                   scale_divisor=float(d.get("scale_divisor", 1.0)),
                   coeffs=d.get("coeffs"))


@dataclass(frozen=True)
class StationarityResult:
    eigenvalues: tuple[float, float]
    stationary: bool


def _mediator_chain(params: EnvParams, actions, mean_C: float):
    """Per-step (constant, dE, dR) sensitivities of the mediators, following
    the unclipped linear recursion (within-bag mediator chain included)."""
    c1 = params.theta_C[1] if params.has_context_feedback else 0.0
    c2 = params.theta_C[2] if params.has_context_feedback else 0.0
    consts, d_es, d_rs = [], [], []
    for k in range(1, params.K + 1):
        th = params.m_coeffs(k)
        a = actions[k - 1]
        const = th[0] + th[4] * a + (th[3] + th[7] * a) * mean_C
        d_e = th[1] + th[5] * a + (th[3] + th[7] * a) * c1
        d_r = th[2] + th[6] * a + (th[3] + th[7] * a) * c2
        n_inter = len(th) - 8
        for j in range(1, n_inter + 1):
            w = a * th[7 + j]
            const += w * consts[j - 1]
            d_e += w * d_es[j - 1]
            d_r += w * d_rs[j - 1]
        consts.append(const)
        d_es.append(d_e)
        d_rs.append(d_r)
    return consts, d_es, d_rs


def _var_recursion(params: EnvParams, actions, mean_C: float):
    """Exact (R, E) one-bag linear recursion: intercept phi and Jacobian Phi."""
    th_e, th_r, K = params.theta_E, params.theta_R, params.K
    consts, d_es, d_rs = _mediator_chain(params, actions, mean_C)
    phi_e_22 = th_e[1] + sum(th_e[K + 1 + k] * actions[k - 1] for k in range(1, K + 1))
    phi_e_21 = th_e[2 * K + 2] if params.has_reward_to_engagement else 0.0
    const_e = th_e[0] + sum(th_e[k + 1] * actions[k - 1] for k in range(1, K + 1))
    phi_r_11 = th_r[K + 2] + sum(th_r[k] * d_rs[k - 1] for k in range(1, K + 1)) \
        + th_r[K + 1] * phi_e_21
    phi_r_12 = sum(th_r[k] * d_es[k - 1] for k in range(1, K + 1)) + th_r[K + 1] * phi_e_22
    const_r = th_r[0] + sum(th_r[k] * consts[k - 1] for k in range(1, K + 1)) \
        + th_r[K + 1] * const_e
    if params.has_direct_action_reward:
        const_r += sum(th_r[K + 2 + k] * actions[k - 1] for k in range(1, K + 1))
    Phi = np.array([[phi_r_11, phi_r_12], [phi_e_21, phi_e_22]])
    phi = np.array([const_r, const_e])
    return Phi, phi


def _action_pattern(params: EnvParams, pattern) -> list[int]:
    if isinstance(pattern, str):
        if pattern == "zeros":
            return [0] * params.K
        if pattern == "ones":
            return [1] * params.K
        raise ValueError("action pattern must be 'zeros', 'ones', or a 0/1 vector")
    actions = [int(a) for a in pattern]
    if len(actions) != params.K:
        raise ValueError(f"action pattern needs {params.K} entries")
    return actions


def check_stationarity(params: EnvParams, action_pattern) -> StationarityResult:
    """Moduli of the (R, E) recursion eigenvalues under a fixed action pattern.

    With no reward-to-engagement arrow the recursion matrix is upper
    triangular, so the eigenvalues are its diagonal entries.
    """
    actions = _action_pattern(params, action_pattern)
    Phi, _ = _var_recursion(params, actions, mean_C=0.0)
    if Phi[1, 0] == 0.0:
        eigs = (abs(float(Phi[0, 0])), abs(float(Phi[1, 1])))
    else:
        vals = np.linalg.eigvals(Phi)
        eigs = (float(abs(vals[0])), float(abs(vals[1])))
    return StationarityResult(eigenvalues=eigs, stationary=bool(max(eigs) < 1.0))


def limiting_mean(params: EnvParams, action_pattern, mean_C: float) -> tuple[float, float]:
    """Fixed point (alpha_R, alpha_E) of the unclipped recursion with every
    context replaced by mean_C."""
    actions = _action_pattern(params, action_pattern)
    Phi, phi = _var_recursion(params, actions, mean_C)
    system = np.eye(2) - Phi
    if abs(np.linalg.det(system)) < 1e-14:
        raise SingularityError("recursion has no unique fixed point")
    alpha = np.linalg.solve(system, phi)
    return float(alpha[0]), float(alpha[1])


def _is_stationary_both(params: EnvParams) -> bool:
    return (check_stationarity(params, "zeros").stationary
            and check_stationarity(params, "ones").stationary)


def _need(spec: VariantSpec, key: str):
    if spec.coeffs is None or key not in spec.coeffs:
        raise ConfigurationError(f"variant {spec.kind} requires coeffs[{key!r}]")
    return spec.coeffs[key]


def _apply_shift(params: EnvParams, kind: str, xi: float) -> EnvParams:
    K = params.K
    theta_R = params.theta_R.copy()
    theta_E = params.theta_E.copy()
    if kind in ("enhance_MR", "enhance_both"):
        mr = xi if kind == "enhance_MR" else ENHANCE_BOTH_MR_SHIFT
        theta_R[1:K + 1] += mr
    if kind in ("enhance_AER", "enhance_both"):
        theta_E[2:K + 2] -= xi
        theta_R[K + 1] += 5.0 * xi
    return replace(params, theta_R=theta_R, theta_E=theta_E)


def make_variant(params: EnvParams, spec: VariantSpec) -> EnvParams:
    """Derive a variant; shift variants halve xi until stationary under both
    all-zero and all-one action patterns."""
    kind = spec.kind
    if kind == "vanilla":
        return params
    if kind in ("enhance_MR", "enhance_AER", "enhance_both"):
        xi = spec.xi
        for _ in range(MAX_XI_HALVINGS + 1):
            candidate = _apply_shift(params, kind, xi)
            if _is_stationary_both(candidate):
                return candidate
            xi /= 2.0
        raise ConfigurationError(f"{kind}: no stationary shift found after "
                                 f"{MAX_XI_HALVINGS} halvings")
    K = params.K
    if kind == "add_RE":
        extra = float(_need(spec, "theta_E_extra"))
        candidate = replace(params, theta_E=np.append(params.theta_E, extra))
    elif kind == "add_AR":
        extra = np.asarray(_need(spec, "theta_R_extra"), dtype=float)
        if extra.shape != (K,):
            raise ConfigurationError(f"theta_R_extra must have {K} entries")
        if spec.scale_divisor == 0:
            raise ConfigurationError("scale_divisor must be nonzero")
        candidate = replace(params,
                            theta_R=np.append(params.theta_R, extra / spec.scale_divisor))
    elif kind == "add_RC":
        extra = np.asarray(_need(spec, "theta_C_extra"), dtype=float)
        if extra.shape != (2,):
            raise ConfigurationError("theta_C_extra must have 2 entries")
        candidate = replace(params, theta_C=np.append(params.theta_C, extra))
    elif kind == "interaction_MA":
        per_step = _need(spec, "theta_M")
        candidate = replace(params,
                            theta_M=tuple(np.asarray(v, dtype=float) for v in per_step),
                            clip_advantage_M=False)
    else:  # pragma: no cover
        raise ConfigurationError(f"unhandled variant {kind}")
    if not _is_stationary_both(candidate):
        raise ConfigurationError(f"{kind}: supplied coefficients are explosive")
    return candidate


def default_interaction_coeffs(params: EnvParams, strength: float) -> list[list[float]]:
    """Per-step mediator coefficients for the interaction variant: the base
    vector plus cross-mediator treatment terms decaying geometrically with
    recency, clipped to [-1, 1]."""
    if params.per_step_M:
        raise ConfigurationError("base parameters already use per-step mediator vectors")
    base = params.theta_M
    out = []
    for k in range(1, params.K + 1):
        inter = [float(np.clip(strength * 0.5 ** (k - 1 - j), -1.0, 1.0))
                 for j in range(1, k)]
        out.append(list(base) + inter)
    return out
