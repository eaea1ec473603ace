"""State vectors and basis functions built from observed history.

Indexing is 1-based for bags (d) and within-bag steps (k), matching the
generative model. A "view" is everything observable just before the action
at (d, k): the previous bag's (E, R), this bag's contexts through step k,
and this bag's actions/mediators through step k-1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

S_PRIME = "S_prime"
S_DOUBLEPRIME = "S_doubleprime"
S_TRIPLEPRIME = "S_tripleprime"
STATE_KINDS = (S_PRIME, S_DOUBLEPRIME, S_TRIPLEPRIME)


class IncompleteHistoryError(RuntimeError):
    pass


@dataclass(frozen=True)
class StepView:
    """Observables available when choosing the action at step k."""

    k: int
    K: int
    e_prev: float
    r_prev: float
    c: tuple[float, ...]  # contexts 1..k
    a: tuple[int, ...]    # actions 1..k-1
    m: tuple[float, ...]  # mediators 1..k-1

    def __post_init__(self):
        if not 1 <= self.k <= self.K:
            raise ValueError(f"step {self.k} outside 1..{self.K}")
        if len(self.c) != self.k or len(self.a) != self.k - 1 or len(self.m) != self.k - 1:
            raise IncompleteHistoryError(
                f"view at step {self.k} needs {self.k} contexts and {self.k - 1} actions/mediators"
            )


@dataclass(frozen=True)
class BagRecord:
    c: tuple[float, ...]
    a: tuple[int, ...]
    m: tuple[float, ...]
    e_prev: float
    r_prev: float
    e: float
    r: float
    o: float


class ObservedHistory:
    """Append-only record of an episode plus the in-progress bag.

    Within a bag the call order is record_context / record_action /
    record_mediator repeated K times, then finish_bag.
    """

    def __init__(self, K: int, e0: float, r0: float):
        self.K = K
        self._e_prev = float(e0)
        self._r_prev = float(r0)
        self.bags: list[BagRecord] = []
        self._c: list[float] = []
        self._a: list[int] = []
        self._m: list[float] = []

    @property
    def d(self) -> int:
        """Index of the in-progress bag."""
        return len(self.bags) + 1

    @property
    def k(self) -> int:
        """Step whose action is pending (context may not be recorded yet)."""
        return len(self._a) + 1

    @property
    def e_prev(self) -> float:
        """Engagement entering the in-progress bag."""
        return self._e_prev

    @property
    def r_prev(self) -> float:
        """Reward entering the in-progress bag."""
        return self._r_prev

    def record_context(self, c: float) -> None:
        if len(self._c) != len(self._a) or len(self._c) >= self.K:
            raise IncompleteHistoryError("context recorded out of order")
        self._c.append(float(c))

    def record_action(self, a: int) -> None:
        if len(self._c) != len(self._a) + 1:
            raise IncompleteHistoryError("action recorded before its context")
        self._a.append(int(a))

    def record_mediator(self, m: float) -> None:
        if len(self._m) != len(self._a) - 1:
            raise IncompleteHistoryError("mediator recorded before its action")
        self._m.append(float(m))

    def finish_bag(self, e: float, r: float, o: float = float("nan")) -> None:
        if len(self._a) != self.K or len(self._m) != self.K:
            raise IncompleteHistoryError("bag finished before all steps were recorded")
        self.bags.append(BagRecord(
            c=tuple(self._c), a=tuple(self._a), m=tuple(self._m),
            e_prev=self._e_prev, r_prev=self._r_prev,
            e=float(e), r=float(r), o=float(o),
        ))
        self._e_prev, self._r_prev = float(e), float(r)
        self._c, self._a, self._m = [], [], []

    def current_view(self) -> StepView:
        if len(self._c) != len(self._a) + 1:
            raise IncompleteHistoryError("no pending context for the current step")
        k = len(self._c)
        return StepView(k=k, K=self.K, e_prev=self._e_prev, r_prev=self._r_prev,
                        c=tuple(self._c), a=tuple(self._a), m=tuple(self._m[:k - 1]))

    def view(self, d: int, k: int) -> StepView:
        """View at (d, k) for a completed bag d."""
        if not 1 <= d <= len(self.bags):
            raise IncompleteHistoryError(f"bag {d} is not complete")
        bag = self.bags[d - 1]
        return StepView(k=k, K=self.K, e_prev=bag.e_prev, r_prev=bag.r_prev,
                        c=bag.c[:k], a=bag.a[:k - 1], m=bag.m[:k - 1])


def build_state(view: StepView, kind: str) -> np.ndarray:
    """Raw state vector of the requested kind at the view's (d, k)."""
    e, r = view.e_prev, view.r_prev
    if kind == S_PRIME:
        parts = [e, r, *view.m, *view.a, view.c[-1]]
    elif kind == S_DOUBLEPRIME:
        parts = [e, r, *view.a]
    elif kind == S_TRIPLEPRIME:
        parts = [e, r, *view.c[:-1], *view.a, view.c[-1]]
    else:
        raise ValueError(f"unknown state kind {kind!r}")
    return np.array(parts, dtype=float)


def _padded(values, n) -> list[float]:
    out = [0.0] * n
    for i, v in enumerate(values):
        out[i] = float(v)
    return out


POOLED_DIM = 35


def features_pooled(view: StepView, action: int) -> np.ndarray:
    """Shared-coefficient basis: pooled main effects, per-step treatment blocks.

    Defined for the 5-step day only; 6 main terms, 4+4 padded mediator/action
    slots, the current context, then five indicator-gated 4-term blocks.
    """
    K = view.K
    if K != 5:
        raise ValueError("pooled basis is defined for K = 5")
    k, e, r, c = view.k, view.e_prev, view.r_prev, view.c[-1]
    a = float(action)
    phi = np.zeros(POOLED_DIM)
    phi[0:6] = [1.0, k, e, k * e, r, k * r]
    phi[6:10] = _padded(view.m, K - 1)
    phi[10:14] = _padded(view.a, K - 1)
    phi[14] = c
    base = 15
    block = 4
    j = k - 1
    phi[base + j * block: base + (j + 1) * block] = a * np.array([1.0, e, r, c])
    return phi


def _block_width(kind: str, j: int) -> int:
    if kind == S_DOUBLEPRIME:
        return 3 + (j - 1)
    return 4 + 2 * (j - 1)


def state_basis_dim(kind: str, K: int) -> int:
    if kind == S_DOUBLEPRIME:
        main = 6 + (K - 1)
    elif kind in (S_PRIME, S_TRIPLEPRIME):
        main = 6 + 2 * (K - 1) + 1
    else:
        raise ValueError(f"unknown state kind {kind!r}")
    return main + sum(_block_width(kind, j) for j in range(1, K + 1))


def features_state_kind(view: StepView, action: int, kind: str) -> np.ndarray:
    """Per-state-kind basis: pooled main effects plus per-step blocks whose
    width grows with the observed slice of that kind."""
    K = view.K
    k, e, r = view.k, view.e_prev, view.r_prev
    a = float(action)
    c = view.c[-1]
    main = [1.0, float(k), e, k * e, r, k * r]
    if kind == S_PRIME:
        main += _padded(view.m, K - 1) + _padded(view.a, K - 1) + [c]
        inter = [1.0, e, r, c, *view.m, *[float(x) for x in view.a]]
    elif kind == S_DOUBLEPRIME:
        main += _padded(view.a, K - 1)
        inter = [1.0, e, r, *[float(x) for x in view.a]]
    elif kind == S_TRIPLEPRIME:
        main += _padded(view.c[:-1], K - 1) + _padded(view.a, K - 1) + [c]
        inter = [1.0, e, r, c, *view.c[:-1], *[float(x) for x in view.a]]
    else:
        raise ValueError(f"unknown state kind {kind!r}")
    phi = np.zeros(state_basis_dim(kind, K))
    phi[: len(main)] = main
    offset = len(main) + sum(_block_width(kind, j) for j in range(1, k))
    width = _block_width(kind, k)
    assert width == len(inter)
    phi[offset: offset + width] = a * np.asarray(inter)
    return phi


def rlsvi_dim(k: int) -> int:
    return 2 * (k - 1) + 8


def features_rlsvi(view: StepView, action: int) -> np.ndarray:
    """Per-step basis with the full observed slice and four treatment terms."""
    e, r, c = view.e_prev, view.r_prev, view.c[-1]
    a = float(action)
    return np.array([1.0, e, r, *view.m, *[float(x) for x in view.a],
                     c, a, a * e, a * r, a * c])


TS_DIM = 8


def features_ts(view: StepView, action: int) -> np.ndarray:
    """Contextual-bandit basis on (E, R, C) with four treatment terms."""
    e, r, c = view.e_prev, view.r_prev, view.c[-1]
    a = float(action)
    return np.array([1.0, e, r, c, a, a * e, a * r, a * c])


def bag_action_index(actions) -> int:
    """Big-endian binary encoding: the step-1 action is the leading bit."""
    idx = 0
    for a in actions:
        idx = (idx << 1) | int(a)
    return idx


def srlsvi_dim(K: int) -> int:
    return 3 + 3 * 2**K


def features_srlsvi(e_prev: float, r_prev: float, action_index: int, K: int) -> np.ndarray:
    """Bag-level basis: shared main effect plus one (1, E, R) block per joint action."""
    n = 2**K
    if not 0 <= action_index < n:
        raise ValueError(f"action index {action_index} outside 0..{n - 1}")
    phi = np.zeros(srlsvi_dim(K))
    base = np.array([1.0, e_prev, r_prev])
    phi[0:3] = base
    start = 3 + 3 * action_index
    phi[start:start + 3] = base
    return phi
