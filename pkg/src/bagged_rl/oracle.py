"""Brute-force verifiers at desk scale.

Small finite-alphabet structural models over one bag are compiled into
tabular periodic decision processes for a chosen state construction, with
the Markov property checked rather than assumed; exhaustive policy
enumeration provides an independent check on the sweep-based solver; and
coarse/fine state pairs are compared value-by-value.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .mdp import PeriodicPolicy, QFunctions, TabularPeriodicMdp, value_iteration

KIND_S = "S"
KIND_S_PRIME = "S_prime"
KIND_S_DOUBLEPRIME = "S_doubleprime"
ORACLE_STATE_KINDS = (KIND_S, KIND_S_PRIME, KIND_S_DOUBLEPRIME)

MAX_ENUMERATION = 10**6
MARKOV_ATOL = 1e-9
TIE_TOL = 1e-9


class NonMarkovError(RuntimeError):
    """The chosen state kind does not screen off the marginalized history."""

    def __init__(self, message: str, witness: tuple):
        super().__init__(message)
        self.witness = witness


class SizeError(ValueError):
    pass


def _dist_axis(arr: np.ndarray, name: str) -> None:
    if np.any(arr < 0) or np.max(np.abs(arr.sum(axis=-1) - 1.0)) > 1e-10:
        raise ValueError(f"{name} rows must be probability vectors")


@dataclass(frozen=True)
class DiscreteDagEnv:
    """One-bag structural model with finite alphabets.

    Conditional tables (last axis is the child's distribution):
      cpt_C[k]: (n_c,), or (n_e, n_r, n_c) with context feedback
      cpt_M[k]: (n_e, n_r, n_c, n_a, n_m)
      cpt_N[k]: (n_e, n_a, n_n)
      cpt_E:    (n_e, [n_r,] n_n * K, n_e)
      cpt_R:    (n_r, n_m * K, [n_a * K,] n_e, n_r)
      init:     (n_e, n_r)
    Optional arrows are enabled by the add_RE / add_AR / add_RC flags.
    """

    K: int
    sizes: dict[str, int]  # alphabet sizes for C, A, M, N, E, R
    cpt_C: tuple[np.ndarray, ...]
    cpt_M: tuple[np.ndarray, ...]
    cpt_N: tuple[np.ndarray, ...]
    cpt_E: np.ndarray
    cpt_R: np.ndarray
    init: np.ndarray
    values_R: np.ndarray
    add_RE: bool = False
    add_AR: bool = False
    add_RC: bool = False

    def __post_init__(self):
        object.__setattr__(self, "cpt_C", tuple(np.asarray(t, dtype=float) for t in self.cpt_C))
        object.__setattr__(self, "cpt_M", tuple(np.asarray(t, dtype=float) for t in self.cpt_M))
        object.__setattr__(self, "cpt_N", tuple(np.asarray(t, dtype=float) for t in self.cpt_N))
        object.__setattr__(self, "cpt_E", np.asarray(self.cpt_E, dtype=float))
        object.__setattr__(self, "cpt_R", np.asarray(self.cpt_R, dtype=float))
        object.__setattr__(self, "init", np.asarray(self.init, dtype=float))
        object.__setattr__(self, "values_R", np.asarray(self.values_R, dtype=float))
        object.__setattr__(self, "sizes", {v: int(n) for v, n in self.sizes.items()})

        K, s = self.K, self.sizes
        for var in ("C", "A", "M", "N", "E", "R"):
            if var not in s:
                raise ValueError(f"missing alphabet size for {var}")
            if not 1 <= s[var] <= 3:
                raise ValueError("alphabet sizes must lie in 1..3")
        if len(self.cpt_C) != K or len(self.cpt_M) != K or len(self.cpt_N) != K:
            raise ValueError("per-step tables must have length K")
        c_shape = (s["E"], s["R"], s["C"]) if self.add_RC else (s["C"],)
        e_shape = (s["E"],) + ((s["R"],) if self.add_RE else ()) + (s["N"],) * K + (s["E"],)
        r_shape = (s["R"],) + (s["M"],) * K + ((s["A"],) * K if self.add_AR else ()) \
            + (s["E"], s["R"])
        for k in range(K):
            if self.cpt_C[k].shape != c_shape:
                raise ValueError(f"cpt_C[{k}] must have shape {c_shape}")
            if self.cpt_M[k].shape != (s["E"], s["R"], s["C"], s["A"], s["M"]):
                raise ValueError(f"cpt_M[{k}] shape mismatch")
            if self.cpt_N[k].shape != (s["E"], s["A"], s["N"]):
                raise ValueError(f"cpt_N[{k}] shape mismatch")
            _dist_axis(self.cpt_C[k], "cpt_C")
            _dist_axis(self.cpt_M[k], "cpt_M")
            _dist_axis(self.cpt_N[k], "cpt_N")
        if self.cpt_E.shape != e_shape:
            raise ValueError(f"cpt_E must have shape {e_shape}")
        if self.cpt_R.shape != r_shape:
            raise ValueError(f"cpt_R must have shape {r_shape}")
        _dist_axis(self.cpt_E, "cpt_E")
        _dist_axis(self.cpt_R, "cpt_R")
        if self.init.shape != (s["E"], s["R"]):
            raise ValueError("init must be a distribution over (E, R)")
        if abs(self.init.sum() - 1.0) > 1e-10 or np.any(self.init < 0):
            raise ValueError("init must be a probability table")
        if self.values_R.shape != (s["R"],):
            raise ValueError("values_R must assign one value per R level")

    def p_context(self, k: int, e: int, r: int) -> np.ndarray:
        t = self.cpt_C[k - 1]
        return t[e, r] if self.add_RC else t

    def p_engagement(self, e_prev: int, r_prev: int, ns) -> np.ndarray:
        idx = (e_prev, r_prev, *ns) if self.add_RE else (e_prev, *ns)
        return self.cpt_E[idx]

    def p_reward(self, r_prev: int, ms, actions, e_new: int) -> np.ndarray:
        idx = (r_prev, *ms) + ((*actions,) if self.add_AR else ()) + (e_new,)
        return self.cpt_R[idx]

    def to_json(self) -> str:
        payload = {
            "K": self.K,
            "sizes": self.sizes,
            "cpt_C": [t.tolist() for t in self.cpt_C],
            "cpt_M": [t.tolist() for t in self.cpt_M],
            "cpt_N": [t.tolist() for t in self.cpt_N],
            "cpt_E": self.cpt_E.tolist(),
            "cpt_R": self.cpt_R.tolist(),
            "init": self.init.tolist(),
            "values_R": self.values_R.tolist(),
            "misspec": {"RE": self.add_RE, "AR": self.add_AR, "RC": self.add_RC},
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "DiscreteDagEnv":
        p = json.loads(text)
        mis = p.get("misspec", {})
        return cls(K=p["K"], sizes=p["sizes"], cpt_C=p["cpt_C"], cpt_M=p["cpt_M"],
                   cpt_N=p["cpt_N"], cpt_E=p["cpt_E"], cpt_R=p["cpt_R"],
                   init=p["init"], values_R=p["values_R"],
                   add_RE=bool(mis.get("RE", False)), add_AR=bool(mis.get("AR", False)),
                   add_RC=bool(mis.get("RC", False)))


@dataclass(frozen=True)
class Atom:
    """Full within-bag configuration up to (but excluding) the action at k."""

    e: int
    r: int
    c: tuple[int, ...]
    a: tuple[int, ...]
    m: tuple[int, ...]
    n: tuple[int, ...]


def _atoms_at_step(env: DiscreteDagEnv, k: int) -> list[tuple[Atom, float]]:
    """All positive-probability configurations before the step-k action,
    weighted by a full-support reference (uniform bag entry and actions)."""
    s = env.sizes
    ref_er = 1.0 / (s["E"] * s["R"])
    atoms: list[tuple[Atom, float]] = []
    for e in range(s["E"]):
        for r in range(s["R"]):
            pc = env.p_context(1, e, r)
            for c1 in range(s["C"]):
                if pc[c1] > 0:
                    atoms.append((Atom(e, r, (c1,), (), (), ()), ref_er * pc[c1]))
    for step in range(1, k):
        nxt: list[tuple[Atom, float]] = []
        for atom, prob in atoms:
            p_next_c = env.p_context(step + 1, atom.e, atom.r)
            for a in range(s["A"]):
                pa = prob / s["A"]
                pm = env.cpt_M[step - 1][atom.e, atom.r, atom.c[-1], a]
                pn = env.cpt_N[step - 1][atom.e, a]
                for m in range(s["M"]):
                    if pm[m] == 0:
                        continue
                    for n in range(s["N"]):
                        if pn[n] == 0:
                            continue
                        for c2 in range(s["C"]):
                            if p_next_c[c2] == 0:
                                continue
                            nxt.append((Atom(atom.e, atom.r, atom.c + (c2,),
                                             atom.a + (a,), atom.m + (m,),
                                             atom.n + (n,)),
                                        pa * pm[m] * pn[n] * p_next_c[c2]))
        atoms = nxt
    return atoms


def state_of_atom(atom: Atom, kind: str, k: int) -> tuple:
    if kind == KIND_S:
        return (atom.e, atom.r) + atom.m + atom.n + (atom.c[-1],)
    if kind == KIND_S_PRIME:
        return (atom.e, atom.r) + atom.m + atom.a + (atom.c[-1],)
    if kind == KIND_S_DOUBLEPRIME:
        return (atom.e, atom.r) + atom.a
    raise ValueError(f"unknown state kind {kind!r}")


def _history_key(atom: Atom, kind: str, k: int) -> tuple:
    """The (state, action, state, ...) trajectory the agent could condition on."""
    key = []
    for j in range(1, k + 1):
        sub = Atom(atom.e, atom.r, atom.c[:j], atom.a[:j - 1], atom.m[:j - 1],
                   atom.n[:j - 1])
        key.append(state_of_atom(sub, kind, j))
        if j < k:
            key.append(atom.a[j - 1])
    return tuple(key)


def _next_distribution(env: DiscreteDagEnv, atom: Atom, k: int, action: int,
                       kind: str) -> dict[tuple, float]:
    """Distribution of the next state given the full configuration and the
    step-k action; at k = K this runs through bag closure."""
    s, K = env.sizes, env.K
    out: dict[tuple, float] = {}
    pm = env.cpt_M[k - 1][atom.e, atom.r, atom.c[-1], action]
    pn = env.cpt_N[k - 1][atom.e, action]
    if k < K:
        p_next_c = env.p_context(k + 1, atom.e, atom.r)
        for m in range(s["M"]):
            if pm[m] == 0:
                continue
            for n in range(s["N"]):
                if pn[n] == 0:
                    continue
                for c2 in range(s["C"]):
                    if p_next_c[c2] == 0:
                        continue
                    nxt = Atom(atom.e, atom.r, atom.c + (c2,), atom.a + (action,),
                               atom.m + (m,), atom.n + (n,))
                    key = state_of_atom(nxt, kind, k + 1)
                    out[key] = out.get(key, 0.0) + pm[m] * pn[n] * p_next_c[c2]
        return out
    for m in range(s["M"]):
        if pm[m] == 0:
            continue
        ms = atom.m + (m,)
        for n in range(s["N"]):
            if pn[n] == 0:
                continue
            ns = atom.n + (n,)
            pe = env.p_engagement(atom.e, atom.r, ns)
            actions = atom.a + (action,)
            for e2 in range(s["E"]):
                if pe[e2] == 0:
                    continue
                pr = env.p_reward(atom.r, ms, actions, e2)
                for r2 in range(s["R"]):
                    if pr[r2] == 0:
                        continue
                    w = pm[m] * pn[n] * pe[e2] * pr[r2]
                    if kind == KIND_S_DOUBLEPRIME:
                        out[(e2, r2)] = out.get((e2, r2), 0.0) + w
                    else:
                        pc = env.p_context(1, e2, r2)
                        for c1 in range(s["C"]):
                            if pc[c1] > 0:
                                key = (e2, r2, c1)
                                out[key] = out.get(key, 0.0) + w * pc[c1]
    return out


@dataclass(frozen=True)
class CompiledMdp:
    """Compiled decision process plus the label/weight bookkeeping."""

    mdp: TabularPeriodicMdp
    kind: str
    state_labels: tuple[tuple[tuple, ...], ...]  # per step, label per index
    state_index: tuple[dict, ...]
    # per step: {state label: {fine refinement weight}}, reference-weighted
    atom_weights: tuple[dict, ...]


def compile_dag_to_mdp(env: DiscreteDagEnv, state_kind: str,
                       gamma_bar: float) -> CompiledMdp:
    """Marginalize the structural model onto the chosen state construction.

    The induced kernel is formed per (state-history, action) refinement class
    and must agree across classes sharing (state, action); otherwise the
    state kind is insufficient and a witness is raised.
    """
    if state_kind not in ORACLE_STATE_KINDS:
        raise ValueError(f"unknown state kind {state_kind!r}")
    if not 0.0 <= gamma_bar < 1.0:
        raise ValueError("gamma_bar must lie in [0, 1)")
    K, s = env.K, env.sizes
    n_a = s["A"]

    step_atoms = [_atoms_at_step(env, k) for k in range(1, K + 1)]
    labels: list[list[tuple]] = []
    index: list[dict] = []
    weights: list[dict] = []
    for k in range(1, K + 1):
        seen: dict[tuple, float] = {}
        for atom, prob in step_atoms[k - 1]:
            lab = state_of_atom(atom, state_kind, k)
            seen[lab] = seen.get(lab, 0.0) + prob
        labs = sorted(seen)
        labels.append(labs)
        index.append({lab: i for i, lab in enumerate(labs)})
        weights.append(seen)

    # Kernel out of each step, built per refinement class and cross-checked.
    out_kernels: list[np.ndarray] = []
    rewards_K: np.ndarray | None = None
    for k in range(1, K + 1):
        nxt_index = index[k % K]
        n_from, n_to = len(labels[k - 1]), len(labels[k % K])
        kernel = np.full((n_from, n_a, n_to), np.nan)
        classes: dict[tuple, list[tuple[Atom, float]]] = {}
        for atom, prob in step_atoms[k - 1]:
            classes.setdefault(_history_key(atom, state_kind, k), []).append((atom, prob))
        if k == K:
            rewards_K = np.zeros((n_from, n_a))
            reward_seen = np.zeros((n_from, n_a), dtype=bool)
        for hist_key, members in classes.items():
            state = hist_key[-1]
            si = index[k - 1][state]
            total = sum(p for _, p in members)
            for a in range(n_a):
                mix = np.zeros(n_to)
                for atom, prob in members:
                    for lab, w in _next_distribution(env, atom, k, a, state_kind).items():
                        mix[nxt_index[lab]] += (prob / total) * w
                if np.isnan(kernel[si, a, 0]):
                    kernel[si, a] = mix
                else:
                    dev = float(np.max(np.abs(kernel[si, a] - mix)))
                    if dev > MARKOV_ATOL:
                        raise NonMarkovError(
                            f"state kind {state_kind} is insufficient at step {k}: "
                            f"state {state}, action {a} has history-dependent "
                            f"transitions (max deviation {dev:.3e})",
                            witness=(k, state, a, dev),
                        )
                if k == K:
                    r_mean = 0.0
                    for j, lab in enumerate(labels[0]):
                        r_mean += mix[j] * env.values_R[lab[1]]
                    if reward_seen[si, a]:
                        if abs(rewards_K[si, a] - r_mean) > MARKOV_ATOL:
                            raise NonMarkovError(
                                f"state kind {state_kind} is insufficient at step {k}: "
                                f"reward at state {state}, action {a} is "
                                "history-dependent",
                                witness=(k, state, a, abs(rewards_K[si, a] - r_mean)),
                            )
                    else:
                        rewards_K[si, a] = r_mean
                        reward_seen[si, a] = True
        if np.any(np.isnan(kernel)):
            raise RuntimeError("unreached (state, action) cell in the compiled kernel")
        kernel /= kernel.sum(axis=-1, keepdims=True)  # absorb rounding
        out_kernels.append(kernel)

    reward_means = [np.zeros((len(labels[k]), n_a)) for k in range(K)]
    reward_means[K - 1] = rewards_K
    transitions = [out_kernels[K - 1]] + out_kernels[:K - 1]
    discounts = [1.0] * (K - 1) + [gamma_bar]

    init = np.zeros(len(labels[0]))
    for e in range(s["E"]):
        for r in range(s["R"]):
            if env.init[e, r] == 0:
                continue
            if state_kind == KIND_S_DOUBLEPRIME:
                if (e, r) in index[0]:
                    init[index[0][(e, r)]] += env.init[e, r]
            else:
                pc = env.p_context(1, e, r)
                for c1 in range(s["C"]):
                    if pc[c1] > 0 and (e, r, c1) in index[0]:
                        init[index[0][(e, r, c1)]] += env.init[e, r] * pc[c1]
    if init.sum() <= 0:
        raise ValueError("initial distribution has no support on reachable states")
    init /= init.sum()

    mdp = TabularPeriodicMdp(
        K=K,
        state_counts=[len(l) for l in labels],
        action_counts=[n_a] * K,
        transitions=transitions,
        reward_means=reward_means,
        discounts=discounts,
        initial_dist=init,
    )
    return CompiledMdp(mdp=mdp, kind=state_kind,
                       state_labels=tuple(tuple(l) for l in labels),
                       state_index=tuple(index),
                       atom_weights=tuple(weights))


def enumerate_optimal(mdp: TabularPeriodicMdp, truncation_bags: int | None = None
                      ) -> tuple[np.ndarray, PeriodicPolicy]:
    """Evaluate every deterministic per-step policy exactly and return the
    elementwise-best step-1 value plus the best policy for the initial
    distribution. Guarded against combinatorial blowup."""
    count = 1
    for ns, na in zip(mdp.state_counts, mdp.action_counts):
        count *= na**ns
        if count > MAX_ENUMERATION:
            raise SizeError(f"policy space exceeds {MAX_ENUMERATION}")

    K = mdp.K
    offsets = np.cumsum([0] + list(mdp.state_counts))
    total = offsets[-1]
    slots = [(k, si) for k in range(K) for si in range(mdp.state_counts[k])]

    best_v1 = np.full(mdp.state_counts[0], -np.inf)
    best_policy_actions = None
    best_weighted = -np.inf

    for assignment in itertools.product(*(range(mdp.action_counts[k]) for k, _ in slots)):
        actions = [np.empty(mdp.state_counts[k], dtype=int) for k in range(K)]
        for (k, si), a in zip(slots, assignment):
            actions[k][si] = a
        if truncation_bags is None:
            A = np.eye(total)
            b = np.zeros(total)
            for k in range(K):
                nxt = (k + 1) % K
                rows = slice(offsets[k], offsets[k + 1])
                cols = slice(offsets[nxt], offsets[nxt + 1])
                idx = np.arange(mdp.state_counts[k])
                P = mdp.transitions[nxt][idx, actions[k], :]
                A[rows, cols] -= mdp.discounts[k] * P
                b[offsets[k]:offsets[k + 1]] = mdp.reward_means[k][idx, actions[k]]
            v = np.linalg.solve(A, b)
            v_steps = [v[offsets[k]:offsets[k + 1]] for k in range(K)]
        else:
            v_steps = [np.zeros(n) for n in mdp.state_counts]
            for _ in range(truncation_bags):
                for k in range(K - 1, -1, -1):
                    nxt = (k + 1) % K
                    idx = np.arange(mdp.state_counts[k])
                    P = mdp.transitions[nxt][idx, actions[k], :]
                    v_steps[k] = mdp.reward_means[k][idx, actions[k]] \
                        + mdp.discounts[k] * (P @ v_steps[nxt])
        best_v1 = np.maximum(best_v1, v_steps[0])
        weighted = float(mdp.initial_dist @ v_steps[0])
        if weighted > best_weighted:
            best_weighted = weighted
            best_policy_actions = [a.copy() for a in actions]

    maps = []
    for k in range(K):
        m = np.zeros((mdp.state_counts[k], mdp.action_counts[k]))
        m[np.arange(mdp.state_counts[k]), best_policy_actions[k]] = 1.0
        maps.append(m)
    return best_v1, PeriodicPolicy(tuple(maps))


@dataclass(frozen=True)
class StateAbstraction:
    """Per-step surjections from fine state indices onto coarse indices."""

    maps: tuple[np.ndarray, ...]
    coarse_counts: tuple[int, ...]

    def __post_init__(self):
        for m, n in zip(self.maps, self.coarse_counts):
            if set(np.unique(m)) != set(range(n)):
                raise ValueError("abstraction map must be surjective")


@dataclass(frozen=True)
class Theorem2Entry:
    k: int
    coarse_state: tuple
    gap: float
    condition_holds: bool


@dataclass(frozen=True)
class Theorem2Result:
    entries: tuple[Theorem2Entry, ...]
    fine_gaps: tuple[tuple[int, tuple, float], ...]  # diagnostic, per fine state
    abstraction: StateAbstraction
    min_gap: float

    def entry(self, k: int, coarse_state: tuple) -> Theorem2Entry:
        for e in self.entries:
            if e.k == k and e.coarse_state == coarse_state:
                return e
        raise KeyError((k, coarse_state))


def theorem2_gap(env: DiscreteDagEnv, fine_kind: str, coarse_kind: str,
                 gamma_bar: float, tol: float = 1e-12) -> Theorem2Result:
    """Per coarse state: the conditional-mean fine value minus the coarse
    value, and whether no single action is optimal across the whole fine
    group. The conditional weights come from the same full-support reference
    used for compilation."""
    fine = compile_dag_to_mdp(env, fine_kind, gamma_bar)
    coarse = compile_dag_to_mdp(env, coarse_kind, gamma_bar)
    K = env.K

    # The coarse state must be a function of the fine state.
    maps = []
    for k in range(1, K + 1):
        m = np.full(len(fine.state_labels[k - 1]), -1, dtype=int)
        for atom, _ in _atoms_at_step(env, k):
            fi = fine.state_index[k - 1][state_of_atom(atom, fine_kind, k)]
            ci = coarse.state_index[k - 1][state_of_atom(atom, coarse_kind, k)]
            if m[fi] == -1:
                m[fi] = ci
            elif m[fi] != ci:
                raise ValueError(f"{coarse_kind} is not a function of {fine_kind}")
        maps.append(m)
    abstraction = StateAbstraction(maps=tuple(maps),
                                   coarse_counts=tuple(len(l) for l in coarse.state_labels))

    q_fine = value_iteration(fine.mdp, tol=tol)
    q_coarse = value_iteration(coarse.mdp, tol=tol)
    v_fine = [t.max(axis=1) for t in q_fine.tables]
    v_coarse = [t.max(axis=1) for t in q_coarse.tables]

    entries = []
    fine_gaps = []
    for k in range(1, K + 1):
        fi_weights = fine.atom_weights[k - 1]
        groups: dict[int, list[tuple[int, float]]] = {}
        for lab, w in fi_weights.items():
            fi = fine.state_index[k - 1][lab]
            groups.setdefault(int(maps[k - 1][fi]), []).append((fi, w))
        for ci, members in sorted(groups.items()):
            total = sum(w for _, w in members)
            mean_fine = sum(w * v_fine[k - 1][fi] for fi, w in members) / total
            gap = float(mean_fine - v_coarse[k - 1][ci])
            table = q_fine.tables[k - 1]
            n_a = table.shape[1]
            condition = True
            for a in range(n_a):
                always_best = all(
                    table[fi, a] >= v_fine[k - 1][fi] - TIE_TOL for fi, _ in members
                )
                if always_best:
                    condition = False
                    break
            entries.append(Theorem2Entry(k=k, coarse_state=coarse.state_labels[k - 1][ci],
                                         gap=gap, condition_holds=condition))
        for fi, lab in enumerate(fine.state_labels[k - 1]):
            ci = int(maps[k - 1][fi])
            fine_gaps.append((k, lab, float(v_fine[k - 1][fi] - v_coarse[k - 1][ci])))

    min_gap = min(e.gap for e in entries)
    return Theorem2Result(entries=tuple(entries), fine_gaps=tuple(fine_gaps),
                          abstraction=abstraction, min_gap=float(min_gap))


def _interior(rng: np.random.Generator, shape: tuple, n: int) -> np.ndarray:
    """Distribution tables with entries bounded away from 0 and 1."""
    raw = rng.uniform(0.05, 0.95, size=shape + (n,))
    raw /= raw.sum(axis=-1, keepdims=True)
    # renormalization can push entries below 0.05; mix toward uniform
    return 0.85 * raw + 0.15 / n


def random_faithful_env(seed: int, K: int = 2, require_informative: bool = True,
                        gamma_bar: float = 0.5, max_draws: int = 200) -> DiscreteDagEnv:
    """Random binary-alphabet instance with strictly interior tables.

    With require_informative, draws are rejected until every coarse state of
    the fine/coarse comparison pair has genuinely state-dependent optimal
    actions: accidental action-degeneracy makes the strictness condition
    fail for reasons unrelated to the construction under test, and such
    degenerate cases are covered by purpose-built instances instead.
    """
    sizes = {"C": 2, "A": 2, "M": 2, "N": 2, "E": 2, "R": 2}
    for attempt in range(max_draws):
        rng = np.random.default_rng(np.random.SeedSequence((seed, attempt)))
        env = DiscreteDagEnv(
            K=K, sizes=sizes,
            cpt_C=[_interior(rng, (), 2) for _ in range(K)],
            cpt_M=[_interior(rng, (2, 2, 2, 2), 2) for _ in range(K)],
            cpt_N=[_interior(rng, (2, 2), 2) for _ in range(K)],
            cpt_E=_interior(rng, (2,) * (1 + K), 2),
            cpt_R=_interior(rng, (2,) * (2 + K), 2),
            init=np.full((2, 2), 0.25),
            values_R=np.array([0.0, 1.0]),
        )
        if not require_informative:
            return env
        result = theorem2_gap(env, KIND_S_PRIME, KIND_S_DOUBLEPRIME, gamma_bar)
        if all(e.condition_holds for e in result.entries):
            return env
    raise RuntimeError(f"no informative instance found in {max_draws} draws")


def split_optimum_env() -> DiscreteDagEnv:
    """Binary instance where the first mediator reverses the optimal second
    action, engaged users have a pinned mediator (so the merged state loses
    nothing there), and the context reverses the optimal first action for
    non-engaged users."""
    K = 2
    sizes = {"C": 2, "A": 2, "M": 2, "N": 2, "E": 2, "R": 2}
    cpt_c = np.array([0.5, 0.5])
    # cpt_M[k][e, r, c, a] -> distribution over M
    m1 = np.zeros((2, 2, 2, 2, 2))
    for r in range(2):
        for c in range(2):
            m1[1, r, c, :, :] = [0.0, 1.0]          # engaged: always active
        m1[0, r, 0, 0] = [0.40, 0.60]
        m1[0, r, 1, 0] = [0.60, 0.40]
        m1[0, r, 0, 1] = [0.85, 0.15]
        m1[0, r, 1, 1] = [0.15, 0.85]
    m2 = np.zeros((2, 2, 2, 2, 2))
    m2[..., 0, :] = [0.9, 0.1]
    m2[..., 1, :] = [0.1, 0.9]
    cpt_n = np.full((2, 2, 2), 0.5)
    # cpt_E[e_prev, n1, n2] -> distribution over E
    cpt_e = np.zeros((2, 2, 2, 2))
    cpt_e[0, ...] = [0.6, 0.4]
    cpt_e[1, ...] = [0.4, 0.6]
    # cpt_R[r_prev, m1, m2, e_new] -> distribution over R
    r_table = {(0, 0): 0.6, (0, 1): 0.2, (1, 0): 0.1, (1, 1): 0.55}
    cpt_r = np.zeros((2, 2, 2, 2, 2))
    for (mm1, mm2), p in r_table.items():
        cpt_r[:, mm1, mm2, :, :] = [1.0 - p, p]
    return DiscreteDagEnv(
        K=K, sizes=sizes,
        cpt_C=[cpt_c, cpt_c], cpt_M=[m1, m2], cpt_N=[cpt_n, cpt_n],
        cpt_E=cpt_e, cpt_R=cpt_r,
        init=np.full((2, 2), 0.25),
        values_R=np.array([0.0, 1.0]),
    )


def action_irrelevant_mediator_env() -> DiscreteDagEnv:
    """Instance where the step mediators never enter the reward table, so the
    mediator-observing and mediator-blind states have identical values even
    though the action still matters through the engagement path."""
    K = 2
    sizes = {"C": 2, "A": 2, "M": 2, "N": 2, "E": 2, "R": 2}
    cpt_c = np.array([0.5, 0.5])
    m = np.zeros((2, 2, 2, 2, 2))
    for e in range(2):
        for r in range(2):
            for c in range(2):
                for a in range(2):
                    p = 0.2 + 0.2 * e + 0.1 * c + 0.3 * a
                    m[e, r, c, a] = [1.0 - p, p]
    n = np.zeros((2, 2, 2))
    for e in range(2):
        for a in range(2):
            p = 0.2 + 0.1 * e + 0.5 * a
            n[e, a] = [1.0 - p, p]
    cpt_e = np.zeros((2, 2, 2, 2))
    for e in range(2):
        for n1 in range(2):
            for n2 in range(2):
                p = 0.15 + 0.2 * e + 0.2 * n1 + 0.2 * n2
                cpt_e[e, n1, n2] = [1.0 - p, p]
    cpt_r = np.zeros((2, 2, 2, 2, 2))
    for r in range(2):
        for e2 in range(2):
            p = 0.25 + 0.2 * r + 0.35 * e2
            cpt_r[r, :, :, e2] = [1.0 - p, p]
    return DiscreteDagEnv(
        K=K, sizes=sizes,
        cpt_C=[cpt_c, cpt_c], cpt_M=[m, m], cpt_N=[n, n],
        cpt_E=cpt_e, cpt_R=cpt_r,
        init=np.full((2, 2), 0.25),
        values_R=np.array([0.0, 1.0]),
    )


def random_periodic_mdp(seed: int, K: int = 2, max_states: int = 3,
                        n_actions: int = 2, gamma_bar: float = 0.5
                        ) -> TabularPeriodicMdp:
    """Random dense instance for solver cross-checks."""
    rng = np.random.default_rng(seed)
    state_counts = [int(rng.integers(2, max_states + 1)) for _ in range(K)]
    action_counts = [n_actions] * K
    transitions = []
    for k in range(K):
        src = (k - 1) % K
        t = rng.uniform(0.05, 1.0, size=(state_counts[src], n_actions, state_counts[k]))
        t /= t.sum(axis=-1, keepdims=True)
        transitions.append(t)
    rewards = [rng.normal(size=(state_counts[k], n_actions)) for k in range(K)]
    discounts = [1.0] * (K - 1) + [gamma_bar]
    init = rng.uniform(0.1, 1.0, size=state_counts[0])
    init /= init.sum()
    return TabularPeriodicMdp(K=K, state_counts=state_counts,
                              action_counts=action_counts, transitions=transitions,
                              reward_means=rewards, discounts=discounts,
                              initial_dist=init)
