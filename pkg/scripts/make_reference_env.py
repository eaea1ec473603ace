#!/usr/bin/env python
"""Regenerate the packaged reference environment, the 8-user roster, and the
hand-built comparison instance. Deterministic; run from the repo root."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from bagged_rl.causal_env import (DEFAULT_STANDARDIZATION, DEFAULT_TRUNCATION,
                                  EnvParams, check_stationarity)
from bagged_rl.oracle import split_optimum_env

DATA = Path(__file__).resolve().parents[1] / "src" / "bagged_rl" / "data"

K = 5

REFERENCE = dict(
    K=K,
    theta_C=[0.0],
    theta_M=[0.0, 0.10, 0.08, 0.45, 0.26, 0.05, 0.05, 0.22],
    theta_E=[0.05, 0.60, -0.015, -0.015, -0.015, -0.015, -0.015,
             -0.01, -0.01, -0.01, -0.01, -0.01],
    theta_R=[0.05, 0.09, 0.09, 0.09, 0.09, 0.09, 0.16, 0.50],
    theta_O=[0.10, 0.40],
    noise_vars={"C": 1.0, "M": 0.64, "E": 0.09, "R": 0.35, "O": 1.0},
    truncation={k: list(v) for k, v in DEFAULT_TRUNCATION.items()},
    standardization={k: list(v) for k, v in DEFAULT_STANDARDIZATION.items()},
    clip_advantage_M=True,
    nonneg_constraints=True,
)

ROSTER_SEED = 20240810
N_USERS = 8


def _validated(payload: dict) -> EnvParams:
    params = EnvParams.from_json(json.dumps(payload))
    for pattern in ("zeros", "ones"):
        res = check_stationarity(params, pattern)
        if not res.stationary:
            raise ValueError(f"explosive under {pattern}: {res.eigenvalues}")
    return params


def perturbed(rng: np.random.Generator, base: dict) -> dict:
    out = json.loads(json.dumps(base))

    def jitter(x, scale, lo=None, hi=None):
        v = x * (1.0 + scale * rng.standard_normal()) + 0.02 * rng.standard_normal()
        if lo is not None:
            v = max(lo, v)
        if hi is not None:
            v = min(hi, v)
        return round(float(v), 4)

    out["theta_M"] = [
        jitter(base["theta_M"][0], 0.3),
        jitter(base["theta_M"][1], 0.3, lo=0.0),
        jitter(base["theta_M"][2], 0.3, lo=0.0),
        jitter(base["theta_M"][3], 0.2, lo=0.0, hi=1.0),
        jitter(base["theta_M"][4], 0.25, lo=0.05),
        jitter(base["theta_M"][5], 0.4),
        jitter(base["theta_M"][6], 0.4),
        jitter(base["theta_M"][7], 0.4),
    ]
    out["theta_E"] = (
        [jitter(base["theta_E"][0], 0.4), jitter(base["theta_E"][1], 0.1, lo=0.0, hi=0.95)]
        + [jitter(v, 0.3, hi=0.0) for v in base["theta_E"][2:7]]
        + [jitter(v, 0.3) for v in base["theta_E"][7:12]]
    )
    out["theta_R"] = (
        [jitter(base["theta_R"][0], 0.4)]
        + [jitter(v, 0.25, lo=0.0) for v in base["theta_R"][1:6]]
        + [jitter(base["theta_R"][6], 0.3, lo=0.0),
           jitter(base["theta_R"][7], 0.15, lo=0.0, hi=0.95)]
    )
    out["theta_O"] = [jitter(base["theta_O"][0], 0.3), jitter(base["theta_O"][1], 0.3, lo=0.0)]
    return out


def main() -> None:
    DATA.mkdir(parents=True, exist_ok=True)
    (DATA / "roster").mkdir(exist_ok=True)

    _validated(REFERENCE)
    (DATA / "reference_env.json").write_text(json.dumps(REFERENCE, indent=2) + "\n")

    rng = np.random.default_rng(ROSTER_SEED)
    written = 0
    while written < N_USERS:
        candidate = perturbed(rng, REFERENCE)
        try:
            _validated(candidate)
        except ValueError:
            continue
        path = DATA / "roster" / f"user_{written:02d}.json"
        path.write_text(json.dumps(candidate, indent=2) + "\n")
        written += 1

    env = split_optimum_env()
    payload = {"gamma_bar": 0.0, "env": json.loads(env.to_json())}
    (DATA / "split_optimum.json").write_text(json.dumps(payload, indent=2) + "\n")
    print(f"wrote reference env, {N_USERS} roster users, split_optimum instance -> {DATA}")


if __name__ == "__main__":
    main()
