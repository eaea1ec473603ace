"""Reinforcement learning for bagged decision times.

Subpackages: tabular periodic decision processes and exact solvers (mdp),
the linear-Gaussian simulation testbed and its variants (causal_env), state
vectors and bases (states), posterior-sampling learners (agents), finite
brute-force verifiers (oracle), experiment orchestration (harness), and
fitted Q-iteration utilities (fqi).
"""

from importlib import resources


def data_path(*parts: str):
    """Path to a packaged data file, e.g. data_path('reference_env.json')."""
    return resources.files(__name__) / "data" / "/".join(parts)


__all__ = ["data_path"]
