"""Pointwise vector inequalities behind the monotonicity and stability estimates.

Each check draws random tuples in ℝ³, evaluates ``lhs - rhs`` (the slack,
which should be nonnegative) and counts violations beyond a rounding
allowance proportional to the size of the terms involved.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

ROUNDING = 1e-12


@dataclass
class InequalityReport:
    name: str
    samples: int
    violations: int
    min_relative_slack: float
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


def _norm(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(v * v, axis=-1))


def random_vectors(rng: np.random.Generator, size: int, count: int = 1) -> list[np.ndarray]:
    """Gaussian directions with log-uniform magnitudes over six decades, so both
    comparable and wildly different lengths are exercised."""
    out = []
    for _ in range(count):
        v = rng.normal(size=(size, 3))
        v *= (10.0 ** rng.uniform(-3, 3, size=(size, 1))) / np.maximum(_norm(v)[:, None], 1e-300)
        out.append(v)
    return out


def power_difference_slack(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(|x|+|y|)|x−y| − ||x|x − |y|y|, with the scale of the right side."""
    lhs = (_norm(x) + _norm(y)) * _norm(x - y)
    rhs = _norm(_norm(x)[:, None] * x - _norm(y)[:, None] * y)
    return lhs - rhs, np.maximum(lhs, rhs)


def perturbed_monotonicity_slack(x, y, a, b) -> tuple[np.ndarray, np.ndarray]:
    """⟨|x−a|(x−a) − |y−b|(y−b), x−y⟩ − ½|x−y|³ + (|x|+|y|+|a|+|b|)|a−b||x−y|."""
    u, v = x - a, y - b
    d = _norm(x - y)
    pair = np.sum((_norm(u)[:, None] * u - _norm(v)[:, None] * v) * (x - y), axis=-1)
    penalty = (_norm(x) + _norm(y) + _norm(a) + _norm(b)) * _norm(a - b) * d
    slack = pair - 0.5 * d**3 + penalty
    scale = np.abs(pair) + 0.5 * d**3 + penalty
    return slack, scale


# Best constant in the root monotonicity bound, approached as w → v along v.
ROOT_SHARP_CONSTANT = 2.0**-0.75


def root_monotonicity_slack(v, w, constant: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """⟨|v|^{-1/2}v − |w|^{-1/2}w, v−w⟩ − c(|v|²+|w|²)^{-1/4}|v−w|².

    With c = 1 the bound fails near the diagonal: for w = (1+t)v and t → 0 the
    left side is ½|v|^{-1/2}t²|v|² while the bound is 2^{-1/4}|v|^{-1/2}t²|v|².
    It holds with c = 2^{-3/4}, which is sharp.
    """
    nv, nw = _norm(v), _norm(w)
    pair = np.sum((v / np.sqrt(nv)[:, None] - w / np.sqrt(nw)[:, None]) * (v - w), axis=-1)
    bound = constant * (nv**2 + nw**2) ** -0.25 * _norm(v - w) ** 2
    return pair - bound, np.maximum(np.abs(pair), bound)


_CHECKS = {
    "power_difference": (power_difference_slack, 2),
    "perturbed_monotonicity": (perturbed_monotonicity_slack, 4),
    "root_monotonicity": (root_monotonicity_slack, 2),
}


def check(name: str, samples: int = 1_000_000, seed: int = 42, chunk: int = 200_000, **kwargs) -> InequalityReport:
    """Count violations of the named inequality over ``samples`` random tuples.

    Extra keyword arguments go to the slack function (``constant`` for
    ``root_monotonicity``).
    """
    if name not in _CHECKS:
        raise ValueError(f"unknown inequality {name!r}; choose from {', '.join(_CHECKS)}")
    fn, arity = _CHECKS[name]
    rng = np.random.Generator(np.random.Philox(seed))
    violations = 0
    worst = np.inf
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        slack, scale = fn(*random_vectors(rng, m, arity), **kwargs)
        rel = slack / np.maximum(scale, 1e-300)
        violations += int(np.count_nonzero(rel < -ROUNDING))
        worst = min(worst, float(rel.min()))
        done += m
    return InequalityReport(name, samples, violations, worst, seed)


def check_all(samples: int = 1_000_000, seed: int = 42) -> list[InequalityReport]:
    return [check(name, samples, seed) for name in _CHECKS]
