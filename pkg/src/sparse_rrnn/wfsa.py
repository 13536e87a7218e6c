"""Chain-shaped WFSAs: Forward scoring, path enumeration, extreme paths.

A WFSA with ``k`` main transitions has states ``0..k``. State 0 is the start
state and carries a free self-loop of weight 1; states ``1..k`` are all final
and carry gated self-loops. Main transition ``i`` goes from state ``i-1`` to
state ``i``.

Per-timestep weights are passed as two ``(n, k)`` arrays: ``f[t, i-1]`` is the
self-loop weight of state ``i`` on token ``t`` and ``u[t, i-1]`` the weight of
main transition ``i`` on token ``t``. Token indices are 0-based.
"""

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

MAX_ENUMERATED_PATHS = 10**6


class WfsaOverflowError(ArithmeticError):
    """A DP value became non-finite."""

    def __init__(self, timestep, message=None):
        self.timestep = timestep
        super().__init__(message or f"non-finite WFSA value at timestep {timestep}")


class PathCountError(ValueError):
    pass


@dataclass(frozen=True)
class WfsaShape:
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("a WFSA needs at least one main transition")

    @property
    def states(self):
        return range(self.k + 1)

    @property
    def final_states(self):
        return range(1, self.k + 1)


@dataclass(frozen=True)
class PathRecord:
    """One accepting path.

    ``main[j]`` is the token consumed by main transition ``j+1``;
    ``self_loops[j]`` lists tokens consumed by the self-loop of state ``j+1``.
    Tokens before ``main[0]`` are consumed by the free start-state loop.
    """

    main: tuple
    self_loops: tuple
    score: float

    @property
    def start_time(self):
        return self.main[0]

    @property
    def end_state(self):
        return len(self.main)


@dataclass
class ForwardResult:
    c: np.ndarray  # (n+1, k+1); c[t, i] for prefix length t
    total: float


def _check_weights(f, u):
    f = np.asarray(f, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if f.ndim != 2 or f.shape != u.shape:
        raise ValueError(f"f and u must be (n, k) arrays of equal shape, got {f.shape} and {u.shape}")
    if f.shape[1] < 1:
        raise ValueError("need k >= 1")
    return f, u


def forward_score(f, u):
    """Sum of all accepting path scores (plus-times semiring)."""
    f, u = _check_weights(f, u)
    n, k = f.shape
    c = np.zeros((n + 1, k + 1))
    c[:, 0] = 1.0
    for t in range(1, n + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            c[t, 1:] = c[t - 1, 1:] * f[t - 1] + c[t - 1, :-1] * u[t - 1]
        if not np.all(np.isfinite(c[t])):
            raise WfsaOverflowError(t)
    total = 0.0
    for i in range(1, k + 1):
        total += c[n, i]
    return ForwardResult(c, float(total))


def path_score(path, f, u):
    """Product of the transition weights along ``path``."""
    score = 1.0
    for j, t in enumerate(path.main):
        score *= u[t][j]
        for s in path.self_loops[j]:
            score *= f[s][j]
    return float(score)


def count_paths(n, k):
    """Number of accepting paths on ``n`` tokens: sum_i C(n, i) over final states."""
    return sum(comb(n, i) for i in range(1, k + 1))


def enumerate_paths(f, u):
    """Every accepting path with its exact product score (brute force)."""
    f, u = _check_weights(f, u)
    n, k = f.shape
    if count_paths(n, k) > MAX_ENUMERATED_PATHS:
        raise PathCountError(f"{count_paths(n, k)} paths exceed the enumeration limit")
    paths = []
    for end in range(1, k + 1):
        for main in combinations(range(n), end):
            bounds = list(main[1:]) + [n]
            loops = tuple(tuple(range(main[j] + 1, bounds[j])) for j in range(end))
            rec = PathRecord(main, loops, 0.0)
            paths.append(PathRecord(main, loops, path_score(rec, f, u)))
    return paths


def extreme_path(f, u):
    """Exact max- and min-scoring accepting paths.

    Weights may be negative, so a single best-so-far value per state is not
    enough: the max of ``w * x`` is ``w * max x`` for ``w >= 0`` and
    ``w * min x`` otherwise. The DP therefore carries the (min, max) interval
    of partial path scores per state and timestep, with backpointers for both
    ends. Returns ``(None, None)`` for an empty input.
    """
    f, u = _check_weights(f, u)
    n, k = f.shape
    if n == 0:
        return None, None
    # ext[t, i, e]: e=0 max, e=1 min; NaN where no partial path exists
    ext = np.full((n + 1, k + 1, 2), np.nan)
    ext[:, 0, :] = 1.0
    # back[t, i, e] = (came_by_main, predecessor extreme index)
    back = np.zeros((n + 1, k + 1, 2, 2), dtype=np.int8)
    for t in range(1, n + 1):
        for i in range(1, k + 1):
            cands = []
            for by_main, (src, w) in enumerate(((i, f[t - 1, i - 1]), (i - 1, u[t - 1, i - 1]))):
                if np.isnan(ext[t - 1, src, 0]):
                    continue
                for e in (0, 1):
                    cands.append((ext[t - 1, src, e] * w, by_main, e))
            if not cands:
                continue
            best = max(cands, key=lambda c: c[0])
            worst = min(cands, key=lambda c: c[0])
            for e, pick in ((0, best), (1, worst)):
                if not np.isfinite(pick[0]):
                    raise WfsaOverflowError(t)
                ext[t, i, e] = pick[0]
                back[t, i, e] = (pick[1], pick[2])

    def trace(end, e):
        main = [None] * end
        loops = [[] for _ in range(end)]
        i = end
        for t in range(n, 0, -1):
            if i == 0:
                break
            by_main, prev_e = back[t, i, e]
            if by_main:
                main[i - 1] = t - 1
                i -= 1
            else:
                loops[i - 1].append(t - 1)
            e = prev_e
        rec = PathRecord(tuple(main), tuple(tuple(reversed(x)) for x in loops), 0.0)
        return PathRecord(rec.main, rec.self_loops, path_score(rec, f, u))

    finals = [i for i in range(1, k + 1) if not np.isnan(ext[n, i, 0])]
    if not finals:
        return None, None
    i_max = max(finals, key=lambda i: ext[n, i, 0])
    i_min = min(finals, key=lambda i: ext[n, i, 1])
    return trace(i_max, 0), trace(i_min, 1)
