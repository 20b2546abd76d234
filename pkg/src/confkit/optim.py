"""Steepest descent with Armijo backtracking over batches of coordinate arrays.

Every sample in a batch follows its own trajectory (own step sizes, own
stopping point); batching only amortizes numpy call overhead.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

# (B, n, 3) -> (values (B,), gradients (B, n, 3))
BatchObjective = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass
class DescentResult:
    """Final state per sample. ``history[b]`` lists accepted objective values."""

    x: np.ndarray
    value: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    max_gradient_norm: np.ndarray
    line_search_failed: np.ndarray
    history: list[list[float]]


def max_atom_norm(gradient: np.ndarray) -> np.ndarray | float:
    """Largest per-atom norm of an ``(n, 3)`` or ``(B, n, 3)`` gradient."""
    g = np.asarray(gradient)
    if g.shape[-2] == 0:
        return np.zeros(g.shape[:-2]) if g.ndim == 3 else 0.0
    norms = np.sqrt((g * g).sum(axis=-1)).max(axis=-1)
    return norms if g.ndim == 3 else float(norms)


def descend(
    fun: BatchObjective,
    x0: np.ndarray,
    max_iters: int = 500,
    tol: float = 1e-3,
    step: float = 0.1,
    c: float = 1e-4,
    max_halvings: int = 30,
) -> DescentResult:
    """Minimise ``fun`` independently for every sample of ``x0`` (shape ``(B, n, 3)``).

    The search direction is the negative gradient, scaled so the atom with the
    largest gradient moves ``t`` angstrom. The trial ``t`` is ``step`` on the
    first iteration and afterwards the Barzilai-Borwein estimate from the last
    accepted step, capped at ``step``; it is halved until the Armijo condition
    ``f(x + t d) <= f(x) + c t g.d`` holds. Accepted steps therefore never
    increase ``fun``.

    A sample stops when its largest per-atom gradient norm is below ``tol``,
    after ``max_iters`` accepted steps, or when ``max_halvings`` halvings in a
    row fail (it then keeps its best point and is not converged).
    """
    x = np.array(x0, dtype=float)
    batch = len(x)
    f, g = fun(x)
    f = np.array(f, dtype=float)
    gn = np.asarray(max_atom_norm(g), dtype=float).reshape(batch)
    iters = np.zeros(batch, dtype=int)
    failed = np.zeros(batch, dtype=bool)
    trial = np.full(batch, float(step))
    history = [[float(v)] for v in f]

    while True:
        active = np.flatnonzero(~failed & (gn >= tol) & (iters < max_iters))
        if active.size == 0:
            break
        direction = -g[active] / gn[active, None, None]
        slope = -(g[active] ** 2).sum(axis=(1, 2)) / gn[active]
        t = trial[active].copy()
        x_new = np.empty_like(x[active])
        f_new = np.empty(active.size)
        g_new = np.empty_like(x_new)
        pending = np.arange(active.size)
        for _ in range(max_halvings):
            cand = x[active[pending]] + t[pending, None, None] * direction[pending]
            fc, gc = fun(cand)
            ok = fc <= f[active[pending]] + c * t[pending] * slope[pending]
            took = pending[ok]
            x_new[took], f_new[took], g_new[took] = cand[ok], fc[ok], gc[ok]
            pending = pending[~ok]
            if pending.size == 0:
                break
            t[pending] *= 0.5
        failed[active[pending]] = True
        accepted = np.setdiff1d(np.arange(active.size), pending, assume_unique=True)
        if accepted.size == 0:
            continue
        rows = active[accepted]
        s = x_new[accepted] - x[rows]
        y = g_new[accepted] - g[rows]
        sy = (s * y).sum(axis=(1, 2))
        ss = (s * s).sum(axis=(1, 2))
        gn_rows = np.asarray(max_atom_norm(g_new[accepted])).reshape(-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            bb = np.where(sy > 0, ss / sy * gn_rows, step)
        trial[rows] = np.minimum(step, np.where(np.isfinite(bb) & (bb > 0), bb, step))
        x[rows], f[rows], g[rows] = x_new[accepted], f_new[accepted], g_new[accepted]
        gn[rows] = gn_rows
        iters[rows] += 1
        for r, v in zip(rows, f_new[accepted]):
            history[r].append(float(v))

    return DescentResult(x, f, iters, gn < tol, gn, failed, history)
