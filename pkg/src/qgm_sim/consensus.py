"""Gradient-free consensus averaging, with and without the quasi-global buffer.

Stripping gradients and step size from the decentralized optimizer leaves a
pure averaging recursion: plain gossip contracts worker disagreement at the
mixing matrix's second singular value, while the buffered variant reuses the
synchronized movement as momentum and reaches moderate precision in fewer
iterations on sparse topologies.

Conventions (repo-wide): workers are columns of X (d x n), one communication
round right-multiplies by W^T where W[i, j] is the weight worker i places on
worker j — identical to W X for the symmetric matrices built in
:mod:`qgm_sim.topology`.  The buffered recursion per iteration is

    X_next = (X - beta M) W^T,        M <- mu M + (1 - mu) (X - X_next),

with M starting at zero; note there is no step size anywhere.  Unlike plain
gossip it does not preserve the column mean exactly once beta > 0, so the
mean drift is recorded alongside the distance trace (recorded, never
asserted away).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConsensusRun",
    "consensus_distance",
    "gossip_consensus",
    "iterations_to_threshold",
    "qg_consensus",
]


def consensus_distance(X) -> float:
    """Root-mean-square distance of worker columns from their mean:
    sqrt((1/n) sum_i ||x_i - x_bar||^2) = ||X - X_bar||_F / sqrt(n)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"X must be a d x n matrix; got shape {X.shape}")
    deviation = X - X.mean(axis=1, keepdims=True)
    return float(np.linalg.norm(deviation) / np.sqrt(X.shape[1]))


@dataclass(frozen=True)
class ConsensusRun:
    """Trace of one consensus experiment.

    ``trace`` has length T+1 with ``trace[0]`` the initial distance;
    ``mean_drift`` (same length) records how far the column mean moved from
    its initial value at each iteration.  ``x_final`` is the terminal d x n
    matrix.
    """

    x0: np.ndarray
    mixing: object
    beta: float
    mu: float
    iterations: int
    trace: np.ndarray
    mean_drift: np.ndarray
    x_final: np.ndarray

    def __post_init__(self):
        for name in ("trace", "mean_drift"):
            arr = getattr(self, name)
            if len(arr) != self.iterations + 1:
                raise ValueError(
                    f"{name} must have length T+1 = {self.iterations + 1}; got {len(arr)}")
            arr.setflags(write=False)


def _matrix_at(W, t: int) -> np.ndarray:
    """Resolve a static matrix, a MixingMatrix, or a time-varying generator."""
    if callable(W) and not hasattr(W, "weights") and not isinstance(W, np.ndarray):
        W = W(t)
    return W.weights if hasattr(W, "weights") else np.asarray(W, dtype=float)


def _run(X0, W, beta: float, mu: float, T: int) -> ConsensusRun:
    X = np.asarray(X0, dtype=float).copy()
    if X.ndim != 2:
        raise ValueError(f"X0 must be a d x n matrix; got shape {X.shape}")
    if T < 0:
        raise ValueError(f"iteration count must be >= 0; got {T}")
    M = np.zeros_like(X)
    mean0 = X.mean(axis=1)
    trace = [consensus_distance(X)]
    drift = [0.0]
    for t in range(T):
        Wm = _matrix_at(W, t)
        X_next = (X - beta * M) @ Wm.T
        M = mu * M + (1.0 - mu) * (X - X_next)
        X = X_next
        trace.append(consensus_distance(X))
        drift.append(float(np.linalg.norm(X.mean(axis=1) - mean0)))
    return ConsensusRun(
        x0=np.asarray(X0, dtype=float).copy(),
        mixing=W,
        beta=beta,
        mu=mu,
        iterations=T,
        trace=np.array(trace),
        mean_drift=np.array(drift),
        x_final=X,
    )


def gossip_consensus(X0, W, T: int) -> ConsensusRun:
    """Plain gossip averaging for T iterations: X <- X W^T each round.

    ``W`` may be a MixingMatrix, a raw doubly stochastic array, or a callable
    ``t -> matrix`` for time-varying schemes.  The distance trace contracts
    at the second singular value of W and the column mean stays put (up to
    rounding).
    """
    return _run(X0, W, beta=0.0, mu=0.0, T=T)


def qg_consensus(X0, W, beta: float, mu: float, T: int) -> ConsensusRun:
    """Buffered consensus: the synchronized movement X - X_next feeds a
    momentum term that accelerates averaging on sparse graphs.

    beta = 0 reproduces :func:`gossip_consensus` bit for bit (the buffer is
    never read).  On a complete graph the distance is zero from the first
    iteration onward regardless of beta and mu.
    """
    for name, val in (("beta", beta), ("mu", mu)):
        if not 0.0 <= val < 1.0:
            raise ValueError(f"{name} must lie in [0, 1); got {val}")
    return _run(X0, W, beta=beta, mu=mu, T=T)


def iterations_to_threshold(run, threshold: float = 1e-2) -> int:
    """First iteration index at which the distance trace is <= threshold.

    Accepts a ConsensusRun or a raw trace; raises if the run never got there.
    """
    trace = run.trace if isinstance(run, ConsensusRun) else np.asarray(run, dtype=float)
    hits = np.nonzero(trace <= threshold)[0]
    if hits.size == 0:
        raise ValueError(
            f"trace never reached threshold {threshold}; final distance {trace[-1]}")
    return int(hits[0])
