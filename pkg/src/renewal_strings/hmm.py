"""Renewal-process hidden Markov model along a single line.

State 0 is the background; states ``1..K-1`` are track classes. The
observation for point ``i`` is the gap ``dt_i`` to the previous point on the
line. Every state emits exponential gaps: the background at the local
background rate, a track class at the background rate plus ``1/track_mean``
(a superposition of two Poisson processes is Poisson with the summed rate).
An optional per-state Bernoulli factor scores whether the record's ellipse
is aligned with the line.

The transition matrix is column-stochastic:
``transition[i, j] = P(X_t = i | X_{t-1} = j)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from .errors import ModelError

#: Stochasticity tolerance for transition columns.
STOCHASTIC_TOL = 1e-9

#: Scale factors below this trigger the log-space recursion.
_UNDERFLOW = 1e-290

ALIGNED, NOT_ALIGNED, ALIGN_UNKNOWN = 1, 0, -1


def equilibrium(transition) -> np.ndarray:
    """Stationary distribution of a column-stochastic matrix.

    Raises :class:`ModelError` when the stationary vector is not unique.
    """
    P = _check_transition(transition)
    k = P.shape[0]
    A = P - np.eye(k)
    if np.linalg.matrix_rank(A, tol=STOCHASTIC_TOL * k) != k - 1:
        raise ModelError("transition matrix has no unique stationary distribution")
    A[-1, :] = 1.0
    b = np.zeros(k)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _check_transition(transition) -> np.ndarray:
    P = np.array(transition, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
        raise ModelError(f"transition must be square, got shape {P.shape}")
    if np.any(P < 0) or not np.all(np.isfinite(P)):
        raise ModelError("transition entries must be finite and non-negative")
    if np.any(np.abs(P.sum(axis=0) - 1.0) > STOCHASTIC_TOL):
        raise ModelError("transition columns must sum to 1")
    return P


@dataclass(frozen=True, eq=False)
class RenewalHmmModel:
    transition: np.ndarray
    track_mean: np.ndarray
    alignment_prob: Optional[np.ndarray] = None
    initial: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        P = _check_transition(self.transition)
        k = P.shape[0]
        if k < 2:
            raise ModelError("need a background state and at least one track state")
        means = np.atleast_1d(np.array(self.track_mean, dtype=np.float64))
        if means.shape != (k - 1,):
            raise ModelError(f"track_mean needs {k - 1} entries")
        if not np.all(means > 0):
            raise ModelError("track means must be positive")
        align = None
        if self.alignment_prob is not None:
            align = np.array(self.alignment_prob, dtype=np.float64)
            if align.shape != (k,) or np.any((align < 0) | (align > 1)):
                raise ModelError(f"alignment_prob needs {k} probabilities")
        if self.initial is None:
            init = equilibrium(P)
        else:
            init = np.array(self.initial, dtype=np.float64)
            if init.shape != (k,) or np.any(init < 0) or abs(init.sum() - 1) > STOCHASTIC_TOL:
                raise ModelError("initial must be a probability vector over the states")
        for name, value in (("transition", P), ("track_mean", means),
                            ("alignment_prob", align), ("initial", init)):
            if value is not None:
                value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def extra_rate(self) -> np.ndarray:
        """Per-state rate added to the background (0 for the background state)."""
        return np.concatenate(([0.0], 1.0 / self.track_mean))

    def alignment_logs(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-state log P(aligned) and log P(not aligned); zeros when unused."""
        k = self.n_states
        if self.alignment_prob is None:
            return np.zeros(k), np.zeros(k)
        with np.errstate(divide="ignore"):
            return np.log(self.alignment_prob), np.log1p(-self.alignment_prob)

    def to_dict(self) -> dict:
        return {
            "transition": self.transition.tolist(),
            "track_mean": self.track_mean.tolist(),
            "alignment_prob": None if self.alignment_prob is None else self.alignment_prob.tolist(),
            "initial": self.initial.tolist(),
        }


# Placeholder alignment probabilities (background, track); tune on synthetic data.
DEFAULT_ALIGNMENT_PROB = (0.1, 0.8)


def default_model(alignment: bool = True) -> RenewalHmmModel:
    """Two-state model: background and satellite track with mean gap 360 microns."""
    transition = np.array([[0.999998, 0.04],
                           [2e-6, 0.96]])
    return RenewalHmmModel(
        transition=transition,
        track_mean=np.array([360.0]),
        alignment_prob=np.array(DEFAULT_ALIGNMENT_PROB) if alignment else None,
    )


@dataclass(frozen=True)
class Observation:
    delta_t: float
    local_bg_rate: float
    aligned: Optional[bool] = None

    def __post_init__(self):
        if not self.delta_t >= 0:
            raise ValueError("delta_t must be non-negative")
        if not self.local_bg_rate > 0:
            raise ValueError("local_bg_rate must be positive")


@numba.njit(cache=True, nogil=True)
def _log_emissions_into(delta, bg_rate, aligned, extra_rate, log_a, log_na, out):
    n = delta.shape[0]
    k = extra_rate.shape[0]
    for i in range(n):
        for s in range(k):
            lam = bg_rate[i] + extra_rate[s]
            v = math.log(lam) - lam * delta[i]
            if aligned[i] == 1:
                v += log_a[s]
            elif aligned[i] == 0:
                v += log_na[s]
            out[i, s] = v


@numba.njit(cache=True, nogil=True)
def _smooth_scaled(log_e, T, init, post, alpha, beta, scale):
    """Scaled forward-backward. Returns False if a scale factor underflowed."""
    n, k = log_e.shape
    # post doubles as storage for the max-shifted emissions
    for i in range(n):
        m = -np.inf
        for s in range(k):
            if log_e[i, s] > m:
                m = log_e[i, s]
        if not np.isfinite(m):
            return False
        for s in range(k):
            post[i, s] = math.exp(log_e[i, s] - m)
    c = 0.0
    for s in range(k):
        alpha[0, s] = init[s] * post[0, s]
        c += alpha[0, s]
    if not (c > _UNDERFLOW):
        return False
    scale[0] = c
    for s in range(k):
        alpha[0, s] /= c
    for i in range(1, n):
        c = 0.0
        for s in range(k):
            acc = 0.0
            for r in range(k):
                acc += T[s, r] * alpha[i - 1, r]
            alpha[i, s] = acc * post[i, s]
            c += alpha[i, s]
        if not (c > _UNDERFLOW):
            return False
        scale[i] = c
        for s in range(k):
            alpha[i, s] /= c
    for s in range(k):
        beta[n - 1, s] = 1.0
    for i in range(n - 2, -1, -1):
        for r in range(k):
            acc = 0.0
            for s in range(k):
                acc += T[s, r] * post[i + 1, s] * beta[i + 1, s]
            beta[i, r] = acc / scale[i + 1]
    for i in range(n):
        tot = 0.0
        for s in range(k):
            post[i, s] = alpha[i, s] * beta[i, s]
            tot += post[i, s]
        for s in range(k):
            post[i, s] /= tot
    return True


@numba.njit(cache=True, nogil=True)
def _logsumexp(v):
    m = -np.inf
    for x in v:
        if x > m:
            m = x
    if not np.isfinite(m):
        return m
    acc = 0.0
    for x in v:
        acc += math.exp(x - m)
    return m + math.log(acc)


@numba.njit(cache=True, nogil=True)
def _smooth_log(log_e, T, init, post, la, lb):
    n, k = log_e.shape
    logT = np.log(T)
    tmp = np.empty(k)
    for s in range(k):
        la[0, s] = math.log(init[s]) + log_e[0, s] if init[s] > 0 else -np.inf
    for i in range(1, n):
        for s in range(k):
            for r in range(k):
                tmp[r] = logT[s, r] + la[i - 1, r]
            la[i, s] = _logsumexp(tmp) + log_e[i, s]
    for s in range(k):
        lb[n - 1, s] = 0.0
    for i in range(n - 2, -1, -1):
        for r in range(k):
            for s in range(k):
                tmp[s] = logT[s, r] + log_e[i + 1, s] + lb[i + 1, s]
            lb[i, r] = _logsumexp(tmp)
    for i in range(n):
        for s in range(k):
            tmp[s] = la[i, s] + lb[i, s]
        z = _logsumexp(tmp)
        tot = 0.0
        for s in range(k):
            post[i, s] = math.exp(tmp[s] - z)
            tot += post[i, s]
        for s in range(k):
            post[i, s] /= tot


@numba.njit(cache=True, nogil=True)
def _smooth_into(log_e, T, init, post, alpha, beta, scale):
    if log_e.shape[0] == 0:
        return
    if not _smooth_scaled(log_e, T, init, post, alpha, beta, scale):
        _smooth_log(log_e, T, init, post, alpha, beta)


def smooth(log_emissions, transition, initial) -> np.ndarray:
    """Smoothed marginals ``P(X_i = s | all observations)``.

    ``log_emissions`` has shape (n, K). Uses per-step scaling and falls back
    to a log-space recursion when a scale factor underflows.
    """
    log_e = np.ascontiguousarray(log_emissions, dtype=np.float64)
    n, k = log_e.shape
    post = np.empty((n, k))
    _smooth_into(log_e, np.ascontiguousarray(transition, dtype=np.float64),
                 np.ascontiguousarray(initial, dtype=np.float64),
                 post, np.empty((n, k)), np.empty((n, k)), np.empty(n))
    return post


def log_emissions(delta_t, bg_rate, aligned, model: RenewalHmmModel) -> np.ndarray:
    """Per-observation, per-state log densities (shape (n, K))."""
    delta_t = np.ascontiguousarray(delta_t, dtype=np.float64)
    bg_rate = np.ascontiguousarray(bg_rate, dtype=np.float64)
    if aligned is None:
        aligned = np.full(len(delta_t), ALIGN_UNKNOWN, dtype=np.int8)
    aligned = np.ascontiguousarray(aligned, dtype=np.int8)
    log_a, log_na = model.alignment_logs()
    out = np.empty((len(delta_t), model.n_states))
    _log_emissions_into(delta_t, bg_rate, aligned, model.extra_rate, log_a, log_na, out)
    return out


def emission_log_density(obs: Observation, state: int, model: RenewalHmmModel) -> float:
    aligned = ALIGN_UNKNOWN if obs.aligned is None else int(bool(obs.aligned))
    return float(log_emissions([obs.delta_t], [obs.local_bg_rate], [aligned], model)[0, state])


def encode_alignment(observations: Sequence[Observation]) -> np.ndarray:
    return np.array([ALIGN_UNKNOWN if o.aligned is None else int(bool(o.aligned)) for o in observations],
                    dtype=np.int8)


def forward_backward(observations: Sequence[Observation], model: RenewalHmmModel) -> np.ndarray:
    """Posterior state marginals for an ordered sequence of observations.

    Returns an array of shape (n, K); each row sums to one.
    """
    if len(observations) == 0:
        return np.empty((0, model.n_states))
    log_e = log_emissions([o.delta_t for o in observations],
                          [o.local_bg_rate for o in observations],
                          encode_alignment(observations), model)
    return smooth(log_e, model.transition, model.initial)
