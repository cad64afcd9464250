"""Smooth Takagi factorization along one-parameter paths.

Given a path ``t -> A(t)`` of complex symmetric matrices with distinct,
positive singular values, the factors U(t), S(t) evolve by

    dS_k/dt = Re(U^* dA/dt conj(U))_kk
    dU/dt   = U H,   H skew-Hermitian,

with H determined entrywise from ``K = U^* dA/dt conj(U)`` by
``H_kk = i Im(K_kk) / (2 sigma_k)`` and, for k != j,
``H_kj = Re(K_kj)/(sigma_j - sigma_k) + i Im(K_kj)/(sigma_j + sigma_k)``.

The stepper predicts (U, S) at t + h with one Euler step built from the
finite difference (A(t+h) - A(t))/h, refactorizes exactly at t + h, and
uses the prediction only to pick the column signs, so accepted nodes are
always exact factorizations.  The step size adapts to the prediction
error and to secant forecasts of singular-value crossings; a persistent
shrink below the floor means the path runs too close to a degeneracy and
continuation halts.
"""

import csv
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import DegenerateInput, StepFloor
from .takagi_core import TakagiPair, takagi_factor

EPS = float(np.finfo(float).eps)

COMPLETED = "completed"
HALTED = "halted_near_degeneracy"


@dataclass(frozen=True)
class ContinuationControls:
    """Step-control knobs for the predictor-corrector loop.

    ``tolstep`` is the prediction-error budget per step; the step is
    accepted when ``max(rho_sigma, rho_U) <= 1.5 * tolstep``.  ``h_min``
    is the halting floor, ``h_max`` and ``growth`` cap step growth after
    very accurate steps (the raw update h/rho diverges on constant
    paths).  ``tol_distinct`` is forwarded to the factorization kernel;
    ``sign_floor`` is the minimum |Re diag(U_new^* U_pred)| below which
    sign matching is not trusted and the step is retried smaller.
    """

    tolstep: float = 1e-2
    h_init: float = 1.0 / 64.0
    h_min: float = 100.0 * EPS
    h_max: float = 0.1
    growth: float = 2.0
    tol_distinct: float = 1e-8
    sign_floor: float = 0.1
    backend: str = "svd"


@dataclass(frozen=True)
class ContinuationState:
    """Current node of a continued path: parameter, factors, step size."""

    t: float
    pair: TakagiPair
    h: float
    controls: ContinuationControls = field(default_factory=ContinuationControls)


class PCStepResult(NamedTuple):
    accepted: bool
    state: ContinuationState
    rho: float
    rho_sigma: float
    rho_u: float


class TracePoint(NamedTuple):
    t: float
    sigma: np.ndarray
    h: float
    rho: float


@dataclass(frozen=True)
class ContinuationResult:
    status: str
    final: TakagiPair
    trace: tuple
    t_end: float


def _skew_from(K, S, tol_distinct):
    """Skew-Hermitian matrix of the factor evolution built from K.

    K is ``U^* X conj(U)`` for X symmetric (so K is complex symmetric);
    the divisions require S descending with gaps and smallest value above
    ``tol_distinct * S[0]``.
    """
    top = S[0]
    if top <= 0.0 or S[-1] <= tol_distinct * top:
        raise DegenerateInput(DegenerateInput.RANK_DEFICIENT)
    gaps = S[:-1] - S[1:]
    bad = np.nonzero(gaps <= tol_distinct * top)[0]
    if bad.size:
        raise DegenerateInput(DegenerateInput.COALESCENT, pair=int(bad[0]) + 1)
    diff = S[None, :] - S[:, None]  # diff[k, j] = sigma_j - sigma_k
    total = S[None, :] + S[:, None]
    np.fill_diagonal(diff, 1.0)  # placeholder, diagonal overwritten below
    H = K.real / diff + 1j * (K.imag / total)
    np.fill_diagonal(H, 1j * (np.diagonal(K).imag / (2.0 * S)))
    return H


def ode_rhs(Adot, pair, tol_distinct=1e-8):
    """Time derivatives (Sdot, H) of the factors for a given dA/dt.

    Returns the vector of singular-value derivatives and the
    skew-Hermitian H with dU/dt = U @ H.
    """
    U, S = pair
    K = U.conj().T @ np.asarray(Adot, dtype=complex) @ U.conj()
    Sdot = np.real(np.diagonal(K)).copy()
    return Sdot, _skew_from(K, S, tol_distinct)


def predict(pair, A_next, tol_distinct=1e-8):
    """One Euler step of the factor evolution toward A(t + h).

    The finite difference (A(t+h) - A(t))/h folded into the Euler update
    cancels h, so the prediction depends only on
    ``A_U = U^* A(t+h) conj(U)``: the skew generator is built from A_U
    and ``S_pred = Re diag(A_U)``.
    """
    U, S = pair
    Uc = np.conj(U)
    A_U = Uc.T @ A_next @ Uc
    Hcal = _skew_from(A_U, S, tol_distinct)
    Upred = U + U @ Hcal
    Spred = np.real(np.diagonal(A_U)).copy()
    return Upred, Spred


def _signs(d):
    # sign(0) := +1 keeps the correction deterministic.
    z = np.ones_like(d)
    z[d < 0.0] = -1.0
    return z


def pc_step(state, path):
    """One predictor-corrector step along ``path`` from ``state``.

    Returns a :class:`PCStepResult`; on a rejected step the returned
    state keeps (t, pair) and carries the reduced h for the retry.
    Raises :class:`~takagi_scan.errors.StepFloor` when a reduction sends
    h below the floor, which signals a degeneracy close to the path.
    """
    c = state.controls
    if state.h < c.h_min:
        raise StepFloor(state.t, state.h)
    h = min(state.h, 1.0 - state.t)
    t_new = state.t + h
    if 1.0 - t_new < c.h_min:
        t_new = 1.0

    def _fail(h_reduced):
        if h_reduced < c.h_min:
            raise StepFloor(state.t, h_reduced)
        return PCStepResult(False, replace(state, h=h_reduced), np.inf, np.inf, np.inf)

    # takagi_factor validates and re-symmetrizes the evaluation itself;
    # the prediction can use the raw value.
    A_next = path(t_new)
    U_old, S_old = state.pair
    n = S_old.shape[0]
    try:
        Upred, Spred = predict(state.pair, A_next, c.tol_distinct)
        corrected = takagi_factor(A_next, tol_distinct=c.tol_distinct, backend=c.backend)
    except DegenerateInput:
        return _fail(h / 2.0)
    U_new, S_new = corrected

    d = np.real(np.einsum("ij,ij->j", np.conj(U_new), Upred))
    if np.min(np.abs(d)) < c.sign_floor:
        return _fail(h / 2.0)
    U_corr = U_new * _signs(d)

    diff = U_corr - Upred
    rho_u = np.sqrt(np.vdot(diff, diff).real / n)
    rho_s = np.max(np.abs(S_new - Spred) / (np.abs(S_new) + 1.0))
    rho = max(rho_s, rho_u) / c.tolstep
    # h is updated before the accept test; a failed step retries with the
    # already-reduced value.
    if rho > 0.0:
        h_next = min(h / rho, c.growth * h, c.h_max)
    else:
        h_next = min(c.growth * h, c.h_max)
    if rho > 1.5:
        return _fail(h_next)

    if t_new < 1.0:
        # Secant forecast of the singular values one step ahead; shrink h
        # when an ordering violation or a sign change is predicted.
        sdot = (S_new - S_old) / h
        s_sec = S_new + h_next * sdot
        if n > 1:
            crossing = np.nonzero(s_sec[:-1] < s_sec[1:])[0]
            if crossing.size:
                denom = sdot[crossing + 1] - sdot[crossing]
                ok = denom > 0.0
                if np.any(ok):
                    h_sec = np.min((S_new[crossing][ok] - S_new[crossing + 1][ok]) / denom[ok])
                    h_next = min(h_next / 2.0, 0.9 * h_sec)
                else:
                    h_next = h_next / 2.0
        if S_new[-1] + h_next * sdot[-1] < 0.0:
            h_next = min(h_next / 2.0, 0.9 * S_new[-1] / abs(sdot[-1]))

    new_state = ContinuationState(t_new, TakagiPair(U_corr, S_new), h_next, c)
    return PCStepResult(True, new_state, rho, rho_s, rho_u)


def continue_path(path, initial=None, controls=None):
    """Continue the smooth factorization of ``path`` from t=0 to t=1.

    Parameters
    ----------
    path : callable
        ``t in [0, 1] -> complex symmetric matrix``; only values are
        needed, derivatives are approximated by finite differences.
    initial : TakagiPair, optional
        Factorization of ``path(0)`` fixing the branch; computed fresh
        when omitted.
    controls : ContinuationControls, optional

    Returns
    -------
    ContinuationResult
        ``status`` is :data:`COMPLETED` or :data:`HALTED` (step floor
        reached near a degeneracy; ``t_end`` is the last good node).
        ``trace`` records (t, sigma, h, rho) at every accepted node.
    """
    c = controls or ContinuationControls()
    if initial is None:
        initial = takagi_factor(path(0.0), tol_distinct=c.tol_distinct, backend=c.backend)
    state = ContinuationState(0.0, initial, c.h_init, c)
    trace = [TracePoint(0.0, initial.S.copy(), c.h_init, 0.0)]
    while state.t < 1.0:
        try:
            result = pc_step(state, path)
        except StepFloor:
            return ContinuationResult(HALTED, state.pair, tuple(trace), state.t)
        state = result.state
        if result.accepted:
            trace.append(TracePoint(state.t, state.pair.S.copy(), state.h, result.rho))
    return ContinuationResult(COMPLETED, state.pair, tuple(trace), state.t)


def reversed_path(path):
    """The same path traversed backward: t -> path(1 - t)."""
    return _ReversedPath(path)


@dataclass(frozen=True)
class _ReversedPath:
    path: object

    def __call__(self, t):
        return self.path(1.0 - t)


def write_trace_csv(path, trace):
    """Write accepted nodes as CSV with columns t, sigma_1..sigma_n, h, rho."""
    trace = list(trace)
    n = trace[0].sigma.shape[0] if trace else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"sigma{i + 1}" for i in range(n)] + ["h", "rho"])
        for node in trace:
            writer.writerow(
                [f"{node.t:.17g}"]
                + [f"{s:.17g}" for s in node.sigma]
                + [f"{node.h:.17g}", f"{node.rho:.17g}"]
            )
