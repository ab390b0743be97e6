"""Fidelity and best-fit cat amplitudes."""

from __future__ import annotations

import math
from typing import Union

import numpy as np
from scipy.optimize import minimize_scalar

from .fock import CutoffTooSmall, DensityOperator, DimensionMismatch, FockVector, cat_state

StateLike = Union[FockVector, DensityOperator, np.ndarray]


def _unwrap(state: StateLike) -> np.ndarray:
    if isinstance(state, FockVector):
        return state.amps
    if isinstance(state, DensityOperator):
        return state.matrix
    return np.asarray(state, dtype=complex)


def _floor(w: np.ndarray) -> np.ndarray:
    # eigenvalues below the roundoff floor of eigh are indistinguishable from zero
    tol = w.size * np.finfo(float).eps * max(float(np.abs(w).max(initial=0.0)), 1e-300)
    return np.where(w > tol, w, 0.0)


def _sqrtm_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return (v * np.sqrt(_floor(w))) @ v.conj().T


def fidelity(rho1: StateLike, rho2: StateLike) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(rho1) rho2 sqrt(rho1)))^2``.

    Either argument may be a state vector, in which case the formula reduces
    to ``<psi|rho|psi>``.  Inputs are used as given (no renormalization).
    """
    if isinstance(rho1, (FockVector, DensityOperator)) and isinstance(rho2, (FockVector, DensityOperator)):
        if rho1.register.dims != rho2.register.dims:
            raise DimensionMismatch(f"{rho1.register} vs {rho2.register}")
    a, b = _unwrap(rho1), _unwrap(rho2)
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"dimensions {a.shape} and {b.shape} differ")
    if a.ndim == 1 and b.ndim == 1:
        return float(abs(np.vdot(a, b)) ** 2)
    if a.ndim == 1:
        return float(np.real(a.conj() @ b @ a))
    if b.ndim == 1:
        return float(np.real(b.conj() @ a @ b))
    s = _sqrtm_psd(a)
    m = s @ b @ s
    w = _floor(np.linalg.eigvalsh(0.5 * (m + m.conj().T)))
    return float(np.sum(np.sqrt(w)) ** 2)


def _orientation(state: StateLike, parity: str) -> float:
    """Phase of the cat amplitude suggested by the two lowest populated levels."""
    data = _unwrap(state)
    start = 0 if parity == "+" else 1
    diag = np.abs(data) ** 2 if data.ndim == 1 else np.abs(np.diag(data))
    for k in range(start, data.shape[0] - 2, 2):
        if diag[k] > 1e-12:
            ratio = data[k + 2] * np.conj(data[k]) if data.ndim == 1 else data[k + 2, k]
            return 0.5 * float(np.angle(ratio)) if abs(ratio) > 1e-300 else 0.0
    return 0.0


def fit_cat(state: StateLike, parity: str, g_max: float = 3.0) -> tuple[complex, float]:
    """Cat amplitude with the largest fidelity to a single-mode ``state``.

    The orientation of the amplitude in phase space is read off the state's
    lowest two populated levels of the matching parity; the magnitude comes
    from a 1-D scan followed by a bounded refinement.  Returns
    ``(gamma, fidelity)``.
    """
    data = _unwrap(state)
    cutoff = data.shape[0] - 1
    phase = np.exp(1j * _orientation(data, parity))
    lo = 1e-3

    def neg_fid(g: float) -> float:
        try:
            cat = cat_state(g * phase, parity, cutoff)
        except CutoffTooSmall:
            return 0.0
        return -fidelity(cat.amps, data)

    grid = np.linspace(lo, g_max, 121)
    vals = [neg_fid(g) for g in grid]
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(neg_fid, bounds=(a, b), method="bounded", options={"xatol": 1e-10})
    return complex(float(res.x) * phase), -float(res.fun)


def cat_amplitude_ratio(minus: StateLike, plus: StateLike) -> float:
    """``|gamma_minus| / |gamma_plus|`` of the best-fit cats."""
    g_minus, _ = fit_cat(minus, "-")
    g_plus, _ = fit_cat(plus, "+")
    return abs(g_minus) / abs(g_plus) if abs(g_plus) > 0 else math.inf
