"""Homodyne sampling, maximum-likelihood reconstruction and Wigner functions.

Quadratures follow ``x_theta = (a e^{-i theta} + a^dag e^{i theta})/sqrt(2)``;
the eigenvector of ``x_theta`` with eigenvalue ``x`` is
``sum_n psi_n(x) e^{i n theta} |n>`` with ``psi_n`` the Hermite functions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from .channels import LossChannel, apply_loss, loss_kraus
from .fock import DensityOperator, FockVector, State, single

X_RANGE = 6.0
CDF_POINTS = 4096


def default_phases(n: int = 12) -> tuple[float, ...]:
    return tuple(k * math.pi / n for k in range(n))


@dataclass(frozen=True)
class QuadratureSample:
    theta: float
    x: float

    def __post_init__(self):
        if not 0.0 <= self.theta < math.pi:
            raise ValueError(f"theta {self.theta} outside [0, pi)")
        if not math.isfinite(self.x):
            raise ValueError("quadrature value must be finite")


@dataclass(frozen=True, eq=False)
class QuadratureData:
    """A batch of quadrature samples stored column-wise."""

    theta: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if theta.shape != x.shape or theta.ndim != 1:
            raise ValueError("theta and x must be 1-D arrays of equal length")
        if np.any((theta < 0) | (theta >= math.pi)) or not np.all(np.isfinite(x)):
            raise ValueError("invalid quadrature samples")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "x", x)

    def __len__(self) -> int:
        return self.x.size

    def __iter__(self) -> Iterator[QuadratureSample]:
        for t, x in zip(self.theta, self.x):
            yield QuadratureSample(float(t), float(x))

    @classmethod
    def from_samples(cls, samples: Sequence[QuadratureSample]) -> "QuadratureData":
        return cls(np.array([s.theta for s in samples]), np.array([s.x for s in samples]))

    def at_phase(self, theta: float) -> np.ndarray:
        return self.x[np.isclose(self.theta, theta)]


@dataclass(frozen=True)
class TomographySettings:
    n_samples: int = 2500
    phase_grid: tuple[float, ...] = field(default_factory=default_phases)
    eta: float = 0.55
    cutoff: int = 14
    max_iters: int = 2000
    log_likelihood_tol: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta {self.eta} outside (0, 1]")
        if self.n_samples <= 0:
            raise ValueError("n_samples must be positive")
        if not self.phase_grid:
            raise ValueError("phase_grid is empty")
        object.__setattr__(self, "phase_grid", tuple(float(t) for t in self.phase_grid))


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    rho: DensityOperator
    iterations: int
    final_log_likelihood: float
    converged: bool
    log_likelihoods: np.ndarray


def hermite_functions(x: np.ndarray, cutoff: int) -> np.ndarray:
    """``psi_n(x)`` for ``n = 0..cutoff``, shape ``(cutoff+1, len(x))``.

    Uses the stable three-term recurrence rather than explicit polynomials.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty((cutoff + 1, x.size))
    out[0] = math.pi ** -0.25 * np.exp(-0.5 * x * x)
    if cutoff >= 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for n in range(1, cutoff):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * x * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return out


def quadrature_vectors(theta: np.ndarray, x: np.ndarray, cutoff: int) -> np.ndarray:
    """Fock components of ``|x_theta>``, shape ``(len(x), cutoff+1)``."""
    n = np.arange(cutoff + 1)
    psi = hermite_functions(x, cutoff).T
    return psi * np.exp(1j * np.outer(np.atleast_1d(theta), n))


def _single_mode(rho: State) -> DensityOperator:
    rho = rho.dm()
    if len(rho.register) != 1:
        raise ValueError(f"expected a single-mode state, got modes {rho.register.labels}")
    return rho


def quadrature_pdf(rho: State, theta: float) -> Callable[[np.ndarray], np.ndarray]:
    """Homodyne marginal ``x -> <x_theta|rho|x_theta>`` at phase ``theta``."""
    rho = _single_mode(rho)
    m = rho.matrix
    cutoff = m.shape[0] - 1

    def pdf(x):
        vec = quadrature_vectors(np.full(np.size(x), theta), np.ravel(x), cutoff)
        vals = np.real(np.einsum("ia,ab,ib->i", vec.conj(), m, vec))
        return vals.reshape(np.shape(x)) if np.ndim(x) else float(vals[0])

    return pdf


def sample_quadratures(rho: State, settings: TomographySettings) -> QuadratureData:
    """Draw homodyne samples after detection loss ``settings.eta``.

    Phases cycle through ``settings.phase_grid``; values are drawn by
    inverting the CDF tabulated on a 4096-point grid over [-6, 6] with linear
    interpolation between grid points.
    """
    rho = _single_mode(rho)
    lossy = apply_loss(rho, LossChannel(settings.eta, rho.register.labels[0]))
    rng = np.random.default_rng(settings.seed)
    phases = np.asarray(settings.phase_grid)
    n = settings.n_samples
    theta = phases[np.arange(n) % phases.size]
    x = np.empty(n)
    grid = np.linspace(-X_RANGE, X_RANGE, CDF_POINTS)
    u = rng.random(n)
    for k, t in enumerate(phases):
        sel = np.arange(k, n, phases.size)
        if sel.size == 0:
            continue
        pdf = np.clip(quadrature_pdf(lossy, t)(grid), 0.0, None)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid))])
        cdf /= cdf[-1]
        x[sel] = np.interp(u[sel], cdf, grid)
    return QuadratureData(theta, x)


def povm_elements(data: QuadratureData, eta: float, cutoff: int) -> np.ndarray:
    """Efficiency-corrected POVM elements ``sum_k A_k^dag |x><x| A_k``, shape ``(N, d, d)``."""
    vec = quadrature_vectors(data.theta, data.x, cutoff)
    if eta == 1.0:
        return np.einsum("na,nb->nab", vec, vec.conj())
    kraus = loss_kraus(eta, cutoff)
    # v_k = A_k^dag |x>; A_k is real so A_k^dag = A_k^T
    v = np.einsum("kab,na->nkb", kraus, vec)
    return np.einsum("nka,nkb->nab", v, v.conj())


def _hermitian_features(m: np.ndarray) -> np.ndarray:
    """Real coordinates of Hermitian matrices with ``tr(A B) = f(A) . f(B)``."""
    d = m.shape[-1]
    iu = np.triu_indices(d, 1)
    upper = m[..., iu[0], iu[1]] * math.sqrt(2.0)
    diag = np.real(np.diagonal(m, axis1=-2, axis2=-1))
    return np.ascontiguousarray(np.concatenate([diag, upper.real, upper.imag], axis=-1))


def _from_features(f: np.ndarray, d: int) -> np.ndarray:
    iu = np.triu_indices(d, 1)
    k = iu[0].size
    out = np.diag(f[:d]).astype(complex)
    out[iu] = (f[d:d + k] + 1j * f[d + k:]) / math.sqrt(2.0)
    out[iu[1], iu[0]] = np.conj(out[iu])
    return out


def maxlik_reconstruct(data: QuadratureData | Sequence[QuadratureSample], settings: TomographySettings,
                       eta: Optional[float] = None) -> ReconstructionResult:
    """Iterative ``R rho R`` maximum-likelihood reconstruction.

    The detector efficiency (``eta`` or ``settings.eta``) is folded into the
    POVM, so the estimate refers to the state before loss.  Identical samples
    are merged with multiplicities before iterating.
    """
    if len(data) == 0:
        raise ValueError("no samples to reconstruct from")
    if not isinstance(data, QuadratureData):
        data = QuadratureData.from_samples(data)
    eta = settings.eta if eta is None else eta
    d = settings.cutoff + 1
    pairs = np.stack([data.theta, data.x], axis=1)
    uniq, counts = np.unique(pairs, axis=0, return_counts=True)
    merged = QuadratureData(uniq[:, 0], uniq[:, 1])
    weights = counts.astype(float)
    feats = _hermitian_features(povm_elements(merged, eta, settings.cutoff))

    rho = np.eye(d, dtype=complex) / d
    history = []
    converged = False
    iterations = 0
    for iterations in range(1, settings.max_iters + 1):
        probs = feats @ _hermitian_features(rho)
        probs = np.clip(probs, 1e-300, None)
        ll = float(weights @ np.log(probs))
        history.append(ll)
        if len(history) > 1 and history[-1] - history[-2] < settings.log_likelihood_tol * abs(history[-2]):
            converged = True
            break
        r = _from_features((weights / probs) @ feats, d)
        rho = r @ rho @ r
        rho = 0.5 * (rho + rho.conj().T)
        rho /= np.real(np.trace(rho))
    out = DensityOperator(single("HC", settings.cutoff), rho)
    return ReconstructionResult(out, iterations, history[-1], converged, np.array(history))


# -- Wigner function -----------------------------------------------------------


@dataclass(frozen=True)
class WignerGrid:
    x_min: float = -4.0
    x_max: float = 4.0
    p_min: float = -4.0
    p_max: float = 4.0
    n: int = 81

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linspace(self.x_min, self.x_max, self.n), np.linspace(self.p_min, self.p_max, self.n)


def displacement_elements(beta: np.ndarray, cutoff: int) -> np.ndarray:
    """``<m|D(beta)|n>`` for all ``m, n <= cutoff``, shape ``(d, d, *beta.shape)``.

    Closed form via associated Laguerre polynomials; exact, no truncation of
    the displacement itself.
    """
    beta = np.asarray(beta, dtype=complex)
    d = cutoff + 1
    b2 = np.abs(beta) ** 2
    env = np.exp(-0.5 * b2)
    out = np.empty((d, d) + beta.shape, dtype=complex)
    for m in range(d):
        for n in range(d):
            if m >= n:
                coef = math.exp(0.5 * (gammaln(n + 1) - gammaln(m + 1)))
                out[m, n] = coef * beta ** (m - n) * env * eval_genlaguerre(n, m - n, b2)
            else:
                coef = math.exp(0.5 * (gammaln(m + 1) - gammaln(n + 1)))
                out[m, n] = coef * (-np.conj(beta)) ** (n - m) * env * eval_genlaguerre(m, n - m, b2)
    return out


def displaced_parity(alpha: np.ndarray, cutoff: int) -> np.ndarray:
    """Matrix elements of ``D(alpha) (-1)^n D(-alpha) = D(2 alpha) (-1)^n``."""
    dmat = displacement_elements(2.0 * np.asarray(alpha, dtype=complex), cutoff)
    sign = (-1.0) ** np.arange(cutoff + 1)
    return dmat * sign.reshape((1, -1) + (1,) * (dmat.ndim - 2))


def wigner_points(rho: State, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """``W(x, p) = tr[rho D(alpha) (-1)^n D(-alpha)] / pi`` with ``alpha = (x + i p)/sqrt(2)``."""
    rho = _single_mode(rho)
    alpha = (np.asarray(x, dtype=float) + 1j * np.asarray(p, dtype=float)) / math.sqrt(2.0)
    ops = displaced_parity(alpha, rho.matrix.shape[0] - 1)
    # tr(rho O) = sum_{mn} rho_nm O_mn
    return np.real(np.einsum("nm,mn...->...", rho.matrix, ops)) / math.pi


def wigner(rho: State, grid: WignerGrid = WignerGrid()) -> np.ndarray:
    """Wigner function on ``grid``; entry ``[i, j]`` is ``W(x_i, p_j)``."""
    xs, ps = grid.axes()
    xx, pp = np.meshgrid(xs, ps, indexing="ij")
    return wigner_points(rho, xx, pp)


def parity_origin(rho: State) -> float:
    """``W(0, 0)`` from the photon-number parity ``sum_n (-1)^n rho_nn / pi``."""
    diag = np.real(np.diag(_single_mode(rho).matrix))
    return float(np.sum(diag * (-1.0) ** np.arange(diag.size)) / math.pi)


# -- CSV formats ----------------------------------------------------------------


def write_quadratures_csv(path, data: QuadratureData) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("theta,x\n")
        for t, x in zip(data.theta, data.x):
            fh.write(f"{t:.17g},{x:.17g}\n")


def read_quadratures_csv(path) -> QuadratureData:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["theta", "x"]:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        rows = [(float(r["theta"]), float(r["x"])) for r in reader]
    arr = np.array(rows, dtype=float).reshape(-1, 2)
    return QuadratureData(arr[:, 0], arr[:, 1])


def write_wigner_csv(path, w: np.ndarray, grid: WignerGrid) -> None:
    xs, ps = grid.axes()
    with open(path, "w", newline="") as fh:
        fh.write("x,p,w\n")
        for i, x in enumerate(xs):
            for j, p in enumerate(ps):
                fh.write(f"{x:.17g},{p:.17g},{w[i, j]:.17g}\n")
