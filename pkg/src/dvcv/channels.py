"""Beamsplitters, photon loss, polarization projectors and Bell projection.

A polarization qubit in spatial mode ``X`` is carried by two rails named
``"HX"`` and ``"VX"``; ``|H>`` is ``|1, 0>`` and ``|V>`` is ``|0, 1>`` on
those rails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

from .fock import (
    DensityOperator,
    DimensionMismatch,
    FockVector,
    ModeRegister,
    State,
    apply_matrix,
    lowering,
    project,
)

SQRT_HALF = 1.0 / math.sqrt(2.0)

# single-photon polarization states as (H, V) coefficients
POLARIZATIONS: dict[str, tuple[complex, complex]] = {
    "H": (1.0, 0.0),
    "V": (0.0, 1.0),
    "D": (SQRT_HALF, SQRT_HALF),
    "A": (SQRT_HALF, -SQRT_HALF),
    "R": (SQRT_HALF, 1j * SQRT_HALF),
    "L": (SQRT_HALF, -1j * SQRT_HALF),
}


def rails(mode: str) -> tuple[str, str]:
    return f"H{mode}", f"V{mode}"


@dataclass(frozen=True)
class BeamsplitterSpec:
    """Two-mode beamsplitter with intensity reflectivity ``reflectivity``.

    ``convention='real'`` maps a photon in the first mode to
    ``sqrt(T)|1,0> - sqrt(R)|0,1>`` and one in the second mode to
    ``sqrt(R)|1,0> + sqrt(T)|0,1>``.  ``convention='symmetric'`` uses
    ``i sqrt(R)`` for both cross terms.
    """

    reflectivity: float
    mode_pair: tuple[str, str]
    convention: str = "real"

    def __post_init__(self):
        if not 0.0 <= self.reflectivity <= 1.0:
            raise ValueError(f"reflectivity {self.reflectivity} outside [0, 1]")
        if self.convention not in ("real", "symmetric"):
            raise ValueError(f"unknown beamsplitter convention {self.convention!r}")


@lru_cache(maxsize=32)
def _beamsplitter_unitary(reflectivity: float, cutoff: int, convention: str) -> np.ndarray:
    theta = math.asin(math.sqrt(reflectivity))
    a = lowering(cutoff)
    eye = np.eye(cutoff + 1)
    a1 = np.kron(a, eye)
    a2 = np.kron(eye, a)
    hop = a2.conj().T @ a1  # moves a photon from mode 1 to mode 2
    if convention == "real":
        gen = theta * (hop.conj().T - hop)
    else:
        gen = 1j * theta * (hop + hop.conj().T)
    # the generator conserves total photon number, so exponentiating it on the
    # truncated space is exact on every block with n1 + n2 <= cutoff
    u = expm(gen)
    u.setflags(write=False)
    return u


def beamsplitter_unitary(reflectivity: float, cutoff: int, convention: str = "real") -> np.ndarray:
    return _beamsplitter_unitary(float(reflectivity), int(cutoff), convention)


def apply_beamsplitter(state: State, spec: BeamsplitterSpec) -> State:
    reg = state.register
    m1, m2 = spec.mode_pair
    c1, c2 = reg.cutoff(m1), reg.cutoff(m2)
    if c1 != c2:
        raise DimensionMismatch(f"beamsplitter modes have different cutoffs ({c1}, {c2})")
    u = beamsplitter_unitary(spec.reflectivity, c1, spec.convention)
    return apply_matrix(state, u, [m1, m2])


@dataclass(frozen=True)
class LossChannel:
    eta: float
    mode: str

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"efficiency {self.eta} outside [0, 1]")


def loss_kraus(eta: float, cutoff: int) -> np.ndarray:
    """Kraus operators ``A_k = sqrt((1-eta)^k / k!) eta^(n/2) a^k``, shape ``(K, d, d)``.

    ``<n|A_k|n+k> = sqrt(binom(n+k, k) eta^n (1-eta)^k)``.
    """
    d = cutoff + 1
    ops = np.zeros((d, d, d))
    for k in range(d):
        n = np.arange(d - k)
        if eta == 0.0:
            ops[k, 0, k] = 1.0
            continue
        if eta == 1.0:
            if k == 0:
                ops[0, n, n] = 1.0
            continue
        log_w = (
            gammaln(n + k + 1) - gammaln(n + 1) - gammaln(k + 1)
            + n * math.log(eta) + k * math.log1p(-eta)
        )
        ops[k, n, n + k] = np.exp(0.5 * log_w)
    return ops


def apply_loss(rho: State, channel: LossChannel) -> DensityOperator:
    rho = rho.dm()
    if channel.eta == 1.0:
        return rho
    kraus = loss_kraus(channel.eta, rho.register.cutoff(channel.mode))
    out = np.zeros_like(rho.matrix)
    for op in kraus:
        if not op.any():
            continue
        out = out + apply_matrix(rho, op, [channel.mode]).matrix
    return DensityOperator(rho.register, out)


@dataclass(frozen=True)
class PolarizationProjector:
    """Single-photon projector ``a* <H| + b* <V|`` on spatial mode ``mode``."""

    a: complex
    b: complex
    mode: str = "A"

    def __post_init__(self):
        norm = abs(self.a) ** 2 + abs(self.b) ** 2
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"|a|^2 + |b|^2 = {norm}, expected 1")

    @classmethod
    def named(cls, label: str, mode: str = "A") -> "PolarizationProjector":
        a, b = POLARIZATIONS[label]
        return cls(a, b, mode)

    def bra(self, cutoff_h: int, cutoff_v: int) -> np.ndarray:
        """Bra coefficients over the joint (H, V) rail space."""
        out = np.zeros((cutoff_h + 1, cutoff_v + 1), dtype=complex)
        out[1, 0] = np.conj(self.a)
        out[0, 1] = np.conj(self.b)
        return out.ravel()


def project_polarization(state: State, proj: PolarizationProjector) -> tuple[State, float]:
    """Herald on one photon in ``a|H> + b|V>`` of the projector's mode.

    Returns the unnormalized conditional state on the remaining modes and
    its squared norm.
    """
    h, v = rails(proj.mode)
    reg = state.register
    bra = proj.bra(reg.cutoff(h), reg.cutoff(v))
    out = project(state, bra, [h, v])
    return out, _weight(out)


def _weight(state: State) -> float:
    if isinstance(state, FockVector):
        return state.norm ** 2
    return state.trace


def bell_psi_minus_bra(cutoffs: tuple[int, int, int, int]) -> np.ndarray:
    """``(<H|<V| - <V|<H|)/sqrt(2)`` over rails ``(HX, VX, HY, VY)``."""
    out = np.zeros(tuple(c + 1 for c in cutoffs), dtype=complex)
    out[1, 0, 0, 1] = SQRT_HALF
    out[0, 1, 1, 0] = -SQRT_HALF
    return out.ravel()


def project_bell_psi_minus(state: State, mode_a: str = "A", mode_b: str = "B") -> tuple[State, float]:
    """Project two polarization qubits onto ``|Psi->``; returns (state, probability)."""
    modes = [*rails(mode_a), *rails(mode_b)]
    cutoffs = tuple(state.register.cutoff(m) for m in modes)
    out = project(state, bell_psi_minus_bra(cutoffs), modes)
    return out, _weight(out)


def bell_pair_psi_plus(
    visibility: float, mode_b: str = "B", mode_d: str = "D", cutoff: int = 2
) -> DensityOperator:
    """Polarization pair ``V |Psi+><Psi+| + (1-V)(|HV><HV| + |VH><VH|)/2``."""
    if not 0.0 <= visibility <= 1.0:
        raise ValueError(f"visibility {visibility} outside [0, 1]")
    reg = ModeRegister(tuple((m, cutoff) for m in (*rails(mode_b), *rails(mode_d))))
    hv = reg.flatten((1, 0, 0, 1))
    vh = reg.flatten((0, 1, 1, 0))
    rho = np.zeros((reg.size, reg.size), dtype=complex)
    rho[hv, hv] = rho[vh, vh] = 0.5
    rho[hv, vh] = rho[vh, hv] = 0.5 * visibility
    return DensityOperator(reg, rho)


def fringe_visibility(pair: DensityOperator, mode_b: str = "B", mode_d: str = "D",
                      fixed: str = "D", n_angles: int = 721) -> float:
    """Coincidence fringe visibility while rotating a linear analyzer on ``mode_d``.

    The analyzer on ``mode_b`` is held at polarization ``fixed``.
    """
    fixed_proj = PolarizationProjector.named(fixed, mode_b)
    heralded, _ = project_polarization(pair, fixed_proj)
    angles = np.linspace(0.0, math.pi, n_angles)
    rates = np.array([
        project_polarization(heralded, PolarizationProjector(math.cos(t), math.sin(t), mode_d))[1]
        for t in angles
    ])
    return float((rates.max() - rates.min()) / (rates.max() + rates.min()))


def single_photon(a: complex, b: complex, mode: str, cutoff: int = 2) -> FockVector:
    """``a|H> + b|V>`` on the rails of ``mode``."""
    reg = ModeRegister(tuple((m, cutoff) for m in rails(mode)))
    amps = np.zeros(reg.size, dtype=complex)
    amps[reg.flatten((1, 0))] = a
    amps[reg.flatten((0, 1))] = b
    return FockVector(reg, amps)
