"""Derived figures of merit: two-mode assembly from conditional tomograms,
an entanglement-fidelity lower bound, Bloch-averaged teleportation fidelity
and detection-rate estimates.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .channels import POLARIZATIONS
from .fock import DensityOperator, FockError, FockVector, ModeRegister, cat_state, project
from .metrics import fidelity
from .protocol import CV, ProtocolParams, teleport_mixture_model

__all__ = [
    "fidelity",
    "MissingProjection",
    "NonPhysicalBound",
    "ConditionalTomogramSet",
    "psd_project",
    "assemble_two_mode",
    "CatBasis",
    "cat_basis",
    "EntanglementBound",
    "entanglement_bound",
    "max_entangled_state",
    "BlochAverage",
    "mean_bloch_fidelity",
    "RateParams",
    "rates",
    "report",
]

log = logging.getLogger(__name__)

LABELS = ("H", "V", "D", "A", "L", "R")
BASES = (("H", "V"), ("D", "A"), ("L", "R"))
CLASSICAL_BENCHMARK = 2.0 / 3.0


class MissingProjection(KeyError):
    pass


class NonPhysicalBound(FockError, ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ConditionalTomogramSet:
    """Normalized mode-C states heralded by polarization outcomes, with probabilities.

    ``entries[label] = (rho, prob)`` for labels among H, V, D, A, L, R.
    ``qubit`` names the heralding mode used when the set is reassembled.
    """

    entries: dict[str, tuple[DensityOperator, float]]
    qubit: str = "A"

    def __post_init__(self):
        for label, (rho, prob) in self.entries.items():
            if label not in POLARIZATIONS:
                raise ValueError(f"unknown polarization label {label!r}")
            if prob < 0:
                raise ValueError(f"negative probability for {label}")

    def __getitem__(self, label: str) -> tuple[DensityOperator, float]:
        try:
            return self.entries[label]
        except KeyError:
            raise MissingProjection(label) from None

    def require(self, labels) -> None:
        missing = [k for k in labels if k not in self.entries]
        if missing:
            raise MissingProjection(", ".join(missing))

    def weighted(self, label: str) -> np.ndarray:
        """``prob * rho`` for ``label``."""
        rho, prob = self[label]
        return prob * rho.matrix

    def basis_total(self, pair: tuple[str, str]) -> float:
        return self[pair[0]][1] + self[pair[1]][1]

    def validate(self, rtol: float = 0.05) -> None:
        """Check that every measured basis sees the same total heralding probability."""
        totals = [self.basis_total(p) for p in BASES if all(k in self.entries for k in p)]
        if len(totals) > 1:
            ref = float(np.mean(totals))
            if ref <= 0 or max(abs(t - ref) for t in totals) > rtol * ref:
                raise ValueError(f"basis totals disagree: {totals}")

    @property
    def cv_register(self) -> ModeRegister:
        return next(iter(self.entries.values()))[0].register

    @classmethod
    def from_state(cls, rho, labels=LABELS) -> "ConditionalTomogramSet":
        """Exact conditionals of a (qubit, CV) state for the given polarization outcomes."""
        rho = rho.dm()
        qubit = rho.register.labels[0]
        entries = {}
        for label in labels:
            a, b = POLARIZATIONS[label]
            out = project(rho, np.array([np.conj(a), np.conj(b)]), [qubit])
            prob = out.trace
            matrix = out.matrix / prob if prob > 0 else out.matrix
            entries[label] = (DensityOperator(out.register, matrix), prob)
        return cls(entries, qubit)


def psd_project(matrix: np.ndarray) -> tuple[np.ndarray, float]:
    """Clip negative eigenvalues and renormalize; returns (matrix, clipped mass)."""
    m = 0.5 * (matrix + matrix.conj().T)
    w, v = np.linalg.eigh(m)
    clipped = float(-w[w < 0].sum())
    w = np.clip(w, 0.0, None)
    out = (v * w) @ v.conj().T
    return out / np.trace(out).real, clipped


def assemble_two_mode(tomograms: ConditionalTomogramSet, psd_tol: float = 1e-6) -> DensityOperator:
    """Rebuild the (qubit, CV) operator from six probability-weighted conditionals.

    Diagonal blocks come from H and V; the coherence block is
    ``(W_D - W_A + i W_L - i W_R) / 2``.  If the result has an eigenvalue
    below ``-psd_tol`` it is projected onto the positive cone.
    """
    tomograms.require(LABELS)
    w = {k: tomograms.weighted(k) for k in LABELS}
    hv = 0.5 * (w["D"] - w["A"] + 1j * w["L"] - 1j * w["R"])
    m = np.block([[w["H"], hv], [hv.conj().T, w["V"]]])
    m = m / np.trace(m).real
    if np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min() < -psd_tol:
        m, clipped = psd_project(m)
        log.info("assembled operator projected to PSD cone, clipped mass %.3e", clipped)
    cv = tomograms.cv_register
    reg = ModeRegister(((tomograms.qubit, 1),) + cv.entries)
    return DensityOperator(reg, m)


@dataclass(frozen=True, eq=False)
class CatBasis:
    """Orthonormalized ``{plus, minus}`` pair and the raw overlap of the cats it came from."""

    plus: np.ndarray
    minus: np.ndarray
    raw_overlap: complex

    @property
    def diag(self) -> np.ndarray:
        return (self.plus + self.minus) / math.sqrt(2.0)

    @property
    def anti(self) -> np.ndarray:
        return (self.plus - self.minus) / math.sqrt(2.0)


def cat_basis(gamma_plus: complex, gamma_minus: complex, cutoff: int) -> CatBasis:
    """Gram-Schmidt ``Theta-`` against ``Theta+``.

    Cats of opposite parity are orthogonal for any amplitudes, so the
    correction is at roundoff level; the raw overlap is kept for reporting.
    """
    p = cat_state(gamma_plus, "+", cutoff, CV).amps
    m = cat_state(gamma_minus, "-", cutoff, CV).amps
    raw = complex(np.vdot(p, m))
    m = m - raw * p
    return CatBasis(p.copy(), m / np.linalg.norm(m), raw)


def max_entangled_state(basis: CatBasis, qubit: str = "A") -> FockVector:
    """``(|H>|Theta+> - |V>|Theta->)/sqrt(2)`` on (qubit, CV)."""
    cutoff = basis.plus.size - 1
    reg = ModeRegister(((qubit, 1), (CV, cutoff)))
    return FockVector(reg, np.concatenate([basis.plus, -basis.minus]) / math.sqrt(2.0))


@dataclass(frozen=True)
class EntanglementBound:
    value: float
    certified: bool
    raw_overlap: complex
    diagonal: tuple[float, float, float, float]
    cross_term: float


def _expect(vec: np.ndarray, m: np.ndarray) -> float:
    return float(np.real(vec.conj() @ m @ vec))


def entanglement_bound(tomograms: ConditionalTomogramSet, gamma_plus: complex,
                       gamma_minus: complex) -> EntanglementBound:
    """Lower bound on the fidelity with ``(|H>|Theta+> - |V>|Theta->)/sqrt(2)``.

    Uses only the H, V, D and A conditionals.  With ``e1..e4`` the product
    basis ``H+, H-, V+, V-``,
    ``F = (rho11 + rho44 - X + 2 Re rho23) / 2`` where
    ``X = rho_{D,D} + rho_{A,A} - rho_{D,A} - rho_{A,D}`` collects the
    diagonal-basis outcomes projected on ``Theta_D``/``Theta_A``, and
    ``|rho23| <= sqrt(rho22 rho33)``.  Each basis pair is normalized by its
    own total probability.
    """
    tomograms.require(("H", "V", "D", "A"))
    cutoff = tomograms.cv_register.cutoff(CV)
    basis = cat_basis(gamma_plus, gamma_minus, cutoff)
    t_hv = tomograms.basis_total(("H", "V"))
    t_da = tomograms.basis_total(("D", "A"))
    if t_hv <= 0 or t_da <= 0:
        raise ValueError("zero heralding probability in a basis")
    wh = tomograms.weighted("H") / t_hv
    wv = tomograms.weighted("V") / t_hv
    wd = tomograms.weighted("D") / t_da
    wa = tomograms.weighted("A") / t_da
    p, m = basis.plus, basis.minus
    r11, r22 = _expect(p, wh), _expect(m, wh)
    r33, r44 = _expect(p, wv), _expect(m, wv)
    x = (_expect(basis.diag, wd) + _expect(basis.anti, wa)
         - _expect(basis.anti, wd) - _expect(basis.diag, wa))
    value = 0.5 * (r11 + r44 - x - 2.0 * math.sqrt(max(r22, 0.0) * max(r33, 0.0)))
    if value > 1.0 + 1e-6:
        raise NonPhysicalBound(f"bound {value} exceeds 1")
    # a bound sitting on 1/2 within roundoff certifies nothing
    return EntanglementBound(value, value > 0.5 + 1e-9, basis.raw_overlap, (r11, r22, r33, r44), x)


@dataclass(frozen=True, eq=False)
class BlochAverage:
    mean: float
    min: float
    max: float
    theta: np.ndarray
    phi: np.ndarray
    fidelity_map: np.ndarray

    @property
    def beats_classical(self) -> bool:
        return self.mean > CLASSICAL_BENCHMARK

    def rows(self):
        for i, t in enumerate(self.theta):
            for j, p in enumerate(self.phi):
                yield float(t), float(p), float(self.fidelity_map[i, j])


def _grid_shape(n_grid: int) -> tuple[int, int]:
    n_theta = max(int(round(math.sqrt(n_grid))), 1)
    return n_theta, max(int(round(n_grid / n_theta)), 1)


def mean_bloch_fidelity(params: ProtocolParams = ProtocolParams(), n_grid: int = 10_000,
                        phi_origin: float = 0.0) -> BlochAverage:
    """Teleportation fidelity of the double-B mixture model averaged over input states.

    The input ``cos(theta/2)|H> + e^{i phi} sin(theta/2)|V>`` runs over a grid
    uniform in ``cos(theta)`` and ``phi`` (cell midpoints), which weights the
    Bloch sphere by area.  ``phi_origin`` shifts the azimuthal grid.
    """
    if n_grid < 100:
        raise ValueError("n_grid must be at least 100")
    n_t, n_p = _grid_shape(n_grid)
    cos_t = 1.0 - (2.0 * np.arange(n_t) + 1.0) / n_t
    theta = np.arccos(cos_t)
    phi = phi_origin + 2.0 * math.pi * (np.arange(n_p) + 0.5) / n_p

    alpha, beta = params.model_amplitudes()
    c = params.cutoff_cv
    cp = cat_state(params.gamma_plus, "+", c, CV).amps
    cm = cat_state(params.gamma_minus, "-", c, CV).amps
    p_db = params.ratio_pdb_pgood_at_H * beta ** 2 / 2.0

    # the target is pure, so F = <t|rho|t> = (p_good + p_dB |<t|cat+>|^2) / (p_good + p_dB)
    a = np.cos(theta / 2.0)[:, None] * np.ones_like(phi)[None, :]
    b = np.sin(theta / 2.0)[:, None] * np.exp(1j * phi)[None, :]
    s_mm = np.vdot(cm, cm).real
    s_pp = np.vdot(cp, cp).real
    s_mp = np.vdot(cm, cp)
    # phi = a beta cat- - b alpha cat+ ; cats of opposite parity are orthogonal
    norm2 = (np.abs(a * beta) ** 2 * s_mm + np.abs(b * alpha) ** 2 * s_pp
             - 2.0 * np.real(np.conj(a * beta) * b * alpha * s_mp))
    p_good = norm2 / 2.0
    proj = (np.conj(a * beta) * np.vdot(cm, cp) - np.conj(b * alpha) * s_pp)
    overlap2 = np.abs(proj) ** 2 / norm2
    fmap = (p_good + p_db * overlap2) / (p_good + p_db)
    return BlochAverage(float(fmap.mean()), float(fmap.min()), float(fmap.max()), theta, phi, fmap)


def bloch_point_fidelity(a: complex, b: complex, params: ProtocolParams) -> float:
    """Fidelity of the mixture model for one input, via full density operators."""
    rho, target = teleport_mixture_model(a, b, params)
    return fidelity(target, rho)


@dataclass(frozen=True)
class RateParams:
    R_rep: float = 76e6
    R_B: float = 4e3
    R_alpha: float = 18e3
    R_beta: float = 6e3
    eta_spcm: float = 0.01
    a: complex = 1.0
    b: complex = 0.0

    def __post_init__(self):
        for name in ("R_rep", "R_B", "R_alpha", "R_beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.R_rep <= 0:
            raise ValueError("R_rep must be positive")
        if not 0.0 < self.eta_spcm <= 1.0:
            raise ValueError(f"eta_spcm {self.eta_spcm} outside (0, 1]")


@dataclass(frozen=True)
class Rates:
    p_dB: float
    p_good: float
    triple_rate_hz: float


def rates(params: RateParams = RateParams()) -> Rates:
    """Per-pulse probabilities of double-B and good Bell events and the triple-coincidence rate.

    ``p_dB = 3/2 eta R_B^2 / R^2`` and
    ``p_good = eta R_B (|b|^2 R_alpha + |a|^2 R_beta) / R^2``.
    """
    r2 = params.R_rep ** 2
    p_db = 1.5 * params.eta_spcm * params.R_B ** 2 / r2
    p_good = params.eta_spcm * params.R_B * (abs(params.b) ** 2 * params.R_alpha
                                             + abs(params.a) ** 2 * params.R_beta) / r2
    return Rates(p_db, p_good, params.R_rep * (p_good + p_db))


def report(fidelities: Optional[dict] = None, bound: Optional[EntanglementBound] = None,
           bloch: Optional[BlochAverage] = None, rate: Optional[Rates] = None) -> str:
    """JSON analysis report; absent sections are written as null."""
    payload = {
        "fidelities": fidelities or {},
        "entanglement_bound": None if bound is None else bound.value,
        "mean_bloch_fidelity": None if bloch is None else bloch.mean,
        "rates": None if rate is None else asdict(rate),
    }
    return json.dumps(payload, indent=2, sort_keys=True)
