"""End-to-end pipelines: resource preparation, remote state preparation,
teleportation and entanglement swapping.

Everything here is simulated exactly on the truncated Fock space.  The
first-order expressions (resource ``alpha|H>|cat+> + beta|V>|cat->`` and
friends) are provided as closed-form targets built from fitted cat states.

Mode names: ``HA``/``VA`` are the rails of the heralding mode A, ``HB``/``VB``
carry the input photon, ``HD``/``VD`` the partner photon of the Bell pair and
``HC`` is the continuous-variable mode.  DV-CV outputs are returned on a
qubit register ``(("A" or "D", 1), ("HC", cutoff))`` where index 0 is ``|H>``
and index 1 is ``|V>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .channels import (
    BeamsplitterSpec,
    PolarizationProjector,
    apply_beamsplitter,
    bell_pair_psi_plus,
    project_bell_psi_minus,
    project_polarization,
    rails,
    single_photon,
)
from .fock import (
    TRUNCATION_TOL,
    CutoffTooSmall,
    DensityOperator,
    FockError,
    FockVector,
    ModeRegister,
    cat_normalization,
    cat_state,
    coherent,
    project,
    reorder,
    single,
    squeezed_vacuum,
    tensor,
    truncate_mode,
    vacuum,
)
from .metrics import fit_cat

CV = "HC"


class ZeroProbability(FockError, ValueError):
    """A heralding event has (numerically) zero probability."""


@dataclass(frozen=True)
class ProtocolParams:
    """Physical parameters of the hybrid-entanglement source and its uses.

    ``beta_over_alpha`` fixes ``|beta/alpha|`` of the single-photon part of
    the resource; the coherent amplitude injected into rail HA is solved from
    it unless ``alpha_in`` is given explicitly.
    """

    squeeze_r: float = 0.18
    R_tap: float = 0.1
    beta_over_alpha: float = 0.6
    gamma_plus: float = 0.45
    gamma_minus: float = 0.90
    visibility: float = 0.97
    ratio_pdb_pgood_at_H: float = 1.0
    eta_homodyne: float = 0.55
    cutoff_cv: int = 14
    cutoff_rail: int = 3
    alpha_in: Optional[complex] = None
    input_phase: float = 0.0
    bs_convention: str = "real"

    def __post_init__(self):
        if self.squeeze_r < 0:
            raise ValueError("squeeze_r must be non-negative")
        for name in ("R_tap", "visibility", "eta_homodyne"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} = {value} outside [0, 1]")
        if not math.isfinite(self.beta_over_alpha) or self.beta_over_alpha <= 0:
            raise ValueError("beta_over_alpha must be positive and finite")
        if self.ratio_pdb_pgood_at_H < 0:
            raise ValueError("ratio_pdb_pgood_at_H must be non-negative")
        if self.cutoff_cv < 2 or self.cutoff_rail < 1:
            raise ValueError("cutoffs too small")

    def model_amplitudes(self) -> tuple[float, float]:
        """``(alpha, beta)`` with ``alpha^2 + beta^2 = 1`` and the configured ratio."""
        q = self.beta_over_alpha
        return 1.0 / math.sqrt(1.0 + q * q), q / math.sqrt(1.0 + q * q)

    def first_order_beta(self) -> float:
        """``sqrt(R) gamma N+/N-`` with ``gamma = sqrt(r)``, relative to the vacuum term."""
        g = math.sqrt(self.squeeze_r)
        if g == 0:
            return 0.0
        return math.sqrt(self.R_tap) * g * cat_normalization(g, "+") / cat_normalization(g, "-")


@dataclass(frozen=True, eq=False)
class HybridState:
    """A pipeline output plus the bookkeeping needed for closed-form checks.

    ``plus`` and ``minus`` are the normalized mode-C states that accompany
    ``|H>`` and ``|V>`` in the single-photon part of the resource, so that
    ``<1,0|_A Omega = n0 * alpha * plus`` and ``<0,1|_A Omega = n0 * beta * minus``
    with ``n0`` the norm of the vacuum branch.
    """

    state: FockVector | DensityOperator
    provenance: str
    params: Optional[ProtocolParams] = None
    alpha_in: complex = 0j
    alpha: complex = 0j
    beta: complex = 0j
    vacuum_norm: float = 1.0
    plus: Optional[FockVector] = None
    minus: Optional[FockVector] = None
    gamma_plus_fit: complex = 0j
    gamma_minus_fit: complex = 0j
    fit_fidelities: tuple[float, float] = (0.0, 0.0)
    tap_loss: float = 0.0
    extras: dict = field(default_factory=dict)

    def model_cats(self, gammas: Optional[tuple[complex, complex]] = None) -> tuple[FockVector, FockVector]:
        """Closed-form cat states, at the fitted amplitudes unless ``gammas`` is given."""
        gp, gm = gammas if gammas is not None else (self.gamma_plus_fit, self.gamma_minus_fit)
        cutoff = self.state.register.cutoff(CV)
        return cat_state(gp, "+", cutoff, CV), cat_state(gm, "-", cutoff, CV)


def _phase(z: complex) -> complex:
    return z / abs(z) if abs(z) > 0 else 1.0


def _branch(omega: FockVector, occupation: tuple[int, int]) -> FockVector:
    ha, va = rails("A")
    reg = omega.register
    bra = np.zeros((reg.cutoff(ha) + 1, reg.cutoff(va) + 1), dtype=complex)
    bra[occupation] = 1.0
    return project(omega, bra.ravel(), [ha, va])


def prepare_omega(params: ProtocolParams = ProtocolParams()) -> HybridState:
    """Exact state of modes (HA, VA, HC) after the tap and coherent injection.

    The squeezed vacuum is oriented so that it approximates a cat state with
    a real positive amplitude.  The tap beamsplitter sends a photon from HC
    into VA with amplitude ``+sqrt(R_tap)`` in the real convention, which keeps
    ``beta`` positive.
    """
    c, rail = params.cutoff_cv, params.cutoff_rail
    sq = squeezed_vacuum(params.squeeze_r, c, CV, angle=math.pi)
    psi = tensor(vacuum(single("VA", c)), sq)
    psi = apply_beamsplitter(psi, BeamsplitterSpec(params.R_tap, ("VA", CV), params.bs_convention))
    psi, tap_loss = truncate_mode(psi, "VA", rail)
    if tap_loss > TRUNCATION_TOL:
        raise CutoffTooSmall(f"rail VA cutoff {rail} discards norm {tap_loss:.2e}")

    n0 = np.linalg.norm(project(psi, np.eye(rail + 1)[0], ["VA"]).amps)
    n1 = np.linalg.norm(project(psi, np.eye(rail + 1)[1], ["VA"]).amps)
    if params.alpha_in is not None:
        alpha_in = complex(params.alpha_in)
    else:
        # the coherent state's |1>/|0> amplitude ratio is alpha_in itself
        alpha_in = (n1 / n0) / params.beta_over_alpha * complex(np.exp(1j * params.input_phase))
    omega = tensor(coherent(alpha_in, rail, "HA"), psi)

    w0 = _branch(omega, (0, 0))
    wh = _branch(omega, (1, 0))
    wv = _branch(omega, (0, 1))
    n_vac = w0.norm
    if n_vac == 0:
        raise ZeroProbability("resource has no vacuum component in mode A")
    plus = w0.normalize()
    gp, fp = fit_cat(plus, "+")
    cp = cat_state(gp, "+", c, CV)
    alpha = complex(np.vdot(plus.amps, wh.amps)) / n_vac
    if wv.norm > 0:
        gm, fm = fit_cat(wv.normalize(), "-")
        cm = cat_state(gm, "-", c, CV)
        beta = wv.norm / n_vac * _phase(np.vdot(cm.amps, wv.amps)) / _phase(np.vdot(cp.amps, plus.amps))
        minus = FockVector(wv.register, wv.amps / (beta * n_vac))
    else:
        # without a tap there is no V branch and no odd cat to fit
        gm, fm, beta, minus = 0j, 0.0, 0.0, None
    return HybridState(
        state=omega,
        provenance="prepare_omega",
        params=params,
        alpha_in=alpha_in,
        alpha=alpha,
        beta=complex(beta),
        vacuum_norm=n_vac,
        plus=plus,
        minus=minus,
        gamma_plus_fit=gp,
        gamma_minus_fit=gm,
        fit_fidelities=(fp, fm),
        tap_loss=tap_loss,
    )


def _qubit_register(mode: str, cutoff: int) -> ModeRegister:
    return ModeRegister(((mode, 1), (CV, cutoff)))


def rails_to_qubit(state, mode: str):
    """Restrict the rails of ``mode`` to one photon and fuse them into a qubit.

    ``state`` must be ordered ``(H<mode>, V<mode>, HC)``.  Components with zero
    or two photons on the rails are dropped, so the result may lose trace.
    """
    h, v = rails(mode)
    reg = state.register
    if reg.labels != (h, v, CV):
        state = reorder(state, [h, v, CV])
        reg = state.register
    cutoff = reg.cutoff(CV)
    keep = [reg.flatten((1, 0, n)) for n in range(cutoff + 1)]
    keep += [reg.flatten((0, 1, n)) for n in range(cutoff + 1)]
    out_reg = _qubit_register(mode, cutoff)
    if isinstance(state, FockVector):
        return FockVector(out_reg, state.amps[keep])
    return DensityOperator(out_reg, state.matrix[np.ix_(keep, keep)])


def extract_resource(omega: HybridState) -> DensityOperator:
    """Normalized single-photon-in-A part of the resource, on (A qubit, HC)."""
    wh = _branch(omega.state, (1, 0))
    wv = _branch(omega.state, (0, 1))
    amps = np.concatenate([wh.amps, wv.amps])
    norm = np.linalg.norm(amps)
    if norm < 1e-150:
        raise ZeroProbability("no single-photon component in mode A")
    vec = FockVector(_qubit_register("A", wh.register.cutoff(CV)), amps / norm)
    return vec.dm()


def resource_closed_form(omega: HybridState, gammas=None, alpha=None, beta=None) -> FockVector:
    """Normalized ``alpha|H>|cat+> + beta|V>|cat->`` on (A qubit, HC)."""
    cp, cm = omega.model_cats(gammas)
    a = omega.alpha if alpha is None else alpha
    b = omega.beta if beta is None else beta
    amps = np.concatenate([a * cp.amps, b * cm.amps])
    return FockVector(_qubit_register("A", cp.register.cutoff(CV)), amps / np.linalg.norm(amps))


def max_entangled_fidelity(rho: DensityOperator, plus: FockVector, minus: FockVector) -> float:
    """Fidelity with ``(|H>|plus> + e^{i phi}|V>|minus>)/sqrt(2)``, maximized over ``phi``."""
    d = plus.register.size
    m = rho.matrix
    h = np.concatenate([plus.amps, np.zeros(d)])
    v = np.concatenate([np.zeros(d), minus.amps])
    hh = np.real(h.conj() @ m @ h)
    vv = np.real(v.conj() @ m @ v)
    hv = h.conj() @ m @ v
    return float(0.5 * (hh + vv + 2.0 * abs(hv)))


def _conditional(result, prob: float) -> tuple[DensityOperator, float]:
    if prob <= 1e-300:
        raise ZeroProbability("heralding probability vanishes")
    return result.dm().normalize(), prob


def remote_state_prep(omega: HybridState, proj: PolarizationProjector) -> tuple[DensityOperator, float]:
    """Herald mode A on ``a|H> + b|V>``; returns the normalized mode-C state and its probability."""
    if proj.mode != "A":
        proj = PolarizationProjector(proj.a, proj.b, "A")
    out, prob = project_polarization(omega.state, proj)
    return _conditional(out, prob)


def rsp_closed_form(omega: HybridState, a: complex, b: complex, gammas=None) -> FockVector:
    """Normalized ``a* alpha |cat+> + b* beta |cat->``."""
    cp, cm = omega.model_cats(gammas)
    amps = np.conj(a) * omega.alpha * cp.amps + np.conj(b) * omega.beta * cm.amps
    return FockVector(cp.register, amps / np.linalg.norm(amps))


def teleport_ideal(omega: HybridState, a: complex, b: complex) -> tuple[DensityOperator, float]:
    """Bell-project modes A and B with ``a|H> + b|V>`` on B; output on mode C."""
    if abs(abs(a) ** 2 + abs(b) ** 2 - 1.0) > 1e-9:
        raise ValueError("input polarization must be normalized")
    rail = omega.state.register.cutoff("HA")
    chi = single_photon(a, b, "B", rail)
    out, prob = project_bell_psi_minus(tensor(omega.state, chi), "A", "B")
    return _conditional(out, prob)


def teleport_closed_form(omega: HybridState, a: complex, b: complex, gammas=None) -> FockVector:
    """Normalized ``(a beta |cat-> - b alpha |cat+>)/sqrt(2)``."""
    cp, cm = omega.model_cats(gammas)
    amps = a * omega.beta * cm.amps - b * omega.alpha * cp.amps
    return FockVector(cp.register, amps / np.linalg.norm(amps))


def double_b_mixture(good: DensityOperator, p_good: float, theta_plus, p_db: float) -> DensityOperator:
    """``(p_good good + p_dB |theta+><theta+|) / (p_good + p_dB)``."""
    total = p_good + p_db
    if total <= 0:
        raise ZeroProbability("no Bell detection events")
    m = (p_good * good.matrix + p_db * theta_plus.dm().matrix) / total
    return DensityOperator(good.register, m)


def teleport_realistic(omega: HybridState, a: complex, b: complex,
                       params: Optional[ProtocolParams] = None) -> DensityOperator:
    """Teleportation output including false Bell detections from double-B events.

    ``p_dB`` does not depend on the input and is set to
    ``ratio_pdb_pgood_at_H * p_good(|H>)``.  In such an event no photon is
    removed from mode C, which is then left in ``omega.plus``.
    """
    params = params or omega.params or ProtocolParams()
    good, p_good = teleport_ideal(omega, a, b)
    _, p_good_h = teleport_ideal(omega, 1.0, 0.0)
    p_db = params.ratio_pdb_pgood_at_H * p_good_h
    return double_b_mixture(good, p_good, omega.plus, p_db)


def teleport_mixture_model(a: complex, b: complex, params: ProtocolParams) -> tuple[DensityOperator, FockVector]:
    """Closed-form double-B mixture with cat states at ``gamma_plus``/``gamma_minus``.

    Returns ``(rho_out, target)`` where ``target`` is the normalized ideal
    teleported state.
    """
    alpha, beta = params.model_amplitudes()
    c = params.cutoff_cv
    cp = cat_state(params.gamma_plus, "+", c, CV)
    cm = cat_state(params.gamma_minus, "-", c, CV)
    phi = a * beta * cm.amps - b * alpha * cp.amps
    p_good = float(np.vdot(phi, phi).real) / 2.0
    p_db = params.ratio_pdb_pgood_at_H * beta ** 2 / 2.0
    target = FockVector(cp.register, phi / np.linalg.norm(phi))
    return double_b_mixture(target.dm(), p_good, cp, p_db), target


def entanglement_swap(omega: HybridState, bell_pair: Optional[DensityOperator] = None,
                      params: Optional[ProtocolParams] = None) -> tuple[DensityOperator, float]:
    """Bell-project A and B of ``Omega (x) rho_BD``; returns the (D qubit, HC) state.

    The Bell pair is processed one eigencomponent at a time so the joint
    density operator is never formed.
    """
    params = params or omega.params or ProtocolParams()
    rail = omega.state.register.cutoff("HA")
    if bell_pair is None:
        bell_pair = bell_pair_psi_plus(params.visibility, "B", "D", rail)
    weights, vecs = np.linalg.eigh(bell_pair.matrix)
    acc = None
    total = 0.0
    for w, vec in zip(weights, vecs.T):
        if w <= 1e-14:
            continue
        full = tensor(omega.state, FockVector(bell_pair.register, vec))
        out, p = project_bell_psi_minus(full, "A", "B")
        out = rails_to_qubit(out, "D")
        contrib = w * np.outer(out.amps, out.amps.conj())
        acc = contrib if acc is None else acc + contrib
        total += w * p
    if acc is None or total <= 1e-300:
        raise ZeroProbability("entanglement swapping never heralds")
    reg = _qubit_register("D", omega.state.register.cutoff(CV))
    return DensityOperator(reg, acc / np.real(np.trace(acc))), float(total)


def swap_closed_form(omega: HybridState, gammas=None) -> FockVector:
    """Normalized ``alpha|H>|cat+> - beta|V>|cat->`` on (D qubit, HC)."""
    cp, cm = omega.model_cats(gammas)
    amps = np.concatenate([omega.alpha * cp.amps, -omega.beta * cm.amps])
    return FockVector(_qubit_register("D", cp.register.cutoff(CV)), amps / np.linalg.norm(amps))


def project_qubit(rho: DensityOperator, a: complex, b: complex) -> tuple[DensityOperator, float]:
    """Condition a (qubit, HC) operator on ``a|H> + b|V>``; returns (normalized CV state, probability)."""
    bra = np.array([np.conj(a), np.conj(b)])
    qubit = rho.register.labels[0]
    out = project(rho, bra, [qubit])
    return _conditional(out, out.trace)


def with_overrides(params: ProtocolParams, **kwargs) -> ProtocolParams:
    return replace(params, **kwargs)
