import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from dvcv.channels import POLARIZATIONS, PolarizationProjector, bell_pair_psi_plus, project_polarization
from dvcv.fock import (
    CutoffTooSmall,
    FockVector,
    ModeRegister,
    annihilate,
    cat_state,
    coherent,
    squeezed_vacuum,
    tensor,
    vacuum,
)
from dvcv.metrics import fidelity
from dvcv.protocol import (
    CV,
    ProtocolParams,
    ZeroProbability,
    entanglement_swap,
    extract_resource,
    max_entangled_fidelity,
    prepare_omega,
    project_qubit,
    remote_state_prep,
    resource_closed_form,
    rsp_closed_form,
    swap_closed_form,
    teleport_closed_form,
    teleport_ideal,
    teleport_mixture_model,
    teleport_realistic,
    with_overrides,
)

DEFAULTS = ProtocolParams()


@pytest.fixture(scope="module")
def omega():
    return prepare_omega(DEFAULTS)


def closed_form_me(q):
    return (1 + q) ** 2 / (2 * (1 + q * q))


def bloch_inputs(n):
    # near-uniform Fibonacci points on the sphere
    k = np.arange(n) + 0.5
    theta = np.arccos(1 - 2 * k / n)
    phi = math.pi * (1 + 5 ** 0.5) * k
    return [(math.cos(t / 2), np.exp(1j * p) * math.sin(t / 2)) for t, p in zip(theta, phi)]


# -- parameters -------------------------------------------------------------------------


def test_params_validation():
    with pytest.raises(ValueError):
        ProtocolParams(R_tap=1.5)
    with pytest.raises(ValueError):
        ProtocolParams(beta_over_alpha=0.0)
    with pytest.raises(ValueError):
        ProtocolParams(squeeze_r=-0.1)
    alpha, beta = DEFAULTS.model_amplitudes()
    assert alpha ** 2 + beta ** 2 == pytest.approx(1.0)
    assert beta / alpha == pytest.approx(0.6)


def test_first_order_beta_is_leading_order():
    p = ProtocolParams(squeeze_r=0.005, R_tap=1e-3, cutoff_cv=10)
    om = prepare_omega(p)
    assert abs(om.beta) == pytest.approx(p.first_order_beta(), rel=1e-2)


# -- resource preparation -----------------------------------------------------------------


def test_no_tap_no_injection_gives_squeezed_vacuum():
    om = prepare_omega(ProtocolParams(R_tap=0.0, alpha_in=0.0))
    rails = vacuum(ModeRegister.of(("HA", 3), ("VA", 3)))
    ref = tensor(rails, squeezed_vacuum(0.18, 14, CV, angle=math.pi))
    assert fidelity(om.state, ref) == pytest.approx(1.0, abs=1e-12)
    assert om.minus is None and om.beta == 0


def test_vacuum_component_dominates(omega):
    amp = abs(omega.state.amps[omega.state.register.flatten((0, 0, 0))]) ** 2
    sq0 = 1 / math.cosh(0.18)
    # the splitter leaves vacuum on VA in vacuum, so <000|Omega> = <0|alpha_in> <0|S|0>
    assert amp == pytest.approx(math.exp(-abs(omega.alpha_in) ** 2) * sq0, rel=1e-3)
    assert 1 - omega.vacuum_norm ** 2 < 0.02


def test_resource_ratio_and_fits(omega):
    assert abs(omega.beta / omega.alpha) == pytest.approx(0.6, rel=1e-12)
    assert omega.tap_loss < 1e-6
    assert min(omega.fit_fidelities) > 0.98
    assert abs(omega.gamma_plus_fit) == pytest.approx(0.40, abs=0.02)


def test_resource_matches_first_order_form(omega):
    rho = extract_resource(omega)
    assert fidelity(resource_closed_form(omega), rho) >= 0.99


@pytest.mark.parametrize("q", [0.6, 1.0, 0.3])
def test_resource_entanglement_closed_form(q):
    om = prepare_omega(with_overrides(DEFAULTS, beta_over_alpha=q))
    rho = extract_resource(om)
    assert max_entangled_fidelity(rho, om.plus, om.minus) == pytest.approx(closed_form_me(q), abs=1e-9)


def test_first_order_convergence():
    # exact pipeline against |00>S|0> + alpha_in |10>S|0> + sqrt(R) |01> a S|0>
    defects = []
    for R in (1e-2, 1e-3, 1e-4):
        p = with_overrides(DEFAULTS, R_tap=R)
        om = prepare_omega(p)
        c = p.cutoff_cv
        sq = squeezed_vacuum(p.squeeze_r, c, CV, angle=math.pi)
        sub = annihilate(sq, CV)
        reg = om.state.register
        amps = np.zeros(reg.size, dtype=complex)
        for n in range(c + 1):
            amps[reg.flatten((0, 0, n))] = sq.amps[n]
            amps[reg.flatten((1, 0, n))] = om.alpha_in * sq.amps[n]
            amps[reg.flatten((0, 1, n))] = math.sqrt(R) * sub.amps[n]
        defects.append(1 - fidelity(FockVector(reg, amps / np.linalg.norm(amps)), om.state))
    assert defects[0] > defects[1] > defects[2]
    assert defects[2] < 1e-6


def test_rail_cutoff_two_is_too_small():
    with pytest.raises(CutoffTooSmall):
        prepare_omega(with_overrides(DEFAULTS, cutoff_rail=2))


def test_probability_bookkeeping(omega):
    total = sum(
        abs(omega.state.amps[omega.state.register.flatten(occ)]) ** 2
        for n in range(15) for occ in ((1, 0, n), (0, 1, n))
    )
    for pair in (("H", "V"), ("D", "A"), ("L", "R")):
        p = sum(project_polarization(omega.state, PolarizationProjector.named(k))[1] for k in pair)
        assert p == pytest.approx(total, abs=1e-9)


# -- remote state preparation -----------------------------------------------------------------


@pytest.mark.parametrize("label", list(POLARIZATIONS))
def test_rsp_matches_closed_form(omega, label):
    a, b = POLARIZATIONS[label]
    rho, prob = remote_state_prep(omega, PolarizationProjector(a, b))
    assert fidelity(rsp_closed_form(omega, a, b), rho) >= 0.99
    assert 0 < prob < 1


def test_rsp_rectilinear_outcomes_are_cats(omega):
    rho_h, _ = remote_state_prep(omega, PolarizationProjector.named("H"))
    rho_v, _ = remote_state_prep(omega, PolarizationProjector.named("V"))
    assert fidelity(cat_state(omega.gamma_plus_fit, "+", 14, CV), rho_h) >= 0.99
    assert fidelity(cat_state(omega.gamma_minus_fit, "-", 14, CV), rho_v) >= 0.99


@pytest.mark.parametrize("label,sign", [("D", 1), ("A", -1)])
def test_rsp_diagonal_outcomes_are_near_coherent(omega, label, sign):
    rho, _ = remote_state_prep(omega, PolarizationProjector.named(label))
    res = minimize_scalar(lambda g: -fidelity(coherent(g, 14, CV), rho), bounds=(-2, 2), method="bounded")
    assert -res.fun >= 0.95
    assert np.sign(res.x) == sign


# -- teleportation -------------------------------------------------------------------------


def test_teleport_examples(omega):
    cp, cm = omega.model_cats()
    out_h, _ = teleport_ideal(omega, 1, 0)
    out_v, _ = teleport_ideal(omega, 0, 1)
    assert fidelity(cm, out_h) >= 0.98
    assert fidelity(cp, out_v) >= 0.99
    d = 1 / math.sqrt(2)
    out_d, _ = teleport_ideal(omega, d, d)
    amps = omega.beta * cm.amps - omega.alpha * cp.amps
    assert fidelity(FockVector(cp.register, amps / np.linalg.norm(amps)), out_d) >= 0.99


@pytest.mark.parametrize("a,b", bloch_inputs(12))
def test_teleport_ideal_closed_form_and_probability(omega, a, b):
    out, prob = teleport_ideal(omega, a, b)
    assert fidelity(teleport_closed_form(omega, a, b), out) >= 0.99
    first_order = omega.vacuum_norm ** 2 * (abs(a * omega.beta) ** 2 + abs(b * omega.alpha) ** 2) / 2
    assert prob == pytest.approx(first_order, rel=0.05)


def test_teleport_rejects_unnormalized_input(omega):
    with pytest.raises(ValueError):
        teleport_ideal(omega, 1, 1)


def test_teleport_realistic_limits(omega):
    ideal, _ = teleport_ideal(omega, 0.6, 0.8)
    no_db = teleport_realistic(omega, 0.6, 0.8, with_overrides(DEFAULTS, ratio_pdb_pgood_at_H=0.0))
    assert np.allclose(no_db.matrix, ideal.matrix, atol=1e-12)
    cp, cm = omega.model_cats()
    out_h = teleport_realistic(omega, 1, 0)
    assert fidelity(teleport_closed_form(omega, 1, 0), out_h) == pytest.approx(0.5, abs=1e-3)
    for ratio in (0.3, 1.0, 3.0):
        out_v = teleport_realistic(omega, 0, 1, with_overrides(DEFAULTS, ratio_pdb_pgood_at_H=ratio))
        assert fidelity(cp, out_v) >= 0.98


def test_mixture_model_h_input_is_exactly_half():
    rho, target = teleport_mixture_model(1, 0, DEFAULTS)
    expected = (cat_state(0.9, "-", 14, CV).dm().matrix + cat_state(0.45, "+", 14, CV).dm().matrix) / 2
    assert np.allclose(rho.matrix, expected, atol=1e-12)
    assert fidelity(target, rho) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("a,b", bloch_inputs(100))
def test_teleport_realistic_is_a_state(omega, a, b):
    rho = teleport_realistic(omega, a, b)
    assert rho.trace == pytest.approx(1.0, abs=1e-12)
    assert rho.eigenvalues().min() >= -1e-10


# -- entanglement swapping --------------------------------------------------------------------


def test_swap_matches_closed_form(omega):
    rho, prob = entanglement_swap(omega, bell_pair_psi_plus(1.0, cutoff=3))
    assert fidelity(swap_closed_form(omega), rho) >= 0.99
    assert 0 < prob < 1


@pytest.mark.parametrize("q", [1.0, 0.6])
def test_swap_maximal_entanglement(q):
    om = prepare_omega(with_overrides(DEFAULTS, beta_over_alpha=q, visibility=1.0))
    rho, _ = entanglement_swap(om)
    d = om.plus.register.size
    psi_me = np.concatenate([om.plus.amps, -om.minus.amps]) / math.sqrt(2)
    assert fidelity(psi_me, rho) == pytest.approx(closed_form_me(q), abs=1e-6)
    assert rho.register.labels == ("D", CV) and rho.register.size == 2 * d


def test_swap_with_imperfect_pair_is_mixed(omega):
    pure, _ = entanglement_swap(omega, bell_pair_psi_plus(1.0, cutoff=3))
    mixed, _ = entanglement_swap(omega, bell_pair_psi_plus(0.97, cutoff=3))
    purity = np.real(np.trace(mixed.matrix @ mixed.matrix))
    assert purity < 0.999
    assert fidelity(pure, mixed) < 0.999
    assert fidelity(pure, mixed) > 0.95


def test_swap_conditioned_on_h_reproduces_rsp(omega):
    rho, _ = entanglement_swap(omega, bell_pair_psi_plus(1.0, cutoff=3))
    cond, _ = project_qubit(rho, 1, 0)
    rsp, _ = remote_state_prep(omega, PolarizationProjector.named("H"))
    assert fidelity(cond, rsp) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("a,b", bloch_inputs(6))
def test_swap_then_project_equals_teleportation(omega, a, b):
    rho, _ = entanglement_swap(omega, bell_pair_psi_plus(1.0, cutoff=3))
    cond, _ = project_qubit(rho, np.conj(b), np.conj(a))
    tele, _ = teleport_ideal(omega, a, b)
    assert fidelity(cond, tele) == pytest.approx(1.0, abs=1e-9)


def test_swap_zero_probability():
    om = prepare_omega(ProtocolParams(R_tap=0.0, alpha_in=0.0))
    with pytest.raises(ZeroProbability):
        entanglement_swap(om)


# -- convention independence ------------------------------------------------------------------


def test_observables_do_not_depend_on_beamsplitter_convention():
    ref = prepare_omega(DEFAULTS)
    alt = prepare_omega(with_overrides(DEFAULTS, bs_convention="symmetric"))
    assert abs(alt.beta / alt.alpha) == pytest.approx(abs(ref.beta / ref.alpha), rel=1e-12)
    om_a, om_b = ref, alt
    assert max_entangled_fidelity(extract_resource(om_a), om_a.plus, om_a.minus) == pytest.approx(
        max_entangled_fidelity(extract_resource(om_b), om_b.plus, om_b.minus), abs=1e-10)
    for label in POLARIZATIONS:
        a, b = POLARIZATIONS[label]
        ra, pa = remote_state_prep(om_a, PolarizationProjector(a, b))
        rb, pb = remote_state_prep(om_b, PolarizationProjector(a, b))
        assert pa == pytest.approx(pb, rel=1e-10)
        assert fidelity(rsp_closed_form(om_a, a, b), ra) == pytest.approx(
            fidelity(rsp_closed_form(om_b, a, b), rb), abs=1e-9)
    for a, b in [(1, 0), (0, 1)]:
        fa = fidelity(teleport_closed_form(om_a, a, b), teleport_realistic(om_a, a, b))
        fb = fidelity(teleport_closed_form(om_b, a, b), teleport_realistic(om_b, a, b))
        assert fa == pytest.approx(fb, abs=1e-9)
    sa, qa = entanglement_swap(om_a)
    sb, qb = entanglement_swap(om_b)
    assert qa == pytest.approx(qb, rel=1e-10)
    assert fidelity(swap_closed_form(om_a), sa) == pytest.approx(fidelity(swap_closed_form(om_b), sb), abs=1e-9)
