"""Command-line runner: ``dvcv run [SCENARIO] --config PATH [--seed N] [--out DIR] [--quiet]``.

Exit status is 0 on success, 2 for configuration errors and 3 for numerical
failures (vanishing probabilities, truncation beyond tolerance).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import analysis, protocol, tomography
from .channels import PolarizationProjector
from .config import SCENARIOS, ConfigError, ScenarioConfig, load
from .fock import FockError, cat_state, to_dict
from .metrics import fidelity

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class Outputs:
    """Writes ``<scenario>_<key>.<ext>`` files into one directory."""

    def __init__(self, directory: Path, scenario: str):
        self.directory = directory
        self.scenario = scenario
        self.written: list[Path] = []

    def path(self, key: str, ext: str) -> Path:
        return self.directory / f"{self.scenario}_{key}.{ext}"

    def json(self, key: str, payload) -> None:
        p = self.path(key, "json")
        p.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")
        self.written.append(p)

    def state(self, key: str, state) -> None:
        self.json(key, to_dict(state))

    def wigner(self, key: str, rho, grid: tomography.WignerGrid) -> float:
        p = self.path(key, "csv")
        tomography.write_wigner_csv(p, tomography.wigner(rho, grid), grid)
        self.written.append(p)
        return tomography.wigner_points(rho, 0.0, 0.0).item()

    def csv(self, key: str, writer: Callable[[Path], None]) -> None:
        p = self.path(key, "csv")
        writer(p)
        self.written.append(p)


def _jsonable(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _omega(cfg: ScenarioConfig) -> protocol.HybridState:
    return protocol.prepare_omega(cfg.protocol)


def run_resource(cfg: ScenarioConfig, out: Outputs) -> dict:
    omega = _omega(cfg)
    rho = protocol.extract_resource(omega)
    out.state("density", rho)
    plus, minus = omega.model_cats()
    return {
        "fidelity_me": protocol.max_entangled_fidelity(rho, omega.plus, omega.minus),
        "fidelity_me_cats": protocol.max_entangled_fidelity(rho, plus, minus),
        "fidelity_closed_form": fidelity(protocol.resource_closed_form(omega), rho),
        "beta_over_alpha": abs(omega.beta / omega.alpha),
        "gamma_plus_fit": abs(omega.gamma_plus_fit),
        "gamma_minus_fit": abs(omega.gamma_minus_fit),
        "alpha_in": abs(omega.alpha_in),
    }


def run_rsp(cfg: ScenarioConfig, out: Outputs) -> dict:
    a, b = cfg.input_state
    omega = _omega(cfg)
    rho, prob = protocol.remote_state_prep(omega, PolarizationProjector(a, b, "A"))
    out.state("density", rho)
    w00 = out.wigner("wigner", rho, cfg.wigner)
    return {
        "fidelity": fidelity(protocol.rsp_closed_form(omega, a, b), rho),
        "prob": prob,
        "w00": w00,
    }


def run_teleport(cfg: ScenarioConfig, out: Outputs) -> dict:
    a, b = cfg.input_state
    omega = _omega(cfg)
    target = protocol.teleport_closed_form(omega, a, b)
    ideal, prob = protocol.teleport_ideal(omega, a, b)
    rho = protocol.teleport_realistic(omega, a, b, cfg.protocol)
    out.state("density", rho)
    w00 = out.wigner("wigner", rho, cfg.wigner)
    return {
        "fidelity": fidelity(target, rho),
        "fidelity_ideal": fidelity(target, ideal),
        "prob_good": prob,
        "w00": w00,
    }


def run_swap(cfg: ScenarioConfig, out: Outputs) -> dict:
    omega = _omega(cfg)
    rho, prob = protocol.entanglement_swap(omega, params=cfg.protocol)
    out.state("density", rho)
    gp, gm = omega.gamma_plus_fit, omega.gamma_minus_fit
    basis = analysis.cat_basis(gp, gm, rho.register.cutoff(protocol.CV))
    tomograms = analysis.ConditionalTomogramSet.from_state(rho)
    bound = analysis.entanglement_bound(tomograms, gp, gm)
    return {
        "fidelity": fidelity(protocol.swap_closed_form(omega), rho),
        "fidelity_me": fidelity(analysis.max_entangled_state(basis, "D"), rho),
        "f_lb": bound.value,
        "certified": bound.certified,
        "prob": prob,
    }


def run_tomo_roundtrip(cfg: ScenarioConfig, out: Outputs) -> dict:
    settings = cfg.tomography
    truth = cat_state(cfg.protocol.gamma_minus, "-", settings.cutoff, protocol.CV)
    sampling = dataclasses.replace(settings, eta=cfg.protocol.eta_homodyne)
    data = tomography.sample_quadratures(truth, sampling)
    out.csv("quadratures", lambda p: tomography.write_quadratures_csv(p, data))
    eta = settings.eta if cfg.efficiency_correction else 1.0
    result = tomography.maxlik_reconstruct(data, settings, eta=eta)
    raw = tomography.maxlik_reconstruct(data, settings, eta=1.0)
    out.state("density", result.rho)
    w00 = out.wigner("wigner", result.rho, cfg.wigner)
    return {
        "fidelity": fidelity(truth, result.rho),
        "w00": w00,
        "w00_uncorrected": tomography.wigner_points(raw.rho, 0.0, 0.0).item(),
        "iterations": result.iterations,
        "converged": result.converged,
        "n_samples": len(data),
    }


def run_rates(cfg: ScenarioConfig, out: Outputs) -> dict:
    return dataclasses.asdict(analysis.rates(cfg.rates))


def run_bloch_map(cfg: ScenarioConfig, out: Outputs) -> dict:
    avg = analysis.mean_bloch_fidelity(cfg.protocol, cfg.n_grid, cfg.phi_origin)

    def write(path):
        with open(path, "w") as fh:
            fh.write("theta,phi,fidelity\n")
            for t, p, f in avg.rows():
                fh.write(f"{t:.17g},{p:.17g},{f:.17g}\n")

    out.csv("map", write)
    return {"mean": avg.mean, "min": avg.min, "max": avg.max, "beats_classical": avg.beats_classical}


RUNNERS: dict[str, Callable[[ScenarioConfig, Outputs], dict]] = {
    "resource": run_resource,
    "rsp": run_rsp,
    "teleport": run_teleport,
    "swap": run_swap,
    "tomo-roundtrip": run_tomo_roundtrip,
    "rates": run_rates,
    "bloch-map": run_bloch_map,
}


def _report(summary: dict) -> dict:
    fids = {k: v for k, v in summary.items() if k.startswith("fidelity")}
    payload = json.loads(analysis.report(fidelities=fids))
    payload["entanglement_bound"] = summary.get("f_lb")
    payload["mean_bloch_fidelity"] = summary.get("mean")
    if "p_dB" in summary:
        payload["rates"] = {k: summary[k] for k in ("p_dB", "p_good", "triple_rate_hz")}
    return payload


def format_value(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def summary_line(scenario: str, summary: dict) -> str:
    return " ".join([f"scenario={scenario}"] + [f"{k}={format_value(v)}" for k, v in summary.items()])


def execute(cfg: ScenarioConfig) -> tuple[dict, list[Path]]:
    """Run one scenario and write its files; returns the summary and file list."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    out = Outputs(cfg.output_dir, cfg.scenario)
    summary = RUNNERS[cfg.scenario](cfg, out)
    out.json("summary", {"scenario": cfg.scenario, **summary})
    out.json("report", _report(summary))
    return summary, out.written


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dvcv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one scenario")
    run.add_argument("scenario", nargs="?", help=f"one of: {', '.join(SCENARIOS)} (overrides the config)")
    run.add_argument("--config", required=True, help="path to a key = value config file")
    run.add_argument("--seed", type=int, help="RNG seed, overrides the config")
    run.add_argument("--out", help="output directory, overrides output_dir")
    run.add_argument("--quiet", action="store_true", help="suppress the summary line")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load(args.config, args.scenario)
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2 ** 64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            cfg = cfg.with_seed(args.seed)
        if args.out is not None:
            cfg = dataclasses.replace(cfg, output_dir=Path(args.out))
    except ConfigError as exc:
        print(f"dvcv: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        with np.errstate(divide="raise", invalid="raise", over="raise"):
            summary, _ = execute(cfg)
    except (FockError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"dvcv: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if not args.quiet:
        print(summary_line(cfg.scenario, summary))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
