"""
Command-line front end: configuration, scenario orchestration and reports.

    fredholm-backstep report --config scenario.ini --out results/

Exit codes: 0 success, 2 configuration error, 3 numerical failure (a JSON
error object is written to stderr).
"""

from __future__ import annotations

import argparse
import configparser
import contextlib
import json
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np

from . import __version__
from .diagnostics import (
    aggregate_smoothing,
    check_denominator_bound,
    operator_equality_residual,
    q_family,
    quadratic_closeness,
    riesz_frame_bounds,
    smoothing_sums,
    tb_eq_b_residual,
)
from .errors import ConfigError, NumericalError
from .gains import (
    PotentialSpec,
    assemble_transform,
    is_admissible_lambda,
    nearest_admissible_family,
    pair_condition,
    solve_gain_profile,
)
from .moments import plan_null_control, verify_plan
from .serialize import write_json, write_text
from .simulation import (
    SCHEMES,
    SimConfig,
    fit_decay_rate,
    random_initial_state,
    simulate_burgers_closed_loop,
    simulate_heat_closed_loop,
)
from .spectral import EVEN, ODD

SCHEMA_VERSION = 1
TASKS = ("diagnostics", "heat", "burgers", "moments")
CHECKS = ("denominator", "closeness", "smoothing", "tb_eq_b", "operator_equality", "riesz")
POTENTIAL_MODES = ("constant_amplitude", "power_law", "explicit")


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    lam: float = 6.0
    m: float = 0.0
    n_max: int = 128
    tasks: tuple[str, ...] = ("diagnostics", "heat")
    potential_mode: str = "constant_amplitude"
    amplitude: float = 1.0
    explicit_odd: tuple[float, ...] | None = None
    explicit_even: tuple[float, ...] | None = None
    rows_factor: int = 2
    dt: float = 1e-4
    t_final: float = 2.0
    scheme: str = "integrating_factor_rk2"
    record_every: int = 100
    norm_indices: tuple[float, ...] = (0.0, -0.4, 0.4)
    initial_decay: float = 2.0
    fit_start: float | None = None
    fit_end: float | None = None
    burgers_initial_norm: float = 1e-2
    burgers_smallness: float = 1e-2
    burgers_dt: float = 1e-4
    burgers_t_final: float = 2.0
    checks: tuple[str, ...] = CHECKS
    closeness_s: tuple[float, ...] = (-1.0, 0.0, 1.0)
    smoothing_r: tuple[float, ...] = (0.0,)
    moment_modes: int = 4
    moment_horizon: float = 1.0
    moment_grid: int = 2048
    moment_regularization: float = 0.0
    out_dir: str = "out"
    source: str | None = None

    def rng(self, stream: int) -> np.random.Generator:
        """Independent generator per purpose (1 potentials, 2 heat data, 3 Burgers data)."""
        return np.random.default_rng([self.seed, stream])


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_KEYS: dict[str, dict[str, tuple[str, str]]] = {
    # section -> key -> (field, kind)
    "scenario": {
        "seed": ("seed", "uint"),
        "lambda": ("lam", "float"),
        "m": ("m", "float"),
        "n_max": ("n_max", "posint"),
        "tasks": ("tasks", "tasks"),
    },
    "potential": {
        "mode": ("potential_mode", "potential_mode"),
        "amplitude": ("amplitude", "float"),
        "odd": ("explicit_odd", "floats"),
        "even": ("explicit_even", "floats"),
        "file": ("__file__", "path"),
        "rows_factor": ("rows_factor", "posint"),
    },
    "simulation": {
        "dt": ("dt", "posfloat"),
        "t_final": ("t_final", "posfloat"),
        "scheme": ("scheme", "scheme"),
        "record_every": ("record_every", "posint"),
        "norm_indices": ("norm_indices", "floats"),
        "initial_decay": ("initial_decay", "float"),
        "fit_start": ("fit_start", "float"),
        "fit_end": ("fit_end", "float"),
    },
    "burgers": {
        "initial_norm": ("burgers_initial_norm", "posfloat"),
        "smallness": ("burgers_smallness", "posfloat"),
        "dt": ("burgers_dt", "posfloat"),
        "t_final": ("burgers_t_final", "posfloat"),
    },
    "diagnostics": {
        "checks": ("checks", "checks"),
        "closeness_s": ("closeness_s", "floats"),
        "smoothing_r": ("smoothing_r", "floats"),
    },
    "moments": {
        "modes": ("moment_modes", "posint"),
        "horizon": ("moment_horizon", "posfloat"),
        "grid_size": ("moment_grid", "posint"),
        "regularization": ("moment_regularization", "float"),
    },
    "output": {"directory": ("out_dir", "str")},
}


def _list(text: str) -> list[str]:
    return [t.strip() for t in text.replace("\n", ",").split(",") if t.strip()]


def _convert(kind: str, raw: str, where: str) -> Any:
    try:
        if kind == "uint":
            v = int(raw)
            if v < 0:
                raise ValueError
            return v
        if kind == "posint":
            v = int(raw)
            if v < 1:
                raise ValueError
            return v
        if kind in ("float", "posfloat"):
            v = float(raw)
            if not math.isfinite(v) or (kind == "posfloat" and v <= 0):
                raise ValueError
            return v
        if kind == "floats":
            return tuple(float(t) for t in _list(raw))
        if kind in ("str", "path"):
            return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot read {raw!r} as {kind}") from None
    choices = {
        "tasks": TASKS,
        "checks": CHECKS,
        "scheme": SCHEMES,
        "potential_mode": POTENTIAL_MODES,
    }[kind]
    items = _list(raw) if kind in ("tasks", "checks") else [raw.strip()]
    for item in items:
        if item not in choices:
            raise ConfigError(f"{where}: {item!r} is not one of {', '.join(choices)}")
    return tuple(items) if kind in ("tasks", "checks") else items[0]


def _square_difference(lam: float) -> tuple[int, int] | None:
    r = int(math.floor((abs(lam) + 1) / 2)) + 1
    for i in range(r + 1):
        for j in range(r + 1):
            if abs(i * i - j * j - lam) <= 1e-9:
                return i, j
    return None


def validate_config(cfg: ScenarioConfig) -> ScenarioConfig:
    if cfg.lam <= 0:
        raise ConfigError(f"lambda must be positive, got {cfg.lam:g}")
    if not is_admissible_lambda(cfg.lam):
        rep = _square_difference(cfg.lam)
        how = f" ({cfg.lam:g} = {rep[0]}^2 - {rep[1]}^2)" if rep else ""
        hint = " or ".join(str(v) for v in nearest_admissible_family(cfg.lam))
        raise ConfigError(
            f"lambda={cfg.lam:g} is not admissible: it is a difference of two squares{how}; "
            f"try {hint}"
        )
    if cfg.potential_mode == "explicit":
        if cfg.explicit_odd is None or cfg.explicit_even is None:
            raise ConfigError("explicit potentials need both 'odd' and 'even' amplitude lists")
        if len(cfg.explicit_odd) < cfg.n_max or len(cfg.explicit_even) != len(cfg.explicit_odd) + 1:
            raise ConfigError(
                f"explicit potentials need at least n_max={cfg.n_max} odd amplitudes "
                "and exactly one more even amplitude"
            )
    if cfg.n_max < 4:
        raise ConfigError("n_max must be at least 4")
    if "moments" in cfg.tasks and cfg.moment_modes > cfg.n_max:
        raise ConfigError("moments.modes cannot exceed n_max")
    return cfg


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a scenario file; see the README for the grammar."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"), strict=True
    )
    parser.optionxform = str  # keys are case-sensitive
    try:
        parser.read_string(path.read_text(encoding="utf-8"), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    values: dict[str, Any] = {}
    for section in parser.sections():
        if section not in _KEYS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _KEYS[section]:
                raise ConfigError(f"{path}: unknown key '{key}' in [{section}]")
            name, kind = _KEYS[section][key]
            values[name] = _convert(kind, raw, f"{path} [{section}] {key}")
    amp_file = values.pop("__file__", None)
    if amp_file is not None:
        ref = (path.parent / amp_file).resolve()
        if not ref.is_file():
            raise ConfigError(f"{path}: potential file not found: {ref}")
        try:
            data = json.loads(ref.read_text(encoding="utf-8"))
            values["explicit_odd"] = tuple(float(v) for v in data["odd"])
            values["explicit_even"] = tuple(float(v) for v in data["even"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{ref}: expected a JSON object with 'odd' and 'even' lists ({exc})") from None
        values.setdefault("potential_mode", "explicit")
    return validate_config(ScenarioConfig(source=str(path), **values))


def build_potentials(cfg: ScenarioConfig) -> PotentialSpec:
    """Potential with rows_factor * n_max stored rows (explicit: as given)."""
    rows = cfg.rows_factor * cfg.n_max
    if cfg.potential_mode == "constant_amplitude":
        return PotentialSpec(cfg.m, np.full(rows, cfg.amplitude), np.full(rows + 1, cfg.amplitude))
    if cfg.potential_mode == "power_law":
        return PotentialSpec.power_law(rows, cfg.m, cfg.amplitude, cfg.rng(1))
    return PotentialSpec(cfg.m, cfg.explicit_odd, cfg.explicit_even)


# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------


@contextlib.contextmanager
def _stage(name: str) -> Iterator[None]:
    try:
        yield
    except NumericalError as exc:
        exc.details.setdefault("module", name)
        raise
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[{name}] {exc}") from exc


def _cauchy_ratio(c: np.ndarray) -> float:
    s = np.cumsum(c**2)
    n = len(s)
    return float((s[-1] - s[n // 2 - 1]) / s[-1]) if s[-1] else 0.0


def run_scenario(cfg: ScenarioConfig, tasks: Sequence[str] | None = None) -> dict[str, Any]:
    """Run the configured pipeline and write artifacts into ``cfg.out_dir``.

    Always writes gains.json, transform.json and summary.json; adds
    diagnostics.json, trajectory.csv, burgers_trajectory.csv, plan.csv and
    plan.json for the corresponding tasks. Returns the summary.
    """
    tasks = tuple(cfg.tasks if tasks is None else tasks)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = cfg.n_max
    summary: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "scenario": {
            "seed": cfg.seed,
            "lambda": cfg.lam,
            "m": cfg.m,
            "n_max": n,
            "potential_mode": cfg.potential_mode,
            "tasks": list(tasks),
        },
    }

    with _stage("gain_synthesis"):
        potentials = build_potentials(cfg)
        gains = solve_gain_profile(cfg.lam, potentials, n)
        t_odd = assemble_transform(gains, potentials, ODD)
        t_even = assemble_transform(gains, potentials, EVEN)
    write_json(out / "gains.json", {"potentials": potentials.truncated(n).to_dict(), **gains.to_dict()})
    write_json(out / "transform.json", {"odd": t_odd.to_dict(), "even": t_even.to_dict()})
    summary["gains"] = {
        "solve_residual": {str(k): v for k, v in sorted(gains.solve_residual.items())},
        "condition": {str(k): v for k, v in sorted(gains.condition.items())},
        "K0_even": float(gains.gains(EVEN)[0]),
        "min_abs_gain": float(min(np.abs(gains.gains(ODD)).min(), np.abs(gains.gains(EVEN)).min())),
        "corrections_cauchy_ratio": {
            "1": _cauchy_ratio(gains.corrections(ODD)),
            "2": _cauchy_ratio(gains.corrections(EVEN)),
        },
    }
    summary["transform"] = {
        "cond_l2": {"1": t_odd.cond_l2, "2": t_even.cond_l2, "pair": pair_condition(t_odd, t_even)}
    }

    if "diagnostics" in tasks:
        with _stage("transform_diagnostics"):
            diag = _diagnostics(cfg, potentials, gains, (t_odd, t_even))
        write_json(out / "diagnostics.json", diag["full"])
        summary["diagnostics"] = diag["summary"]

    if "heat" in tasks:
        with _stage("closed_loop_sim"):
            summary["heat"] = _heat(cfg, potentials, gains, (t_odd, t_even), out)

    if "burgers" in tasks:
        with _stage("closed_loop_sim"):
            summary["burgers"] = _burgers(cfg, potentials, gains, out)

    if "moments" in tasks:
        with _stage("moments_control"):
            summary["moments"] = _moments(cfg, potentials, out)

    write_json(out / "summary.json", summary)
    return summary


def _diagnostics(cfg, potentials, gains, transforms) -> dict[str, Any]:
    full: dict[str, Any] = {"schema_version": SCHEMA_VERSION, "reports": []}
    short: dict[str, Any] = {}
    lam, n = cfg.lam, cfg.n_max
    reports = full["reports"]
    if "denominator" in cfg.checks:
        lo = check_denominator_bound(lam, n)
        far = check_denominator_bound(lam, n, n_min=int(math.floor(lam)) + 1, region="below")
        reports.append({"kind": "denominator_bound", "params": {"lambda": lam, "n_max": n},
                        "minimum": lo, "minimum_n_above_lambda": far, "verdict": far >= 0.5})
        short["denominator_bound"] = {"minimum": lo, "minimum_n_above_lambda": far}
    if "closeness" in cfg.checks:
        for s in cfg.closeness_s:
            for parity in (ODD, EVEN):
                rep = quadratic_closeness(lam, potentials, s, parity, n)
                reports.append(rep.to_dict())
                short[f"closeness_s{s:g}_p{parity}"] = {"cauchy_ratio": rep.cauchy_ratio,
                                                       "verdict": rep.verdict}
    if "smoothing" in cfg.checks:
        for r in cfg.smoothing_r:
            for parity in (ODD, EVEN):
                for rep in smoothing_sums(lam, potentials, r, parity, n):
                    reports.append(rep.to_dict())
                    short[f"{rep.kind}_r{r:g}_p{parity}"] = {"cauchy_ratio": rep.cauchy_ratio,
                                                            "verdict": rep.verdict}
            if potentials.m == 0:
                val = aggregate_smoothing(lam, potentials, r, ODD, n)
                reports.append({"kind": "aggregate_smoothing", "params": {"r": r}, "value": val})
                short[f"aggregate_smoothing_r{r:g}"] = val
    if "tb_eq_b" in cfg.checks:
        for t in transforms:
            for s in (-1.0, 0.0):
                rep = tb_eq_b_residual(t, gains, potentials, s)
                reports.append(rep.to_dict())
                short[f"tb_eq_b_s{s:g}_p{t.parity}"] = {
                    "truncated_max": rep.params["truncated_max"], "total": rep.total,
                    "reference": rep.reference, "relative": rep.relative,
                }
    if "operator_equality" in cfg.checks:
        for t in transforms:
            rep = operator_equality_residual(t, gains, potentials, 0.0)
            reports.append(rep.to_dict())
            short[f"operator_equality_p{t.parity}"] = {"interior_max": rep.interior_max,
                                                      "boundary_max": rep.boundary_max}
    if "riesz" in cfg.checks:
        for parity in (ODD, EVEN):
            fam = q_family(lam, potentials, 0.0, parity, n)
            c1, c2 = riesz_frame_bounds(fam, potentials.m)
            reports.append({"kind": "riesz_frame_bounds", "params": {"s": 0.0, "parity": parity},
                            "lower": c1, "upper": c2, "verdict": c1 > 0})
            short[f"riesz_p{parity}"] = {"lower": c1, "upper": c2}
    return {"full": full, "summary": short}


def _heat(cfg, potentials, gains, transforms, out: Path) -> dict[str, Any]:
    y0 = random_initial_state(cfg.n_max, cfg.rng(2), cfg.initial_decay)
    window = None
    if cfg.fit_start is not None or cfg.fit_end is not None:
        window = (cfg.fit_start if cfg.fit_start is not None else 0.2 * cfg.t_final,
                  cfg.fit_end if cfg.fit_end is not None else cfg.t_final)
    indices = (0.0,) + tuple(r for r in cfg.norm_indices if r != 0.0)
    sim = SimConfig(cfg.n_max, cfg.dt, cfg.t_final, y0, cfg.scheme, cfg.record_every,
                    indices, window)
    traj = simulate_heat_closed_loop(sim, gains, potentials, transforms)
    write_text(out / "trajectory.csv", traj.to_csv())
    l2 = traj.norm_history[0.0]
    decay_c = float(np.max(l2 * np.exp(cfg.lam * traj.times)) / l2[0])
    rates = {f"{r:g}": fit_decay_rate(traj, *sim.window, norm_index=r) for r in indices}
    return {
        "fit_window": list(sim.window),
        "fitted_rate": traj.fitted_rate,
        "transformed_rate": traj.transformed_rate,
        "transformed_within_5pct": abs(traj.transformed_rate - cfg.lam) <= 0.05 * cfg.lam,
        "rates": rates,
        "decay_constant": decay_c,
        "initial_norm": float(l2[0]),
        "final_norm": float(l2[-1]),
    }


def _burgers(cfg, potentials, gains, out: Path) -> dict[str, Any]:
    y0 = random_initial_state(cfg.n_max, cfg.rng(3), cfg.initial_decay, cfg.burgers_initial_norm)
    sim = SimConfig(cfg.n_max, cfg.burgers_dt, cfg.burgers_t_final, y0, cfg.scheme,
                    cfg.record_every)
    traj = simulate_burgers_closed_loop(sim, gains, potentials, cfg.burgers_smallness)
    write_text(out / "burgers_trajectory.csv", traj.to_csv())
    threshold = (cfg.lam - 1.0) / 2.0
    return {
        "fit_window": list(sim.window),
        "fitted_rate": traj.fitted_rate,
        "rate_threshold": threshold,
        "meets_threshold": traj.fitted_rate >= threshold,
        "initial_norm": float(traj.norm_history[0.0][0]),
        "final_norm": float(traj.norm_history[0.0][-1]),
    }


def _moments(cfg, potentials, out: Path) -> dict[str, Any]:
    y0 = random_initial_state(cfg.n_max, cfg.rng(2), cfg.initial_decay)
    plan = plan_null_control(y0, potentials.truncated(cfg.n_max), cfg.moment_horizon,
                             cfg.moment_modes, cfg.moment_grid, cfg.moment_regularization)
    verify_plan(plan, y0, potentials.truncated(cfg.n_max))
    write_text(out / "plan.csv", plan.to_csv())
    write_json(out / "plan.json", plan.to_dict())
    return {
        "modes": cfg.moment_modes,
        "horizon": cfg.moment_horizon,
        "moment_residual": plan.moment_residual,
        "terminal_residual": plan.terminal_residual,
    }


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

_SUBCOMMANDS = {
    "gains": (),
    "diagnose": ("diagnostics",),
    "simulate-heat": ("heat",),
    "simulate-burgers": ("burgers",),
    "moments": ("moments",),
    "report": None,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario file (INI-style key = value with sections)")
    common.add_argument("--out", help="output directory (overrides [output] directory)")
    common.add_argument("--seed", type=int, help="random seed (unsigned 64-bit)")
    common.add_argument("--n-max", type=int, dest="n_max", help="spectral truncation N")
    common.add_argument("--lambda", type=float, dest="lam", help="target decay rate")
    parser = argparse.ArgumentParser(
        prog="fredholm-backstep",
        description="Backstepping gains, transforms and closed-loop decay for the heat "
        "equation on the torus with two scalar controls.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "gains": "synthesize gains and transforms",
        "diagnose": "gains plus finite-truncation diagnostics",
        "simulate-heat": "closed-loop heat simulation",
        "simulate-burgers": "closed-loop viscous Burgers simulation",
        "moments": "open-loop null control by moments",
        "report": "run every task listed in the config",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def _apply_overrides(cfg: ScenarioConfig, args: argparse.Namespace) -> ScenarioConfig:
    changes: dict[str, Any] = {}
    if args.out is not None:
        changes["out_dir"] = args.out
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        changes["seed"] = args.seed
    if args.n_max is not None:
        changes["n_max"] = args.n_max
    if args.lam is not None:
        changes["lam"] = args.lam
    return validate_config(replace(cfg, **changes)) if changes else cfg


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ScenarioConfig()
        cfg = _apply_overrides(cfg, args)
        tasks = _SUBCOMMANDS[args.command]
        summary = run_scenario(cfg, tasks)
    except NumericalError as exc:
        payload = {"error": type(exc).__name__, "message": str(exc), "details": exc.details}
        sys.stderr.write(json.dumps(payload, sort_keys=True, default=str) + "\n")
        return 3
    except ValueError as exc:  # ConfigError and input validation
        sys.stderr.write(f"error: {exc}\n")
        return 2
    print(f"wrote {cfg.out_dir}/summary.json ({', '.join(summary['scenario']['tasks']) or 'gains'})")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
