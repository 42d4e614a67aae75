"""
Open-loop null controls from truncated moment problems.

With one scalar control per parity, mode n of parity k obeys

    u_n' = -n^2 u_n + a_n v(t),

so u_n(T) = 0 iff  int_0^T exp(-n^2 (T - s)) v(s) ds = -exp(-n^2 T) u_n(0) / a_n.

The least-norm v solving finitely many such moment equations lies in the span
of the exponentials; its coefficients solve the Gram system of the family.
Integrals use the composite trapezoid rule on a uniform grid.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ControllabilityError, IllConditionedError
from .gains import PotentialSpec
from .simulation import SimConfig, sample_signal, simulate_heat_open_loop_multi
from .spectral import EVEN, ODD, SpectralFunction, mode_indices

DEFAULT_GRID = 2048
MODE_CAP = 8
GRAM_COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class SampledControl:
    times: np.ndarray
    values: np.ndarray
    moment_residual: float
    gram_condition: float


@dataclass(eq=False)
class MomentControlPlan:
    """Sampled controls (v1 odd, v2 even) on a uniform grid over [0, horizon].

    ``terminal_residual`` is NaN until :func:`verify_plan` runs.
    """

    horizon: float
    target_modes: int
    times: np.ndarray
    v1_samples: np.ndarray
    v2_samples: np.ndarray
    terminal_residual: float = float("nan")
    moment_residual: float = float("nan")
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.v1_samples = np.asarray(self.v1_samples, dtype=float)
        self.v2_samples = np.asarray(self.v2_samples, dtype=float)
        if not (self.times.shape == self.v1_samples.shape == self.v2_samples.shape):
            raise ValueError("time grid and control samples differ in length")
        steps = np.diff(self.times)
        if steps.size and not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise ValueError("control samples must lie on a uniform grid")

    def to_dict(self) -> dict[str, Any]:
        return {
            "horizon": self.horizon,
            "target_modes": self.target_modes,
            "terminal_residual": None if np.isnan(self.terminal_residual) else self.terminal_residual,
            "moment_residual": None if np.isnan(self.moment_residual) else self.moment_residual,
            "t": self.times.tolist(),
            "v1": self.v1_samples.tolist(),
            "v2": self.v2_samples.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> MomentControlPlan:
        nan = lambda v: float("nan") if v is None else float(v)  # noqa: E731
        return cls(
            float(data["horizon"]),
            int(data["target_modes"]),
            data["t"],
            data["v1"],
            data["v2"],
            nan(data.get("terminal_residual")),
            nan(data.get("moment_residual")),
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "v1", "v2"])
        for row in zip(self.times, self.v1_samples, self.v2_samples):
            writer.writerow([format(float(v), ".17g") for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, target_modes: int) -> MomentControlPlan:
        reader = csv.DictReader(io.StringIO(text))
        rows = [(float(r["t"]), float(r["v1"]), float(r["v2"])) for r in reader]
        if len(rows) < 2:
            raise ValueError("plan CSV needs at least two samples")
        t, v1, v2 = (np.array(c) for c in zip(*rows))
        return cls(float(t[-1]), target_modes, t, v1, v2)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> MomentControlPlan:
        return cls.from_dict(json.loads(text))


def trapezoid_weights(horizon: float, grid_size: int) -> tuple[np.ndarray, np.ndarray]:
    times = np.linspace(0.0, horizon, grid_size)
    w = np.full(grid_size, horizon / (grid_size - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return times, w


def solve_moment_problem(
    targets: np.ndarray,
    horizon: float,
    grid_size: int = DEFAULT_GRID,
    regularization: float = 0.0,
    exponents: np.ndarray | None = None,
    mode_cap: int = MODE_CAP,
) -> SampledControl:
    """Least-norm v with int_0^T exp(-mu_j (T - s)) v(s) ds = targets_j.

    ``exponents`` default to mu_j = j^2 for j = 1..M. Solves
    (G + regularization I) c = targets with the trapezoid Gram matrix G and
    returns v = sum_j c_j exp(-mu_j (T - s)) on the grid.
    """
    targets = np.asarray(targets, dtype=float).reshape(-1)
    m = targets.shape[0]
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    if regularization < 0:
        raise ValueError("regularization must be non-negative")
    mu = (np.arange(1, m + 1, dtype=float) ** 2 if exponents is None
          else np.asarray(exponents, dtype=float).reshape(-1))
    if mu.shape[0] != m:
        raise ValueError("one exponent per target is required")
    if m > mode_cap:
        raise ValueError(
            f"{m} moments exceed the cap of {mode_cap}; raise mode_cap and add regularization"
        )
    times, w = trapezoid_weights(horizon, grid_size)
    if m == 0:
        return SampledControl(times, np.zeros(grid_size), 0.0, 1.0)
    basis = np.exp(-mu[:, None] * (horizon - times[None, :]))
    gram = (basis * w) @ basis.T
    cond = float(np.linalg.cond(gram))
    if regularization == 0.0 and (not np.isfinite(cond) or cond > GRAM_COND_LIMIT):
        raise IllConditionedError(
            f"moment Gram matrix condition {cond:.3e} is too large; "
            "add regularization or target fewer modes",
            condition=cond,
            modes=m,
        )
    coef = np.linalg.solve(gram + regularization * np.eye(m), targets)
    values = basis.T @ coef
    residual = float(np.max(np.abs((basis * w) @ values - targets)))
    return SampledControl(times, values, residual, cond)


def _targeted(parity: int, modes: int) -> np.ndarray:
    """Odd modes 1..M; even modes 0..M (the mean is always targeted)."""
    return mode_indices(modes, parity)


def plan_null_control(
    y0: SpectralFunction,
    potentials: PotentialSpec,
    horizon: float,
    modes: int,
    grid_size: int = DEFAULT_GRID,
    regularization: float = 0.0,
    mode_cap: int = MODE_CAP,
) -> MomentControlPlan:
    """Controls that steer odd modes 1..M and even modes 0..M to zero at T."""
    if modes < 1:
        raise ValueError("modes must be at least 1")
    if modes > min(y0.n_max, potentials.n_max):
        raise ValueError(f"cannot target {modes} modes with truncation {y0.n_max}")
    samples = []
    residual = 0.0
    for parity in (ODD, EVEN):
        idx = _targeted(parity, modes)
        a = potentials.amplitudes(parity, modes)
        if np.any(a == 0.0):
            bad = int(idx[np.flatnonzero(a == 0.0)[0]])
            raise ControllabilityError(
                f"potential coefficient of parity {parity} vanishes at mode {bad}; "
                "that mode cannot be steered"
            )
        b = y0.coeffs(parity)[: idx.shape[0]]
        mu = idx.astype(float) ** 2
        targets = -np.exp(-mu * horizon) * b / a
        sol = solve_moment_problem(
            targets, horizon, grid_size, regularization, exponents=mu,
            mode_cap=mode_cap + (1 if parity == EVEN else 0),
        )
        samples.append(sol)
        residual = max(residual, sol.moment_residual)
    return MomentControlPlan(
        horizon, modes, samples[0].times, samples[0].values, samples[1].values,
        moment_residual=residual,
        meta={"gram_condition": [s.gram_condition for s in samples]},
    )


def verify_plan(
    plan: MomentControlPlan,
    y0: SpectralFunction,
    potentials: PotentialSpec,
    scheme: str = "integrating_factor_rk2",
) -> float:
    """Simulate the two-control system and store the targeted terminal norm.

    The step equals the sample spacing, so IF-RK2 reproduces the trapezoid
    moments exactly.
    """
    n = y0.n_max
    dt = float(plan.times[1] - plan.times[0])
    cfg = SimConfig(n, dt, plan.horizon, y0, scheme=scheme,
                    record_every=max(1, len(plan.times) - 1))
    drives = [
        (potentials.profile(ODD, n), sample_signal(plan.times, plan.v1_samples)),
        (potentials.profile(EVEN, n), sample_signal(plan.times, plan.v2_samples)),
    ]
    final = simulate_heat_open_loop_multi(cfg, drives).final_state
    k = plan.target_modes
    controlled = np.concatenate([final.odd[:k], final.even[: k + 1]])
    plan.terminal_residual = float(np.linalg.norm(controlled))
    plan.meta["terminal_norm_all"] = float(np.sqrt(final.odd @ final.odd + final.even @ final.even))
    return plan.terminal_residual
