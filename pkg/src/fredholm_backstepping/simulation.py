"""
Time integration in coefficient space.

The Laplacian is diagonal in the eigenbasis, so both schemes propagate it
exactly with E = exp(-n^2 dt) and treat every other term S(t, y) explicitly:

    IF-Euler:  y+ = E (y + dt S(t, y))
    IF-RK2:    y* = E (y + dt S(t, y))
               y+ = E y + dt/2 (E S(t, y) + S(t + dt, y*))

IF-RK2 is Heun's method on w = exp(n^2 t) y. For a state-independent source
it reduces to the trapezoid rule on the Duhamel integral.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Literal, Sequence

import numpy as np

from .errors import DecayFitError, InstabilityError, SmallnessWarning, StabilityWarning
from .gains import FredholmTransform, GainProfile, PotentialSpec
from .spectral import (
    EVEN,
    ODD,
    SQRT_2PI,
    SpectralFunction,
    default_grid_size,
    evaluate_on_grid,
    mode_indices,
    project_to_spectrum,
    sobolev_weights,
    x_derivative,
)

Scheme = Literal["integrating_factor_euler", "integrating_factor_rk2"]
SCHEMES = ("integrating_factor_euler", "integrating_factor_rk2")
BLOWUP_FACTOR = 1e6

# source(t, odd, even) -> (odd_source, even_source)
Source = Callable[[float, np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class SimConfig:
    n_max: int
    dt: float
    t_final: float
    initial_state: SpectralFunction
    scheme: Scheme = "integrating_factor_rk2"
    record_every: int = 100
    norm_indices: tuple[float, ...] = (0.0,)
    fit_window: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not (self.dt > 0 and self.t_final >= self.dt):
            raise ValueError(f"need 0 < dt <= t_final, got dt={self.dt}, t_final={self.t_final}")
        if self.record_every < 1:
            raise ValueError("record_every must be a positive integer")
        if self.initial_state.n_max != self.n_max:
            raise ValueError(
                f"initial state truncation {self.initial_state.n_max} != n_max {self.n_max}"
            )
        object.__setattr__(self, "norm_indices", tuple(float(r) for r in self.norm_indices))

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def window(self) -> tuple[float, float]:
        return self.fit_window if self.fit_window is not None else (0.2 * self.t_final, self.t_final)


@dataclass(eq=False)
class SimTrajectory:
    """Recorded snapshots with norm histories.

    ``norm_history`` maps a Sobolev index r to ||y||_{H^{m+r}} per snapshot.
    ``transformed_norms`` holds ||T_12 y||_{L2} when a transform pair was given.
    """

    times: np.ndarray
    states: list[SpectralFunction]
    norm_history: dict[float, np.ndarray]
    fitted_rate: float = float("nan")
    fit_window: tuple[float, float] = (0.0, 0.0)
    controls: np.ndarray | None = None
    transformed_norms: np.ndarray | None = None
    transformed_rate: float = float("nan")
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        self.norm_history = {float(k): np.asarray(v, dtype=float) for k, v in self.norm_history.items()}

    @property
    def final_state(self) -> SpectralFunction:
        return self.states[-1]

    def to_csv(self) -> str:
        """Columns t, norm_L2, norm_H<r>..., u1, u2, mass (and norm_z when available)."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        extra = sorted(r for r in self.norm_history if r != 0.0)
        header = ["t", "norm_L2"] + [f"norm_H{r:g}" for r in extra] + ["u1", "u2", "mass"]
        if self.transformed_norms is not None:
            header.append("norm_z")
        writer.writerow(header)
        l2 = self.norm_history.get(0.0)
        mass = mass_probe(self)
        ctrl = self.controls if self.controls is not None else np.zeros((len(self.times), 2))
        for i, t in enumerate(self.times):
            l2_i = l2[i] if l2 is not None else _l2(self.states[i])
            row = [t, l2_i] + [self.norm_history[r][i] for r in extra] + [ctrl[i, 0], ctrl[i, 1], mass[i]]
            if self.transformed_norms is not None:
                row.append(self.transformed_norms[i])
            writer.writerow([format(float(v), ".17g") for v in row])
        return buf.getvalue()

    def states_to_dict(self) -> dict[str, Any]:
        return {"times": self.times.tolist(), "states": [s.to_dict() for s in self.states]}


def _l2(f: SpectralFunction) -> float:
    return float(np.sqrt(f.odd @ f.odd + f.even @ f.even))


# ---------------------------------------------------------------------------
# stepping core
# ---------------------------------------------------------------------------


def _integrate(
    cfg: SimConfig,
    source: Source,
    m: float = 0.0,
    controls: Callable[[np.ndarray, np.ndarray], tuple[float, float]] | None = None,
    transforms: tuple[FredholmTransform, FredholmTransform] | None = None,
    guard_growth: bool = True,
) -> SimTrajectory:
    """Step the system and record snapshots.

    ``guard_growth`` flags growth beyond BLOWUP_FACTOR times the initial norm;
    driven open-loop runs switch it off and keep only the finiteness check.
    """
    n = cfg.n_max
    idx_o = mode_indices(n, ODD).astype(float)
    idx_e = mode_indices(n, EVEN).astype(float)
    e_o, e_e = np.exp(-(idx_o**2) * cfg.dt), np.exp(-(idx_e**2) * cfg.dt)
    weights = {
        r: (sobolev_weights(idx_o, m + r), sobolev_weights(idx_e, m + r)) for r in cfg.norm_indices
    }
    if 0.0 not in weights:
        weights[0.0] = (sobolev_weights(idx_o, m), sobolev_weights(idx_e, m))

    y_o = np.array(cfg.initial_state.odd)
    y_e = np.array(cfg.initial_state.even)
    times: list[float] = []
    states: list[SpectralFunction] = []
    norms: dict[float, list[float]] = {r: [] for r in cfg.norm_indices}
    ctrl: list[tuple[float, float]] = []
    znorms: list[float] = []
    raw_l2_0 = float(np.sqrt(y_o @ y_o + y_e @ y_e))
    limit = BLOWUP_FACTOR * max(raw_l2_0, np.finfo(float).tiny)

    def record(t: float) -> None:
        times.append(t)
        states.append(SpectralFunction(n, y_o, y_e))
        for r in cfg.norm_indices:
            w_o, w_e = weights[r]
            norms[r].append(float(np.sqrt(w_o @ y_o**2 + w_e @ y_e**2)))
        if controls is not None:
            ctrl.append(controls(y_o, y_e))
        if transforms is not None:
            z_o = transforms[0].matrix @ y_o
            z_e = transforms[1].matrix @ y_e
            znorms.append(float(np.sqrt(z_o @ z_o + z_e @ z_e)))

    record(0.0)
    euler = cfg.scheme == "integrating_factor_euler"
    dt = cfg.dt
    for k in range(cfg.n_steps):
        t = k * dt
        s_o, s_e = source(t, y_o, y_e)
        p_o = e_o * (y_o + dt * s_o)
        p_e = e_e * (y_e + dt * s_e)
        if euler:
            y_o, y_e = p_o, p_e
        else:
            s2_o, s2_e = source(t + dt, p_o, p_e)
            y_o = e_o * y_o + 0.5 * dt * (e_o * s_o + s2_o)
            y_e = e_e * y_e + 0.5 * dt * (e_e * s_e + s2_e)
        if (k + 1) % cfg.record_every == 0 or k + 1 == cfg.n_steps:
            size = float(np.sqrt(y_o @ y_o + y_e @ y_e))
            if not np.isfinite(size) or (guard_growth and size > limit):
                raise InstabilityError(
                    f"trajectory left the stable regime at t={t + dt:.6g} "
                    f"(||y||={size:.3e}, ||y0||={raw_l2_0:.3e})",
                    time=t + dt,
                    norm=size if np.isfinite(size) else None,
                    initial_norm=raw_l2_0,
                )
            record((k + 1) * dt)

    traj = SimTrajectory(
        np.array(times),
        states,
        {r: np.array(v) for r, v in norms.items()},
        controls=np.array(ctrl) if controls is not None else None,
        transformed_norms=np.array(znorms) if transforms is not None else None,
        meta={"scheme": cfg.scheme, "dt": cfg.dt, "n_max": n, "m": m},
    )
    traj.fit_window = cfg.window
    # the automatic fit is best-effort; an unfittable window leaves the rates at nan
    first = cfg.norm_indices[0]
    try:
        traj.fitted_rate = fit_decay_rate(traj, *cfg.window, norm_index=first)
        if traj.transformed_norms is not None:
            traj.transformed_rate = fit_decay_rate(traj, *cfg.window, transformed=True)
    except DecayFitError as exc:
        traj.meta["fit_error"] = str(exc)
    return traj


def stability_dt_bound(gains: GainProfile) -> float:
    """0.1 / (|lambda| + sqrt(sum_n K_n^2 / max(n, 1)))."""
    total = 0.0
    for parity in (ODD, EVEN):
        k = gains.gains(parity)
        n = np.maximum(mode_indices(gains.n_max, parity), 1).astype(float)
        total += float(np.sum(k**2 / n))
    return 0.1 / (abs(gains.lam) + np.sqrt(total))


def _check_match(cfg: SimConfig, gains: GainProfile, potentials: PotentialSpec) -> None:
    if gains.n_max != cfg.n_max:
        raise ValueError(f"gains truncation {gains.n_max} != simulation n_max {cfg.n_max}")
    if potentials.n_max < cfg.n_max:
        raise ValueError(f"potential stores {potentials.n_max} modes, need {cfg.n_max}")
    if not gains.complete:
        raise ValueError("closed-loop simulation needs gains for both parities")
    bound = stability_dt_bound(gains)
    if cfg.dt > bound:
        warnings.warn(
            f"dt={cfg.dt:g} exceeds the feedback stability estimate {bound:.3g}",
            StabilityWarning,
            stacklevel=3,
        )


def _feedback(gains: GainProfile, potentials: PotentialSpec, n: int):
    k_o, k_e = gains.gains(ODD), gains.gains(EVEN)
    a_o, a_e = potentials.amplitudes(ODD, n), potentials.amplitudes(EVEN, n)

    def controls(y_o: np.ndarray, y_e: np.ndarray) -> tuple[float, float]:
        return float(k_o @ y_o), float(k_e @ y_e)

    def source(_t: float, y_o: np.ndarray, y_e: np.ndarray):
        return (k_o @ y_o) * a_o, (k_e @ y_e) * a_e

    return source, controls


# ---------------------------------------------------------------------------
# heat equation
# ---------------------------------------------------------------------------


def simulate_heat_closed_loop(
    cfg: SimConfig,
    gains: GainProfile,
    potentials: PotentialSpec,
    transforms: tuple[FredholmTransform, FredholmTransform] | None = None,
) -> SimTrajectory:
    """y' = Delta y + K_1(y) phi_1 + K_2(y) phi_2.

    With ``transforms`` = (T_1, T_2) the trajectory also records
    ||T_12 y(t)||_{L2} and its fitted decay rate.
    """
    _check_match(cfg, gains, potentials)
    source, controls = _feedback(gains, potentials, cfg.n_max)
    return _integrate(cfg, source, potentials.m, controls, transforms)


def sample_signal(times: np.ndarray, values: np.ndarray) -> Callable[[float], float]:
    """Piecewise-linear interpolant of a sampled control signal."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape or times.ndim != 1:
        raise ValueError("control samples need matching 1-D time and value arrays")
    return lambda t: float(np.interp(t, times, values))


def simulate_heat_open_loop_multi(
    cfg: SimConfig,
    drives: Sequence[tuple[SpectralFunction, Callable[[float], float]]],
    m: float = 0.0,
) -> SimTrajectory:
    """u' = Delta u + sum_j v_j(t) phi_j."""
    profiles = [(phi.resized(cfg.n_max), v) for phi, v in drives]

    def source(t: float, _o: np.ndarray, _e: np.ndarray):
        s_o = np.zeros(cfg.n_max)
        s_e = np.zeros(cfg.n_max + 1)
        for phi, v in profiles:
            val = v(t)
            s_o = s_o + val * phi.odd
            s_e = s_e + val * phi.even
        return s_o, s_e

    traj = _integrate(cfg, source, m, None, guard_growth=False)
    ctrl = np.zeros((len(traj.times), 2))
    for j, (_, v) in enumerate(profiles[:2]):
        ctrl[:, j] = [v(t) for t in traj.times]
    traj.controls = ctrl
    return traj


def simulate_heat_open_loop(
    cfg: SimConfig,
    potentials_single: SpectralFunction,
    control_signal: Callable[[float], float] | tuple[np.ndarray, np.ndarray],
) -> SimTrajectory:
    """u' = Delta u + v(t) phi with one control.

    ``control_signal`` is a callable or a ``(times, values)`` sample pair
    covering [0, t_final].
    """
    if isinstance(control_signal, tuple):
        times, values = control_signal
        if times[0] > 0 or times[-1] < cfg.t_final - 1e-12:
            raise ValueError("control samples must cover [0, t_final]")
        control_signal = sample_signal(times, values)
    return simulate_heat_open_loop_multi(cfg, [(potentials_single, control_signal)])


# ---------------------------------------------------------------------------
# probes
# ---------------------------------------------------------------------------


def noncontrollability_invariant(traj: SimTrajectory, phi: SpectralFunction, n: int) -> float:
    """max_t |u_n^odd phi_n^even - u_n^even phi_n^odd| over the snapshots."""
    n_max = traj.states[0].n_max
    if not 1 <= n <= min(n_max, phi.n_max):
        raise ValueError(f"mode {n} outside 1..{min(n_max, phi.n_max)}")
    po, pe = phi.odd[n - 1], phi.even[n]
    return float(max(abs(s.odd[n - 1] * pe - s.even[n] * po) for s in traj.states))


def mass_probe(traj: SimTrajectory) -> np.ndarray:
    """Mean value integral sqrt(2 pi) a_0^2(t) per snapshot."""
    return np.array([SQRT_2PI * s.even[0] for s in traj.states])


# ---------------------------------------------------------------------------
# viscous Burgers
# ---------------------------------------------------------------------------


def burgers_nonlinearity(y: SpectralFunction, n_grid: int | None = None) -> SpectralFunction:
    """-P_N d/dx (y^2 / 2), dealiased by evaluating on more than 3N points."""
    n_grid = default_grid_size(y.n_max) if n_grid is None else n_grid
    values = evaluate_on_grid(y, n_grid)
    square = project_to_spectrum(0.5 * values**2, y.n_max)
    return -x_derivative(square)


def simulate_burgers_closed_loop(
    cfg: SimConfig,
    gains: GainProfile,
    potentials: PotentialSpec,
    smallness: float = 1e-2,
) -> SimTrajectory:
    """y' = Delta y - d/dx (y^2 / 2) + K_1(y) phi_1 + K_2(y) phi_2."""
    if potentials.m != 0:
        raise ValueError("the nonlinear closed loop is set up for m = 0 potentials")
    _check_match(cfg, gains, potentials)
    y0 = _l2(cfg.initial_state)
    if y0 > smallness:
        warnings.warn(
            f"||y0||_L2 = {y0:.3g} exceeds the smallness {smallness:.3g}",
            SmallnessWarning,
            stacklevel=2,
        )
    linear, controls = _feedback(gains, potentials, cfg.n_max)
    n = cfg.n_max
    n_grid = default_grid_size(n)
    k = mode_indices(n, ODD).astype(float)
    spectrum_len = n_grid // 2 + 1
    scale = 2.0 * np.sqrt(np.pi) / n_grid

    # inline evaluate/project pair on the fixed grid to avoid object churn
    def nonlinear(y_o: np.ndarray, y_e: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        spec = np.zeros(spectrum_len, dtype=complex)
        spec[0] = n_grid * y_e[0] / SQRT_2PI
        spec[1 : n + 1] = 0.5 * n_grid * (y_e[1:] - 1j * y_o) / np.sqrt(np.pi)
        u = np.fft.irfft(spec, n_grid)
        w = np.fft.rfft(0.5 * u * u)[1 : n + 1]
        w_even = w.real * scale
        w_odd = -w.imag * scale
        # -d/dx: sin -> -n cos, cos -> n sin
        return k * w_even, np.concatenate([[0.0], -k * w_odd])

    def source(t: float, y_o: np.ndarray, y_e: np.ndarray):
        l_o, l_e = linear(t, y_o, y_e)
        n_o, n_e = nonlinear(y_o, y_e)
        return l_o + n_o, l_e + n_e

    traj = _integrate(cfg, source, 0.0, controls)
    traj.meta["smallness"] = smallness
    traj.meta["grid"] = n_grid
    return traj


# ---------------------------------------------------------------------------
# measurement
# ---------------------------------------------------------------------------


def fit_decay_rate(
    traj: SimTrajectory,
    t_start: float,
    t_end: float,
    norm_index: float = 0.0,
    transformed: bool = False,
) -> float:
    """Least-squares slope of -log ||y(t)|| over snapshots in [t_start, t_end]."""
    if transformed:
        if traj.transformed_norms is None:
            raise ValueError("trajectory carries no transformed norms")
        norms = traj.transformed_norms
    else:
        if float(norm_index) not in traj.norm_history:
            raise ValueError(f"no norm history recorded for index {norm_index}")
        norms = traj.norm_history[float(norm_index)]
    eps = 1e-12 * max(1.0, abs(t_end))
    sel = (traj.times >= t_start - eps) & (traj.times <= t_end + eps)
    if sel.sum() < 2:
        raise DecayFitError(f"fewer than two snapshots in [{t_start}, {t_end}]")
    window = norms[sel]
    if np.any(window <= 0) or not np.all(np.isfinite(window)):
        raise DecayFitError(
            "norm vanished or underflowed inside the fit window; use a shorter window"
        )
    slope = np.polyfit(traj.times[sel], np.log(window), 1)[0]
    return float(-slope)


def random_initial_state(
    n_max: int,
    rng: np.random.Generator,
    decay: float = 2.0,
    l2_norm: float | None = None,
) -> SpectralFunction:
    """Gaussian coefficients scaled by (1 + n)^{-decay}, optionally normalized in L2."""
    o = rng.standard_normal(n_max) / (1.0 + mode_indices(n_max, ODD)) ** decay
    e = rng.standard_normal(n_max + 1) / (1.0 + mode_indices(n_max, EVEN)) ** decay
    f = SpectralFunction(n_max, o, e)
    if l2_norm is not None:
        f = f * (l2_norm / _l2(f))
    return f
