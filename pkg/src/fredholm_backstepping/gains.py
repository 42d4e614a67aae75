"""
Feedback gains and Fredholm transforms for the two-control heat equation.

For one parity with potential coefficients a_p and target rate lambda, the
kernel vectors are

    <q_n, f_p> = a_p / (p^2 + lambda - n^2),

the transform maps f_n to -K_n q_n, and the gains K_n are fixed by requiring
that the transform leave the control profile phi unchanged:

    sum_n a_n K_n / (p^2 + lambda - n^2) = -1   for every p.

At finite truncation this is a dense N x N (odd) or (N+1) x (N+1) (even)
linear system in g_n = K_n. The corrections c_n = -a_n K_n - lambda measure
how far the products a_n K_n sit from -lambda.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
import scipy.linalg

from .errors import (
    IllConditionedError,
    ResonanceError,
    SingularTransformError,
    ZeroGainError,
)
from .spectral import EVEN, ODD, SpectralFunction, _check_parity, mode_indices

COND_LIMIT = 1e12
RESONANCE_TOL = 1e-9


# ---------------------------------------------------------------------------
# admissible rates
# ---------------------------------------------------------------------------


def resonance_search_radius(lam: float) -> int:
    """Largest i that can appear in lam = i^2 - j^2.

    (i - j)(i + j) = lam with i - j >= 1 forces i <= (|lam| + 1) / 2.
    """
    return int(math.floor((abs(lam) + 1.0) / 2.0)) + 1


def distance_to_resonance(lam: float, bound: int | None = None) -> float:
    """Distance from ``lam`` to the nearest i^2 - j^2 with 0 <= i, j <= bound."""
    radius = resonance_search_radius(lam)
    if bound is None:
        bound = radius
    if bound < radius:
        raise ValueError(
            f"search bound {bound} does not cover every representation of {lam}; "
            f"need at least {radius}"
        )
    sq = np.arange(bound + 1, dtype=float) ** 2
    diffs = sq[:, None] - sq[None, :]
    return float(np.min(np.abs(diffs - lam)))


def is_admissible_lambda(lam: float, bound: int | None = None) -> bool:
    """True iff ``lam`` avoids every difference of two squares.

    The enumeration over i, j <= bound is exhaustive for integers; for
    non-integers the same search certifies a distance above 1e-9.
    """
    return distance_to_resonance(lam, bound) > RESONANCE_TOL


def nearest_admissible_family(lam: float) -> list[int]:
    """Nearest members of 4M + 2 below and above ``lam`` (M >= 0)."""
    below = 4 * math.floor((lam - 2.0) / 4.0) + 2
    above = below + 4
    if below == lam:
        above = below
    out = [v for v in (below, above) if v >= 2]
    return sorted(set(out))


def _denominators(rows: np.ndarray, cols: np.ndarray, lam: float) -> np.ndarray:
    d = rows[:, None].astype(float) ** 2 + lam - cols[None, :].astype(float) ** 2
    if np.any(np.abs(d) <= RESONANCE_TOL):
        p, n = np.argwhere(np.abs(d) <= RESONANCE_TOL)[0]
        raise ResonanceError(
            f"vanishing denominator p^2 + lambda - n^2 at p={rows[p]}, n={cols[n]} "
            f"for lambda={lam}"
        )
    return d


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """Control profiles phi_1 (odd) and phi_2 (even) by their coefficients.

    The stored length P may exceed the truncation used for gains; the extra
    rows let diagnostics look past the truncation. With ``validate`` set the
    constructor requires a_0^2 != 0 and non-vanishing a_n^k for n >= 1.
    """

    m: float
    odd_amplitudes: np.ndarray
    even_amplitudes: np.ndarray
    validate: bool = True
    lower_bound: float = field(init=False)
    upper_bound: float = field(init=False)

    def __post_init__(self) -> None:
        odd = np.array(self.odd_amplitudes, dtype=float).reshape(-1)
        even = np.array(self.even_amplitudes, dtype=float).reshape(-1)
        if odd.shape[0] < 1 or even.shape[0] != odd.shape[0] + 1:
            raise ValueError(
                "even amplitudes must have one more entry (n = 0) than odd amplitudes"
            )
        if not (np.all(np.isfinite(odd)) and np.all(np.isfinite(even))):
            raise ValueError("potential amplitudes must be finite")
        if self.validate:
            if even[0] == 0.0:
                raise ValueError("the even potential needs a nonzero mean a_0^2")
            zero_odd = np.flatnonzero(odd == 0.0)
            zero_even = np.flatnonzero(even[1:] == 0.0)
            if zero_odd.size or zero_even.size:
                which = (f"odd mode {zero_odd[0] + 1}" if zero_odd.size
                         else f"even mode {zero_even[0] + 1}")
                raise ValueError(f"potential amplitude vanishes at {which}")
        odd.setflags(write=False)
        even.setflags(write=False)
        object.__setattr__(self, "odd_amplitudes", odd)
        object.__setattr__(self, "even_amplitudes", even)
        n = np.arange(1, odd.shape[0] + 1, dtype=float)
        scaled = np.concatenate([np.abs(odd), np.abs(even[1:])]) * np.concatenate([n, n]) ** self.m
        object.__setattr__(self, "lower_bound", float(scaled.min()))
        object.__setattr__(self, "upper_bound", float(scaled.max()))

    @property
    def n_max(self) -> int:
        return int(self.odd_amplitudes.shape[0])

    def amplitudes(self, parity: int, n_max: int | None = None) -> np.ndarray:
        _check_parity(parity)
        n = self.n_max if n_max is None else n_max
        if n > self.n_max:
            raise ValueError(f"potential stores {self.n_max} modes, {n} requested")
        return self.odd_amplitudes[:n] if parity == ODD else self.even_amplitudes[: n + 1]

    def truncated(self, n_max: int) -> PotentialSpec:
        return replace(
            self,
            odd_amplitudes=self.amplitudes(ODD, n_max),
            even_amplitudes=self.amplitudes(EVEN, n_max),
        )

    def profile(self, parity: int | None = None, n_max: int | None = None) -> SpectralFunction:
        """phi_1, phi_2, or their sum when ``parity`` is None."""
        n = self.n_max if n_max is None else n_max
        odd = self.amplitudes(ODD, n) if parity in (None, ODD) else np.zeros(n)
        even = self.amplitudes(EVEN, n) if parity in (None, EVEN) else np.zeros(n + 1)
        return SpectralFunction(n, odd, even)

    @classmethod
    def constant(cls, n_max: int, amplitude: float = 1.0) -> PotentialSpec:
        return cls(0.0, np.full(n_max, amplitude), np.full(n_max + 1, amplitude))

    @classmethod
    def power_law(
        cls,
        n_max: int,
        m: float,
        amplitude: float = 1.0,
        rng: np.random.Generator | None = None,
    ) -> PotentialSpec:
        """a_n = amplitude * u_n * n^{-m}, with u_n in [0.5, 1.5] drawn from ``rng``.

        Without ``rng`` every u_n is 1. The mean a_0^2 equals ``amplitude``.
        """
        n = np.arange(1, n_max + 1, dtype=float)
        if rng is None:
            u_odd, u_even = np.ones(n_max), np.ones(n_max)
        else:
            u_odd = rng.uniform(0.5, 1.5, n_max)
            u_even = rng.uniform(0.5, 1.5, n_max)
        odd = amplitude * u_odd * n ** (-m)
        even = np.concatenate([[amplitude], amplitude * u_even * n ** (-m)])
        return cls(float(m), odd, even)

    def to_dict(self) -> dict[str, Any]:
        return {
            "m": self.m,
            "odd": self.odd_amplitudes.tolist(),
            "even": self.even_amplitudes.tolist(),
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any], validate: bool = True) -> PotentialSpec:
        return cls(float(data["m"]), data["odd"], data["even"], validate=validate)


# ---------------------------------------------------------------------------
# gains
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GainProfile:
    """Synthesized gains K_n^k and corrections c_n^k = -a_n^k K_n^k - lambda.

    A profile may carry one parity (as returned by :func:`solve_gains`) or
    both (after :meth:`merge`). Missing parities are ``None``.
    """

    lam: float
    m: float
    n_max: int
    odd_gains: np.ndarray | None = None
    even_gains: np.ndarray | None = None
    odd_corrections: np.ndarray | None = None
    even_corrections: np.ndarray | None = None
    solve_residual: dict[int, float] = field(default_factory=dict)
    condition: dict[int, float] = field(default_factory=dict)

    def gains(self, parity: int) -> np.ndarray:
        _check_parity(parity)
        k = self.odd_gains if parity == ODD else self.even_gains
        if k is None:
            raise ValueError(f"gain profile has no parity-{parity} gains")
        return k

    def corrections(self, parity: int) -> np.ndarray:
        _check_parity(parity)
        c = self.odd_corrections if parity == ODD else self.even_corrections
        if c is None:
            raise ValueError(f"gain profile has no parity-{parity} corrections")
        return c

    @property
    def complete(self) -> bool:
        return self.odd_gains is not None and self.even_gains is not None

    def merge(self, other: GainProfile) -> GainProfile:
        if (self.lam, self.m, self.n_max) != (other.lam, other.m, other.n_max):
            raise ValueError("cannot merge gain profiles with different lambda, m or n_max")
        pick = lambda a, b: a if a is not None else b  # noqa: E731
        return GainProfile(
            self.lam,
            self.m,
            self.n_max,
            pick(self.odd_gains, other.odd_gains),
            pick(self.even_gains, other.even_gains),
            pick(self.odd_corrections, other.odd_corrections),
            pick(self.even_corrections, other.even_corrections),
            {**other.solve_residual, **self.solve_residual},
            {**other.condition, **self.condition},
        )

    def zeroed(self) -> GainProfile:
        """Same shape with every gain set to zero (open-loop reference)."""
        z = lambda a: None if a is None else np.zeros_like(a)  # noqa: E731
        return replace(self, odd_gains=z(self.odd_gains), even_gains=z(self.even_gains))

    def interior_bounds(self, parity: int) -> tuple[float, float]:
        """Empirical (min, max) of |K_n| n^{-m} over interior modes 1 <= n <= N/2."""
        k = self.gains(parity)
        idx = mode_indices(self.n_max, parity)
        sel = (idx >= 1) & (idx <= self.n_max // 2)
        scaled = np.abs(k[sel]) * idx[sel].astype(float) ** (-self.m)
        return float(scaled.min()), float(scaled.max())

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"lambda": self.lam, "m": self.m, "n_max": self.n_max}
        for name in ("odd_gains", "even_gains", "odd_corrections", "even_corrections"):
            v = getattr(self, name)
            out[name] = None if v is None else v.tolist()
        out["solve_residual"] = {str(k): v for k, v in sorted(self.solve_residual.items())}
        out["condition"] = {str(k): v for k, v in sorted(self.condition.items())}
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> GainProfile:
        arr = lambda v: None if v is None else np.asarray(v, dtype=float)  # noqa: E731
        return cls(
            float(data["lambda"]),
            float(data["m"]),
            int(data["n_max"]),
            arr(data["odd_gains"]),
            arr(data["even_gains"]),
            arr(data["odd_corrections"]),
            arr(data["even_corrections"]),
            {int(k): float(v) for k, v in data.get("solve_residual", {}).items()},
            {int(k): float(v) for k, v in data.get("condition", {}).items()},
        )


def build_q_vector(
    n: int,
    lam: float,
    potentials: PotentialSpec,
    parity: int,
    n_max: int | None = None,
) -> SpectralFunction:
    """Kernel vector q_n with coefficients a_p / (p^2 + lambda - n^2)."""
    rows_n = potentials.n_max if n_max is None else n_max
    idx = mode_indices(rows_n, parity)
    if n not in idx:
        raise ValueError(f"mode {n} outside parity-{parity} range {idx[0]}..{idx[-1]}")
    a = potentials.amplitudes(parity, rows_n)
    d = _denominators(idx, np.array([n]), lam)[:, 0]
    return SpectralFunction.from_parity(a / d, parity)


def gain_matrix(lam: float, a: np.ndarray, parity: int) -> np.ndarray:
    """M_{p,n} = a_n / (p^2 + lambda - n^2) over one truncated parity."""
    n_max = a.shape[0] if parity == ODD else a.shape[0] - 1
    idx = mode_indices(n_max, parity)
    return a[None, :] / _denominators(idx, idx, lam)


def solve_gains(
    lam: float,
    potentials: PotentialSpec,
    parity: int,
    n_max: int | None = None,
    cond_limit: float = COND_LIMIT,
) -> GainProfile:
    """Solve the truncated system M g = -1 for one parity.

    Uses an LU factorization with a LAPACK 1-norm condition estimate.
    Raises :class:`IllConditionedError` above ``cond_limit`` and
    :class:`ZeroGainError` when a gain vanishes.
    """
    _check_parity(parity)
    if lam <= 0:
        raise ValueError(f"target rate lambda must be positive, got {lam}")
    if not is_admissible_lambda(lam):
        raise ResonanceError(f"lambda={lam} is a difference of two squares")
    n = potentials.n_max if n_max is None else n_max
    a = potentials.amplitudes(parity, n)
    mat = gain_matrix(lam, a, parity)
    rhs = -np.ones(mat.shape[0])

    lu, piv = scipy.linalg.lu_factor(mat, check_finite=True)
    anorm = np.linalg.norm(mat, 1)
    rcond, info = scipy.linalg.lapack.dgecon(lu, anorm, norm="1")
    cond = np.inf if rcond == 0 else 1.0 / rcond
    if info != 0 or not np.isfinite(cond) or cond > cond_limit:
        raise IllConditionedError(
            f"gain system for parity {parity} is ill-conditioned (cond ~ {cond:.3e})",
            parity=parity,
            condition=float(cond),
            n_max=n,
        )
    k = scipy.linalg.lu_solve((lu, piv), rhs)
    residual = float(np.max(np.abs(mat @ k - rhs)))

    scale = float(np.max(np.abs(k)))
    tiny = np.flatnonzero(np.abs(k) <= 1e-14 * scale)
    if tiny.size:
        mode = int(mode_indices(n, parity)[tiny[0]])
        raise ZeroGainError(
            f"gain K_{mode} of parity {parity} vanishes at truncation {n}",
            parity=parity,
            mode=mode,
            n_max=n,
        )
    corrections = -a * k - lam
    k.setflags(write=False)
    corrections.setflags(write=False)
    fields: dict[str, Any] = {
        ("odd_gains" if parity == ODD else "even_gains"): k,
        ("odd_corrections" if parity == ODD else "even_corrections"): corrections,
    }
    return GainProfile(
        float(lam),
        float(potentials.m),
        n,
        solve_residual={parity: residual},
        condition={parity: float(cond)},
        **fields,
    )


def solve_gain_profile(
    lam: float, potentials: PotentialSpec, n_max: int | None = None
) -> GainProfile:
    """Both parities at once."""
    return solve_gains(lam, potentials, ODD, n_max).merge(
        solve_gains(lam, potentials, EVEN, n_max)
    )


def feedback_evaluate(gains: GainProfile, y: SpectralFunction) -> tuple[float, float]:
    """u_k = sum_n K_n^k <y, f_n^k>; each control reads only its own parity."""
    if y.n_max != gains.n_max:
        raise ValueError(f"state truncation {y.n_max} does not match gains {gains.n_max}")
    u1 = float(gains.gains(ODD) @ y.odd) if gains.odd_gains is not None else 0.0
    u2 = float(gains.gains(EVEN) @ y.even) if gains.even_gains is not None else 0.0
    return u1, u2


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FredholmTransform:
    """Dense truncated transform for one parity; column n holds T f_n = -K_n q_n."""

    parity: int
    matrix: np.ndarray
    inverse: np.ndarray
    cond_l2: float

    @property
    def n_max(self) -> int:
        size = self.matrix.shape[0]
        return size if self.parity == ODD else size - 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "parity": self.parity,
            "n_max": self.n_max,
            "cond_l2": self.cond_l2,
            "matrix": self.matrix.tolist(),
            "inverse": self.inverse.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> FredholmTransform:
        return cls(
            int(data["parity"]),
            np.asarray(data["matrix"], dtype=float),
            np.asarray(data["inverse"], dtype=float),
            float(data["cond_l2"]),
        )


def transform_matrix(
    gains: GainProfile, potentials: PotentialSpec, parity: int, rows: int | None = None
) -> np.ndarray:
    """T_{p,n} = -K_n a_p / (p^2 + lambda - n^2); ``rows`` may extend past N."""
    k = gains.gains(parity)
    n_rows = gains.n_max if rows is None else rows
    row_idx = mode_indices(n_rows, parity)
    col_idx = mode_indices(gains.n_max, parity)
    a = potentials.amplitudes(parity, n_rows)
    return -k[None, :] * a[:, None] / _denominators(row_idx, col_idx, gains.lam)


def assemble_transform(
    gains: GainProfile, potentials: PotentialSpec, parity: int, tol: float = 1e-10
) -> FredholmTransform:
    mat = transform_matrix(gains, potentials, parity)
    cond = float(np.linalg.cond(mat))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularTransformError(
            f"parity-{parity} transform is numerically singular (cond ~ {cond:.3e})",
            parity=parity,
            condition=cond,
        )
    inv = np.linalg.inv(mat)
    defect = float(np.max(np.abs(mat @ inv - np.eye(mat.shape[0]))))
    if defect > tol:
        raise SingularTransformError(
            f"parity-{parity} inverse defect {defect:.3e} exceeds {tol:.0e}",
            parity=parity,
            condition=cond,
            defect=defect,
        )
    mat.setflags(write=False)
    inv.setflags(write=False)
    return FredholmTransform(parity, mat, inv, cond)


def apply_transform(t: FredholmTransform, f: SpectralFunction) -> SpectralFunction:
    """Apply one parity's transform; the opposite parity of ``f`` maps to zero."""
    if f.n_max != t.n_max:
        raise ValueError(f"function truncation {f.n_max} does not match transform {t.n_max}")
    return SpectralFunction.from_parity(t.matrix @ f.coeffs(t.parity), t.parity)


def apply_inverse(t: FredholmTransform, f: SpectralFunction) -> SpectralFunction:
    if f.n_max != t.n_max:
        raise ValueError(f"function truncation {f.n_max} does not match transform {t.n_max}")
    return SpectralFunction.from_parity(t.inverse @ f.coeffs(t.parity), t.parity)


def apply_pair(
    t_odd: FredholmTransform, t_even: FredholmTransform, f: SpectralFunction
) -> SpectralFunction:
    """Combined two-parity transform T_12 f = T_1 f + T_2 f."""
    if t_odd.parity != ODD or t_even.parity != EVEN:
        raise ValueError("expected the odd transform first and the even transform second")
    return apply_transform(t_odd, f) + apply_transform(t_even, f)


def pair_condition(t_odd: FredholmTransform, t_even: FredholmTransform) -> float:
    """l2 condition number of the block-diagonal T_12."""
    s_odd = np.linalg.svd(t_odd.matrix, compute_uv=False)
    s_even = np.linalg.svd(t_even.matrix, compute_uv=False)
    s = np.concatenate([s_odd, s_even])
    return float(s.max() / s.min())
