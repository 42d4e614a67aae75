"""
Finite-truncation certificates for the transform construction.

Every report is a pure function of its inputs. Summability claims become
Cauchy tests on partial sums: the relative change of S_J between J = N/2 and
J = N must fall below 1%. Identities become residuals, measured per mode in
a weighted coefficient norm.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Any, Literal, Sequence

import numpy as np
import scipy.linalg
from scipy.special import zeta

from .errors import ResonanceError, SharpRangeError
from .gains import (
    RESONANCE_TOL,
    FredholmTransform,
    GainProfile,
    PotentialSpec,
    _denominators,
    transform_matrix,
)
from .spectral import EVEN, ODD, SpectralFunction, mode_indices, sobolev_weights

CAUCHY_THRESHOLD = 0.01


@dataclass(frozen=True, eq=False)
class ClosenessReport:
    """Partial sums S_J = sum_{n<=J} term_n with a Cauchy verdict."""

    kind: str
    s: float
    parity: int
    indices: np.ndarray
    partial_sums: np.ndarray
    cauchy_ratio: float
    verdict: bool
    trend: tuple[float, float]
    threshold: float = CAUCHY_THRESHOLD
    params: dict[str, Any] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(self.partial_sums[-1])

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "params": {"s": self.s, "parity": self.parity, **self.params},
            "partial_sums": [[int(j), float(v)] for j, v in zip(self.indices, self.partial_sums)],
            "cauchy_ratio": self.cauchy_ratio,
            "trend": list(self.trend),
            "threshold": self.threshold,
            "verdict": self.verdict,
        }


@dataclass(frozen=True, eq=False)
class ResidualReport:
    """Per-mode residual norms with the interior maximum (modes n <= N/2)."""

    kind: Literal["tb_eq_b", "operator_equality", "inverse_identity"]
    indices: np.ndarray
    per_mode: np.ndarray
    interior_max: float
    norm_index: float
    boundary_max: float = 0.0
    total: float = 0.0
    reference: float = float("nan")
    relative: float = float("nan")
    params: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "params": {"norm_index": self.norm_index, **self.params},
            "per_mode": [[int(j), float(v)] for j, v in zip(self.indices, self.per_mode)],
            "interior_max": self.interior_max,
            "boundary_max": self.boundary_max,
            "total": self.total,
            "reference": self.reference,
            "relative": self.relative,
        }


def report_to_csv(report: ClosenessReport | ResidualReport) -> str:
    """Flatten a report to ``index,value`` rows."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if isinstance(report, ClosenessReport):
        writer.writerow(["J", "partial_sum"])
        rows = zip(report.indices, report.partial_sums)
    else:
        writer.writerow(["mode", "residual"])
        rows = zip(report.indices, report.per_mode)
    for j, v in rows:
        writer.writerow([int(j), format(float(v), ".17g")])
    return buf.getvalue()


def _cauchy(indices: np.ndarray, terms: np.ndarray, n_max: int) -> tuple[np.ndarray, float, tuple[float, float]]:
    sums = np.cumsum(terms)

    def at(j: int) -> float:
        return float(sums[np.searchsorted(indices, j, side="right") - 1])

    total = at(n_max)

    def ratio(lo: int, hi: int) -> float:
        s_hi = at(hi)
        return 0.0 if s_hi == 0 else (s_hi - at(lo)) / s_hi

    return sums, ratio(n_max // 2, n_max) if total else 0.0, (
        ratio(n_max // 4, n_max // 2),
        ratio(n_max // 2, n_max),
    )


def _offdiag_q(lam: float, potentials: PotentialSpec, parity: int, n_max: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rows over the stored potential length, columns over 0/1..n_max, diagonal removed."""
    rows = mode_indices(potentials.n_max, parity)
    cols = mode_indices(n_max, parity)
    q = potentials.amplitudes(parity)[:, None] / _denominators(rows, cols, lam)
    q[rows[:, None] == cols[None, :]] = 0.0
    return rows, cols, q


# ---------------------------------------------------------------------------
# denominators
# ---------------------------------------------------------------------------


def check_denominator_bound(
    lam: float,
    n_max: int,
    n_min: int = 0,
    region: Literal["all", "below", "above"] = "all",
) -> float:
    """min |p^2 + lambda - n^2| / |p^2 - n^2| over p != n, both in 0..n_max.

    ``n_min`` restricts the column index n; ``region`` restricts p to p < n
    ("below") or p > n ("above").
    """
    idx = np.arange(n_max + 1, dtype=float)
    p, n = idx[:, None], idx[None, :]
    num = p**2 + lam - n**2
    if np.any(np.abs(num) <= RESONANCE_TOL):
        i, j = np.argwhere(np.abs(num) <= RESONANCE_TOL)[0]
        raise ResonanceError(f"p={i}, n={j} gives a zero denominator for lambda={lam}")
    mask = (p != n) & (n >= n_min)
    if region == "below":
        mask &= p < n
    elif region == "above":
        mask &= p > n
    elif region != "all":
        raise ValueError(f"unknown region {region!r}")
    if not mask.any():
        raise ValueError("no (p, n) pairs in the requested range")
    ratio = np.abs(num[mask]) / np.abs((p**2 - n**2)[mask])
    return float(ratio.min())


# ---------------------------------------------------------------------------
# closeness and smoothing sums
# ---------------------------------------------------------------------------


def quadratic_closeness(
    lam: float,
    potentials: PotentialSpec,
    s: float,
    parity: int,
    n_max: int | None = None,
) -> ClosenessReport:
    """S_J = sum_{n<=J} || n^{-s} (q_n - a_n f_n / lambda) ||^2_{H^{m+s}}.

    The diagonal entry of q_n is exactly a_n / lambda, so each term is the
    weighted off-diagonal mass of column n. Rows run over the stored
    potential length; columns over 0/1..n_max.
    """
    if not -1.5 < s < 1.5:
        raise SharpRangeError(f"quadratic closeness needs s in (-3/2, 3/2), got {s}")
    n_max = potentials.n_max if n_max is None else n_max
    rows, cols, q = _offdiag_q(lam, potentials, parity, n_max)
    w_rows = sobolev_weights(rows, potentials.m + s)
    w_cols = sobolev_weights(cols, -s)
    terms = w_cols * (w_rows[:, None] * q**2).sum(axis=0)
    sums, ratio, trend = _cauchy(cols, terms, n_max)
    return ClosenessReport(
        "quadratic_closeness", float(s), parity, cols, sums, ratio,
        ratio < CAUCHY_THRESHOLD, trend, params={"lambda": lam, "m": potentials.m},
    )


def smoothing_sums(
    lam: float,
    potentials: PotentialSpec,
    r: float,
    parity: int,
    n_max: int | None = None,
) -> tuple[ClosenessReport, ClosenessReport]:
    """Two smoothing sums over n <= J.

    First:  || q_n - a_n f_n / lambda ||^2_{H^{m+r}}
    Second: || n (q_n - a_n f_n / lambda) ||^2_{H^{m+r-1}}
    """
    _check_smoothing_index(r)
    n_max = potentials.n_max if n_max is None else n_max
    rows, cols, q = _offdiag_q(lam, potentials, parity, n_max)
    out = []
    for kind, shift, col_w in (
        ("smoothing", 0.0, np.ones(cols.shape[0])),
        ("smoothing_weighted", -1.0, cols.astype(float) ** 2),
    ):
        w_rows = sobolev_weights(rows, potentials.m + r + shift)
        terms = col_w * (w_rows[:, None] * q**2).sum(axis=0)
        sums, ratio, trend = _cauchy(cols, terms, n_max)
        out.append(ClosenessReport(
            kind, float(r), parity, cols, sums, ratio, ratio < CAUCHY_THRESHOLD, trend,
            params={"lambda": lam, "m": potentials.m},
        ))
    return out[0], out[1]


def aggregate_smoothing(
    lam: float,
    potentials: PotentialSpec,
    r: float,
    parity: int = ODD,
    n_max: int | None = None,
) -> float:
    """|| sum_{n<=N} (q_n - a_n f_n / lambda) ||_{H^r} for m = 0 potentials."""
    _check_smoothing_index(r)
    if potentials.m != 0:
        raise ValueError("aggregate smoothing is defined for m = 0 potentials")
    n_max = potentials.n_max if n_max is None else n_max
    rows, _, q = _offdiag_q(lam, potentials, parity, n_max)
    v = q.sum(axis=1)
    return float(np.sqrt(np.sum(sobolev_weights(rows, r) * v**2)))


def _check_smoothing_index(r: float) -> None:
    if not 0.0 <= r < 0.5:
        raise SharpRangeError(f"smoothing estimates need r in [0, 1/2), got {r}")


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------


def _interior_split(indices: np.ndarray, values: np.ndarray, n_max: int) -> tuple[float, float]:
    inner = indices <= n_max // 2
    imax = float(values[inner].max()) if inner.any() else 0.0
    bmax = float(values[~inner].max()) if (~inner).any() else 0.0
    return imax, bmax


def tail_bound(potentials: PotentialSpec, n_max: int, s: float) -> float:
    """sqrt(C^2 zeta(2m - 2s, N + 1)) >= || phi restricted to n > N ||_{H^s}.

    Infinite when the tail sum diverges (2m - 2s <= 1).
    """
    e = 2.0 * potentials.m - 2.0 * s
    if e <= 1.0:
        return float("inf")
    return float(potentials.upper_bound * np.sqrt(zeta(e, n_max + 1)))


def tb_eq_b_residual(
    t: FredholmTransform,
    gains: GainProfile,
    potentials: PotentialSpec,
    s: float,
) -> ResidualReport:
    """Residual T phi - phi in H^s, over every row the potential stores.

    Row p carries a_p (1 + sum_{n<=N} a_n K_n / (p^2 + lambda - n^2)). Rows
    p <= N vanish up to the solve residual; rows past N see the truncated
    transform act on a profile it never saw, and they carry the tail.
    ``reference`` is the analytic tail bound; ``relative`` divides the
    residual by || phi ||_{H^s} on the same rows.
    """
    if not -1.5 < s < 0.5:
        raise SharpRangeError(f"T phi = phi is asserted for s in (-3/2, 1/2), got {s}")
    parity = t.parity
    rows = mode_indices(potentials.n_max, parity)
    a = potentials.amplitudes(parity)
    big = transform_matrix(gains, potentials, parity, rows=potentials.n_max)
    phi_n = potentials.amplitudes(parity, gains.n_max)
    resid = big @ phi_n - a
    w = sobolev_weights(rows, s)
    per_mode = np.sqrt(w) * np.abs(resid)
    total = float(np.sqrt(np.sum(w * resid**2)))
    phi_norm = float(np.sqrt(np.sum(w * a**2)))
    inner = rows <= gains.n_max // 2
    truncated = rows <= gains.n_max
    return ResidualReport(
        "tb_eq_b",
        rows,
        per_mode,
        float(per_mode[inner].max()),
        float(s),
        boundary_max=float(per_mode[truncated & ~inner].max()),
        total=total,
        reference=tail_bound(potentials, gains.n_max, s),
        relative=total / phi_norm if phi_norm else 0.0,
        params={"parity": parity, "rows": int(potentials.n_max), "n_max": gains.n_max,
                "truncated_max": float(per_mode[truncated].max())},
    )


def operator_equality_residual(
    t: FredholmTransform,
    gains: GainProfile,
    potentials: PotentialSpec,
    r: float,
    zero_feedback: bool = False,
) -> ResidualReport:
    """|| (T Delta + (T phi) K_n - Delta T + lambda T) f_n ||_{H^{r-1}} per mode.

    Entry (p, n) equals K_n ((T phi)_p - a_p), so it vanishes with the TB=B
    residual. ``zero_feedback`` drops the (T phi) K term, which leaves the
    nonzero (lambda_n + lambda - Delta) T f_n.
    """
    if not -0.5 < r < 0.5:
        raise SharpRangeError(f"operator equality needs r in (-1/2, 1/2), got {r}")
    parity = t.parity
    idx = mode_indices(gains.n_max, parity).astype(float)
    tm = t.matrix
    a = potentials.amplitudes(parity, gains.n_max)
    k = gains.gains(parity)
    res = tm * (-(idx[None, :] ** 2)) + (idx[:, None] ** 2) * tm + gains.lam * tm
    if not zero_feedback:
        res = res + np.outer(tm @ a, k)
    w = sobolev_weights(idx, r - 1.0)
    per_mode = np.sqrt((w[:, None] * res**2).sum(axis=0))
    cols = mode_indices(gains.n_max, parity)
    imax, bmax = _interior_split(cols, per_mode, gains.n_max)
    return ResidualReport(
        "operator_equality", cols, per_mode, imax, float(r - 1.0), boundary_max=bmax,
        total=float(np.sqrt(np.sum(per_mode**2))),
        params={"parity": parity, "r": float(r), "zero_feedback": zero_feedback,
                "boundary_margin": int(gains.n_max - gains.n_max // 2)},
    )


def inverse_identity_residual(t: FredholmTransform) -> ResidualReport:
    """Column-wise || (T T^{-1} - I) f_n ||_{l2}."""
    defect = t.matrix @ t.inverse - np.eye(t.matrix.shape[0])
    per_mode = np.linalg.norm(defect, axis=0)
    cols = mode_indices(t.n_max, t.parity)
    imax, bmax = _interior_split(cols, per_mode, t.n_max)
    return ResidualReport("inverse_identity", cols, per_mode, imax, 0.0, boundary_max=bmax,
                          total=float(np.linalg.norm(defect)), params={"parity": t.parity})


# ---------------------------------------------------------------------------
# frame bounds
# ---------------------------------------------------------------------------


def riesz_frame_bounds(
    vectors: Sequence[SpectralFunction], s: float, rank_tol: float = 1e-12
) -> tuple[float, float]:
    """Squared extreme singular values of the H^s-weighted coefficient matrix.

    Columns are the vectors; rows the (odd, even) coefficients scaled by
    n^s. Raises ``ValueError`` naming the first vector that is (numerically)
    in the span of its predecessors.
    """
    if not vectors:
        raise ValueError("no vectors given")
    n_max = max(v.n_max for v in vectors)
    w = np.sqrt(np.concatenate([
        sobolev_weights(mode_indices(n_max, ODD), s),
        sobolev_weights(mode_indices(n_max, EVEN), s),
    ]))
    mat = np.column_stack([w * v.resized(n_max).as_vector() for v in vectors])
    sv = np.linalg.svd(mat, compute_uv=False)
    if mat.shape[1] > mat.shape[0] or sv[-1] <= rank_tol * sv[0]:
        r = scipy.linalg.qr(mat, mode="r")[0]
        diag = np.abs(np.diag(r))
        scale = np.max(np.linalg.norm(mat, axis=0))
        bad = np.flatnonzero(diag <= rank_tol * scale)
        first = int(bad[0]) if bad.size else int(diag.shape[0])
        raise ValueError(f"vectors are linearly dependent; first deficient index {first}")
    return float(sv[-1] ** 2), float(sv[0] ** 2)


def q_family(lam: float, potentials: PotentialSpec, s: float, parity: int, n_max: int) -> list[SpectralFunction]:
    """{n^{-s} q_n} over one truncated parity, rows over the stored potential."""
    rows = mode_indices(potentials.n_max, parity)
    cols = mode_indices(n_max, parity)
    q = potentials.amplitudes(parity)[:, None] / _denominators(rows, cols, lam)
    scale = np.sqrt(sobolev_weights(cols, -s))
    return [SpectralFunction.from_parity(q[:, j] * scale[j], parity) for j in range(cols.shape[0])]
