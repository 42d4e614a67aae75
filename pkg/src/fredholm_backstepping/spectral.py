"""
Coefficient-space functions on the torus R / 2piZ.

A real function is stored against the orthonormal Laplacian eigenbasis

    f_n^1 = sin(n x) / sqrt(pi),   n = 1..N          (odd part)
    f_n^2 = cos(n x) / sqrt(pi),   n = 1..N          (even part)
    f_0^2 = 1 / sqrt(2 pi)

so that Delta f_n^k = -n^2 f_n^k and Parseval holds with unit constants.
The inhomogeneous Sobolev norm used throughout is

    ||f||_{H^s}^2 = (a_0^2)^2 + sum_{n>=1} n^{2s} ((a_n^1)^2 + (a_n^2)^2),

i.e. the constant mode carries weight 1 for every s.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import AliasingError

SQRT_PI = np.sqrt(np.pi)
SQRT_2PI = np.sqrt(2.0 * np.pi)

ODD, EVEN = 1, 2


def mode_indices(n_max: int, parity: int) -> np.ndarray:
    """Mode numbers carried by one parity: 1..N for odd, 0..N for even."""
    _check_parity(parity)
    start = 1 if parity == ODD else 0
    return np.arange(start, n_max + 1)


def sobolev_weights(indices: np.ndarray, s: float) -> np.ndarray:
    """Squared H^s weights n^{2s}, with weight 1 on the constant mode."""
    s = _check_index(s)
    n = np.asarray(indices, dtype=float)
    safe = np.where(n == 0, 1.0, n)
    return np.where(n == 0, 1.0, safe ** (2.0 * s))


def _check_parity(parity: int) -> None:
    if parity not in (ODD, EVEN):
        raise ValueError(f"parity must be 1 (odd) or 2 (even), got {parity!r}")


def _check_index(s: float) -> float:
    s = float(s)
    if not np.isfinite(s):
        raise ValueError(f"Sobolev index must be finite, got {s}")
    return s


def _frozen(values: Any, length: int, label: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.shape[0] != length:
        raise ValueError(f"{label} must have length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{label} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SpectralFunction:
    """Real function on the torus, truncated at mode ``n_max``.

    ``odd`` holds a_n^1 for n = 1..N and ``even`` holds a_n^2 for n = 0..N.
    Arrays are copied and made read-only on construction.
    """

    n_max: int
    odd: np.ndarray
    even: np.ndarray

    def __post_init__(self) -> None:
        n = int(self.n_max)
        if n < 1 or n != self.n_max:
            raise ValueError(f"n_max must be a positive integer, got {self.n_max!r}")
        object.__setattr__(self, "n_max", n)
        object.__setattr__(self, "odd", _frozen(self.odd, n, "odd coefficients"))
        object.__setattr__(self, "even", _frozen(self.even, n + 1, "even coefficients"))

    # constructors

    @classmethod
    def zeros(cls, n_max: int) -> SpectralFunction:
        return cls(n_max, np.zeros(n_max), np.zeros(n_max + 1))

    @classmethod
    def mode(cls, n_max: int, n: int, parity: int, value: float = 1.0) -> SpectralFunction:
        """Single eigenmode ``value * f_n^parity``."""
        _check_parity(parity)
        odd, even = np.zeros(n_max), np.zeros(n_max + 1)
        if parity == ODD:
            if not 1 <= n <= n_max:
                raise ValueError(f"odd mode index must lie in 1..{n_max}, got {n}")
            odd[n - 1] = value
        else:
            if not 0 <= n <= n_max:
                raise ValueError(f"even mode index must lie in 0..{n_max}, got {n}")
            even[n] = value
        return cls(n_max, odd, even)

    @classmethod
    def from_parity(cls, coeffs: np.ndarray, parity: int) -> SpectralFunction:
        """Single-parity function from the coefficient vector of that parity."""
        _check_parity(parity)
        coeffs = np.asarray(coeffs, dtype=float)
        if parity == ODD:
            n = coeffs.shape[0]
            return cls(n, coeffs, np.zeros(n + 1))
        n = coeffs.shape[0] - 1
        return cls(n, np.zeros(n), coeffs)

    # accessors

    def coeffs(self, parity: int) -> np.ndarray:
        _check_parity(parity)
        return self.odd if parity == ODD else self.even

    def as_vector(self) -> np.ndarray:
        """Concatenated ``[odd, even]`` coefficients (length 2N + 1)."""
        return np.concatenate([self.odd, self.even])

    def resized(self, n_max: int) -> SpectralFunction:
        """Zero-pad or truncate to ``n_max``."""
        odd, even = np.zeros(n_max), np.zeros(n_max + 1)
        k = min(n_max, self.n_max)
        odd[:k] = self.odd[:k]
        even[: k + 1] = self.even[: k + 1]
        return SpectralFunction(n_max, odd, even)

    # arithmetic; mixed truncations zero-pad the shorter operand

    def _aligned(self, other: SpectralFunction) -> tuple[SpectralFunction, SpectralFunction]:
        n = max(self.n_max, other.n_max)
        return self.resized(n), other.resized(n)

    def __add__(self, other: SpectralFunction) -> SpectralFunction:
        a, b = self._aligned(other)
        return SpectralFunction(a.n_max, a.odd + b.odd, a.even + b.even)

    def __sub__(self, other: SpectralFunction) -> SpectralFunction:
        a, b = self._aligned(other)
        return SpectralFunction(a.n_max, a.odd - b.odd, a.even - b.even)

    def __mul__(self, scalar: float) -> SpectralFunction:
        return SpectralFunction(self.n_max, self.odd * scalar, self.even * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> SpectralFunction:
        return self * -1.0

    def allclose(self, other: SpectralFunction, atol: float = 1e-12) -> bool:
        a, b = self._aligned(other)
        return bool(np.allclose(a.odd, b.odd, rtol=0, atol=atol)
                    and np.allclose(a.even, b.even, rtol=0, atol=atol))

    # serialization

    def to_dict(self) -> dict[str, Any]:
        return {"n_max": self.n_max, "odd": self.odd.tolist(), "even": self.even.tolist()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SpectralFunction:
        return cls(int(data["n_max"]), data["odd"], data["even"])


def sobolev_norm(f: SpectralFunction, s: float) -> float:
    """Truncated inhomogeneous H^s norm."""
    w_odd = sobolev_weights(mode_indices(f.n_max, ODD), s)
    w_even = sobolev_weights(mode_indices(f.n_max, EVEN), s)
    return float(np.sqrt(np.sum(w_odd * f.odd**2) + np.sum(w_even * f.even**2)))


def inner_product_hs(f: SpectralFunction, g: SpectralFunction, s: float) -> float:
    """H^s inner product sum_n (n^s f_n)(n^s g_n) over both parities."""
    f, g = f._aligned(g)
    r_odd = np.sqrt(sobolev_weights(mode_indices(f.n_max, ODD), s))
    r_even = np.sqrt(sobolev_weights(mode_indices(f.n_max, EVEN), s))
    return float((r_odd * f.odd) @ (r_odd * g.odd) + (r_even * f.even) @ (r_even * g.even))


def laplacian_apply(f: SpectralFunction) -> SpectralFunction:
    odd_n = mode_indices(f.n_max, ODD).astype(float)
    even_n = mode_indices(f.n_max, EVEN).astype(float)
    return SpectralFunction(f.n_max, -(odd_n**2) * f.odd, -(even_n**2) * f.even)


def x_derivative(f: SpectralFunction) -> SpectralFunction:
    """d/dx: sin(nx) -> n cos(nx), cos(nx) -> -n sin(nx)."""
    n = mode_indices(f.n_max, ODD).astype(float)
    even = np.concatenate([[0.0], n * f.odd])
    odd = -n * f.even[1:]
    return SpectralFunction(f.n_max, odd, even)


def parity_project(f: SpectralFunction, k: int) -> SpectralFunction:
    """Keep parity ``k`` and zero the other one."""
    _check_parity(k)
    if k == ODD:
        return SpectralFunction(f.n_max, f.odd, np.zeros(f.n_max + 1))
    return SpectralFunction(f.n_max, np.zeros(f.n_max), f.even)


def default_grid_size(n_max: int) -> int:
    """Smallest grid on which products of two truncated functions project without aliasing.

    A product carries modes up to 2N; on M points mode k aliases to M - k,
    which stays above N only when M > 3N.
    """
    return 3 * (n_max + 1)


def evaluate_on_grid(f: SpectralFunction, n_grid: int | None = None) -> np.ndarray:
    """Sample f at x_j = 2 pi j / n_grid."""
    if n_grid is None:
        n_grid = default_grid_size(f.n_max)
    if n_grid < 2 * f.n_max + 2:
        raise AliasingError(
            f"grid of {n_grid} points cannot resolve modes up to {f.n_max}; "
            f"need at least {2 * f.n_max + 2}"
        )
    spectrum = np.zeros(n_grid // 2 + 1, dtype=complex)
    spectrum[0] = n_grid * f.even[0] / SQRT_2PI
    spectrum[1 : f.n_max + 1] = 0.5 * n_grid * (f.even[1:] - 1j * f.odd) / SQRT_PI
    return np.fft.irfft(spectrum, n_grid)


def project_to_spectrum(samples: np.ndarray, n_max: int) -> SpectralFunction:
    """Discrete Fourier analysis of uniform samples, truncated at ``n_max``."""
    samples = np.asarray(samples, dtype=float)
    n_grid = samples.shape[0]
    if n_grid < 2 * n_max + 2:
        raise AliasingError(
            f"{n_grid} samples cannot determine modes up to {n_max}; "
            f"need at least {2 * n_max + 2}"
        )
    spectrum = np.fft.rfft(samples)
    scale = 2.0 * SQRT_PI / n_grid
    even = np.empty(n_max + 1)
    even[0] = spectrum[0].real * SQRT_2PI / n_grid
    even[1:] = spectrum[1 : n_max + 1].real * scale
    odd = -spectrum[1 : n_max + 1].imag * scale
    return SpectralFunction(n_max, odd, even)
