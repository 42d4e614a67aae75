from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from conftest import LAM, setup_for
from fredholm_backstepping.errors import IllConditionedError, ResonanceError, ZeroGainError
from fredholm_backstepping.gains import (
    FredholmTransform,
    GainProfile,
    PotentialSpec,
    apply_inverse,
    apply_pair,
    apply_transform,
    assemble_transform,
    build_q_vector,
    distance_to_resonance,
    feedback_evaluate,
    is_admissible_lambda,
    nearest_admissible_family,
    solve_gain_profile,
    solve_gains,
)
from fredholm_backstepping.spectral import EVEN, ODD, SpectralFunction


def exact_gains(lam: int, a: list[int], parity: int) -> list[Fraction]:
    """Gauss-Jordan elimination in rational arithmetic on sum_n a_n K_n / (p^2+lam-n^2) = -1."""
    idx = list(range(1, len(a) + 1)) if parity == ODD else list(range(len(a)))
    rows = [[Fraction(a[j], p * p + lam - n * n) for j, n in enumerate(idx)] + [Fraction(-1)]
            for p in idx]
    size = len(idx)
    for c in range(size):
        piv = next(r for r in range(c, size) if rows[r][c] != 0)
        rows[c], rows[piv] = rows[piv], rows[c]
        rows[c] = [v / rows[c][c] for v in rows[c]]
        for r in range(size):
            if r != c and rows[r][c] != 0:
                f = rows[r][c]
                rows[r] = [x - f * y for x, y in zip(rows[r], rows[c])]
    return [rows[r][-1] for r in range(size)]


def brute_force_member(lam: int) -> bool:
    return any(i * i - j * j == lam for i in range(abs(lam) + 2) for j in range(abs(lam) + 2))


class TestAdmissibility:
    def test_canonical_rate(self):
        assert is_admissible_lambda(6, 100)

    @pytest.mark.parametrize("lam", [3, 0, 1, 4, 5, 8, 15])
    def test_differences_of_squares(self, lam):
        assert not is_admissible_lambda(lam)

    @pytest.mark.parametrize("lam", range(-30, 60))
    def test_matches_brute_force(self, lam):
        assert is_admissible_lambda(lam) == (not brute_force_member(lam))

    @pytest.mark.parametrize("m", range(0, 12))
    def test_family_4m_plus_2(self, m):
        assert is_admissible_lambda(4 * m + 2)

    def test_non_integer_distance(self):
        assert is_admissible_lambda(2.5)
        assert distance_to_resonance(2.5) == pytest.approx(0.5)
        assert not is_admissible_lambda(3.0 + 1e-12)

    def test_bound_too_small(self):
        with pytest.raises(ValueError):
            is_admissible_lambda(50, bound=3)

    @pytest.mark.parametrize("lam, expected", [(3, [2, 6]), (0, [2]), (7, [6, 10]), (6, [6])])
    def test_suggestions(self, lam, expected):
        assert nearest_admissible_family(lam) == expected


class TestPotentialSpec:
    def test_zero_mean_rejected(self):
        with pytest.raises(ValueError, match="mean"):
            PotentialSpec(0.0, np.ones(3), [0.0, 1, 1, 1])

    def test_vanishing_amplitude_rejected(self):
        with pytest.raises(ValueError, match="odd mode 2"):
            PotentialSpec(0.0, [1.0, 0.0, 1.0], np.ones(4))

    def test_bypass(self):
        p = PotentialSpec(0.0, np.ones(3), [0.0, 1, 1, 1], validate=False)
        assert p.even_amplitudes[0] == 0.0

    def test_power_law_bounds(self):
        p = PotentialSpec.power_law(50, 1.5, 2.0, np.random.default_rng(1))
        assert 1.0 <= p.lower_bound <= p.upper_bound <= 3.0

    def test_truncated(self):
        p = PotentialSpec.constant(10).truncated(4)
        assert p.n_max == 4 and p.even_amplitudes.shape == (5,)


class TestQVector:
    def test_first_mode(self):
        q = build_q_vector(1, 6.0, PotentialSpec.constant(5), ODD)
        assert q.odd[0] == pytest.approx(1 / 6) and q.odd[1] == pytest.approx(1 / 9)
        assert_allclose(q.odd, 1 / (np.arange(1, 6) ** 2 + 5.0))
        assert not q.even.any()

    def test_zero_potential(self):
        pot = PotentialSpec(0.0, np.zeros(5), np.zeros(6), validate=False)
        q = build_q_vector(1, 6.0, pot, ODD)
        assert not q.odd.any()

    @pytest.mark.parametrize("parity", [ODD, EVEN])
    def test_diagonal(self, parity, rng):
        pot = PotentialSpec.power_law(12, 0.5, 1.0, rng)
        for n in range(1, 12):
            q = build_q_vector(n, LAM, pot, parity)
            diag = q.coeffs(parity)[n - 1 if parity == ODD else n]
            assert diag == pytest.approx(pot.amplitudes(parity)[n - 1 if parity == ODD else n] / LAM)

    def test_even_parity_starts_at_zero(self):
        q = build_q_vector(2, 6.0, PotentialSpec.constant(4), EVEN)
        assert q.even[0] == pytest.approx(1 / (6.0 - 4.0))

    def test_resonance(self):
        with pytest.raises(ResonanceError):
            build_q_vector(2, 3.0, PotentialSpec.constant(4), ODD)


class TestSolveGains:
    def test_one_mode(self):
        g = solve_gains(6.0, PotentialSpec.constant(1), ODD)
        assert g.odd_gains[0] == pytest.approx(-6.0, rel=1e-14)

    def test_two_modes(self):
        g = solve_gains(6.0, PotentialSpec.constant(2), ODD)
        assert_allclose(g.odd_gains, [-18.0, 6.0], rtol=1e-13)

    @pytest.mark.parametrize("parity", [ODD, EVEN])
    @pytest.mark.parametrize("lam", [2, 6, 10])
    def test_rational_oracle(self, parity, lam):
        a = [1, 2, 1, 3, 1] if parity == ODD else [2, 1, 2, 1, 3, 1]
        exact = [float(v) for v in exact_gains(lam, a, parity)]
        pot = PotentialSpec(0.0, a if parity == ODD else a[1:], a if parity == EVEN else [1] + a)
        got = solve_gains(float(lam), pot, parity).gains(parity)
        assert_allclose(got, exact, rtol=1e-11)

    @pytest.mark.parametrize("n", [1, 7, 64, 200])
    def test_solve_residual(self, n):
        g = solve_gain_profile(LAM, PotentialSpec.constant(n), n)
        assert max(g.solve_residual.values()) <= 1e-10

    def test_corrections(self):
        s = setup_for(32)
        for parity in (ODD, EVEN):
            a = s.potentials.amplitudes(parity, 32)
            assert_allclose(s.gains.corrections(parity), -a * s.gains.gains(parity) - LAM, rtol=1e-15)

    def test_even_mean_gain_nonzero(self):
        assert setup_for(32).gains.even_gains[0] != 0.0

    def test_inadmissible(self):
        with pytest.raises(ResonanceError):
            solve_gains(3.0, PotentialSpec.constant(4), ODD)

    def test_ill_conditioned(self):
        with pytest.raises(IllConditionedError) as info:
            solve_gains(6.0, PotentialSpec.constant(16), ODD, cond_limit=2.0)
        assert info.value.details["condition"] > 2.0

    def test_zero_gain_detected(self):
        # a_n K_n depends only on lambda, so a huge a_2 drives K_2 to relative zero
        pot = PotentialSpec(0.0, [1.0, 1e20], np.ones(3))
        with pytest.raises(ZeroGainError) as info:
            solve_gains(6.0, pot, ODD, cond_limit=np.inf)
        assert info.value.details["mode"] == 2

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from([ODD, EVEN]))
    def test_products_independent_of_potential(self, seed, parity):
        r = np.random.default_rng(seed)
        n = 24
        base = PotentialSpec.power_law(n, 0.0, 1.0, r)
        scaled = PotentialSpec(0.0, base.odd_amplitudes * r.uniform(0.2, 5.0, n),
                               base.even_amplitudes * r.uniform(0.2, 5.0, n + 1))
        ga = solve_gains(LAM, base, parity)
        gb = solve_gains(LAM, scaled, parity)
        pa = base.amplitudes(parity) * ga.gains(parity)
        pb = scaled.amplitudes(parity) * gb.gains(parity)
        assert_allclose(pa, pb, rtol=1e-10, atol=1e-10)

    def test_refinement_within_correction_tail(self):
        coarse, fine = setup_for(128), setup_for(256)
        for parity in (ODD, EVEN):
            c = coarse.gains.corrections(parity)
            tail = np.sqrt(np.sum(c[len(c) // 2:] ** 2))
            k1 = coarse.gains.gains(parity)[:64]
            k2 = fine.gains.gains(parity)[:64]
            assert np.max(np.abs(k1 - k2)) <= 10 * tail

    def test_interior_gain_bounds(self):
        g = setup_for(128).gains
        lo, hi = g.interior_bounds(ODD)
        assert 0 < lo <= hi < np.inf

    def test_json_round_trip(self):
        g = setup_for(32).gains
        h = GainProfile.from_dict(g.to_dict())
        assert np.array_equal(g.odd_gains, h.odd_gains)
        assert np.array_equal(g.even_corrections, h.even_corrections)
        assert h.solve_residual == g.solve_residual


class TestTransform:
    def test_entries(self):
        s = setup_for(16)
        p, n = 5, 3
        k = s.gains.odd_gains[n - 1]
        assert s.t_odd.matrix[p - 1, n - 1] == pytest.approx(-k / (p * p + LAM - n * n))

    def test_one_mode_is_identity(self):
        pot = PotentialSpec.constant(1)
        g = solve_gains(6.0, pot, ODD)
        t = assemble_transform(g, pot, ODD)
        assert_allclose(t.matrix, [[1.0]], rtol=1e-14)
        assert_allclose(t.inverse, [[1.0]], rtol=1e-14)

    @pytest.mark.parametrize("parity", [ODD, EVEN])
    def test_inverse_round_trip(self, parity, rng):
        s = setup_for(64)
        t = s.transform(parity)
        f = SpectralFunction(64, rng.standard_normal(64), rng.standard_normal(65))
        back = apply_inverse(t, apply_transform(t, f))
        assert_allclose(back.coeffs(parity), f.coeffs(parity), atol=1e-10)

    def test_opposite_parity_annihilated(self, rng):
        s = setup_for(16)
        f = SpectralFunction(16, np.zeros(16), rng.standard_normal(17))
        assert not apply_transform(s.t_odd, f).odd.any()

    def test_column_is_scaled_q(self):
        s = setup_for(16)
        for n in (1, 5, 16):
            col = apply_transform(s.t_odd, SpectralFunction.mode(16, n, ODD))
            q = build_q_vector(n, LAM, s.potentials, ODD, n_max=16)
            assert_allclose(col.odd, -s.gains.odd_gains[n - 1] * q.odd, rtol=1e-14)

    def test_pair_fixes_profile_on_truncation(self):
        s = setup_for(64)
        phi = s.potentials.profile(n_max=64)
        assert apply_pair(s.t_odd, s.t_even, phi).allclose(phi, atol=1e-10)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            apply_transform(setup_for(16).t_odd, SpectralFunction.zeros(8))

    def test_json_round_trip(self):
        t = setup_for(16).t_even
        u = FredholmTransform.from_dict(t.to_dict())
        assert np.array_equal(t.matrix, u.matrix) and u.parity == EVEN


class TestFeedback:
    def test_mode(self):
        g = setup_for(16).gains
        assert feedback_evaluate(g, SpectralFunction.mode(16, 3, ODD)) == (g.odd_gains[2], 0.0)

    def test_zero(self):
        assert feedback_evaluate(setup_for(16).gains, SpectralFunction.zeros(16)) == (0.0, 0.0)

    def test_parity_separation(self, rng):
        g = setup_for(16).gains
        y = SpectralFunction(16, np.zeros(16), rng.standard_normal(17))
        assert feedback_evaluate(g, y)[0] == 0.0

    def test_truncation_mismatch(self):
        with pytest.raises(ValueError):
            feedback_evaluate(setup_for(16).gains, SpectralFunction.zeros(8))
