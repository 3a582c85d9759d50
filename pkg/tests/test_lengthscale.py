import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize

from mglbo.errors import InvalidCorrelation
from mglbo.lengthscale import (
    CoolDownState,
    advance,
    alpha_ratio,
    ar_cool_down,
    equivalent_min_distance,
    length_scale_lower_bound,
    sphere_volume,
)


def stub(values):
    """alpha_star callback returning ``values[l]`` and logging each call."""
    calls = []

    def f(l):
        calls.append(l)
        return values[l]

    f.calls = calls
    return f


class TestLowerBound:
    @pytest.mark.parametrize("c", [0.1, 0.2, 0.5])
    def test_one_dimension_collapses(self, c):
        for n in (1, 7, 30):
            expected = math.sqrt(-1.0 / (2.0 * math.log(c))) / n
            assert length_scale_lower_bound(1, n, c) == pytest.approx(expected, rel=1e-14)

    def test_grid_oracle_n10(self):
        l = optimize.brentq(lambda l: math.exp(-(0.1**2) / (2 * l * l)) - 0.2, 1e-3, 1.0, xtol=1e-16, rtol=4 * np.finfo(float).eps)
        assert length_scale_lower_bound(1, 10, 0.2) == pytest.approx(l, rel=1e-12)

    def test_blows_up_near_perfect_correlation(self):
        vals = [length_scale_lower_bound(3, 10, 1 - 10.0**-k) for k in (2, 4, 8)]
        assert vals[0] < vals[1] < vals[2] and vals[2] > 1e2

    @pytest.mark.parametrize("c", [0.0, 1.0, -0.2, 1.5])
    def test_invalid_correlation(self, c):
        with pytest.raises(InvalidCorrelation):
            length_scale_lower_bound(2, 5, c)

    @pytest.mark.parametrize("d", [1, 2, 3, 6])
    def test_strictly_decreasing_in_n(self, d):
        vals = [length_scale_lower_bound(d, n, 0.2) for n in range(1, 60)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestVolumes:
    @pytest.mark.parametrize(
        "d, r, expected", [(1, 1.0, 2.0), (2, 1.0, math.pi), (3, 2.0, 4.0 / 3.0 * math.pi * 8.0)]
    )
    def test_sphere_volume(self, d, r, expected):
        assert sphere_volume(d, r) == pytest.approx(expected, rel=1e-14)

    def test_sphere_volume_d3_value(self):
        assert sphere_volume(3, 2.0) == pytest.approx(33.510, abs=5e-4)

    def test_equivalent_distance_1d(self):
        assert equivalent_min_distance(1, 4) == 0.25

    def test_equivalent_distance_2d(self):
        delta = equivalent_min_distance(2, 10)
        root = optimize.brentq(lambda r: sphere_volume(2, r) - 0.2, 0.0, 1.0, xtol=1e-15)
        assert delta == pytest.approx(root, rel=1e-12)
        assert delta == pytest.approx(0.2523, abs=1e-4)
        assert sphere_volume(2, delta) == pytest.approx(0.2, rel=1e-13)

    @pytest.mark.parametrize("d", [1, 2, 5])
    def test_equivalent_distance_decreasing(self, d):
        vals = [equivalent_min_distance(d, n) for n in range(1, 30)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestAlphaRatio:
    def test_regular(self):
        assert alpha_ratio(-3.0, -1.0) == 3.0

    def test_zero_reference(self):
        assert alpha_ratio(-0.5, 0.0) == math.inf
        assert alpha_ratio(-1e-14, 1e-13) == 1.0


class TestCoolDown:
    def state(self, l=0.4, ref=-1.0, threshold=1.5):
        return CoolDownState(current_length_scale=l, previous_alpha_star=ref, threshold=threshold)

    def test_reduces_when_ratio_exceeds_threshold(self):
        dec = ar_cool_down(self.state(), stub({0.2: -3.0}), d=1, n=5)
        assert dec.reduced and dec.new_length_scale == 0.2 == dec.candidate
        assert dec.alpha_ratio == 3.0

    def test_keeps_when_ratio_below_threshold(self):
        dec = ar_cool_down(self.state(), stub({0.2: -1.2}), d=1, n=5)
        assert not dec.reduced and dec.new_length_scale == 0.4
        assert dec.alpha_ratio == pytest.approx(1.2)

    def test_candidate_clipped_at_lower_bound(self):
        bound = length_scale_lower_bound(1, 5, 0.2)
        dec = ar_cool_down(self.state(l=1.5 * bound), stub({bound: -9.0}), d=1, n=5)
        assert dec.candidate == bound and dec.reduced and dec.new_length_scale == bound

    def test_bound_binding_is_no_op(self):
        bound = length_scale_lower_bound(1, 5, 0.2)
        dec = ar_cool_down(self.state(l=bound), stub({bound: -100.0}), d=1, n=5)
        assert dec.candidate == bound and not dec.reduced and dec.new_length_scale == bound

    def test_floor_guards_tiny_bounds(self):
        st_ = CoolDownState(current_length_scale=0.0015, previous_alpha_star=-1.0, floor=1e-3)
        dec = ar_cool_down(st_, stub({1e-3: -5.0}), d=1, n=10**6)
        assert dec.lower_bound == 1e-3 and dec.new_length_scale == 1e-3

    def test_first_iteration_computes_reference(self):
        f = stub({1.0: -2.0, 0.5: -2.5})
        st_ = CoolDownState(current_length_scale=1.0)
        dec = ar_cool_down(st_, f, d=1, n=3)
        assert f.calls == [1.0, 0.5]
        assert dec.reference_alpha == -2.0 and not dec.reduced

    def test_recompute_reference(self):
        f = stub({0.4: -0.1, 0.2: -0.12})
        dec = ar_cool_down(self.state(ref=-1.0), f, d=1, n=5, recompute_reference=True)
        assert dec.reference_alpha == -0.1 and dec.alpha_ratio == pytest.approx(1.2)
        assert f.calls == [0.4, 0.2]

    def test_zero_reference_forces_cool_down(self):
        dec = ar_cool_down(self.state(ref=0.0), stub({0.2: -1e-6}), d=1, n=5)
        assert dec.alpha_ratio == math.inf and dec.reduced

    def test_both_zero_keeps(self):
        dec = ar_cool_down(self.state(ref=0.0), stub({0.2: 0.0}), d=1, n=5)
        assert dec.alpha_ratio == 1.0 and not dec.reduced

    def test_huge_threshold_never_reduces(self):
        dec = ar_cool_down(self.state(threshold=1e300), stub({0.2: -1e10}), d=1, n=5)
        assert not dec.reduced

    def test_threshold_near_one_reduces_on_any_gain(self):
        dec = ar_cool_down(self.state(threshold=1 + 1e-12), stub({0.2: -1.001}), d=1, n=5)
        assert dec.reduced

    def test_advance(self):
        dec = ar_cool_down(self.state(), stub({0.2: -3.0}), d=1, n=5)
        nxt = advance(self.state(), dec, -0.7)
        assert nxt.current_length_scale == 0.2 and nxt.previous_alpha_star == -0.7 and nxt.threshold == 1.5

    def test_state_validation(self):
        with pytest.raises(ValueError):
            CoolDownState(current_length_scale=1.0, threshold=1.0)
        with pytest.raises(InvalidCorrelation):
            CoolDownState(current_length_scale=1.0, min_correlation=1.0)

    @given(
        st.floats(1e-3, 2.0),
        st.floats(-10.0, 0.0),
        st.floats(-10.0, 0.0),
        st.integers(1, 4),
        st.integers(1, 200),
    )
    def test_contract(self, l, ref, cand_alpha, d, n):
        st_ = CoolDownState(current_length_scale=l, previous_alpha_star=ref)
        dec = ar_cool_down(st_, lambda _: cand_alpha, d, n)
        assert dec.new_length_scale <= l
        assert dec.new_length_scale >= min(l, dec.lower_bound)
        if dec.reduced:
            assert dec.new_length_scale == dec.candidate >= dec.lower_bound
        else:
            assert dec.new_length_scale == l
        assert np.isnan(dec.alpha_ratio) or dec.alpha_ratio >= 0
