import numpy as np
import pytest
from hypothesis import given, strategies as st

from cgbp.chain import BpConfig, run_chain_bp
from cgbp.models import tfim_chain
from cgbp.stitch import (
    GridError,
    LevelSeries,
    OrderingError,
    geometric_grid,
    run_cgbp,
    stitch,
    switching_temperature,
)

T10 = np.geomspace(10.0, 0.1, 11)


def series(level, values, errors=None, T=T10):
    errors = np.zeros(len(T)) if errors is None else errors
    return LevelSeries(level, T, np.asarray(values, float), np.asarray(errors, float))


class TestSeries:
    def test_ascending_grid_rejected(self):
        with pytest.raises(GridError):
            series(0, np.zeros(11), T=T10[::-1])

    def test_length_mismatch(self):
        with pytest.raises(GridError):
            LevelSeries(0, T10, np.zeros(3), np.zeros(11))

    def test_negative_error(self):
        with pytest.raises(ValueError):
            series(0, np.zeros(11), -np.ones(11))


class TestSwitch:
    def test_single_minimum(self):
        gap = np.abs(np.arange(11) - 6.0)
        sw = switching_temperature(series(0, gap), series(1, np.zeros(11)))
        assert sw.index == 6 and not sw.degenerate
        assert float(sw) == T10[6]

    def test_flat_is_degenerate(self):
        sw = switching_temperature(series(0, np.ones(11)), series(1, np.zeros(11)))
        assert sw.degenerate and sw.index == 0

    def test_tie_break_by_bp_error(self):
        gap = np.array([5, 4, 1, 4, 5, 5, 4, 1, 4, 5, 6.0])
        err = np.zeros(11)
        err[7] = 1.0
        sw = switching_temperature(series(0, gap, err), series(1, np.zeros(11)))
        assert sw.index == 7 and set(sw.candidates) == {2, 7}

    def test_only_converged_points(self):
        gap = np.abs(np.arange(11) - 3.0)
        a = LevelSeries(0, T10, gap, np.zeros(11), converged=np.arange(11) != 3)
        sw = switching_temperature(a, series(1, np.zeros(11)))
        assert sw.index != 3

    def test_below(self):
        gap = np.abs(np.arange(11) - 3.0)
        sw = switching_temperature(series(0, gap), series(1, np.zeros(11)), below=T10[5])
        assert sw.temperature < T10[5]

    def test_grid_mismatch(self):
        with pytest.raises(GridError):
            switching_temperature(series(0, np.zeros(11)), series(1, np.zeros(12), T=np.geomspace(10, 0.1, 12)))

    @given(st.lists(st.floats(0, 10), min_size=11, max_size=11))
    def test_switch_is_a_grid_minimum_candidate(self, vals):
        sw = switching_temperature(series(0, vals), series(1, np.zeros(11)))
        assert sw.temperature in T10
        assert sw.index in sw.candidates


class TestStitch:
    def test_band_coverage(self):
        s = [series(k, np.full(11, float(k)), np.full(11, 0.1 * (k + 1))) for k in range(3)]
        st_ = stitch(s, [T10[3], T10[7]])
        assert list(st_.active_level) == [0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2]
        np.testing.assert_array_equal(st_.values, st_.active_level.astype(float))

    def test_accumulated_error(self):
        errs = [np.full(11, 0.1), np.full(11, 0.2), np.full(11, 0.4)]
        s = [series(k, np.zeros(11), e) for k, e in enumerate(errs)]
        out = stitch(s, [T10[3], T10[7]])
        assert out.constants == pytest.approx((0.0, 0.1, 0.3))
        assert out.total_error[0] == pytest.approx(0.1)
        assert out.total_error[5] == pytest.approx(0.1 + 0.2)
        assert out.total_error[10] == pytest.approx(0.3 + 0.4)

    @given(st.lists(st.floats(0, 1), min_size=33, max_size=33), st.integers(1, 4), st.integers(5, 9))
    def test_constants_non_decreasing(self, errs, i, j):
        e = np.reshape(errs, (3, 11))
        s = [series(k, np.zeros(11), e[k]) for k in range(3)]
        out = stitch(s, [T10[i], T10[j]])
        assert all(b >= a for a, b in zip(out.constants, out.constants[1:]))

    def test_switch_order(self):
        s = [series(k, np.zeros(11)) for k in range(3)]
        with pytest.raises(OrderingError):
            stitch(s, [T10[7], T10[3]])
        with pytest.raises(OrderingError):
            stitch(s[:2], [T10[3], T10[7]])


class TestGrid:
    def test_descending_and_refined(self):
        g = geometric_grid(0.05, 10.0, 20, refine=[(0.1, 1.0)])
        assert np.all(np.diff(g) < 0)
        assert g[0] == pytest.approx(10.0) and g[-1] == pytest.approx(0.05)
        inside = np.sum((g >= 0.1) & (g <= 1.0))
        assert inside >= 60

    def test_bad_range(self):
        with pytest.raises(GridError):
            geometric_grid(1.0, 0.5)


class TestRunCgbp:
    def test_levels0_is_chain_bp(self):
        T = np.geomspace(5.0, 0.4, 10)
        h = tfim_chain(1.0).template
        res = run_cgbp(h, 0, 2, 3, T)
        warm, ref = None, []
        for t in T:
            warm = run_chain_bp(h, BpConfig(3, 1 / t), warm)
            ref.append(warm.observables["energy"])
        np.testing.assert_array_equal(res.stitched.values, ref)
        assert res.switches == []

    def test_grid_requirements(self):
        h = tfim_chain(1.0).template
        with pytest.raises(GridError):
            run_cgbp(h, 0, 2, 3, np.geomspace(1.0, 0.5, 10))

    def test_deterministic(self):
        h = tfim_chain(1.0).template
        T = np.geomspace(3.0, 0.2, 10)
        a = run_cgbp(h, 1, 2, 3, T, sweeps=5)
        b = run_cgbp(h, 1, 2, 3, T, sweeps=5)
        np.testing.assert_array_equal(a.stitched.values, b.stitched.values)
        np.testing.assert_array_equal(a.stitched.total_error, b.stitched.total_error)
        assert a.switches == b.switches
