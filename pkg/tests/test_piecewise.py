"""Tests for piecewise functions on [0, T]"""

import math

import numpy as np
import pytest

from octool.errors import DomainError
from octool.piecewise import (Grid, PiecewiseC1Fn, PiecewiseFn, antiderivative, bielecki_norm, compose, evaluate,
                              from_json, integrate, linear_combination, merge_grids, stack, sup_norm, to_json)


def _step():
    """1 on [0, 0.5[, 3 on [0.5, 1]"""
    return PiecewiseFn.piecewise_constant(Grid(1.0, (0.0, 0.5, 1.0)), [1.0, 3.0])


def _cubic():
    """t^3 split at 0.3 and 0.7"""
    grid = Grid(1.0, (0.0, 0.3, 0.7, 1.0))
    return PiecewiseC1Fn(grid, [lambda t: np.array([t ** 3])] * 3, [lambda t: np.array([3 * t ** 2])] * 3)


class TestGrid:
    """Test Grid construction and lookup"""

    def test_endpoints_required(self):
        """Test that breakpoints must start at 0 and end at T"""
        with pytest.raises(DomainError):
            Grid(1.0, (0.1, 1.0))
        with pytest.raises(DomainError):
            Grid(1.0, (0.0, 0.9))

    def test_increasing_required(self):
        """Test that repeated breakpoints are rejected"""
        with pytest.raises(DomainError):
            Grid(1.0, (0.0, 0.5, 0.5, 1.0))

    def test_nonpositive_horizon(self):
        """Test that T must be positive"""
        with pytest.raises(DomainError):
            Grid(0.0, (0.0, 0.0))

    def test_from_points_merges_near_duplicates(self):
        """Test that points closer than the dedup tolerance collapse"""
        grid = Grid.from_points(1.0, [0.5, 0.5 + 1e-14, 0.25, 1.0])
        assert grid.breakpoints == (0.0, 0.25, 0.5, 1.0)

    def test_merge_grids(self):
        """Test the union of two partitions"""
        merged = merge_grids(Grid(1.0, (0.0, 0.5, 1.0)), Grid(1.0, (0.0, 0.25, 1.0)))
        assert merged.breakpoints == (0.0, 0.25, 0.5, 1.0)

    def test_merge_grids_horizon_mismatch(self):
        """Test that grids on different horizons do not merge"""
        with pytest.raises(DomainError):
            merge_grids(Grid.trivial(1.0), Grid.trivial(2.0))

    def test_segment_index_sides(self):
        """Test that the side picks the segment at a breakpoint"""
        grid = Grid(1.0, (0.0, 0.5, 1.0))
        assert grid.segment_index(0.5, 'right') == 1
        assert grid.segment_index(0.5, 'left') == 0
        assert grid.segment_index(0.2) == 0


class TestEvaluation:
    """Test one-sided evaluation"""

    def test_breakpoint_limits(self):
        """Test left, right and default values at an interior breakpoint"""
        f = _step()
        assert f.eval(0.5, 'left')[0] == 1.0
        assert f.eval(0.5, 'right')[0] == 3.0
        assert f.eval(0.5)[0] == 3.0
        assert evaluate(f, 0.5, 'left')[0] == 1.0
        assert [v[0] for v in f.right_limits] == [1.0, 3.0]
        assert [v[0] for v in f.left_limits] == [1.0, 3.0]

    def test_terminal_value_is_left_limit(self):
        """Test that at T the only available limit is returned"""
        assert _step().eval(1.0)[0] == 3.0
        assert _step().eval(0.0, 'left')[0] == 1.0

    def test_outside_horizon(self):
        """Test that t outside [0, T] raises"""
        with pytest.raises(DomainError):
            _step().eval(1.5)

    def test_raw_point_values(self):
        """Test explicit point values of a raw function"""
        grid = Grid(1.0, (0.0, 0.5, 1.0))
        f = PiecewiseFn(grid, [lambda t: np.array([1.0]), lambda t: np.array([3.0])],
                        point_values=[None, [7.0], None])
        assert f.eval(0.5)[0] == 7.0
        assert f.normalize().eval(0.5)[0] == 3.0

    def test_jumps(self):
        """Test jump sizes at interior breakpoints"""
        assert np.allclose(_step().jumps(), [2.0])
        assert np.allclose(_cubic().jumps(), [0.0, 0.0])

    def test_c1_rejects_value_jumps(self):
        """Test that a discontinuous function is not PiecewiseC1Fn"""
        grid = Grid(1.0, (0.0, 0.5, 1.0))
        with pytest.raises(DomainError):
            PiecewiseC1Fn(grid, [lambda t: np.array([0.0]), lambda t: np.array([1.0])],
                          [lambda t: np.array([0.0])] * 2)

    def test_extended_derivative(self):
        """Test right derivatives at interior breakpoints"""
        d = _cubic().extended_derivative()
        assert d.eval(0.3)[0] == pytest.approx(3 * 0.09)
        assert d.eval(1.0)[0] == pytest.approx(3.0)


class TestCombination:
    """Test arithmetic on merged grids"""

    def test_linear_combination_grid_and_values(self):
        """Test that a combination lives on the merged grid"""
        a = _step()
        b = PiecewiseFn.piecewise_constant(Grid(1.0, (0.0, 0.25, 1.0)), [10.0, 20.0])
        c = linear_combination((2.0, -1.0), (a, b))
        assert c.grid.breakpoints == (0.0, 0.25, 0.5, 1.0)
        assert c.eval(0.1)[0] == pytest.approx(2 - 10)
        assert c.eval(0.3)[0] == pytest.approx(2 - 20)
        assert c.eval(0.7)[0] == pytest.approx(6 - 20)

    def test_linear_combination_of_c1(self):
        """Test that C1 inputs give a C1 result with combined derivatives"""
        x = _cubic()
        y = linear_combination((1.0, 1.0), (x, x))
        assert isinstance(y, PiecewiseC1Fn)
        assert y.extended_derivative().eval(0.5)[0] == pytest.approx(2 * 3 * 0.25)

    def test_operators(self):
        """Test +, - and scalar * on piecewise functions"""
        f = _step()
        assert (f + f).eval(0.7)[0] == pytest.approx(6.0)
        assert (f - f).eval(0.7)[0] == pytest.approx(0.0)
        assert (f * 0.5).eval(0.2)[0] == pytest.approx(0.5)

    def test_compose(self):
        """Test the pointwise image of several functions"""
        h = compose(lambda t, a, x: a * x + t, _step(), _cubic())
        assert h.eval(0.6)[0] == pytest.approx(3 * 0.216 + 0.6)

    def test_stack(self):
        """Test value concatenation"""
        s = stack([_step(), _cubic()])
        assert s.dim == 2
        assert np.allclose(s.eval(0.5, 'left'), [1.0, 0.125])

    def test_refine_must_keep_breakpoints(self):
        """Test that refinement onto a coarser grid raises"""
        with pytest.raises(DomainError):
            _step().refine(Grid.trivial(1.0))


class TestIntegration:
    """Test quadrature and norms"""

    def test_integrate_step(self):
        """Test the integral of a step function"""
        assert integrate(_step(), 0.0, 1.0)[0] == pytest.approx(2.0, abs=1e-10)
        assert integrate(_step(), 0.25, 0.75)[0] == pytest.approx(1.0, abs=1e-10)

    def test_bounds_out_of_order(self):
        """Test that s > t raises"""
        with pytest.raises(DomainError):
            integrate(_step(), 0.8, 0.2)

    def test_fundamental_theorem_on_random_polynomials(self):
        """Test integral of the derivative against the increment of the function"""
        rng = np.random.default_rng(7)
        for _ in range(100):
            inner = np.sort(rng.uniform(0.05, 0.95, size=3))
            grid = Grid.from_points(1.0, inner)
            coeffs = rng.standard_normal((grid.n_segments, 4))
            segments = [lambda t, c=c: np.array([np.polyval(c, t)]) for c in coeffs]
            x = antiderivative(PiecewiseFn(grid, segments), [rng.standard_normal()])
            s, t = np.sort(rng.uniform(0.0, 1.0, size=2))
            lhs = integrate(x.extended_derivative(), s, t)[0]
            assert abs(lhs - (x.eval(t)[0] - x.eval(s)[0])) <= 1e-10

    def test_antiderivative_continuity(self):
        """Test that the antiderivative of a step is continuous and piecewise linear"""
        F = antiderivative(_step())
        assert F.eval(0.5, 'left')[0] == pytest.approx(F.eval(0.5, 'right')[0])
        assert F.eval(1.0)[0] == pytest.approx(2.0, abs=1e-10)

    def test_sup_norm(self):
        """Test the sampled sup norm includes one-sided limits"""
        assert sup_norm(_step()) == pytest.approx(3.0)
        assert sup_norm(_cubic()) == pytest.approx(1.0)

    def test_bielecki_exponential(self):
        """Test that the weight exp(-t) flattens exp(t) to 1"""
        f = PiecewiseFn.from_callable(1.0, lambda t: np.array([math.exp(t)]))
        assert bielecki_norm(f, 1.0) == pytest.approx(1.0, abs=1e-12)
        assert bielecki_norm(f, 0.0) == pytest.approx(math.e, abs=1e-12)

    def test_bielecki_equivalent_to_sup(self):
        """Test exp(-L T) |f|_inf <= |f|_L <= |f|_inf and monotonicity in L"""
        rng = np.random.default_rng(13)
        for _ in range(20):
            grid = Grid.from_points(2.0, np.sort(rng.uniform(0.1, 1.9, size=2)))
            coeffs = rng.standard_normal((grid.n_segments, 3))
            f = PiecewiseFn(grid, [lambda t, c=c: np.array([np.polyval(c, t)]) for c in coeffs])
            sup = sup_norm(f)
            previous = sup
            for L in (0.5, 1.0, 3.0):
                weighted = bielecki_norm(f, L)
                assert math.exp(-L * 2.0) * sup <= weighted + 1e-15
                assert weighted <= previous + 1e-15
                previous = weighted

    def test_bielecki_breakpoint_limits(self):
        """Test that both one-sided limits at a jump enter the norm"""
        f = PiecewiseFn.piecewise_constant(Grid(1.0, (0.0, 0.5, 1.0)), [1.0, 4.0])
        assert bielecki_norm(f, 2.0) == pytest.approx(4.0 * math.exp(-1.0))

    def test_bielecki_negative_weight(self):
        """Test that L < 0 is rejected"""
        with pytest.raises(DomainError):
            bielecki_norm(_step(), -1.0)


class TestSerialization:
    """Test the JSON interface"""

    def test_to_json_layout(self):
        """Test horizon, breakpoints and side tags"""
        data = to_json(_step(), per_segment=3)
        assert data['T'] == 1.0
        assert data['breakpoints'] == [0.0, 0.5, 1.0]
        assert data['samples'][0] == [0.0, 'right', 1.0]
        assert data['samples'][2] == [0.5, 'left', 1.0]
        assert data['samples'][3] == [0.5, 'right', 3.0]

    def test_from_json_keeps_limits(self):
        """Test that both one-sided limits survive"""
        f = from_json(to_json(_step(), per_segment=3))
        assert f.eval(0.5, 'left')[0] == 1.0
        assert f.eval(0.5, 'right')[0] == 3.0

    def test_from_json_malformed(self):
        """Test that missing keys raise DomainError"""
        with pytest.raises(DomainError):
            from_json({'T': 1.0})
