"""Tests for the expression language and dual-number differentiation"""

import math
from fractions import Fraction

import numpy as np
import pytest

from octool.builtins import BUILTIN_EXPRESSIONS, get_builtin
from octool.errors import ConfigurationError, EvaluationError, ExprSyntaxError, UnknownIdentifierError
from octool.exprdiff import (BinOp, CompiledExpr, Dims, Num, bind_problem, eval_dual, fold_constants, parse,
                             to_source)
from octool.problem import DerivMode, criterion

DIMS = Dims(n=2, mu=1, n_params=1)


class TestParser:
    """Test parsing and error reporting"""

    @pytest.mark.parametrize("src,expected", [
        ("1 + 2 * 3", 7.0),
        ("-2^2", -4.0),
        ("2^3^2", 512.0),
        ("(1 + 2) * 3", 9.0),
        ("+4 / 2 - 1", 1.0),
        ("1.5e1", 15.0),
    ])
    def test_precedence(self, src, expected):
        """Test operator precedence and associativity"""
        assert CompiledExpr(src, DIMS)(0.0, [0.0, 0.0], [0.0], [0.0]) == pytest.approx(expected)

    def test_unexpected_operator(self):
        """Test the offset of a misplaced operator"""
        with pytest.raises(ExprSyntaxError) as exc_info:
            parse("x1 + * 2", DIMS)
        assert exc_info.value.offset == 5

    def test_unclosed_call(self):
        """Test a missing closing parenthesis"""
        with pytest.raises(ExprSyntaxError) as exc_info:
            parse("sin(x1", DIMS)
        assert exc_info.value.offset == 6
        assert "end of input" in str(exc_info.value)

    def test_bad_character(self):
        """Test a character outside the grammar"""
        with pytest.raises(ExprSyntaxError) as exc_info:
            parse("x1 $ 2", DIMS)
        assert exc_info.value.offset == 3

    def test_unknown_identifier_suggests(self):
        """Test the did-you-mean suggestion for a misspelled function"""
        with pytest.raises(UnknownIdentifierError) as exc_info:
            parse("sinn(x1)", DIMS)
        assert exc_info.value.name == "sinn"
        assert exc_info.value.suggestion == "sin"

    def test_index_out_of_range(self):
        """Test that x3 is unknown when state_dim is 2"""
        with pytest.raises(UnknownIdentifierError) as exc_info:
            parse("x3 + 1", DIMS)
        assert exc_info.value.offset == 0
        assert exc_info.value.name == "x3"

    def test_terminal_terms_exclude_controls(self):
        """Test that g and h may not use u or t"""
        with pytest.raises(UnknownIdentifierError):
            parse("x1 - u1", DIMS, terminal=True)
        with pytest.raises(UnknownIdentifierError):
            parse("t * x1", DIMS, terminal=True)

    def test_printer_reparses(self):
        """Test that the printed tree parses to the same printed form"""
        expr = parse("-x1^2 + sin(u1 * p1) / (1 + t)", DIMS)
        assert to_source(parse(to_source(expr), DIMS)) == to_source(expr)

    def test_fold_constants(self):
        """Test that variable-free subtrees are folded"""
        folded = fold_constants(parse("2 * 3 + x1", DIMS))
        assert isinstance(folded, BinOp)
        assert isinstance(folded.left, Num)
        assert folded.left.value == 6.0


class TestDual:
    """Test forward-mode partials"""

    def test_partials_by_group(self):
        """Test partials of x1 u1 + sin(x2)"""
        f = CompiledExpr("x1*u1 + sin(x2)", DIMS)
        args = (0.0, [2.0, 3.0], [4.0], [0.0])
        assert f(*args) == pytest.approx(8.0 + math.sin(3.0))
        assert f.partial("x", *args).tolist() == pytest.approx([4.0, math.cos(3.0)])
        assert f.partial("u", *args).tolist() == pytest.approx([2.0])
        assert f.partial("p", *args).tolist() == [0.0]

    def test_against_central_differences(self):
        """Test dual partials on random points against central differences"""
        src = "exp(x1)*tanh(u1) + x2^3/(1 + x1^2) + sqrt(x2^2 + 1)*log(2 + p1) - cos(t*x2)"
        f = CompiledExpr(src, DIMS)
        rng = np.random.default_rng(11)
        for _ in range(10):
            t = rng.uniform(0, 1)
            x, u, pi = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 1), rng.uniform(-1, 1, 1)
            grad = f.jacobian(t, x, u, pi).gradient
            point = np.concatenate(([t], x, u, pi))
            h = 1e-6
            for k in range(point.size):
                e = np.zeros(point.size)
                e[k] = h
                up, down = point + e, point - e
                fd = (f(up[0], up[1:3], up[3:4], up[4:]) - f(down[0], down[1:3], down[3:4], down[4:])) / (2 * h)
                assert grad[k] == pytest.approx(fd, abs=1e-6)

    def test_against_closed_form_gradient(self):
        """Test dual partials against the hand-derived gradient to 1e-8 relative"""
        src = "exp(x1)*tanh(u1) + x2^3/(1 + x1^2) + sqrt(x2^2 + 1)*log(2 + p1) - cos(t*x2)"
        f = CompiledExpr(src, DIMS)
        rng = np.random.default_rng(23)
        for _ in range(25):
            t = rng.uniform(0, 1)
            (x1, x2), (u1,), (p1,) = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 1), rng.uniform(-1, 1, 1)
            expected = [
                x2 * math.sin(t * x2),
                math.exp(x1) * math.tanh(u1) - 2 * x1 * x2 ** 3 / (1 + x1 ** 2) ** 2,
                3 * x2 ** 2 / (1 + x1 ** 2) + x2 / math.sqrt(x2 ** 2 + 1) * math.log(2 + p1) + t * math.sin(t * x2),
                math.exp(x1) * (1 - math.tanh(u1) ** 2),
                math.sqrt(x2 ** 2 + 1) / (2 + p1),
            ]
            grad = f.jacobian(t, [x1, x2], [u1], [p1]).gradient
            assert grad.tolist() == pytest.approx(expected, rel=1e-8, abs=1e-12)

    def test_five_point_differences(self):
        """Test dual partials against fourth-order central differences to 1e-8 relative"""
        f = CompiledExpr("exp(x1)*sin(x2) + x1^2*u1 - log(3 + p1*x2)", DIMS)
        rng = np.random.default_rng(29)
        h = 1e-3
        for _ in range(10):
            point = np.concatenate(([rng.uniform(0, 1)], rng.uniform(0.5, 1.5, 4)))

            def at(q):
                return f(q[0], q[1:3], q[3:4], q[4:])

            grad = f.jacobian(point[0], point[1:3], point[3:4], point[4:]).gradient
            for k in range(1, point.size):
                e = np.zeros(point.size)
                e[k] = h
                fd = (-at(point + 2 * e) + 8 * at(point + e) - 8 * at(point - e) + at(point - 2 * e)) / (12 * h)
                assert grad[k] == pytest.approx(fd, rel=1e-8, abs=1e-10)

    def test_dyadic_polynomials_exact(self):
        """Test value and partials of dyadic polynomials bit-for-bit against exact rational arithmetic"""
        rng = np.random.default_rng(31)
        for _ in range(50):
            terms = [(Fraction(int(rng.integers(-16, 17)), 8), int(rng.integers(0, 4)), int(rng.integers(0, 4)))
                     for _ in range(4)]
            src = " + ".join(f"({float(c)})*x1^{e1}*x2^{e2}" for c, e1, e2 in terms)
            x1, x2 = (Fraction(int(rng.integers(-8, 9)), 4) for _ in range(2))
            value = sum(c * x1 ** e1 * x2 ** e2 for c, e1, e2 in terms)
            d1 = sum(c * e1 * x1 ** (e1 - 1) * x2 ** e2 for c, e1, e2 in terms if e1)
            d2 = sum(c * e2 * x1 ** e1 * x2 ** (e2 - 1) for c, e1, e2 in terms if e2)
            f = CompiledExpr(src, DIMS)
            args = (0.0, [float(x1), float(x2)], [0.0], [0.0])
            assert f(*args) == float(value)
            assert f.partial("x", *args).tolist() == [float(d1), float(d2)]

    def test_abs_kink_flagged(self):
        """Test the right derivative and nonsmooth flag of abs at 0"""
        result = eval_dual(parse("abs(x1)", DIMS), {"x1": 0.0}, ["x1"])
        assert result.value == 0.0
        assert result.gradient.tolist() == [1.0]
        assert result.nonsmooth

    def test_domain_fault_span(self):
        """Test that log of a negative number reports its subexpression"""
        with pytest.raises(EvaluationError) as exc_info:
            CompiledExpr("1 + log(x1)", DIMS)(0.0, [-1.0, 0.0], [0.0], [0.0])
        assert exc_info.value.span == (4, 11)

    def test_negative_base_integer_power(self):
        """Test that integer powers of negative numbers are allowed"""
        f = CompiledExpr("x1^3", DIMS)
        assert f(0.0, [-2.0, 0.0], [0.0], [0.0]) == pytest.approx(-8.0)
        assert f.partial("x", 0.0, [-2.0, 0.0], [0.0], [0.0])[0] == pytest.approx(12.0)

    def test_slot_arity(self):
        """Test that a slot of the wrong size is rejected"""
        with pytest.raises(ConfigurationError):
            CompiledExpr("x1", DIMS)(0.0, [1.0], [0.0], [0.0])


class TestBinding:
    """Test problems built from expressions"""

    def test_lq_matches_builtin(self, lq_problem):
        """Test callbacks and dual derivatives against the hand-written LQ builtin"""
        bound = bind_problem(BUILTIN_EXPRESSIONS["lq_scalar"], Dims(1, 1, 1), 1.0, [1.0], pi0=[0.0])
        assert bound.deriv_mode == DerivMode.DUAL_AD
        rng = np.random.default_rng(5)
        for _ in range(5):
            t, x, u, pi = rng.uniform(0, 1), rng.normal(size=1), rng.normal(size=1), rng.normal(size=1)
            assert bound.f0(t, x, u, pi) == pytest.approx(lq_problem.f0(t, x, u, pi))
            assert np.allclose(bound.f(t, x, u, pi), lq_problem.f(t, x, u, pi))
            for slot in ("f0_x", "f0_u", "f0_p"):
                assert np.allclose(getattr(bound.derivs, slot)(t, x, u, pi),
                                   getattr(lq_problem.derivs, slot)(t, x, u, pi))

    def test_lq_criterion(self, lq_problem, lq_process):
        """Test the expression-bound criterion on the exact LQ optimum"""
        bound = bind_problem(BUILTIN_EXPRESSIONS["lq_scalar"], Dims(1, 1, 1), 1.0, [1.0], pi0=[0.0])
        assert criterion(bound, lq_process) == pytest.approx(criterion(lq_problem, lq_process), abs=1e-10)

    def test_steering_terminal_gradients(self):
        """Test h = x1 - p1 partials"""
        bound = bind_problem(BUILTIN_EXPRESSIONS["steering"], Dims(1, 1, 1), 1.0, [0.0], pi0=[1.0])
        gx, hx = bound.terminal_gradients(np.array([1.0]), np.array([1.0]))
        gp, hp = bound.terminal_param_gradients(np.array([1.0]), np.array([1.0]))
        assert hx.tolist() == [[1.0]]
        assert hp.tolist() == [[-1.0]]
        assert gx[0].tolist() == [0.0]

    def test_central_fd_mode(self):
        """Test that central-FD mode differentiates the compiled callbacks numerically"""
        bound = bind_problem(BUILTIN_EXPRESSIONS["lq_scalar"], Dims(1, 1, 1), 1.0, [1.0], pi0=[0.0],
                             deriv_mode=DerivMode.CENTRAL_FD)
        assert bound.deriv_mode == DerivMode.CENTRAL_FD
        assert bound.derivs.f0_x(0.0, np.array([2.0]), np.array([0.0]), np.array([0.5]))[0] == \
            pytest.approx(-2.5, abs=1e-6)

    def test_unknown_key(self):
        """Test that only f0, f, g and h are accepted"""
        with pytest.raises(ConfigurationError):
            bind_problem({"f0": "0", "f": ["u1"], "k": ["x1"]}, Dims(1, 1, 0), 1.0, [0.0])

    def test_dynamics_arity(self):
        """Test that f needs state_dim components"""
        with pytest.raises(ConfigurationError):
            bind_problem({"f0": "0", "f": ["u1", "x1"]}, Dims(1, 1, 0), 1.0, [0.0])

    def test_expressions_recorded(self):
        """Test that the sources are kept for reports"""
        bound = bind_problem(BUILTIN_EXPRESSIONS["steering"], Dims(1, 1, 1), 1.0, [0.0], pi0=[1.0])
        assert bound.expressions["h"] == ["x1 - p1"]

    @pytest.mark.parametrize("name,dims", [("lq_initial", Dims(1, 1, 1)), ("steering_plane", Dims(2, 2, 2))])
    def test_expression_form_matches_builtin(self, name, dims):
        """Test callbacks and dual derivatives of the expression form against the hand-written builtin"""
        builtin = get_builtin(name)
        bound = bind_problem(BUILTIN_EXPRESSIONS[name], dims, 1.0, builtin.xi0.tolist(), pi0=builtin.pi0.tolist())
        rng = np.random.default_rng(17)
        for _ in range(5):
            t = rng.uniform(0, 1)
            x, u, pi = rng.normal(size=dims.n), rng.normal(size=dims.mu), rng.normal(size=dims.n_params)
            assert bound.f0(t, x, u, pi) == pytest.approx(builtin.f0(t, x, u, pi))
            assert np.allclose(bound.f(t, x, u, pi), builtin.f(t, x, u, pi))
            for slot in ("f0_x", "f0_u", "f0_p", "f_u"):
                assert np.allclose(getattr(bound.derivs, slot)(t, x, u, pi),
                                   getattr(builtin.derivs, slot)(t, x, u, pi))
        x_T, pi = rng.normal(size=dims.n), rng.normal(size=dims.n_params)
        assert np.allclose(bound.terminal_gradients(x_T, pi)[1], builtin.terminal_gradients(x_T, pi)[1])
