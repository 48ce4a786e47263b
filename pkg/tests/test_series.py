import numpy as np
import pytest

from loopwell.series import (
    ChartMismatchError,
    CohomologicalSolution,
    DivisionRemainderError,
    FourierTaylorSeries,
    SymbolModel,
    TruncationExhaustedError,
    add,
    average,
    multiply,
    poisson_bracket,
    solve_cohomological,
    split,
    subtract,
    taylor_compose,
    taylor_div,
    taylor_invert,
    taylor_mul,
)

FTS = FourierTaylorSeries


def series(terms, K=3, J=4, base=0.0, valid=None):
    return FTS.from_terms(base, K, J, terms, valid)


def cos_theta(K=3, J=4, base=0.0):
    return series({(1, 0): 0.5, (-1, 0): 0.5}, K, J, base)


def assert_coeffs_close(a, b, tol=1e-14):
    assert a.base_point == b.base_point
    assert np.max(np.abs(a.coeffs - b.coeffs)) <= tol


# ---------------------------------------------------------------- taylor helpers

def test_taylor_mul_div_roundtrip():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = rng.normal(size=6) + 1j * rng.normal(size=6)
        b = rng.normal(size=6) + 1j * rng.normal(size=6)
        b[0] = 1.0 + rng.normal()**2
        prod = taylor_mul(a, b, 5)
        back = taylor_div(prod, b, 5)
        assert np.allclose(back, a, atol=1e-12)


def test_taylor_invert_is_compositional_inverse():
    g = np.array([0.0, 2.0, -0.3, 0.05, 0.0, 0.01])
    h = taylor_invert(g, 5)
    comp = taylor_compose(g, h, 5)
    expect = np.zeros(6)
    expect[1] = 1.0
    assert np.allclose(comp, expect, atol=1e-12)


def test_taylor_div_rejects_zero_constant():
    with pytest.raises(DivisionRemainderError):
        taylor_div(np.array([1.0]), np.array([0.0, 1.0]), 3)


# ---------------------------------------------------------------- add / multiply

def test_add_identity():
    one = FTS.constant(1.0, 0.0, 2, 2)
    zero = FTS.zeros(0.0, 2, 2)
    assert_coeffs_close(add(one, zero), one)


def test_add_cos_plus_cos():
    two_cos = add(cos_theta(), cos_theta())
    assert two_cos.coeff(1, 0) == pytest.approx(1.0)
    assert two_cos.coeff(-1, 0) == pytest.approx(1.0)


def test_add_action_term():
    s = series({(0, 1): 1.0}, K=2, J=3)
    out = add(s, FTS.zeros(0.0, 2, 3))
    assert out.coeff(0, 1) == pytest.approx(1.0)
    assert np.count_nonzero(out.coeffs) == 1


def test_add_mismatched_base_point_raises():
    with pytest.raises(ChartMismatchError):
        add(series({}, base=0.0), series({}, base=0.5))


def test_multiply_cos_squared():
    out = multiply(cos_theta(), cos_theta())
    # cos^2 = 1/2 + cos(2 theta)/2
    assert out.coeff(0, 0) == pytest.approx(0.5)
    assert out.coeff(2, 0) == pytest.approx(0.25)
    assert out.coeff(-2, 0) == pytest.approx(0.25)
    assert out.coeff(1, 0) == 0.0


def test_multiply_truncates_taylor_order():
    u = series({(0, 1): 1.0}, K=1, J=1)
    out = multiply(u, u)   # (I-I0)^2 truncated away at J=1
    assert out.max_abs() == 0.0
    assert out.valid_taylor_order == 1


def test_multiply_exp_conjugate():
    e_plus = series({(1, 0): 1.0})
    e_minus = series({(-1, 0): 1.0})
    assert_coeffs_close(multiply(e_plus, e_minus), FTS.constant(1.0, 0.0, 3, 4))


def test_truncation_reconciled_to_min():
    a = series({(2, 0): 1.0}, K=4, J=6)
    b = series({(1, 1): 2.0}, K=2, J=3)
    out = add(a, b)
    assert out.fourier_cut == 2 and out.taylor_cut == 3


# ---------------------------------------------------------------- poisson bracket

def test_bracket_canonical_pair():
    action = series({(0, 1): 1.0})
    e = series({(1, 0): 1.0})
    out = poisson_bracket(action, e)
    assert out.coeff(1, 0) == pytest.approx(1j)
    assert out.valid_taylor_order == 3


def test_bracket_against_fold_formula():
    # p = b0 + I^2 at base 0: {p, h} = 2 I dtheta h, checked on h = e^{i theta}
    p = series({(0, 0): 0.7, (0, 2): 1.0})
    h = series({(1, 0): 1.0})
    out = poisson_bracket(p, h)
    expect = series({(1, 1): 2.0j})
    assert_coeffs_close(out, expect)


def test_bracket_self_is_zero():
    rng = np.random.default_rng(1)
    c = rng.normal(size=(7, 5)) + 1j * rng.normal(size=(7, 5))
    a = FTS(0.3, 3, 4, c, 4)
    assert poisson_bracket(a, a).max_abs() <= 1e-13 * a.max_abs() ** 2


def test_bracket_requires_valid_order():
    a = series({(1, 1): 1.0, (-1, 1): 1.0}, valid=0)
    with pytest.raises(TruncationExhaustedError):
        poisson_bracket(a, a)


def _random_real_series(rng, K=3, J=5, base=0.0, support=None):
    """Random real series; ``support`` bounds the populated Fourier modes."""
    c = rng.normal(size=(2 * K + 1, J + 1)) + 1j * rng.normal(size=(2 * K + 1, J + 1))
    c = 0.5 * (c + np.conj(c[::-1]))   # impose reality
    if support is not None and support < K:
        c[: K - support, :] = 0.0
        c[K + support + 1:, :] = 0.0
    return FTS(base, K, J, c, J)


def test_bracket_antisymmetry_and_bilinearity():
    rng = np.random.default_rng(7)
    for _ in range(40):
        a = _random_real_series(rng)
        b = _random_real_series(rng)
        c = _random_real_series(rng)
        scale = max(a.max_abs() * b.max_abs(), 1.0)

        anti = add(poisson_bracket(a, b), poisson_bracket(b, a))
        assert anti.max_abs() <= 1e-12 * scale

        lin = subtract(poisson_bracket(add(a, 2.0 * c), b),
                       add(poisson_bracket(a, b), 2.0 * poisson_bracket(c, b)))
        assert lin.max_abs() <= 1e-12 * max(scale, c.max_abs() * b.max_abs())


def test_bracket_leibniz():
    # Products are exact only while Fourier mode sums stay inside the cut,
    # so the triple is drawn with support headroom; the Taylor side is
    # compared at the truncation-reduced order.
    rng = np.random.default_rng(7)
    for _ in range(40):
        a = _random_real_series(rng, K=9, J=5, support=3)
        b = _random_real_series(rng, K=9, J=5, support=3)
        c = _random_real_series(rng, K=9, J=5, support=3)
        lhs = poisson_bracket(a, multiply(b, c))
        rhs = add(multiply(poisson_bracket(a, b), c),
                  multiply(b, poisson_bracket(a, c)))
        diff = subtract(lhs, rhs)
        v = diff.valid_taylor_order
        err = np.max(np.abs(diff.coeffs[:, : v + 1]))
        assert err <= 1e-12 * max(a.max_abs() * b.max_abs() * c.max_abs(), 1.0)


def test_reality_preserved_by_operations():
    rng = np.random.default_rng(11)
    for _ in range(20):
        a = _random_real_series(rng)
        b = _random_real_series(rng)
        for out in (add(a, b), multiply(a, b), poisson_bracket(a, b),
                    average(a)):
            assert out.reality_defect() <= 1e-14 * max(out.max_abs(), 1.0) * 8


# ---------------------------------------------------------------- average / split

def test_average_examples():
    s = add(FTS.constant(3.0, 0.0, 3, 4), cos_theta())
    assert_coeffs_close(average(s), FTS.constant(3.0, 0.0, 3, 4))

    sin = series({(1, 1): -0.5j, (-1, 1): 0.5j})   # I sin(theta)
    assert average(sin).max_abs() == 0.0

    s2 = series({(0, 2): 1.0, (2, 1): 0.5, (-2, 1): 0.5})
    assert_coeffs_close(average(s2), series({(0, 2): 1.0}))


def test_split_boundary_only():
    parts = split(cos_theta())
    assert parts.kernel_part.max_abs() == 0.0
    assert parts.image_part.max_abs() == 0.0
    assert_coeffs_close(parts.boundary_part, cos_theta())


def test_split_image_only():
    s = series({(1, 1): 0.5, (-1, 1): 0.5})   # (I-I0) cos theta
    parts = split(s)
    assert parts.kernel_part.max_abs() == 0.0
    assert parts.boundary_part.max_abs() == 0.0
    assert_coeffs_close(parts.image_part, s)


def test_split_kernel_and_boundary():
    s = series({(0, 2): 1.0, (0, 0): 5.0})
    parts = split(s)
    assert_coeffs_close(parts.kernel_part, series({(0, 2): 1.0}))
    assert parts.image_part.max_abs() == 0.0
    assert_coeffs_close(parts.boundary_part, series({(0, 0): 5.0}))


def test_split_parts_sum_and_projection():
    rng = np.random.default_rng(3)
    for _ in range(20):
        h = _random_real_series(rng)
        parts = split(h)
        total = add(add(parts.kernel_part, parts.image_part), parts.boundary_part)
        assert_coeffs_close(total, h)
        # projection triple: re-splitting each part isolates it
        for i, part in enumerate((parts.kernel_part, parts.image_part,
                                  parts.boundary_part)):
            again = split(part)
            blocks = (again.kernel_part, again.image_part, again.boundary_part)
            for l, blk in enumerate(blocks):
                if l == i:
                    assert_coeffs_close(blk, part)
                else:
                    assert blk.max_abs() == 0.0


# ---------------------------------------------------------------- cohomological solve

def quadratic_model(**kw):
    return SymbolModel(floor_energy=kw.pop("floor", 0.0),
                       action0=kw.pop("action0", 0.0),
                       fold_taylor=kw.pop("fold", np.array([0.0, 1.0])), **kw)


def test_solve_linear_cos_source():
    # r = I cos(theta) with p = b0 + I^2: a = sin(theta)/2 in our convention
    model = quadratic_model()
    r = series({(1, 1): 0.5, (-1, 1): 0.5}, K=3, J=5)
    sol = solve_cohomological(r, model)
    assert sol.generator.coeff(1, 0) == pytest.approx(-0.25j)
    assert sol.generator.coeff(-1, 0) == pytest.approx(0.25j)
    assert np.max(np.abs(sol.kernel_profile)) == 0.0
    assert sol.boundary_profile.max_abs() == 0.0
    # hand check: {p, a} must reproduce r
    p = model.p_series(3, 5)
    back = poisson_bracket(p, sol.generator)
    diff = subtract(back, r)
    assert np.max(np.abs(diff.coeffs[:, :5])) <= 1e-14


def test_solve_boundary_source():
    model = quadratic_model()
    r = cos_theta(K=3, J=5)
    sol = solve_cohomological(r, model)
    assert sol.generator.max_abs() == 0.0
    assert np.max(np.abs(sol.kernel_profile)) == 0.0
    assert_coeffs_close(sol.boundary_profile, r)


def test_solve_kernel_source():
    model = quadratic_model()
    r = series({(0, 2): 1.0}, K=3, J=5)
    sol = solve_cohomological(r, model)
    assert sol.generator.max_abs() == 0.0
    assert sol.boundary_profile.max_abs() == 0.0
    # q(s) = s^2 for g = identity
    expect = np.zeros(6)
    expect[2] = 1.0
    assert np.allclose(sol.kernel_profile, expect, atol=1e-13)


def test_solve_reconstruction_random():
    """{p, a} + q o f + V == r coefficientwise at the reduced truncation."""
    rng = np.random.default_rng(23)
    for trial in range(100):
        K = int(rng.integers(1, 5))
        J = int(rng.integers(3, 7))
        base = float(rng.normal())
        fold = np.zeros(4)
        fold[1] = rng.normal() + np.sign(rng.normal()) * 1.0
        fold[2:] = 0.3 * rng.normal(size=2)
        model = SymbolModel(0.1 * rng.normal(), base, fold)
        r = _random_real_series(rng, K=K, J=J, base=base)
        sol = solve_cohomological(r, model)

        p = model.p_series(K, J)
        recon = poisson_bracket(p, sol.generator)
        qf = taylor_compose(sol.kernel_profile,
                            np.concatenate(([0.0], model.fold_taylor[1:])), J)
        qf_full = np.zeros(J + 1, dtype=complex)
        qf_full[: qf.size] = qf
        recon = add(recon, FTS.from_taylor(qf_full, base, K, J))
        recon = add(recon, sol.boundary_profile)

        diff = subtract(recon, r)
        v = min(diff.valid_taylor_order, J - 1)
        err = np.max(np.abs(diff.coeffs[:, : v + 1]))
        assert err <= 1e-11 * max(r.max_abs(), 1.0), f"trial {trial}: err={err}"


def test_solve_generator_is_real_for_real_source():
    rng = np.random.default_rng(5)
    model = quadratic_model(fold=np.array([0.0, 1.3, 0.2]))
    for _ in range(10):
        r = _random_real_series(rng, K=3, J=5)
        sol = solve_cohomological(r, model)
        assert sol.generator.reality_defect() <= 1e-12 * max(sol.generator.max_abs(), 1.0)


def test_solve_chart_mismatch():
    model = quadratic_model(action0=0.2)
    with pytest.raises(ChartMismatchError):
        solve_cohomological(cos_theta(base=0.0), model)


# ---------------------------------------------------------------- serialization

def test_json_roundtrip():
    rng = np.random.default_rng(9)
    s = _random_real_series(rng, K=2, J=3, base=0.37)
    back = FTS.from_dict(s.to_dict())
    assert_coeffs_close(back, s)
    assert back.valid_taylor_order == s.valid_taylor_order


def test_symbol_model_validation():
    with pytest.raises(ValueError):
        SymbolModel(0.0, 0.0, np.array([0.1, 1.0]))   # g(I0) != 0
    with pytest.raises(ValueError):
        SymbolModel(0.0, 0.0, np.array([0.0, 0.0]))   # g'(I0) == 0
    m = SymbolModel(0.0, 0.5, np.array([0.0, 2.0]), pot0_fourier={1: 0.5})
    assert m.pot0_fourier[-1] == pytest.approx(0.5)   # auto-conjugated


def test_symbol_model_roundtrip():
    m = SymbolModel(0.1, 0.37, np.array([0.0, 1.0, 0.3]),
                    fold_sub_taylor=np.array([0.2]),
                    pot0_fourier={1: 0.5})
    back = SymbolModel.from_dict(m.to_dict())
    assert back.floor_energy == m.floor_energy
    assert np.allclose(back.fold_taylor, m.fold_taylor)
    assert back.pot0_fourier == m.pot0_fourier
