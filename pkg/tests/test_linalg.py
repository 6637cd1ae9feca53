import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splitplot.linalg import LsSolution, quadform_geninv, sandwich, wls_solve


def _random_problem(rng, n=30, p=5):
    x = rng.normal(size=(n, p))
    y = rng.normal(size=n)
    w = rng.uniform(0.5, 2.0, size=n)
    return x, y, w


def test_wls_matches_lstsq_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x, y, w = _random_problem(rng)
        sol = wls_solve(x, y, w)
        sw = np.sqrt(w)
        beta, *_ = np.linalg.lstsq(x * sw[:, None], y * sw, rcond=None)
        assert sol.rank == x.shape[1]
        assert sol.dropped_columns == ()
        np.testing.assert_allclose(sol.coefficients, beta, atol=1e-10)
        np.testing.assert_allclose(sol.residuals, y - x @ sol.coefficients, atol=1e-12)


def test_duplicate_column_is_dropped():
    rng = np.random.default_rng(1)
    x, y, w = _random_problem(rng, p=4)
    x_dup = np.column_stack([x, x[:, 1]])
    sol = wls_solve(x_dup, y, w)
    assert sol.rank == 4
    assert len(sol.dropped_columns) == 1
    dropped = sol.dropped_columns[0]
    assert dropped in (1, 4)
    assert sol.coefficients[dropped] == 0.0
    # fitted values must match the full-rank fit
    ref = wls_solve(x, y, w)
    np.testing.assert_allclose(
        x_dup @ sol.coefficients, x @ ref.coefficients, atol=1e-10
    )


def test_zero_design_drops_everything():
    sol = wls_solve(np.zeros((5, 3)), np.ones(5), np.ones(5))
    assert sol.rank == 0
    assert sol.dropped_columns == (0, 1, 2)
    np.testing.assert_array_equal(sol.coefficients, 0.0)


def test_wls_input_validation():
    x = np.ones((4, 2))
    y = np.ones(4)
    w = np.ones(4)
    with pytest.raises(ValueError):
        wls_solve(x, y[:3], w)
    with pytest.raises(ValueError):
        wls_solve(x, y, -w)
    with pytest.raises(ValueError):
        wls_solve(x, np.array([1.0, np.nan, 0.0, 0.0]), w)
    with pytest.raises(ValueError):
        wls_solve(np.ones(4), y, w)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_weighted_normal_equations(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(8, 40))
    p = int(rng.integers(1, 6))
    x = rng.normal(size=(n, p))
    y = rng.normal(size=n)
    w = rng.uniform(0.1, 5.0, size=n)
    sol = wls_solve(x, y, w)
    if sol.rank == p:
        grad = x.T @ (w * sol.residuals)
        assert np.max(np.abs(grad)) < 1e-8 * max(1.0, np.abs(y).max())


def test_sandwich_value_and_symmetry():
    rng = np.random.default_rng(2)
    b = rng.normal(size=(4, 4))
    m = rng.normal(size=(4, 4))
    out = sandwich(b, m)
    np.testing.assert_allclose(out, out.T)
    np.testing.assert_allclose(out, 0.5 * (b @ m @ b + (b @ m @ b).T))
    with pytest.raises(ValueError):
        sandwich(b, m[:3, :3])


def test_quadform_geninv_full_rank():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(5, 5))
    m = a @ a.T + 5 * np.eye(5)
    v = rng.normal(size=5)
    expected = float(v @ np.linalg.solve(m, v))
    assert quadform_geninv(m, v) == pytest.approx(expected, rel=1e-10)


def test_quadform_geninv_singular():
    u = np.array([1.0, 2.0, -1.0])
    m = np.outer(u, u)  # rank one
    # v in the range of m: v = c*u gives c^2 u' (uu')^+ u = c^2
    assert quadform_geninv(m, 2.0 * u) == pytest.approx(4.0, rel=1e-10)
    # v orthogonal to the range contributes nothing
    v_perp = np.array([2.0, -1.0, 0.0])
    assert quadform_geninv(m, v_perp) < 1e-20
    assert quadform_geninv(np.zeros((3, 3)), u) == 0.0


def test_quadform_geninv_rejects_asymmetric():
    m = np.array([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        quadform_geninv(m, np.ones(2))


def test_ls_solution_is_frozen():
    sol = LsSolution(np.zeros(2), np.zeros(3), 2)
    with pytest.raises(AttributeError):
        sol.rank = 1
