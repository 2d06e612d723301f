import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import CW_2, CW_195

from kacprofile.errors import ConfigurationError, ContractError, DomainError, NonConvergenceError
from kacprofile.meanfield import cw_fixed_point, local_potential
from kacprofile.torus import GridField, TorusGrid, integrate, make_kernel, uniform_density
from kacprofile.variational import (
    SolverOptions,
    comparison_profiles,
    directional_derivative,
    find_minimizers,
    flat_level,
    linear_growth_rate,
    local_profile_mloc,
    local_temperature,
    rate_functional,
    rate_functional_parts,
    rate_functional_split,
    solve_stationary,
    stationarity_residual,
    tanh_map,
)


@pytest.fixture(scope="module")
def m_stat(fig1):
    rho, beta, J = fig1
    return solve_stationary(rho, beta, J, SolverOptions(tol=1e-12)).profile.values


def test_local_temperature_cosine(fig1):
    rho, beta, J = fig1
    b = local_temperature(rho, beta, J).values
    u = rho.grid.axis
    assert np.max(np.abs(b - beta * (1 + 0.5 * np.cos(2 * np.pi * u)))) < 1e-8
    assert b.min() == pytest.approx(0.65) and b.max() == pytest.approx(1.95)


def test_local_temperature_trivial_cases(flat):
    rho, J = flat
    assert np.allclose(local_temperature(rho, 1.7, J).values, 1.7, atol=1e-14)
    assert np.all(local_temperature(rho, 0.0, J).values == 0.0)


def test_local_temperature_grid_mismatch(flat):
    rho, _ = flat
    with pytest.raises(ContractError):
        local_temperature(rho, 1.0, make_kernel(TorusGrid(1, 64), np.ones(64)))


def test_rate_functional_examples(flat, fig1, m_stat):
    rho, J = flat
    assert rate_functional(rho, 1.3, J, 0.0) == 0.0
    for c in (0.2, -0.7, 0.95):
        assert rate_functional(rho, 1.3, J, c) == pytest.approx(local_potential(1.3, c), abs=1e-14)
    frho, beta, fJ = fig1
    assert rate_functional(frho, beta, fJ, m_stat) < rate_functional(frho, beta, fJ, 0.0)
    with pytest.raises(DomainError):
        rate_functional(rho, 1.0, J, 1.01)


def _random_profile(rng, grid, amp=1.0):
    modes = rng.normal(size=6)
    u = grid.axis
    raw = sum(modes[k] * np.cos(2 * np.pi * k * u + modes[-1] * k) for k in range(5))
    return amp * np.tanh(raw)


@pytest.mark.parametrize("beta", [0.3, 1.3, 2.5])
def test_two_forms_agree_on_random_profiles(fig1, beta):
    rho, _, J = fig1
    rng = np.random.default_rng(int(beta * 10))
    for _ in range(100):
        m = _random_profile(rng, rho.grid)
        assert abs(rate_functional(rho, beta, J, m) - rate_functional_split(rho, beta, J, m)) < 1e-10


def test_split_penalty_nonnegative_and_vanishes_on_constants(fig1):
    rho, beta, J = fig1
    rng = np.random.default_rng(5)
    for _ in range(20):
        penalty, _ = rate_functional_parts(rho, beta, J, _random_profile(rng, rho.grid))
        assert penalty >= 0
    penalty, local = rate_functional_parts(rho, beta, J, 0.4)
    assert abs(penalty) < 1e-14
    b = local_temperature(rho, beta, J).values
    assert local == pytest.approx(integrate(rho.grid.field(rho.values * local_potential(b, 0.4))), abs=1e-13)
    assert rate_functional_split(rho, beta, J, 0.0) == 0.0


def test_evenness_and_folding(fig1):
    rho, beta, J = fig1
    rng = np.random.default_rng(7)
    mixed = 0
    for _ in range(30):
        m = _random_profile(rng, rho.grid)
        assert abs(rate_functional(rho, beta, J, m) - rate_functional(rho, beta, J, -m)) < 1e-12
        folded, raw = rate_functional(rho, beta, J, np.abs(m)), rate_functional(rho, beta, J, m)
        assert folded <= raw + 1e-15
        h = rho.grid.h
        if min(h * rho.values[m > 0].sum(), h * rho.values[m < 0].sum()) > 1e-3:
            mixed += 1
            assert raw - folded > 0
    assert mixed >= 10


def test_derivative_zero_at_origin(fig1):
    rho, beta, J = fig1
    m2 = _random_profile(np.random.default_rng(1), rho.grid)
    assert directional_derivative(rho, beta, J, 0.0, m2, 0.0) == 0.0


def test_derivative_vanishes_at_stationary_profile(fig1, m_stat):
    rho, beta, J = fig1
    rng = np.random.default_rng(2)
    for _ in range(5):
        m2 = _random_profile(rng, rho.grid)
        assert abs(directional_derivative(rho, beta, J, m_stat, m2, 0.0)) < 10 * 1e-10


def test_derivative_matches_finite_differences(fig1):
    rho, beta, J = fig1
    rng = np.random.default_rng(3)
    h = 1e-5
    for _ in range(50):
        m1 = _random_profile(rng, rho.grid, 0.5)
        m2 = _random_profile(rng, rho.grid, 0.5)
        t = 0.3
        fd = (rate_functional(rho, beta, J, m1 + (t + h) * m2) - rate_functional(rho, beta, J, m1 + (t - h) * m2)) / (2 * h)
        exact = directional_derivative(rho, beta, J, m1, m2, t)
        assert abs(fd - exact) <= 1e-6 * abs(exact)


def test_derivative_rejects_boundary(flat):
    rho, J = flat
    with pytest.raises(DomainError):
        directional_derivative(rho, 1.0, J, 1.0, 0.5, 0.0)


def test_stationarity_residual_examples(flat):
    rho, J = flat
    assert stationarity_residual(rho, 2.0, J, 0.0) == 0.0
    assert stationarity_residual(rho, 2.0, J, cw_fixed_point(2.0)) < 1e-12
    assert stationarity_residual(rho, 2.0, J, 1.0) > 0


def test_solver_homogeneous_cases(flat):
    rho, J = flat
    sub = solve_stationary(rho, 0.5, J)
    assert np.max(np.abs(sub.profile.values)) < 1e-9
    sup = solve_stationary(rho, 2.0, J, SolverOptions(tol=1e-12))
    assert np.allclose(sup.profile.values, CW_2, atol=1e-11)


def test_solver_cosine_profile(fig1, m_stat):
    rho, beta, J = fig1
    assert np.all(m_stat > 0)
    assert stationarity_residual(rho, beta, J, m_stat) < 1e-8
    b = local_temperature(rho, beta, J).values
    assert np.max(np.abs(m_stat)) <= np.tanh(b.max())


def test_iterates_from_one_decrease_pointwise(fig1):
    rho, beta, J = fig1
    m = np.ones(rho.grid.shape)
    for _ in range(30):
        nxt = tanh_map(rho, beta, J, m).values
        assert np.all(nxt <= m + 1e-15)
        m = nxt


def test_solver_errors(flat):
    rho, J = flat
    with pytest.raises(NonConvergenceError) as info:
        solve_stationary(rho, 1.0, J, SolverOptions(max_iter=50))
    assert info.value.residual > 0 and info.value.iterations == 50
    with pytest.raises(ConfigurationError):
        SolverOptions(theta=0.0)
    with pytest.raises(ConfigurationError):
        SolverOptions(tol=0.0)
    with pytest.raises(ConfigurationError):
        solve_stationary(rho, 1.0, J, SolverOptions(init="zero"))


def test_damped_solver_reaches_same_profile(fig1, m_stat):
    rho, beta, J = fig1
    sol = solve_stationary(rho, beta, J, SolverOptions(theta=0.5, tol=1e-12))
    assert np.max(np.abs(sol.profile.values - m_stat)) < 1e-10


def test_near_critical_flag(flat):
    rho, J = flat
    assert solve_stationary(rho, 0.999, J).near_critical
    assert not solve_stationary(rho, 0.5, J).near_critical


@pytest.mark.parametrize("name", ["cosine", "flat"])
def test_uniqueness_from_random_positive_starts(fig1, flat, name):
    if name == "cosine":
        rho, beta, J = fig1
    else:
        (rho, J), beta = flat, 2.0
    ref = solve_stationary(rho, beta, J, SolverOptions(tol=1e-12)).profile.values
    rng = np.random.default_rng(11)
    for _ in range(20):
        init = rng.uniform(0.01, 1.0, size=rho.grid.shape)
        sol = solve_stationary(rho, beta, J, SolverOptions(init=init, tol=1e-12))
        assert np.max(np.abs(sol.profile.values - ref)) < 1e-6


def test_find_minimizers_examples(flat, fig1):
    rho, J = flat
    assert find_minimizers(rho, 0.5, J).kind == "TrivialZero"
    pair = find_minimizers(rho, 2.0, J)
    assert pair.kind == "SymmetricPair"
    assert np.allclose(pair.profile.values, CW_2, atol=1e-9)
    assert pair.rate < pair.rate_at_zero
    assert np.array_equal(pair.minimizers[1].values, -pair.profile.values)
    frho, beta, fJ = fig1
    res = find_minimizers(frho, beta, fJ)
    assert res.kind == "SymmetricPair" and res.profile.values.min() > 0
    assert np.ptp(res.profile.values) > 0.1


def test_trivial_iff_linear_growth_at_most_one(flat):
    rho, J = flat
    for beta in (0.6, 0.9, 1.1, 1.5):
        assert linear_growth_rate(rho, beta, J) == pytest.approx(beta, rel=1e-10)
        assert find_minimizers(rho, beta, J).trivial == (beta <= 1)


def test_dominance_of_larger_stationary_profile(fig1, m_stat):
    rho, beta, J = fig1
    assert rate_functional(rho, beta, J, m_stat) < rate_functional(rho, beta, J, 0.0)
    # along the segment from 0 to m_stat the rate decreases at the far end
    assert directional_derivative(rho, beta, J, 0.0, m_stat, 0.99) < 0


def test_mloc_examples(fig1):
    rho, beta, J = fig1
    m = local_profile_mloc(rho, beta, J)
    assert m.at(0.0) == pytest.approx(CW_195, abs=1e-6)
    assert m.at(0.5) == 0.0
    b = local_temperature(rho, beta, J).values
    assert np.all((m.values == 0) == (b <= 1))
    assert np.all(local_profile_mloc(rho, 0.0, J).values == 0)


def test_mflat_examples(flat, fig1):
    rho, J = flat
    assert flat_level(rho, 1.7, J) == pytest.approx(cw_fixed_point(1.7), abs=1e-7)
    assert flat_level(rho, 0.1, J) == 0.0
    frho, beta, fJ = fig1
    c = flat_level(frho, beta, fJ)
    # int rho Phi(b, c) = -c^2/2 int rho b + I(c), so c solves the CW equation at int rho b = 1.625
    assert c == pytest.approx(cw_fixed_point(1.625), abs=1e-7)
    cs = np.linspace(0, 1, 100001)
    b = local_temperature(frho, beta, fJ).values
    objective = [np.mean(frho.values * local_potential(b, x)) for x in cs[::100]]
    assert abs(cs[::100][int(np.argmin(objective))] - c) <= 1e-3


def test_comparison_profiles_only_mstat_is_stationary(fig1):
    rho, beta, J = fig1
    prof = comparison_profiles(rho, beta, J)
    assert stationarity_residual(rho, beta, J, prof["m_stat"]) < 1e-8
    assert stationarity_residual(rho, beta, J, prof["m_loc"]) > 0.1
    assert stationarity_residual(rho, beta, J, prof["m_flat"]) > 0.1
    c = prof["m_flat"].values[0]
    assert 0 < c < 1
    assert not np.allclose(prof["m_flat"].values, prof["m_stat"].values, atol=1e-3)
    assert not np.allclose(prof["m_loc"].values, prof["m_stat"].values, atol=1e-3)


def test_profile_argument_validation(flat):
    rho, J = flat
    with pytest.raises(ContractError):
        rate_functional(rho, 1.0, J, np.zeros(7))
    with pytest.raises(ContractError):
        rate_functional(rho, 1.0, J, GridField(np.zeros(64), TorusGrid(1, 64)))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(-0.99, 0.99))
def test_homogeneous_reduction_property(beta, c):
    grid = TorusGrid(1, 32)
    rho = uniform_density(grid)
    J = make_kernel(grid, lambda u: 1 + np.cos(2 * np.pi * u))
    assert rate_functional(rho, beta, J, c) == pytest.approx(local_potential(beta, c), abs=1e-13)
