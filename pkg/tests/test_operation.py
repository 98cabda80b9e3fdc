"""Tests for activation / allocation mathematics.

Oracles: mpmath high-precision matrix inversion for the predicted covariance,
and exhaustive enumeration for integer allocations.
"""

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coopnav.errors import DegenerateGeometryError, InvalidArgumentError
from coopnav.model import MotionModel
from coopnav.operation import (
    ActivationInputs,
    AllocationProblem,
    AllocationResult,
    LinkInfo,
    SolverOptions,
    brute_force_allocate,
    cpnp_allocate,
    htna_decide,
    info_intensity,
    predicted_covariance,
    trace_increase,
    trace_reduction,
    unit_direction,
)

MOTION = MotionModel(0.06**2, 0.06**2, 0.02**2)


def random_links(rng, n, anchor_frac=0.5):
    links = []
    for i in range(n):
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        xi = float(rng.uniform(16, 100))
        if rng.random() < anchor_frac:
            c = np.zeros((3, 3))
        else:
            a = rng.normal(size=(3, 3)) * 0.3
            c = a @ a.T
        links.append(LinkInfo(i, u, xi, c))
    return tuple(links)


def random_cov(rng, scale=1.0):
    a = rng.normal(size=(3, 3))
    return scale * (a @ a.T + 3 * np.eye(3))


class TestDirections:
    def test_unit_direction(self):
        u = unit_direction([0, 0, 0], [3, 0, 4])
        assert np.allclose(u, [0.6, 0.0, 0.8])

    def test_coincident_rejected(self):
        with pytest.raises(DegenerateGeometryError):
            unit_direction([1, 2, 3], [1, 2, 3])

    def test_non_unit_link_rejected(self):
        with pytest.raises(InvalidArgumentError):
            LinkInfo(0, np.array([1.0, 1.0, 0.0]), 50.0, np.zeros((3, 3)))


class TestInfoIntensity:
    def test_anchor_is_linear_in_count(self):
        link = LinkInfo(0, np.array([1.0, 0, 0]), 80.0, np.zeros((3, 3)))
        assert info_intensity(4, link) == pytest.approx(320.0)
        assert info_intensity(0, link) == 0.0

    def test_uncertain_neighbor_saturates(self):
        c = 0.5 * np.eye(3)
        link = LinkInfo(0, np.array([1.0, 0, 0]), 80.0, c)
        # c(m) = m xi / (1 + m xi u^T C u) -> 1 / (u^T C u) as m -> inf
        assert info_intensity(1e9, link) == pytest.approx(1 / 0.5, rel=1e-6)

    @given(st.floats(0.0, 50.0), st.floats(16.0, 100.0), st.floats(0.0, 2.0))
    @settings(max_examples=300)
    def test_monotone_nondecreasing_in_count(self, m, xi, cvar):
        link = LinkInfo(0, np.array([0.0, 1.0, 0.0]), xi, cvar * np.eye(3))
        assert info_intensity(m + 0.5, link) >= info_intensity(m, link) - 1e-12


class TestPredictedCovariance:
    def test_matches_quad_precision_inverse(self):
        # Oracle: form the information sum and invert at 50-digit precision.
        rng = np.random.default_rng(10)
        for _ in range(25):
            n = int(rng.integers(1, 5))
            links = random_links(rng, n)
            c_pj = random_cov(rng, 0.5)
            m = rng.integers(0, 8, size=n).astype(float)
            problem = AllocationProblem(c_pj, links, 20)
            got = predicted_covariance(problem, m)

            with mpmath.workdps(50):
                j = mpmath.matrix(c_pj.tolist()) ** -1
                for mk, link in zip(m, links):
                    c = info_intensity(float(mk), link)
                    u = mpmath.matrix(link.u.tolist())
                    j += c * (u * u.T)
                want = np.array((j**-1).tolist(), dtype=float)
            assert np.allclose(got, want, rtol=1e-9, atol=1e-12)

    def test_zero_allocation_returns_prior(self):
        rng = np.random.default_rng(11)
        c_pj = random_cov(rng)
        problem = AllocationProblem(c_pj, random_links(rng, 3), 10)
        out = predicted_covariance(problem, np.zeros(3))
        assert np.allclose(out, (c_pj + c_pj.T) / 2, atol=1e-10)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=200, deadline=None)
    def test_trace_reduction_monotone_in_budget_use(self, seed):
        rng = np.random.default_rng(seed)
        links = random_links(rng, 3)
        problem = AllocationProblem(random_cov(rng), links, 30)
        m = rng.integers(0, 5, size=3).astype(float)
        r0 = trace_reduction(problem, m)
        bump = m.copy()
        bump[int(rng.integers(3))] += 1
        assert trace_reduction(problem, bump) >= r0 - 1e-9
        assert r0 >= -1e-9  # measurements never hurt


class TestTraceIncrease:
    def test_zero_dt_zero_growth(self):
        rng = np.random.default_rng(12)
        covs = [np.diag([1.0, 1, 1, 0.1, 0.1, 0.1])]
        assert trace_increase(covs, MOTION, 0.0) == pytest.approx(0.0)

    def test_growth_from_velocity_uncertainty(self):
        cov = np.diag([0.0, 0, 0, 1.0, 1.0, 1.0])
        dt = 0.5
        got = trace_increase([cov], MOTION, dt)
        # position block of A C A^T grows by dt^2 per unit velocity variance,
        # plus the driving-noise contribution
        want = 3 * dt * dt + (dt * dt / 2) ** 2 * (2 * 0.06**2 + 0.02**2)
        assert got == pytest.approx(want, rel=1e-9)

    def test_sums_over_members(self):
        cov = np.diag([0.0, 0, 0, 1.0, 1.0, 1.0])
        one = trace_increase([cov], MOTION, 0.3)
        three = trace_increase([cov, cov, cov], MOTION, 0.3)
        assert three == pytest.approx(3 * one)


class TestHtna:
    def _problem(self, xi=100.0):
        links = (
            LinkInfo(0, np.array([1.0, 0, 0]), xi, np.zeros((3, 3))),
            LinkInfo(1, np.array([0.0, 1, 0]), xi, np.zeros((3, 3))),
        )
        return AllocationProblem(np.eye(3), links, 8)

    def test_activates_when_uncertain(self):
        problem = self._problem()
        proposal = AllocationResult(np.array([4, 4]), 0.0)
        covs = (np.diag([1.0, 1, 1, 0.01, 0.01, 0.01]),)
        inputs = ActivationInputs(proposal, covs, MOTION, 0.008)
        assert htna_decide(inputs, problem)

    def test_stays_silent_when_converged(self):
        links = (
            LinkInfo(0, np.array([1.0, 0, 0]), 100.0, np.zeros((3, 3))),
            LinkInfo(1, np.array([0.0, 1, 0]), 100.0, np.zeros((3, 3))),
        )
        tiny = 1e-6 * np.eye(3)
        problem = AllocationProblem(tiny, links, 8)
        proposal = AllocationResult(np.array([4, 4]), 0.0)
        # large subnetwork cost: three members with big velocity uncertainty
        big = np.diag([1.0, 1, 1, 4.0, 4.0, 4.0])
        inputs = ActivationInputs(proposal, (big, big, big), MOTION, 0.05)
        assert not htna_decide(inputs, problem)

    def test_threshold_flips_with_access_time(self):
        # sweep the assumed channel-access time until the decision flips
        problem = self._problem()
        proposal = AllocationResult(np.array([4, 4]), 0.0)
        covs = (np.diag([0.01, 0.01, 0.01, 1.0, 1.0, 1.0]),) * 3
        decisions = [
            htna_decide(ActivationInputs(proposal, covs, MOTION, dt), problem)
            for dt in (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
        ]
        assert decisions[0] and not decisions[-1]
        # monotone: once silent, stays silent as cost grows
        first_false = decisions.index(False)
        assert all(not d for d in decisions[first_false:])


class TestAllocation:
    def test_matches_brute_force_on_small_instances(self):
        rng = np.random.default_rng(13)
        for _ in range(30):
            n = int(rng.integers(2, 5))
            problem = AllocationProblem(
                random_cov(rng, 0.5), random_links(rng, n), int(rng.integers(2, 9))
            )
            bf = brute_force_allocate(problem)
            cp = cpnp_allocate(problem)
            assert cp.objective <= bf.objective * 1.05 + 1e-12
            # the relaxation lower-bounds the integer optimum
            assert cp.relaxed_objective <= bf.objective + 1e-9

    def test_budget_respected(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            n = int(rng.integers(1, 7))
            budget = int(rng.integers(0, 15))
            problem = AllocationProblem(random_cov(rng), random_links(rng, n), budget)
            res = cpnp_allocate(problem)
            assert res.total <= budget
            assert np.all(res.m >= 0)

    def test_prefers_high_quality_redundant_link(self):
        # two links along the same axis: all budget goes to the better one
        links = (
            LinkInfo(0, np.array([1.0, 0, 0]), 100.0, np.zeros((3, 3))),
            LinkInfo(1, np.array([-1.0, 0, 0]), 16.0, np.zeros((3, 3))),
        )
        problem = AllocationProblem(np.eye(3), links, 6)
        res = cpnp_allocate(problem)
        assert res.m[0] > res.m[1]

    def test_zero_budget(self):
        rng = np.random.default_rng(15)
        problem = AllocationProblem(random_cov(rng), random_links(rng, 3), 0)
        res = cpnp_allocate(problem)
        assert res.total == 0 and res.converged

    def test_no_links_rejected(self):
        with pytest.raises(InvalidArgumentError):
            cpnp_allocate(AllocationProblem(np.eye(3), (), 5))

    def test_brute_force_limits(self):
        rng = np.random.default_rng(16)
        with pytest.raises(InvalidArgumentError):
            brute_force_allocate(
                AllocationProblem(np.eye(3), random_links(rng, 6), 5)
            )
        with pytest.raises(InvalidArgumentError):
            brute_force_allocate(
                AllocationProblem(np.eye(3), random_links(rng, 2), 11)
            )

    def test_warm_start_consistent(self):
        rng = np.random.default_rng(17)
        problem = AllocationProblem(random_cov(rng), random_links(rng, 4), 10)
        cold = cpnp_allocate(problem)
        warm = cpnp_allocate(
            problem, SolverOptions(warm_start=np.asarray(cold.relaxed_m))
        )
        assert warm.objective <= cold.objective + 1e-9

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=100, deadline=None)
    def test_integer_solution_never_beats_relaxation(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 5))
        problem = AllocationProblem(
            random_cov(rng, 0.5), random_links(rng, n), int(rng.integers(1, 10))
        )
        res = cpnp_allocate(problem)
        if not res.fallback:
            assert res.relaxed_objective <= res.objective + 1e-9
