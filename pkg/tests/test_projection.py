import numpy as np
import pytest

from kinreduce import (
    AnsatzPoint,
    CollisionModel,
    ConservativeMoment,
    EntropyClosure,
    HermitePerturbation,
    flux_matrix,
    gram_matrix,
    integrate,
    maxwellian,
    metric_weight,
    reduced_source,
    residual,
    sample_valid_point,
    tangent_basis,
    tangent_projection,
)
from kinreduce.kinetic import moments_of_profile
from kinreduce.projection import flux_asymmetry

SQRT_2PI = np.sqrt(2 * np.pi)
MANIFOLDS = [ConservativeMoment(2), HermitePerturbation(3), EntropyClosure(4)]


def gaussian_tangent_profile(p, grid, rng):
    """Random smooth profile inside the metric's weighted-L2 space."""
    from kinreduce.ansatz import ConservativeMoment as _CM, HermitePerturbation as _HP

    omega = p.omega
    if isinstance(p.manifold, (_CM, _HP)):
        u, theta = omega[-2], omega[-1]
        if isinstance(p.manifold, _HP):
            u, theta = omega[1], omega[2]
    else:
        u, theta = 0.0, 1.0
    w = (grid.nodes - u) / np.sqrt(theta)
    poly = np.polynomial.polynomial.polyval(w, rng.normal(size=6))
    return poly * np.exp(-0.5 * w * w)


class TestGramMatrix:
    def test_reference_matrix_order_zero(self, grid):
        p = AnsatzPoint(ConservativeMoment(0), np.array([1.0, 0.0, 1.0]))
        a0 = gram_matrix(p, grid)
        want = SQRT_2PI * np.array([[1.0, 0.0, 0.5], [0.0, 1.0, 0.0], [0.5, 0.0, 0.75]])
        assert a0 == pytest.approx(want, abs=1e-12)

    def test_positive_definite(self, wide_grid, rng):
        for manifold in MANIFOLDS:
            p = sample_valid_point(manifold, rng, wide_grid)
            a0 = gram_matrix(p, wide_grid)
            for _ in range(100):
                x = rng.normal(size=manifold.dim)
                assert x @ a0 @ x > 0.0

    def test_alpha0_scaling(self, grid):
        cm = ConservativeMoment(0)
        a = gram_matrix(AnsatzPoint(cm, np.array([1.0, 0.0, 1.0])), grid)
        b = gram_matrix(AnsatzPoint(cm, np.array([2.0, 0.0, 1.0])), grid)
        # d/du scales with alpha0, d/dalpha0 does not
        assert b[1, 1] == pytest.approx(4 * a[1, 1], rel=1e-13)
        assert b[0, 0] == pytest.approx(a[0, 0], rel=1e-13)


class TestFluxMatrix:
    def test_reference_entries_order_zero(self, grid):
        p = AnsatzPoint(ConservativeMoment(0), np.array([1.0, 0.0, 1.0]))
        a1 = flux_matrix(p, grid)
        assert a1[0, 1] == pytest.approx(SQRT_2PI, abs=1e-12)  # int xi^2 e^{-xi^2/2}
        assert a1[0, 0] == pytest.approx(0.0, abs=1e-13)  # odd integrand

    def test_symmetry(self, wide_grid, rng):
        for manifold in MANIFOLDS:
            p = sample_valid_point(manifold, rng, wide_grid)
            a1 = flux_matrix(p, wide_grid)
            assert np.abs(a1 - a1.T).max() == 0.0
            assert flux_asymmetry(p, wide_grid) <= 1e-13


class TestReducedSource:
    def test_equilibrium_vanishes(self, grid, bgk):
        p = AnsatzPoint(
            ConservativeMoment(2), np.array([1 / SQRT_2PI, 0.0, 0.0, 0.0, 1.0])
        )
        q = reduced_source(p, bgk, grid)
        assert np.abs(q).max() < 1e-11

    def test_weight_cancellation_identity(self, wide_grid, rng):
        # w * b_k = xi^k exactly for the alpha directions
        cm = ConservativeMoment(3)
        p = sample_valid_point(cm, rng, wide_grid)
        basis = tangent_basis(p, wide_grid).columns
        w = metric_weight(p, wide_grid).weight
        for k in range(cm.degree + 1):
            target = wide_grid.nodes**k
            scale = np.abs(target).max() + 1.0
            assert np.abs(w * basis[k] - target).max() <= 1e-14 * scale

    def test_alpha_components_match_direct_quadrature(self, wide_grid, rng, bgk):
        cm = ConservativeMoment(2)
        p = sample_valid_point(cm, rng, wide_grid)
        q = reduced_source(p, bgk, wide_grid)
        f = cm.values(p.omega, wide_grid.nodes)
        feq = maxwellian(moments_of_profile(f, wide_grid), wide_grid)
        for k in range(cm.degree + 1):
            direct = integrate(wide_grid.nodes**k * (feq - f) / bgk.tau, wide_grid)
            assert q[k] == pytest.approx(direct, rel=1e-10, abs=1e-12)

    def test_tau_scaling(self, wide_grid, rng):
        p = sample_valid_point(ConservativeMoment(2), rng, wide_grid)
        q1 = reduced_source(p, CollisionModel(kind="bgk", tau=0.3), wide_grid)
        q2 = reduced_source(p, CollisionModel(kind="bgk", tau=0.6), wide_grid)
        assert q1 == pytest.approx(2 * q2, rel=1e-13)


class TestTangentProjection:
    def test_projection_fixes_frame_columns(self, wide_grid, rng):
        cm = ConservativeMoment(2)
        p = sample_valid_point(cm, rng, wide_grid)
        h = cm.monomial_basis(p.omega, wide_grid.nodes)[2]  # xi^2 * Gaussian
        coeff, ph = tangent_projection(p, h, wide_grid)
        assert np.abs(ph - h).max() <= 1e-12 * np.abs(h).max()
        unit = np.zeros(cm.dim)
        unit[2] = 1.0
        assert coeff == pytest.approx(unit, abs=1e-12)

    def test_projection_fixes_chart_columns(self, wide_grid, rng):
        hp = HermitePerturbation(3)
        p = sample_valid_point(hp, rng, wide_grid)
        h = tangent_basis(p, wide_grid).columns[3]
        coeff, ph = tangent_projection(p, h, wide_grid)
        assert np.abs(ph - h).max() <= 1e-10 * np.abs(h).max()

    @pytest.mark.parametrize("manifold", MANIFOLDS, ids=lambda m: m.name)
    def test_idempotence_and_orthogonality(self, manifold, wide_grid, rng):
        for _ in range(20):
            p = sample_valid_point(manifold, rng, wide_grid)
            h = gaussian_tangent_profile(p, wide_grid, rng)
            _, ph = tangent_projection(p, h, wide_grid)
            _, pph = tangent_projection(p, ph, wide_grid)
            scale = np.abs(h).max()
            assert np.abs(pph - ph).max() <= 1e-10 * scale
            basis = tangent_basis(p, wide_grid).columns
            w = metric_weight(p, wide_grid).weight
            hnorm = np.sqrt(integrate(h * h * w, wide_grid))
            for k in range(manifold.dim):
                bnorm = np.sqrt(integrate(basis[k] ** 2 * w, wide_grid))
                err = integrate((h - ph) * basis[k] * w, wide_grid)
                assert abs(err) <= 1e-10 * hnorm * bnorm

    def test_flux_moments_are_representable(self, wide_grid, rng):
        # xi^k * Gaussian lies in the span for k <= N+2, so the moment
        # functionals have metric representatives and fluxes exist
        cm = ConservativeMoment(2)
        p = sample_valid_point(cm, rng, wide_grid)
        frame = cm.monomial_basis(p.omega, wide_grid.nodes)
        for k in range(cm.n_moments):
            _, ph = tangent_projection(p, frame[k], wide_grid)
            assert np.abs(ph - frame[k]).max() <= 1e-11 * np.abs(frame[k]).max()


class TestResidual:
    def test_homogeneous_equilibrium_vanishes(self, grid, bgk):
        p = AnsatzPoint(
            ConservativeMoment(2), np.array([1 / SQRT_2PI, 0.0, 0.0, 0.0, 1.0])
        )
        r = residual(p, np.zeros(5), bgk, grid)
        assert np.abs(r).max() <= 1e-12

    def test_orthogonal_to_tangent_space(self, wide_grid, rng, bgk):
        cm = ConservativeMoment(2)
        p = sample_valid_point(cm, rng, wide_grid)
        grad = rng.normal(size=cm.dim) * 0.1
        r = residual(p, grad, bgk, wide_grid)
        basis = tangent_basis(p, wide_grid).columns
        w = metric_weight(p, wide_grid).weight
        rnorm = np.sqrt(integrate(r * r * w, wide_grid)) + 1e-300
        for k in range(cm.dim):
            bnorm = np.sqrt(integrate(basis[k] ** 2 * w, wide_grid))
            assert abs(integrate(r * basis[k] * w, wide_grid)) <= 1e-10 * rnorm * bnorm

    def test_pure_alpha0_gradient_is_in_span(self, grid):
        # xi * e^{-xi^2/2} is the u-direction at this point, so the
        # transport of a pure alpha_0 gradient projects to zero; this is
        # why the tangent space is enlarged to degree N+2
        cm = ConservativeMoment(0)
        p = AnsatzPoint(cm, np.array([1.0, 0.0, 1.0]))
        grad = np.array([0.003, 0.0, 0.0])  # d alpha_0 / dx only
        r = residual(p, grad, None, grid)
        assert np.abs(r).max() <= 1e-12
