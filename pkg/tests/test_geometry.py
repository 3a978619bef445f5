import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import boltzsphere as bs
from boltzsphere.geometry import (
    ScalarField,
    VectorField,
    ipp_residual,
    log_sphere_measure,
    surface_divergence,
    tangent_basis,
    tangent_gradient,
)
from boltzsphere.uniform import sample_uniform, sample_uniform_batch


def boltzmann(d, N):
    return bs.SphereSpec.boltzmann(d, N)


class TestSphereMeasure:
    def test_zero_dim_sphere(self):
        spec = bs.SphereSpec(d=1, N=2, r=math.sqrt(2), z=np.zeros(1))
        assert bs.sphere_measure(spec) == pytest.approx(2.0, abs=1e-14)

    def test_empty_sphere_clamps_to_zero(self):
        spec = bs.SphereSpec(d=1, N=2, r=1.0, z=np.array([2.0]))
        assert bs.sphere_measure(spec) == 0.0

    def test_circle_oracle(self):
        # d=2, N=2: a circle of radius sqrt(r^2 - |z|^2/N) = 2, circumference 4 pi
        spec = bs.SphereSpec(d=2, N=2, r=2.0, z=np.zeros(2))
        assert bs.sphere_measure(spec) == pytest.approx(4.0 * math.pi, rel=1e-13)

    def test_invalid_specs(self):
        with pytest.raises(bs.ParameterError):
            bs.SphereSpec(d=1, N=1, r=1.0, z=np.zeros(1))
        with pytest.raises(bs.ParameterError):
            bs.SphereSpec(d=0, N=3, r=1.0, z=np.zeros(0))
        with pytest.raises(bs.ParameterError):
            bs.SphereSpec(d=1, N=3, r=-1.0, z=np.zeros(1))

    def test_log_measure_large_n_finite(self):
        # (dN)^{d(N-1)/2} overflows doubles near N ~ 150; log-space must not
        spec = boltzmann(3, 500)
        assert math.isfinite(log_sphere_measure(spec))


class TestHelmert:
    def test_two_particles(self):
        u = bs.helmert_forward(np.array([1.0, -1.0]), d=1)
        assert np.allclose(u, [math.sqrt(2), 0.0], atol=1e-15)
        assert np.allclose(bs.helmert_inverse(u, d=1), [1.0, -1.0], atol=1e-15)

    def test_zero_maps_to_zero(self):
        assert np.all(bs.helmert_forward(np.zeros(12), d=3) == 0.0)
        assert np.all(bs.helmert_inverse(np.zeros(12), d=3) == 0.0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 24), st.integers(1, 3), st.integers(0, 2**31 - 1))
    def test_isometry_and_roundtrip(self, N, d, seed):
        V = np.random.default_rng(seed).normal(size=d * N)
        U = bs.helmert_forward(V, d=d)
        assert abs(U @ U - V @ V) <= 1e-12 * max(1.0, V @ V)
        assert np.max(np.abs(bs.helmert_inverse(U, d=d) - V)) <= 1e-12

    def test_sphere_point_transforms_to_constraint_system(self):
        # on the collision sphere the last block vanishes and the remaining
        # blocks carry the full squared radius
        spec = boltzmann(3, 9)
        cfg = sample_uniform(spec, 7)
        U = bs.helmert_forward(cfg)
        tail = U[-spec.d :]
        assert np.max(np.abs(tail)) <= 1e-12
        head = U[: -spec.d]
        assert head @ head == pytest.approx(spec.d * spec.N, rel=1e-12)

    def test_determinant_one_up_to_64(self):
        for N in range(2, 65):
            assert abs(np.linalg.det(bs.helmert_matrix(N)) - 1.0) <= 1e-10

    def test_matrix_matches_componentwise_map(self):
        N = 6
        rng = np.random.default_rng(3)
        v = rng.normal(size=N)
        assert np.allclose(bs.helmert_matrix(N) @ v, bs.helmert_forward(v, d=1), atol=1e-14)


class TestProjection:
    def test_hand_example(self):
        cfg = bs.project_to_sphere(np.array([2.0, 0.0]), boltzmann(1, 2))
        assert np.allclose(cfg.values, [1.0, -1.0], atol=1e-15)

    def test_idempotent(self):
        spec = boltzmann(2, 5)
        rng = np.random.default_rng(0)
        cfg = bs.project_to_sphere(rng.normal(size=10), spec)
        again = bs.project_to_sphere(cfg.values, spec)
        assert np.max(np.abs(cfg.values - again.values)) <= 1e-13
        assert cfg.on_sphere

    def test_constraints_within_tolerance(self):
        spec = boltzmann(3, 40)
        rng = np.random.default_rng(1)
        for _ in range(20):
            cfg = bs.project_to_sphere(rng.normal(size=120), spec)
            tol = spec.constraint_tolerance()
            assert cfg.momentum_residual() <= tol
            assert cfg.energy_residual() <= tol

    def test_degenerate_input_raises(self):
        spec = boltzmann(2, 4)
        constant = np.tile([1.3, -0.2], 4)
        with pytest.raises(bs.DegenerateProjectionError):
            bs.project_to_sphere(constant, spec)


def _geodesic(cfg, T, h):
    R = math.sqrt(cfg.spec.d * cfg.spec.N)
    return (
        math.cos(h / R) * cfg.values + R * math.sin(h / R) * T,
        math.cos(h / R) * cfg.values - R * math.sin(h / R) * T,
    )


class TestTangentCalculus:
    def setup_method(self):
        self.spec = boltzmann(2, 3)
        self.cfg = sample_uniform(self.spec, 5)

    def test_constant_field_has_zero_gradient(self):
        F = ScalarField(value=lambda V: 3.0, grad=lambda V: np.zeros(V.size))
        assert np.all(tangent_gradient(F, self.cfg) == 0.0)

    def test_squared_norm_is_radial(self):
        F = ScalarField(value=lambda V: float(V @ V), grad=lambda V: 2.0 * V)
        g = tangent_gradient(F, self.cfg)
        assert np.max(np.abs(g)) <= 1e-12

    def test_coordinate_field_against_finite_differences(self):
        F = ScalarField(value=lambda V: V[0], grad=lambda V: np.eye(V.size)[0])
        g = tangent_gradient(F, self.cfg)
        h = 1e-4 * math.sqrt(self.spec.d * self.spec.N)
        for T in tangent_basis(self.cfg):
            plus, minus = _geodesic(self.cfg, T, h)
            fd = (F.value(plus) - F.value(minus)) / (2.0 * h)
            assert fd == pytest.approx(float(g @ T), abs=1e-5 * max(1.0, abs(fd)))

    def test_gradient_orthogonality(self):
        rng = np.random.default_rng(2)
        A = rng.normal(size=(6, 6))
        F = ScalarField(value=lambda V: float(V @ A @ V), grad=lambda V: (A + A.T) @ V)
        g = tangent_gradient(F, self.cfg)
        assert abs(g @ self.cfg.values) <= 1e-10
        sums = g.reshape(self.spec.N, self.spec.d).sum(axis=0)
        assert np.max(np.abs(sums)) <= 1e-10

    def test_divergence_of_constant_field(self):
        Phi = VectorField(value=lambda V: np.ones(V.size), jacobian=lambda V: np.zeros((V.size, V.size)))
        assert surface_divergence(Phi, self.cfg) == pytest.approx(0.0, abs=1e-12)

    def test_divergence_of_identity_field(self):
        # the position field is normal to the sphere; its surface divergence
        # equals the sphere dimension dN - d - 1
        Phi = VectorField(value=lambda V: V.copy(), jacobian=lambda V: np.eye(V.size))
        want = self.spec.d * self.spec.N - self.spec.d - 1
        assert surface_divergence(Phi, self.cfg) == pytest.approx(want, rel=1e-12)

    def test_divergence_against_finite_differences(self):
        rng = np.random.default_rng(8)
        A = rng.normal(size=(6, 6)) / 3.0

        def phi(V):
            return np.tanh(A @ V)

        def jac(V):
            return (1.0 - np.tanh(A @ V)[:, None] ** 2) * A

        Phi = VectorField(value=phi, jacobian=jac)
        h = 1e-5 * math.sqrt(self.spec.d * self.spec.N)
        fd = 0.0
        for T in tangent_basis(self.cfg):
            plus, minus = _geodesic(self.cfg, T, h)
            fd += float(T @ (phi(plus) - phi(minus))) / (2.0 * h)
        assert surface_divergence(Phi, self.cfg) == pytest.approx(fd, abs=1e-6)


class TestIppResidual:
    def test_trivial_pair_is_exact_zero(self):
        spec = boltzmann(2, 4)
        samples = [sample_uniform(spec, s) for s in range(4)]
        F = ScalarField(value=lambda V: 1.0, grad=lambda V: np.zeros(V.size))
        Phi = VectorField(value=lambda V: np.zeros(V.size), jacobian=lambda V: np.zeros((V.size, V.size)))
        mean, se = ipp_residual(F, Phi, samples)
        assert mean == 0.0 and se == 0.0

    def test_coordinate_pair_within_three_stderr(self):
        spec = boltzmann(2, 4)
        batch = sample_uniform_batch(spec, 8000, 21)
        samples = [bs.ParticleConfiguration(row, spec) for row in batch]
        e21 = np.zeros(8)
        e21[2] = 1.0
        F = ScalarField(value=lambda V: V[0], grad=lambda V: np.eye(8)[0])
        Phi = VectorField(value=lambda V: e21, jacobian=lambda V: np.zeros((8, 8)))
        mean, se = ipp_residual(F, Phi, samples)
        assert abs(mean) <= 3.0 * se

    def test_empty_sample_set_raises(self):
        F = ScalarField(value=lambda V: 1.0, grad=lambda V: np.zeros(4))
        Phi = VectorField(value=lambda V: np.zeros(4), jacobian=lambda V: np.zeros((4, 4)))
        with pytest.raises(bs.ParameterError):
            ipp_residual(F, Phi, [])
