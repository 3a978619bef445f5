"""Exact geometry of the momentum- and energy-constrained sphere.

The state space of the N-particle collision process is

    S^N(r, z) = { V = (v_1 .. v_N) in R^{dN} : sum |v_i|^2 = r^2, sum v_i = z },

a sphere of dimension d(N-1)-1 inside a hyperplane.  The collision case is
r = sqrt(dN), z = 0.  This module provides the surface measure, the
orthogonal change of variables that separates the total-momentum coordinate,
projections onto the manifold, tangential gradient/divergence, and a Monte
Carlo check of the integration-by-parts identity under the uniform law.

All surface-measure arithmetic is done in log space: the factor
(dN)^{d(N-1)/2} overflows doubles near N ~ 150.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy.special import gammaln

from .errors import DegenerateProjectionError, ParameterError

__all__ = [
    "SphereSpec",
    "ParticleConfiguration",
    "ScalarField",
    "VectorField",
    "log_sphere_surface",
    "sphere_measure",
    "log_sphere_measure",
    "helmert_forward",
    "helmert_inverse",
    "helmert_matrix",
    "project_to_sphere",
    "tangent_gradient",
    "surface_divergence",
    "tangent_basis",
    "ipp_residual",
]


@dataclass(frozen=True)
class SphereSpec:
    """Parameters (d, N, r, z) of the constrained sphere S^N(r, z)."""

    d: int
    N: int
    r: float
    z: np.ndarray

    def __post_init__(self):
        if self.d < 1:
            raise ParameterError(f"spatial dimension must be >= 1, got {self.d}")
        if self.N < 2:
            raise ParameterError(f"particle count must be >= 2, got {self.N}")
        if self.r < 0:
            raise ParameterError(f"radius parameter must be >= 0, got {self.r}")
        z = np.asarray(self.z, dtype=float).reshape(-1)
        if z.size != self.d:
            raise ParameterError(f"momentum vector has size {z.size}, expected d={self.d}")
        object.__setattr__(self, "z", z)

    @classmethod
    def boltzmann(cls, d: int, N: int) -> "SphereSpec":
        """The collision normalization: r = sqrt(dN), z = 0."""
        return cls(d=d, N=N, r=math.sqrt(d * N), z=np.zeros(d))

    @property
    def dim_ambient(self) -> int:
        return self.d * self.N

    @property
    def dim_sphere(self) -> int:
        return self.d * (self.N - 1) - 1

    @property
    def is_boltzmann(self) -> bool:
        return (
            abs(self.r * self.r - self.d * self.N) <= 1e-9 * self.d * self.N
            and float(np.dot(self.z, self.z)) <= 1e-18
        )

    @property
    def squared_radius_in_plane(self) -> float:
        """r^2 - |z|^2/N, the squared radius once the momentum shell is removed."""
        return self.r * self.r - float(np.dot(self.z, self.z)) / self.N

    def constraint_tolerance(self) -> float:
        return 1e-9 * self.d * self.N


@dataclass
class ParticleConfiguration:
    """A point V in R^{dN} together with its sphere spec.

    `values` is the flat array (v_1, ..., v_N) with each v_i in R^d.
    """

    values: np.ndarray
    spec: SphereSpec

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size != self.spec.dim_ambient:
            raise ParameterError(
                f"configuration has {v.size} entries, expected dN={self.spec.dim_ambient}"
            )
        self.values = v

    def particles(self) -> np.ndarray:
        """View shaped (N, d)."""
        return self.values.reshape(self.spec.N, self.spec.d)

    def leading(self, ell: int) -> np.ndarray:
        """The first ell particles, flattened (the prefix V_ell)."""
        return self.values[: ell * self.spec.d]

    def leading_sum(self, ell: int) -> np.ndarray:
        """Sum of the first ell particles (the prefix sum)."""
        return self.particles()[:ell].sum(axis=0)

    def momentum_residual(self) -> float:
        return float(np.linalg.norm(self.particles().sum(axis=0) - self.spec.z))

    def energy_residual(self) -> float:
        return abs(float(self.values @ self.values) - self.spec.r * self.spec.r)

    @property
    def on_sphere(self) -> bool:
        tol = self.spec.constraint_tolerance()
        return self.momentum_residual() <= tol and self.energy_residual() <= tol


@dataclass(frozen=True)
class ScalarField:
    """Scalar field on R^{dN} given by value and gradient callbacks."""

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class VectorField:
    """Vector field on R^{dN} given by value and Jacobian callbacks.

    jacobian(V)[c, a] = d Phi_c / d V_a, both indices flat over (particle, axis).
    """

    value: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]


def log_sphere_surface(n: int) -> float:
    """log |S^{n-1}| = log(2 pi^{n/2} / Gamma(n/2)) for the unit sphere in R^n."""
    if n < 1:
        raise ParameterError(f"sphere ambient dimension must be >= 1, got {n}")
    return float(math.log(2.0) + 0.5 * n * math.log(math.pi) - gammaln(0.5 * n))


def log_sphere_measure(spec: SphereSpec) -> float:
    """log |S^N(r, z)|; -inf when the sphere is empty."""
    rho2 = spec.squared_radius_in_plane
    if rho2 <= 0.0:
        return -math.inf
    n = spec.d * (spec.N - 1)
    return log_sphere_surface(n) + 0.5 * (n - 1) * math.log(rho2)


def sphere_measure(spec: SphereSpec) -> float:
    """Surface measure |S^N(r,z)| = |S^{d(N-1)-1}| (r^2 - |z|^2/N)_+^{(d(N-1)-1)/2}."""
    return math.exp(log_sphere_measure(spec))


def _split(values: np.ndarray, d: int) -> np.ndarray:
    return np.asarray(values, dtype=float).reshape(-1, d)


def helmert_forward(V: Union[ParticleConfiguration, np.ndarray], d: int = None) -> np.ndarray:
    """Orthogonal change of variables separating the total momentum.

    u_N = N^{-1/2} sum v_i and, for 1 <= k <= N-1,
    u_k = (k(k+1))^{-1/2} (v_1 + ... + v_k - k v_{k+1}),
    applied componentwise.  The map is an isometry with unit Jacobian.
    """
    if isinstance(V, ParticleConfiguration):
        v, d = V.particles(), V.spec.d
    else:
        if d is None:
            raise ParameterError("pass d when transforming a raw array")
        v = _split(V, d)
    N = v.shape[0]
    u = np.empty_like(v)
    cs = np.cumsum(v, axis=0)
    k = np.arange(1, N, dtype=float)[:, None]
    u[:-1] = (cs[:-1] - k * v[1:]) / np.sqrt(k * (k + 1.0))
    u[-1] = cs[-1] / math.sqrt(N)
    return u.reshape(-1)


def helmert_inverse(U: np.ndarray, d: int, N: int = None) -> np.ndarray:
    """Inverse of `helmert_forward` (the transpose of the orthogonal map)."""
    u = _split(U, d)
    if N is not None and u.shape[0] != N:
        raise ParameterError(f"array holds {u.shape[0]} blocks, expected N={N}")
    N = u.shape[0]
    k = np.arange(1, N, dtype=float)[:, None]
    w = u[:-1] / np.sqrt(k * (k + 1.0))
    # suffix sums S_j = sum_{k >= j} u_k / sqrt(k(k+1)), j = 1..N-1
    suffix = np.zeros_like(u)
    suffix[:-1] = np.cumsum(w[::-1], axis=0)[::-1]
    v = suffix + u[-1] / math.sqrt(N)
    j = np.arange(2, N + 1, dtype=float)[:, None]
    v[1:] -= np.sqrt((j - 1.0) / j) * u[: N - 1]
    return v.reshape(-1)


def helmert_matrix(N: int) -> np.ndarray:
    """The N x N matrix of the d=1 change of variables, assembled as D_N A_N."""
    if N < 2:
        raise ParameterError("need N >= 2")
    A = np.zeros((N, N))
    for k in range(1, N):
        A[k - 1, :k] = 1.0
        A[k - 1, k] = -k
    A[N - 1, :] = 1.0
    diag = np.array([1.0 / math.sqrt(k * (k + 1)) for k in range(1, N)] + [1.0 / math.sqrt(N)])
    return diag[:, None] * A


def _project_array(W: np.ndarray, spec: SphereSpec) -> np.ndarray:
    w = _split(W, spec.d)
    if w.shape[0] != spec.N:
        raise ParameterError(f"array holds {w.shape[0]} particles, expected N={spec.N}")
    centered = w - w.mean(axis=0)
    norm = float(np.linalg.norm(centered))
    if norm <= 1e-13 * max(1.0, float(np.linalg.norm(w))) or norm == 0.0:
        raise DegenerateProjectionError(
            "hyperplane projection vanished (all particles equal per component)"
        )
    return (centered * (spec.r / norm)).reshape(-1)


def project_to_sphere(W: np.ndarray, spec: SphereSpec) -> ParticleConfiguration:
    """Project W in R^{dN} onto S^N_B: remove the per-component mean, rescale.

    Only defined for the centered case z = 0.  Idempotent; raises
    DegenerateProjectionError when the hyperplane part of W vanishes.
    """
    if float(np.dot(spec.z, spec.z)) > 0.0:
        raise ParameterError("projection is defined for the centered sphere (z = 0)")
    return ParticleConfiguration(_project_array(W, spec), spec)


def project_rows(W: np.ndarray, spec: SphereSpec) -> np.ndarray:
    """Vectorized projection of an (n, dN) batch; degenerate rows raise."""
    W = np.asarray(W, dtype=float)
    w = W.reshape(W.shape[0], spec.N, spec.d)
    centered = w - w.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(centered.reshape(W.shape[0], -1), axis=1)
    if np.any(norms <= 1e-300):
        raise DegenerateProjectionError("degenerate row in batch projection")
    out = centered.reshape(W.shape[0], -1) * (spec.r / norms)[:, None]
    return out


def _hyperplane_projection(g: np.ndarray, spec: SphereSpec) -> np.ndarray:
    gm = g.reshape(spec.N, spec.d)
    return (gm - gm.mean(axis=0)).reshape(-1)


def tangent_gradient(F: ScalarField, V: ParticleConfiguration) -> np.ndarray:
    """Tangential gradient on the sphere at a configuration V.

    grad_S F = grad F - (1/N) sum_a (sum_i dF/dv_{i,a}) e^N_a - (V.grad F) V/|V|^2,
    orthogonal to V and to every direction e^N_a = (e_a, ..., e_a).
    """
    spec = V.spec
    g = np.asarray(F.grad(V.values), dtype=float).reshape(-1)
    gh = _hyperplane_projection(g, spec)
    vv = float(V.values @ V.values)
    return gh - (float(V.values @ g) / vv) * V.values


def surface_divergence(Phi: VectorField, V: ParticleConfiguration) -> float:
    """Divergence on the sphere of an ambient vector field.

    Div_S Phi = Div Phi - (1/N) sum_{j,i,b} dPhi_{j,b}/dv_{i,b}
                - sum_{j,b} (V . grad Phi_{j,b}) v_{j,b} / |V|^2.
    """
    spec = V.spec
    J = np.asarray(Phi.jacobian(V.values), dtype=float)
    n = spec.dim_ambient
    if J.shape != (n, n):
        raise ParameterError(f"jacobian must be ({n}, {n}), got {J.shape}")
    div = float(np.trace(J))
    J4 = J.reshape(spec.N, spec.d, spec.N, spec.d)
    hyper = float(np.einsum("jbib->", J4)) / spec.N
    vv = float(V.values @ V.values)
    radial = float((J @ V.values) @ V.values) / vv
    return div - hyper - radial


def tangent_basis(V: ParticleConfiguration) -> np.ndarray:
    """Orthonormal basis of the tangent space at V, shape (dim_sphere, dN)."""
    spec = V.spec
    n = spec.dim_ambient
    normals = np.zeros((spec.d + 1, n))
    normals[0] = V.values / np.linalg.norm(V.values)
    for a in range(spec.d):
        e = np.zeros((spec.N, spec.d))
        e[:, a] = 1.0
        normals[1 + a] = e.reshape(-1) / math.sqrt(spec.N)
    # complete to an orthonormal frame, drop the normal directions
    q, _ = np.linalg.qr(np.vstack([normals, np.eye(n)]).T)
    basis = q.T[spec.d + 1 :]
    return basis[: spec.dim_sphere]


def ipp_residual(
    F: ScalarField,
    Phi: VectorField,
    samples: Sequence[ParticleConfiguration],
) -> tuple:
    """Monte Carlo residual of the integration-by-parts identity.

    Estimates the mean of
        grad_S F . Phi + F Div_S Phi - ((d(N-1)-1)/(dN)) F (Phi . V)
    over uniform-law samples; the identity asserts the mean is zero.
    Returns (mean, standard error).
    """
    samples = list(samples)
    if not samples:
        raise ParameterError("need at least one sample")
    spec = samples[0].spec
    coef = (spec.d * (spec.N - 1) - 1) / (spec.d * spec.N)
    vals = np.empty(len(samples))
    for k, cfg in enumerate(samples):
        fv = float(F.value(cfg.values))
        phi = np.asarray(Phi.value(cfg.values), dtype=float).reshape(-1)
        vals[k] = (
            float(tangent_gradient(F, cfg) @ phi)
            + fv * surface_divergence(Phi, cfg)
            - coef * fv * float(phi @ cfg.values)
        )
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(len(samples))) if len(samples) > 1 else 0.0
    return mean, stderr
