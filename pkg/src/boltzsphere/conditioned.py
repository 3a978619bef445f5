"""The tensor power of a base density conditioned to the collision sphere.

The law is f^{xN} restricted to the centered sphere and renormalized.  Its
ell-particle marginal has the exact ratio form

    F_ell(V_ell) = (f/gamma)^{x ell}(V_ell)
                   * Z'_{N-ell}(f; sqrt(dN - |V_ell|^2), -Vbar_ell) / Z'_N(f)
                   * g_ell(V_ell),

with g_ell the uniform-law marginal, so d = 1 marginals are computable to
grid accuracy through the convolution pipeline, with no Monte Carlo noise.
Sampling uses a Metropolis chain whose proposal is the physical collision
move (pairs for d >= 2, conserved-circle rotations of particle triples for
d = 1): the uniform law is invariant under the symmetric proposal and the
Gaussian tensor power is constant on the sphere, so the chain targets the
conditioned law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
from scipy import integrate

from . import rng as rngmod
from ._kernels import (
    default_kernels,
    density_code,
    draw_pair_indices,
    draw_triple_indices,
    draw_unit_vectors,
)
from .densities import BaseDensity
from .errors import ParameterError, SupportError
from .geometry import ParticleConfiguration, SphereSpec, log_sphere_surface
from .lifted import DEFAULT_SHAPE, lifted_grid
from .reporting import RateReport, fit_loglog
from .uniform import UniformMarginal, marginal_log_density, sample_uniform

__all__ = [
    "ConditionedLaw",
    "sample_conditioned",
    "sample_conditioned_batch",
    "conditioned_marginal_density",
    "w1_rate_experiment",
    "entropy_per_particle",
]

_CHAIN_CHUNK = 1 << 16


@dataclass
class ConditionedLaw:
    """f^{xN} conditioned to the centered sphere, f a registry density with E = d."""

    f: BaseDensity
    spec: SphereSpec
    grid_shape: tuple = DEFAULT_SHAPE

    def __post_init__(self):
        if not self.spec.is_boltzmann:
            raise ParameterError("the conditioned law lives on the collision sphere")
        if self.f.d != self.spec.d:
            raise ParameterError("density dimension does not match the sphere")
        if abs(self.f.E - self.spec.d) > 1e-9:
            raise ParameterError("base density must have second moment E = d")
        d, N = self.spec.d, self.spec.N
        if d == 1 and N < 4:
            raise ParameterError("d = 1 chains need N >= 4 (triple moves)")
        if d >= 2 and N < 3:
            raise ParameterError("d >= 2 chains need N >= 3")

    @property
    def is_gaussian(self) -> bool:
        return self.f.name == "gaussian"

    def log_zprime(self, n: int, r: float, z_mom: float = 0.0) -> float:
        """log Z'_n(f; r, z) for the d = 1 pipeline (exactly 0 for Gaussian f)."""
        if self.is_gaussian:
            # the integrand (f/gamma)^{xn} is identically 1 on every sphere
            if r * r - z_mom * z_mom / n <= 0.0:
                raise SupportError("empty sphere")
            return 0.0
        if self.spec.d != 1:
            raise ParameterError("exact partition values need the d = 1 pipeline")
        return lifted_grid(self.f, n, shape=self.grid_shape).log_z_prime(r, z_mom)


def _lattice_like(spec: SphereSpec, gen: np.random.Generator) -> np.ndarray:
    # regular ladder per coordinate, shuffled across particles; exact momentum
    # zero and energy dN, strictly inside the uniform box support
    N, d = spec.N, spec.d
    base = np.arange(N, dtype=float) - 0.5 * (N - 1)
    base *= math.sqrt(N / float(base @ base))
    v = np.empty((N, d))
    for a in range(d):
        v[:, a] = gen.permutation(base)
    return v


class _Chain:
    """Persistent Metropolis chain state; emits states in batches."""

    def __init__(self, law: ConditionedLaw, rng_seed, burn_in, thin, kernels=None):
        spec = law.spec
        self.N, self.d = spec.N, spec.d
        self.burn_in = 50 * spec.N if burn_in is None else int(burn_in)
        self.thin = spec.N if thin is None else int(thin)
        if self.thin < 1 or self.burn_in < 0:
            raise ParameterError("need thin >= 1 and burn_in >= 0")
        self.kernels = kernels if kernels is not None else default_kernels()
        self.code, self.params = density_code(law.f)
        self.gen = rngmod.stream(rng_seed, "conditioned") if isinstance(rng_seed, int) else rng_seed
        self.law = law
        start = sample_uniform(spec, self.gen)
        self.v = start.particles().copy()
        if law.f.name == "uniform":
            # deterministic start inside the box support; the Metropolis
            # penalty rule would otherwise have to walk into it first
            self.v = _lattice_like(spec, self.gen)
        self.step = 0
        self.accepted = 0

    def states(self, n_states: int) -> np.ndarray:
        out = np.empty((n_states, self.N, self.d))
        done = 0
        while done < n_states:
            n_prop = _CHAIN_CHUNK
            log_us = np.log(self.gen.random(n_prop))
            if self.d == 1:
                ii, jj, kk = draw_triple_indices(self.gen, n_prop, self.N)
                angles = self.gen.random(n_prop) * (2.0 * math.pi)
                done, acc = self.kernels.triple_chain(
                    self.v, self.code, self.params, ii, jj, kk, angles, log_us,
                    self.step, self.burn_in, self.thin, out, done,
                )
            else:
                ii, jj = draw_pair_indices(self.gen, n_prop, self.N)
                sigmas = draw_unit_vectors(self.gen, n_prop, self.d)
                done, acc = self.kernels.pair_chain(
                    self.v, self.code, self.params, ii, jj, sigmas, log_us,
                    self.step, self.burn_in, self.thin, out, done,
                )
            self.step += n_prop
            self.accepted += acc
        return out


def sample_conditioned_batch(
    law: ConditionedLaw,
    rng_seed,
    n_states: int,
    burn_in: Optional[int] = None,
    thin: Optional[int] = None,
    kernels=None,
) -> np.ndarray:
    """n_states post-burn-in chain states as an (n_states, N, d) array.

    Defaults: burn_in = 50 N proposals, thin = N proposals between states.
    """
    return _Chain(law, rng_seed, burn_in, thin, kernels=kernels).states(n_states)


def sample_conditioned(
    law: ConditionedLaw,
    rng_seed,
    burn_in: Optional[int] = None,
    thin: Optional[int] = None,
    chunk: int = 256,
) -> Iterator[ParticleConfiguration]:
    """Endless stream of chain states wrapped as configurations."""
    chain = _Chain(law, rng_seed, burn_in, thin)
    while True:
        for s in chain.states(chunk):
            yield ParticleConfiguration(s.reshape(-1), law.spec)


def conditioned_marginal_density(
    law: ConditionedLaw, ell: int, V_ell, mode: str = "exact"
) -> np.ndarray:
    """Density of the ell-particle marginal at V_ell (vectorized over rows).

    mode="exact" uses the partition-value ratio through the d = 1 grid
    pipeline; mode="asymptotic" evaluates the leading-order correction
    factors against f^{x ell} (any registry d), dropping the remainder.
    """
    spec = law.spec
    d, N = spec.d, spec.N
    if ell >= N - 1:
        raise ParameterError("need ell <= N-2 for an absolutely continuous marginal")
    pts = np.asarray(V_ell, dtype=float)
    flat = pts.reshape(-1, ell * d) if pts.ndim > 1 else pts.reshape(1, -1)
    if flat.shape[1] != ell * d:
        raise ParameterError(f"points must have {ell * d} coordinates")
    single = pts.ndim == 1

    parts = flat.reshape(-1, ell, d)
    sq = np.sum(flat * flat, axis=1)
    bar = parts.sum(axis=1)
    bar2 = np.sum(bar * bar, axis=1)
    gap = d * N - sq - bar2 / (N - ell)
    inside = gap > 0.0

    logf = np.zeros(flat.shape[0])
    for q in range(ell):
        logf += law.f.log_density(parts[:, q, :])
    log_gauss = -0.5 * sq - 0.5 * ell * d * math.log(2.0 * math.pi)

    out = np.zeros(flat.shape[0])
    if mode == "exact":
        marg = UniformMarginal(spec, ell)
        log_unif = marginal_log_density(marg, flat)
        log_zn = law.log_zprime(N, spec.r, 0.0)
        vals = np.full(flat.shape[0], -np.inf)
        if law.is_gaussian:
            vals[inside] = (logf - log_gauss + log_unif)[inside]
        else:
            if d != 1:
                raise ParameterError("mode='exact' needs the d = 1 pipeline")
            grid = lifted_grid(law.f, N - ell, shape=law.grid_shape)
            for idx in np.nonzero(inside)[0]:
                r_sub = math.sqrt(d * N - sq[idx])
                lz = grid.log_z_prime(r_sub, -bar[idx, 0])
                vals[idx] = logf[idx] - log_gauss[idx] + lz - log_zn + log_unif[idx]
        out[inside] = np.exp(vals[inside])
    elif mode == "asymptotic":
        # theta_1: Gaussian attenuation in the prefix sum and energy offset;
        # theta_2: ratio of sphere areas against its Stirling normalization
        eps = law.f.eps
        s2 = law.f.sigma2
        log_t1 = -bar2 / (2.0 * eps * (N - ell)) - (d * ell - sq) ** 2 / (2.0 * s2 * (N - ell))
        log_t2 = (
            log_sphere_surface(d * (N - ell - 1))
            - log_sphere_surface(d * (N - 1))
            + 0.5 * (d * (N - ell - 1) - 2) * math.log(d * (N - ell))
            - 0.5 * (d * (N - 1) - 2) * math.log(d * N)
            + 0.5 * d * ell * math.log(2.0 * math.pi * math.e)
        )
        out[inside] = np.exp((logf + log_t1 + log_t2)[inside])
    else:
        raise ParameterError(f"unknown mode {mode!r}")
    return float(out[0]) if single else out


def _marginal_curve(law: ConditionedLaw, n_points: int = 4001) -> tuple:
    """(grid, normalized exact one-particle marginal) for d = 1."""
    spec = law.spec
    vmax = min(law.f.tail_radius(), math.sqrt(spec.d * spec.N * (spec.N - 1) / spec.N))
    grid = np.linspace(-vmax, vmax, n_points)
    dens = conditioned_marginal_density(law, 1, grid[:, None], mode="exact")
    mass = float(np.trapezoid(dens, grid))
    if not 0.9 < mass < 1.1:
        raise SupportError(f"marginal mass {mass:.4f} far from 1; grid misconfigured")
    return grid, dens / mass, mass


def w1_rate_experiment(
    f: BaseDensity, Ns, ell: int = 1, n_points: int = 4001, grid_shape: tuple = DEFAULT_SHAPE
) -> RateReport:
    """W1 distance between the one-particle marginal and f across N, with a
    log-log slope fit (one-dimensional Kantorovich identity, no Monte Carlo).
    """
    if ell != 1:
        raise ParameterError("the rate experiment is wired for ell = 1")
    if f.d != 1:
        raise ParameterError("exact densities need d = 1")
    Ns = list(Ns)
    if len(Ns) < 2:
        raise ParameterError("need at least two values of N to fit a slope")
    rows = []
    for N in Ns:
        law = ConditionedLaw(f=f, spec=SphereSpec.boltzmann(1, N), grid_shape=grid_shape)
        grid, dens, _ = _marginal_curve(law, n_points)
        cdf_marginal = integrate.cumulative_trapezoid(dens, grid, initial=0.0)
        cdf_f = f.cdf(grid)
        val = float(np.trapezoid(np.abs(cdf_marginal - cdf_f), grid))
        rows.append((N, val, 0.0))
    return fit_loglog(rows)


def entropy_per_particle(law: ConditionedLaw, n_points: int = 4001) -> float:
    """Relative entropy per particle of the conditioned law against the
    uniform law: quadrature of log(f/gamma) under the exact one-particle
    marginal minus log Z'_N / N.

    Returns +inf when f vanishes where the marginal is positive.
    """
    spec = law.spec
    if spec.d != 1:
        raise ParameterError("the exact pipeline is d = 1")
    if law.is_gaussian:
        return 0.0
    grid, dens, _ = _marginal_curve(law, n_points)
    logf = law.f.log_density(grid[:, None])
    bad = (dens > 1e-12) & ~np.isfinite(logf)
    if np.any(bad):
        return math.inf
    log_gauss = -0.5 * grid * grid - 0.5 * math.log(2.0 * math.pi)
    integrand = np.where(dens > 0.0, dens * (logf - log_gauss), 0.0)
    term1 = float(np.trapezoid(integrand, grid))
    term2 = law.log_zprime(spec.N, spec.r, 0.0) / spec.N
    return term1 - term2
