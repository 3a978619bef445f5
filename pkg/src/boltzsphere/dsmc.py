"""Event-driven simulation of the N-particle binary-collision jump process.

Collision rates are velocity independent (Maxwellian molecules), so the
process is simulated exactly: exponential waiting times with total rate
(N-1) beta / 2 (the master-equation normalization with the 1/N rescaling),
a uniform colliding pair, a scattering direction sigma drawn from the
angular law, and the post-collisional update

    v_i* = (v_i + v_j)/2 + |v_i - v_j|/2 sigma,
    v_j* = (v_i + v_j)/2 - |v_i - v_j|/2 sigma,

which conserves the pair's momentum and energy identically.  Reported times
are in mean free times (each particle collides once per unit time on
average); one mean free time is N / ((N-1) beta) master-equation time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np
from scipy import stats

from . import rng as rngmod
from ._kernels import default_kernels, draw_pair_indices, draw_unit_vectors
from .errors import CapacityError, ParameterError
from .geometry import ParticleConfiguration, SphereSpec
from .metrics import EmpiricalMeasure, relative_entropy_vs_gaussian
from .uniform import coordinate_marginal

__all__ = [
    "CollisionKernel",
    "SimulationState",
    "step",
    "run",
    "RunResult",
    "equilibrium_crosscheck",
    "BUILTIN_OBSERVABLES",
]

_EVENT_CHUNK = 1 << 15


def _sphere_area(d: int) -> float:
    from .geometry import log_sphere_surface

    return math.exp(log_sphere_surface(d))


@dataclass(frozen=True)
class CollisionKernel:
    """Angular collision law with velocity-independent rate.

    `beta` is the total angular mass (the per-pair collision rate before the
    1/N rescaling).  A `costheta_sampler` of None means sigma is uniform on
    the sphere; otherwise sigma is rebuilt from a sampled deflection cosine
    around the relative-velocity direction.
    """

    d: int
    beta: float
    costheta_sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None
    label: str = "uniform"

    def __post_init__(self):
        if self.d < 2:
            raise ParameterError("pairwise conservation in d = 1 only permits swaps")
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise ParameterError("beta must be positive and finite")

    @classmethod
    def uniform(cls, d: int) -> "CollisionKernel":
        return cls(d=d, beta=_sphere_area(d), label="uniform")

    @classmethod
    def truncated_singular(
        cls, d: int, nu: float, cos_max: float, beta: float, table_size: int = 4096
    ) -> "CollisionKernel":
        """b(c) proportional to (1-c)^{-nu} for c <= cos_max, zero beyond.

        The caller supplies the normalization beta; the deflection cosine is
        drawn by numeric inverse CDF of b(c) (1-c^2)^{(d-3)/2}.
        """
        if not cos_max < 1.0:
            raise ParameterError("the singular endpoint c = 1 must be truncated")
        c = np.linspace(-1.0 + 1e-9, cos_max, table_size)
        w = (1.0 - c) ** (-nu)
        if d != 3:
            w = w * np.maximum(1.0 - c * c, 0.0) ** (0.5 * (d - 3))
        cdf = np.concatenate(([0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(c))))
        cdf /= cdf[-1]

        def sampler(gen: np.random.Generator, n: int) -> np.ndarray:
            return np.interp(gen.random(n), cdf, c)

        return cls(d=d, beta=beta, costheta_sampler=sampler, label=f"truncated(nu={nu})")

    def rate(self, N: int) -> float:
        """Total event rate (N-1) beta / 2 in master-equation time."""
        return 0.5 * (N - 1) * self.beta

    def mean_free_time(self, N: int) -> float:
        """Master-equation time for one collision per particle on average."""
        return N / ((N - 1) * self.beta)

    def sample_sigma(self, gen: np.random.Generator, k_hat: np.ndarray) -> np.ndarray:
        """One scattering direction, possibly tied to the relative direction."""
        if self.costheta_sampler is None:
            g = gen.normal(size=self.d)
            return g / np.linalg.norm(g)
        c = float(self.costheta_sampler(gen, 1)[0])
        g = gen.normal(size=self.d)
        g -= (g @ k_hat) * k_hat
        norm = np.linalg.norm(g)
        if norm < 1e-300:
            g = np.roll(k_hat, 1).copy()
            g -= (g @ k_hat) * k_hat
            norm = np.linalg.norm(g)
        w = g / norm
        return c * k_hat + math.sqrt(max(1.0 - c * c, 0.0)) * w


@dataclass
class SimulationState:
    """Mutable simulation state: configuration, clock, event count, stream."""

    configuration: ParticleConfiguration
    rng: np.random.Generator
    time: float = 0.0
    collision_count: int = 0

    @classmethod
    def from_uniform(cls, spec: SphereSpec, seed: int) -> "SimulationState":
        from .uniform import sample_uniform

        gen = rngmod.stream(seed, "dsmc-state")
        return cls(configuration=sample_uniform(spec, gen), rng=gen)

    def to_bytes(self) -> bytes:
        """Restartable binary snapshot: header (d, N, t, count) + generator
        state + velocities."""
        import json

        spec = self.configuration.spec
        head = np.array([spec.d, spec.N, self.collision_count], dtype=np.int64).tobytes()
        head += np.float64(self.time).tobytes()
        state_blob = json.dumps(
            self.rng.bit_generator.state,
            default=lambda o: o.tolist() if hasattr(o, "tolist") else int(o),
        ).encode()
        head += np.int64(len(state_blob)).tobytes() + state_blob
        return head + np.ascontiguousarray(self.configuration.values).tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "SimulationState":
        import json

        d, N, count = (int(x) for x in np.frombuffer(blob[:24], dtype=np.int64))
        t = float(np.frombuffer(blob[24:32], dtype=np.float64)[0])
        slen = int(np.frombuffer(blob[32:40], dtype=np.int64)[0])
        state = json.loads(blob[40 : 40 + slen].decode())
        values = np.frombuffer(blob[40 + slen :], dtype=np.float64).copy()
        gen = np.random.Generator(getattr(np.random, state["bit_generator"])())
        gen.bit_generator.state = state
        return cls(
            configuration=ParticleConfiguration(values, SphereSpec.boltzmann(d, N)),
            rng=gen,
            time=t,
            collision_count=count,
        )


def step(state: SimulationState, kernel: CollisionKernel) -> SimulationState:
    """Advance by one collision event in place (also returns the state)."""
    spec = state.configuration.spec
    if kernel.d != spec.d:
        raise ParameterError("kernel dimension does not match the configuration")
    N = spec.N
    gen = state.rng
    state.time += -math.log(gen.random()) / kernel.rate(N)
    i = int(gen.integers(0, N))
    j = int(gen.integers(0, N - 1))
    if j >= i:
        j += 1
    v = state.configuration.particles()
    rel = v[i] - v[j]
    rnorm = float(np.linalg.norm(rel))
    k_hat = rel / rnorm if rnorm > 0.0 else np.eye(spec.d)[0]
    sigma = kernel.sample_sigma(gen, k_hat)
    center = 0.5 * (v[i] + v[j])
    half = 0.5 * rnorm
    v[i] = center + half * sigma
    v[j] = center - half * sigma
    state.collision_count += 1
    return state


def _advance_uniform_kernel(v, t, t_target, rate, gen, kernels):
    """Chunked event loop for the uniform angular law."""
    d = v.shape[1]
    N = v.shape[0]
    collisions = 0
    while t < t_target:
        dts = -np.log(gen.random(_EVENT_CHUNK))
        ii, jj = draw_pair_indices(gen, _EVENT_CHUNK, N)
        sigmas = draw_unit_vectors(gen, _EVENT_CHUNK, d)
        t, used, applied = kernels.dsmc_advance(v, t, t_target, rate, dts, ii, jj, sigmas)
        collisions += applied
    return t, collisions


@dataclass
class RunResult:
    """Observable time series over replicas."""

    times: np.ndarray  # mean free times
    observables: Dict[str, tuple]  # name -> (mean, stderr), arrays over times
    n_replicas: int
    meta: dict = field(default_factory=dict)

    def rows(self):
        out = []
        for name, (mean, err) in sorted(self.observables.items()):
            for t, m, e in zip(self.times, mean, err):
                out.append((float(t), name, float(m), float(e), self.n_replicas))
        return out


BUILTIN_OBSERVABLES = ("m2", "m4", "rel_entropy_v1")


def _particle_moment(v: np.ndarray, k: int) -> float:
    return float(np.mean(np.sum(v * v, axis=1) ** (0.5 * k)))


def _resolve_observables(observables):
    scalar_obs = {}
    pooled_entropy = False
    for ob in observables:
        if callable(ob):
            scalar_obs[getattr(ob, "__name__", f"obs{len(scalar_obs)}")] = ob
        elif ob == "m2":
            scalar_obs["m2"] = lambda v: _particle_moment(v, 2)
        elif ob == "m4":
            scalar_obs["m4"] = lambda v: _particle_moment(v, 4)
        elif ob == "rel_entropy_v1":
            pooled_entropy = True
        else:
            raise ParameterError(f"unknown observable {ob!r}")
    return scalar_obs, pooled_entropy


def _replica_series(args):
    """One replica's observable series; module level so pools can pickle it."""
    initial_sampler, kernel, times, seed, rep, scalar_names, keep_snapshots = args
    ker = default_kernels()
    gen = rngmod.stream(seed, "dsmc", rep)
    v = np.array(initial_sampler(gen), dtype=float)
    if v.ndim != 2 or v.shape[1] != kernel.d:
        raise ParameterError("initial sampler must return an (N, d) array")
    N = v.shape[0]
    mft = kernel.mean_free_time(N)
    rate = kernel.rate(N)
    scalar_obs, _ = _resolve_observables(scalar_names)
    series = {name: np.empty(len(times)) for name in scalar_obs}
    snaps = [] if keep_snapshots else None
    t_master = 0.0
    for it, t_mft in enumerate(times):
        target = t_mft * mft
        if target > t_master:
            if kernel.costheta_sampler is None:
                t_master, _ = _advance_uniform_kernel(v, t_master, target, rate, gen, ker)
            else:
                state = SimulationState(
                    configuration=ParticleConfiguration(
                        v.reshape(-1), SphereSpec.boltzmann(kernel.d, N)
                    ),
                    rng=gen,
                    time=t_master,
                )
                while state.time < target:
                    step(state, kernel)
                v = state.configuration.particles()
                t_master = target
        for name, fn in scalar_obs.items():
            series[name][it] = fn(v)
        if keep_snapshots:
            snaps.append(v.copy())
    return series, snaps


def run(
    initial_sampler: Callable[[np.random.Generator], np.ndarray],
    kernel: CollisionKernel,
    t_end: float,
    n_replicas: int,
    observables=("m2", "m4"),
    seed: int = 0,
    n_times: int = 11,
    entropy_subsample: int = 20000,
    jobs: int = 1,
) -> RunResult:
    """Evolve independent replicas and record observables on a time grid.

    `initial_sampler` maps a replica's generator to an (N, d) velocity array.
    Times are in mean free times.  Scalar observables (callables or the
    built-ins "m2"/"m4") are averaged across replicas with a standard error;
    "rel_entropy_v1" pools all particles of all replicas at each time and
    reports the k-NN relative entropy against the Gaussian, exploiting
    exchangeability of the particle index.

    Replicas own independent streams keyed by (seed, replica), so results are
    identical for any `jobs` (the pool needs a picklable initial sampler).
    """
    if n_replicas < 2:
        raise ParameterError("need at least two replicas for error bars")
    scalar_obs, pooled_entropy = _resolve_observables(observables)
    scalar_names = [ob for ob in observables if ob != "rel_entropy_v1"]
    times = np.linspace(0.0, t_end, n_times)
    tasks = [
        (initial_sampler, kernel, times, seed, rep, scalar_names, pooled_entropy)
        for rep in range(n_replicas)
    ]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            replica_out = list(pool.map(_replica_series, tasks))
    else:
        replica_out = [_replica_series(t) for t in tasks]

    result = {}
    for name in scalar_obs:
        vals = np.stack([replica_out[rep][0][name] for rep in range(n_replicas)], axis=1)
        mean = vals.mean(axis=1)
        err = vals.std(axis=1, ddof=1) / math.sqrt(n_replicas)
        result[name] = (mean, err)
    if pooled_entropy:
        mean = np.empty(n_times)
        err = np.empty(n_times)
        sub_gen = rngmod.stream(seed, "dsmc-entropy")
        for it in range(n_times):
            pooled = np.concatenate([replica_out[rep][1][it] for rep in range(n_replicas)])
            if pooled.shape[0] > entropy_subsample:
                idx = sub_gen.choice(pooled.shape[0], size=entropy_subsample, replace=False)
                pooled = pooled[idx]
            est = relative_entropy_vs_gaussian(EmpiricalMeasure(pooled))
            mean[it], err[it] = est.value, est.stderr
        result["rel_entropy_v1"] = (mean, err)
    return RunResult(
        times=times,
        observables=result,
        n_replicas=n_replicas,
        meta={"seed": seed, "kernel": kernel.label, "beta": kernel.beta},
    )


@dataclass(frozen=True)
class ConditionedInitial:
    """Picklable initial sampler: a conditioned-law chain state per replica."""

    density: str
    d: int
    N: int
    burn_in: Optional[int] = None

    def __call__(self, gen: np.random.Generator) -> np.ndarray:
        from .conditioned import ConditionedLaw, sample_conditioned_batch
        from .densities import get_density
        from .geometry import SphereSpec

        law = ConditionedLaw(
            f=get_density(self.density, self.d), spec=SphereSpec.boltzmann(self.d, self.N)
        )
        return sample_conditioned_batch(law, gen, 1, burn_in=self.burn_in)[0]


@dataclass(frozen=True)
class UniformInitial:
    """Picklable initial sampler from the uniform sphere law."""

    d: int
    N: int

    def __call__(self, gen: np.random.Generator) -> np.ndarray:
        from .geometry import SphereSpec
        from .uniform import sample_uniform

        return sample_uniform(SphereSpec.boltzmann(self.d, self.N), gen).particles()


def equilibrium_crosscheck(N: int, d: int, samples: np.ndarray, alpha: float = 0.01) -> tuple:
    """KS test of pooled velocity coordinates against the uniform-law
    coordinate marginal; returns (statistic, p_value, passed)."""
    samples = np.asarray(samples, dtype=float).reshape(-1)
    if samples.size < 10_000:
        raise CapacityError(f"need at least 1e4 samples, got {samples.size}")
    law = coordinate_marginal(SphereSpec.boltzmann(d, N))
    res = stats.kstest(samples, lambda x: law.cdf(x))
    return float(res.statistic), float(res.pvalue), bool(res.pvalue > alpha)
