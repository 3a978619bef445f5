"""Convolution powers of the lifted law and the partition values they yield.

For a base density f on R (the numeric pipeline is d = 1; higher d is covered
analytically by `z_prime_asymptotic`), the lifted law is the joint law of
(v, v^2): a measure on R x R_+ concentrated on a parabola.  Its N-fold
convolution power s_N is the density of (sum v_i, sum v_i^2), and the exact
partition value on the sphere S^N(sqrt(u), z) follows from

    Z_N(f; sqrt(u), z) = 2 (u - z^2/N)^{1/2} N^{d/2} s_N(z, u) / |S^N(sqrt(u), z)|,

normalized against the Gaussian tensor power (constant on the sphere) to give
Z'_N = Z_N / gamma^{xN}.  Everything runs in log space; the grid machinery is
FFT-based with repeated squaring of the spectrum.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .densities import BaseDensity
from .errors import (
    CoverageError,
    DegenerateVarianceError,
    ParameterError,
    SupportError,
)
from .geometry import SphereSpec, log_sphere_measure

__all__ = [
    "GridDensity",
    "default_window",
    "rasterize_lifted",
    "convolution_power",
    "LiftedGrid",
    "lifted_grid",
    "z_prime_exact",
    "log_z_prime_exact",
    "z_prime_asymptotic",
    "log_z_prime_asymptotic",
    "berry_esseen_sup",
    "lifted_moment_check",
]

DEFAULT_SHAPE = (2048, 2048)
_NEG_MASS_TOL = 1e-9
_TRUNC_TOL = 1e-6


@dataclass
class GridDensity:
    """Nonnegative values on a uniform rectangular grid over R x [0, u_hi).

    Lattice nodes are z_i = z_lo + i dz (nz even, window symmetric about 0)
    and u_j = j du, so the coordinate origin sits exactly on the lattice; the
    convolution code relies on that alignment.
    """

    z_lo: float
    z_hi: float
    u_hi: float
    values: np.ndarray  # shape (nz, nu)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ParameterError("grid values must be 2D")
        if self.values.shape[0] % 2:
            raise ParameterError("nz must be even (origin on the lattice)")
        if not math.isclose(self.z_lo, -self.z_hi, rel_tol=1e-12):
            raise ParameterError("momentum window must be symmetric about 0")

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def dz(self) -> float:
        return (self.z_hi - self.z_lo) / self.values.shape[0]

    @property
    def du(self) -> float:
        return self.u_hi / self.values.shape[1]

    @property
    def cell_volume(self) -> float:
        return self.dz * self.du

    @property
    def mass(self) -> float:
        return float(self.values.sum()) * self.cell_volume

    def z_nodes(self) -> np.ndarray:
        return self.z_lo + self.dz * np.arange(self.values.shape[0])

    def u_nodes(self) -> np.ndarray:
        return self.du * np.arange(self.values.shape[1])

    def momentum_marginal(self) -> np.ndarray:
        return self.values.sum(axis=1) * self.du

    def energy_mean(self) -> float:
        w = self.values.sum(axis=0) * self.dz
        return float((w * self.u_nodes()).sum()) * self.du / self.mass

    def radial_moment(self, k: int) -> float:
        z = self.z_nodes()[:, None]
        u = self.u_nodes()[None, :]
        w = self.values * self.cell_volume
        return float(np.sum(w * (z * z + u * u) ** (0.5 * k)))

    def interp_log(self, z: float, u: float) -> float:
        """Bilinear interpolation of log-values (log of a peaked density is
        nearly quadratic, so interpolating logs is far more accurate)."""
        nz, nu = self.values.shape
        fz = (z - self.z_lo) / self.dz
        fu = u / self.du
        if not (0.0 <= fz <= nz - 1 and 0.0 <= fu <= nu - 1):
            raise CoverageError(f"query point (z={z}, u={u}) outside the grid window")
        iz, iu = int(fz), int(fu)
        iz = min(iz, nz - 2)
        iu = min(iu, nu - 2)
        tz, tu = fz - iz, fu - iu
        corners = self.values[iz : iz + 2, iu : iu + 2]
        if np.all(corners > 0.0):
            lc = np.log(corners)
            return float(
                (1 - tz) * (1 - tu) * lc[0, 0]
                + (1 - tz) * tu * lc[0, 1]
                + tz * (1 - tu) * lc[1, 0]
                + tz * tu * lc[1, 1]
            )
        lin = (
            (1 - tz) * (1 - tu) * corners[0, 0]
            + (1 - tz) * tu * corners[0, 1]
            + tz * (1 - tu) * corners[1, 0]
            + tz * tu * corners[1, 1]
        )
        return math.log(lin) if lin > 0.0 else -math.inf

    def to_bytes(self) -> bytes:
        """Binary export: small header (dims, window, cell volume) + values."""
        header = np.array(
            [self.values.shape[0], self.values.shape[1]], dtype=np.int64
        ).tobytes()
        window = np.array(
            [self.z_lo, self.z_hi, self.u_hi, self.cell_volume], dtype=np.float64
        ).tobytes()
        return header + window + np.ascontiguousarray(self.values).tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "GridDensity":
        nz, nu = np.frombuffer(blob[:16], dtype=np.int64)
        z_lo, z_hi, u_hi, _ = np.frombuffer(blob[16:48], dtype=np.float64)
        values = np.frombuffer(blob[48:], dtype=np.float64).reshape(int(nz), int(nu))
        return cls(z_lo=float(z_lo), z_hi=float(z_hi), u_hi=float(u_hi), values=values.copy())


def default_window(f: BaseDensity, N: int) -> tuple:
    """(z_halfwidth, u_hi) covering the N-fold support to better than 1e-8.

    Momentum: +/- 6 sqrt(eps N), widened to the single-factor tail radius.
    Energy: N E + 12 Sigma sqrt(N), widened to the single-factor squared tail
    radius and capped at the exact maximum N vmax^2 for compactly supported f.
    The sqrt(N) energy margin (rather than a margin proportional to N) keeps
    the cell size small enough that splat smearing stays well below the
    pipeline tolerances at large N.
    """
    vmax = f.tail_radius()
    z_half = max(6.0 * math.sqrt(f.eps * N), 1.05 * vmax)
    u_hi = max(N * f.E + 12.0 * f.sigma * math.sqrt(N), 1.05 * vmax * vmax)
    if f.support_radius is not None:
        # 1% headroom keeps the parabola endpoint clear of the splat boundary
        u_hi = min(u_hi, 1.01 * N * f.support_radius**2)
    return z_half, u_hi


def rasterize_lifted(
    f: BaseDensity,
    window: tuple = None,
    shape: tuple = DEFAULT_SHAPE,
    oversample: int = 8,
) -> GridDensity:
    """Deposit the lifted law of f onto a grid along the parabola u = v^2.

    The momentum axis is cut into `oversample` subintervals per cell; each
    subinterval carries its exact probability mass (CDF differences) and is
    splat bilinearly at (v_mid, v_mid^2).  Mass is conserved up to the window
    truncation, which must stay below 1e-6.
    """
    if f.d != 1:
        raise ParameterError("the grid pipeline is built for d = 1")
    if f.cdf is None:
        raise ParameterError("rasterization needs a CDF for exact cell masses")
    if window is None:
        window = default_window(f, 1)
    z_half, u_hi = window
    nz, nu = shape
    grid = GridDensity(z_lo=-z_half, z_hi=z_half, u_hi=u_hi, values=np.zeros((nz, nu)))
    dz, du = grid.dz, grid.du

    vmax = min(z_half, math.sqrt(u_hi))
    n_sub = min(max(oversample * int(2 * vmax / dz) + 1, 64), 4_000_000)
    edges = np.linspace(-vmax, vmax, n_sub + 1)
    masses = np.diff(f.cdf(edges))
    mids = 0.5 * (edges[:-1] + edges[1:])

    fz = (mids - grid.z_lo) / dz
    fu = (mids * mids) / du
    iz = np.floor(fz).astype(np.int64)
    iu = np.floor(fu).astype(np.int64)
    tz = fz - iz
    tu = fu - iu
    ok = (iz >= 0) & (iz < nz - 1) & (iu >= 0) & (iu < nu - 1)
    vals = grid.values
    np.add.at(vals, (iz[ok], iu[ok]), masses[ok] * (1 - tz[ok]) * (1 - tu[ok]))
    np.add.at(vals, (iz[ok], iu[ok] + 1), masses[ok] * (1 - tz[ok]) * tu[ok])
    np.add.at(vals, (iz[ok] + 1, iu[ok]), masses[ok] * tz[ok] * (1 - tu[ok]))
    np.add.at(vals, (iz[ok] + 1, iu[ok] + 1), masses[ok] * tz[ok] * tu[ok])

    deposited = float(masses[ok].sum())
    truncated = 1.0 - deposited
    if truncated > _TRUNC_TOL:
        raise CoverageError(
            f"window too small: {truncated:.3e} of the lifted mass falls outside"
        )
    vals /= grid.cell_volume
    return grid


def _spectrum_power(pmf_hat: np.ndarray, n: int) -> np.ndarray:
    """n-fold convolution in the spectral domain by repeated squaring."""
    out = np.ones_like(pmf_hat)
    base = pmf_hat
    k = n
    while k:
        if k & 1:
            out = out * base
        k >>= 1
        if k:
            base = base * base
    return out


def convolution_power(g: GridDensity, N: int) -> GridDensity:
    """The N-fold self-convolution of a grid density.

    Spectral repeated squaring: two real FFTs in total, log2(N) pointwise
    squarings in between, so rounding does not accumulate linearly in N.
    Negative FFT ringing is clamped to zero; if the clamped mass exceeds
    1e-9, or noticeable mass reaches the window boundary (wrap-around), the
    window is considered misconfigured and a coverage error is raised.
    """
    if N < 1:
        raise ParameterError("need N >= 1")
    nz, nu = g.values.shape
    if N == 1:
        return GridDensity(g.z_lo, g.z_hi, g.u_hi, g.values.copy())
    pmf = np.roll(g.values, -(nz // 2), axis=0) * g.cell_volume
    out = np.fft.irfft2(_spectrum_power(np.fft.rfft2(pmf), N), s=(nz, nu))
    out = np.roll(out, nz // 2, axis=0) / g.cell_volume

    neg_mass = -float(out[out < 0.0].sum()) * g.cell_volume
    if neg_mass > _NEG_MASS_TOL:
        raise CoverageError(
            f"negative convolution mass {neg_mass:.3e}: window or shape misconfigured"
        )
    np.maximum(out, 0.0, out=out)

    band_z = max(1, nz // 128)
    band_u = max(1, nu // 128)
    edge_mass = (
        float(out[:band_z].sum())
        + float(out[-band_z:].sum())
        + float(out[:, -band_u:].sum())
    ) * g.cell_volume
    if edge_mass > _TRUNC_TOL:
        raise CoverageError(f"mass {edge_mass:.3e} reached the window boundary")
    return GridDensity(g.z_lo, g.z_hi, g.u_hi, out)


class LiftedGrid:
    """Raster of the lifted law of f together with its N-fold power."""

    def __init__(self, f: BaseDensity, N: int, shape: tuple = DEFAULT_SHAPE, window: tuple = None):
        if N < 1:
            raise ParameterError("need N >= 1")
        self.f = f
        self.N = N
        self.window = window if window is not None else default_window(f, N)
        self.raster = rasterize_lifted(f, window=self.window, shape=shape)
        self.power = convolution_power(self.raster, N)

    def log_density(self, z: float, u: float) -> float:
        """log s_N(z, u) via log-bilinear interpolation."""
        return self.power.interp_log(z, u)

    def log_z_prime(self, r: float, z_mom: float) -> float:
        """log Z'_N at (r, z); SupportError on an empty sphere."""
        N = self.N
        u = r * r
        z2 = z_mom * z_mom
        if u - z2 / N <= 0.0:
            raise SupportError(f"empty sphere: r^2 = {u} <= z^2/N = {z2 / N}")
        spec = SphereSpec(d=1, N=N, r=r, z=np.array([z_mom]))
        log_s = self.log_density(z_mom, u)
        if log_s == -math.inf:
            return -math.inf
        log_zn = (
            math.log(2.0)
            + 0.5 * math.log(u - z2 / N)
            + 0.5 * math.log(N)
            + log_s
            - log_sphere_measure(spec)
        )
        # gamma^{xN} is constant on the sphere: (2 pi)^{-N/2} exp(-r^2 / 2)
        return log_zn + 0.5 * N * math.log(2.0 * math.pi) + 0.5 * u


_GRID_CACHE: OrderedDict = OrderedDict()
_GRID_CACHE_SIZE = 3


def lifted_grid(f: BaseDensity, N: int, shape: tuple = DEFAULT_SHAPE, window: tuple = None) -> LiftedGrid:
    """LRU-cached pipeline; grids are 32 MB each at the default shape."""
    key = (f.key, N, tuple(shape), None if window is None else tuple(window))
    hit = _GRID_CACHE.get(key)
    if hit is not None:
        _GRID_CACHE.move_to_end(key)
        return hit
    grid = LiftedGrid(f, N, shape=shape, window=window)
    _GRID_CACHE[key] = grid
    while len(_GRID_CACHE) > _GRID_CACHE_SIZE:
        _GRID_CACHE.popitem(last=False)
    return grid


def log_z_prime_exact(
    f: BaseDensity, N: int, r: float, z_mom: float = 0.0, shape: tuple = DEFAULT_SHAPE
) -> float:
    return lifted_grid(f, N, shape=shape).log_z_prime(r, z_mom)


def z_prime_exact(
    f: BaseDensity, N: int, r: float, z_mom: float = 0.0, shape: tuple = DEFAULT_SHAPE
) -> float:
    """Grid-exact Z'_N(f; r, z) through the full convolution pipeline."""
    return math.exp(log_z_prime_exact(f, N, r, z_mom, shape=shape))


def log_z_prime_asymptotic(f: BaseDensity, N: int, r: float = None, z_norm: float = 0.0) -> float:
    """Leading-order log Z'_N(f; r, z) for any d (remainder not added).

        Z'_N = sqrt(2d)/(Sigma eps^{d/2})
               * [(dN)/(r^2-|z|^2/N)]^{(d(N-1)-2)/2} * e^{(r^2-dN)/2}
               * exp(-|z|^2/(2 eps N) - (r^2 - N E)^2 / (2 Sigma^2 N)).
    """
    if f.sigma2 <= 0.0:
        raise DegenerateVarianceError("energy fluctuation Sigma is zero (|v|^2 deterministic)")
    d = f.d
    if r is None:
        r = math.sqrt(d * N)
    z2 = z_norm * z_norm
    rho2 = r * r - z2 / N
    if rho2 <= 0.0:
        raise SupportError("empty sphere in asymptotic evaluation")
    val = 0.5 * math.log(2.0 * d) - 0.5 * math.log(f.sigma2) - 0.5 * d * math.log(f.eps)
    val += 0.5 * (d * (N - 1) - 2) * (math.log(d * N) - math.log(rho2))
    val += 0.5 * (r * r - d * N)
    val += -z2 / (2.0 * f.eps * N) - (r * r - N * f.E) ** 2 / (2.0 * f.sigma2 * N)
    return val


def z_prime_asymptotic(f: BaseDensity, N: int, r: float = None, z_norm: float = 0.0) -> float:
    return math.exp(log_z_prime_asymptotic(f, N, r, z_norm))


def berry_esseen_sup(g: BaseDensity, N: int, n_cells: int = 1 << 18) -> float:
    """Sup-norm gap between the rescaled N-fold convolution power and the
    standard Gaussian, for a 1D density standardized to mean 0, variance 1.

    Builds g_N(x) = sqrt(N) g*^N(sqrt(N) x) on a lattice via spectral
    repeated squaring and evaluates the sup over the lattice.
    """
    if g.d != 1:
        raise ParameterError("the Berry-Esseen pipeline is 1D")
    if abs(g.eps - 1.0) > 1e-9:
        raise ParameterError("g must be standardized to unit variance")
    if g.cdf is None:
        raise ParameterError("needs a CDF for exact cell masses")
    if N < 1:
        raise ParameterError("need N >= 1")
    vmax = g.tail_radius()
    half = max(12.0 * math.sqrt(N), 1.05 * vmax)
    if g.support_radius is not None:
        half = min(half, 1.0001 * N * g.support_radius)
        half = max(half, 1.05 * g.support_radius)
    dx = 2.0 * half / n_cells
    x = -half + dx * np.arange(n_cells)
    pmf = np.diff(g.cdf(np.append(x, half) - 0.5 * dx))
    total = float(pmf.sum())
    if 1.0 - total > _TRUNC_TOL:
        raise CoverageError(f"window too small: mass deficit {1.0 - total:.3e}")
    pmf /= total
    pmf = np.roll(pmf, -(n_cells // 2))
    out = np.fft.irfft(_spectrum_power(np.fft.rfft(pmf), N), n=n_cells)
    out = np.roll(out, n_cells // 2)
    g_n = math.sqrt(N) * out / dx
    gauss = np.exp(-0.5 * (x / math.sqrt(N)) ** 2) / math.sqrt(2.0 * math.pi)
    return float(np.max(np.abs(g_n - gauss)))


def lifted_moment_check(f: BaseDensity, k: int, rtol: float = 0.01) -> bool:
    """Check the radial moment of the rasterized lifted law against the value
    implied by f's moments; for even k the analytic target for k = 2 is
    M_2(f) + M_4(f) (lift coordinates are (v, v^2))."""
    if k % 2:
        raise ParameterError("analytic lift moments implemented for even k")
    grid = rasterize_lifted(f)
    got = grid.radial_moment(k)
    if k == 0:
        want = 1.0
    elif k == 2:
        want = f.moment(2) + f.moment(4)
    else:
        # E[(v^2 + v^4)^{k/2}], binomial expansion in f's even moments
        want = sum(
            math.comb(k // 2, j) * f.moment(2 * (k // 2 - j) + 4 * j)
            for j in range(k // 2 + 1)
        )
    if not math.isfinite(got):
        return False
    return abs(got - want) <= rtol * abs(want)
