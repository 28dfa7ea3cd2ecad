"""Fault profiles and the two-block boundary-conforming grid.

The fault is a graph ``y = f(x)`` over ``[x_min, x_max]``.  Each block is a
transfinite (linear) blend between the fault trace and a straight exterior
edge at ``y = -depth`` (block ``minus``) or ``y = +depth`` (block ``plus``),
so the roughness fades out linearly towards the outer boundary.  Reference
coordinates are ``xi = x`` and ``eta in [0, depth]``, which makes the map the
identity for a planar fault at ``y = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sbp import BlockOperator, Metrics, Sbp1D, build_block_operator, build_sbp_1d, metrics_from_coordinates


@dataclass(frozen=True)
class FaultProfile:
    """Fault trace sampled at the ``m`` fault nodes."""

    x: np.ndarray
    y: np.ndarray
    slope: np.ndarray
    seed: int | None = None
    amplitude_ratio: float = 0.0
    band: tuple[float, float] | None = None

    @property
    def m(self) -> int:
        return len(self.x)

    @property
    def normal_minus(self) -> np.ndarray:
        """Unit normal pointing from the minus block into the plus block."""
        scale = np.sqrt(1.0 + self.slope**2)
        return np.column_stack([-self.slope / scale, 1.0 / scale])

    @property
    def is_planar(self) -> bool:
        return bool(np.all(self.y == self.y[0]))


def planar_profile(m: int, x_min: float, x_max: float, level: float = 0.0) -> FaultProfile:
    x = np.linspace(x_min, x_max, m)
    return FaultProfile(x, np.full(m, float(level)), np.zeros(m))


def make_fractal_profile(
    m: int,
    x_min: float,
    x_max: float,
    amplitude_ratio: float,
    band: tuple[float, float],
    seed: int,
) -> FaultProfile:
    """Band-limited self-similar profile by random-phase Fourier synthesis.

    Modes ``k = 1, 2, ...`` have wavelength ``L / k`` with ``L`` the domain
    length; only wavelengths inside ``band`` are kept.  Mode amplitudes scale
    as ``k^{-3/2}`` (power ``~ k^{-3}``), phases come from a Philox counter
    generator seeded with ``seed``, and the profile is rescaled so its RMS
    height over one period equals ``amplitude_ratio * L``.
    """
    if amplitude_ratio < 0:
        raise ValueError("amplitude ratio must be non-negative")
    lam_min, lam_max = sorted(float(b) for b in band)
    length = x_max - x_min
    h = length / (m - 1)
    if lam_min < 8.0 * h:
        raise ValueError(f"shortest wavelength {lam_min} km is below 8 grid spacings ({8 * h:.3g} km)")
    x = np.linspace(x_min, x_max, m)
    if amplitude_ratio == 0.0:
        prof = planar_profile(m, x_min, x_max)
        return FaultProfile(prof.x, prof.y, prof.slope, seed, 0.0, (lam_min, lam_max))
    k_lo = max(1, int(np.ceil(length / lam_max - 1e-9)))
    k_hi = int(np.floor(length / lam_min + 1e-9))
    if k_hi < k_lo:
        raise ValueError("wavelength band contains no Fourier mode of the domain")
    ks = np.arange(k_lo, k_hi + 1)
    rng = np.random.Generator(np.random.Philox(seed))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=len(ks))
    amps = ks ** (-1.5)
    # Mean of cos^2 over a period is 1/2, so RMS height = sqrt(sum amps^2 / 2).
    amps *= amplitude_ratio * length / np.sqrt(0.5 * np.sum(amps**2))
    wave = 2.0 * np.pi * ks / length
    arg = np.outer(x - x_min, wave) + phases
    y = np.cos(arg) @ amps
    slope = -np.sin(arg) @ (amps * wave)
    return FaultProfile(x, y, slope, seed, float(amplitude_ratio), (lam_min, lam_max))


def fault_normal_shear_projection(profile: FaultProfile, sigma_yz0: float) -> np.ndarray:
    """Initial fault shear traction from a uniform background stress."""
    return sigma_yz0 * profile.normal_minus[:, 1]


@dataclass(frozen=True)
class Block:
    """One mapped block with coordinates, metric data and operators."""

    name: str
    x: np.ndarray
    y: np.ndarray
    metrics: Metrics
    xi_op: Sbp1D
    eta_op: Sbp1D
    fault_edge: str

    @property
    def jacobian(self) -> np.ndarray:
        return self.metrics.jacobian

    def metric_coefficients(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``J grad(xi_i) . grad(xi_j)``: identity for the identity map."""
        return self.metrics.coefficients(1.0)

    def operator(self, mu: float | np.ndarray, penalty_factor: float = 1.0) -> BlockOperator:
        return build_block_operator(self.xi_op, self.eta_op, self.metrics, mu, penalty_factor)


@dataclass(frozen=True)
class CurvilinearGrid:
    profile: FaultProfile
    depth: float
    minus: Block
    plus: Block

    @property
    def m(self) -> int:
        return self.profile.m

    @property
    def n(self) -> int:
        return self.minus.x.shape[1]

    @property
    def blocks(self) -> tuple[Block, Block]:
        return (self.minus, self.plus)


def default_n_across(m: int, x_min: float, x_max: float, depth: float) -> int:
    """Across-fault count giving approximately equal spacing in x and y."""
    h = (x_max - x_min) / (m - 1)
    return int(round(depth / h)) + 1


def build_grid(
    profile: FaultProfile,
    depth: float,
    n_across: int | None = None,
    order: int = 2,
    d2_form: str | None = None,
    cartesian: bool = False,
) -> CurvilinearGrid:
    """Transfinite two-block grid conforming to ``profile``.

    With ``cartesian=True`` the metric is set to the exact identity instead
    of being differentiated from coordinates; this requires a planar fault
    at ``y = 0`` and serves as the reference Cartesian discretization.
    """
    x_min, x_max = float(profile.x[0]), float(profile.x[-1])
    m = profile.m
    if n_across is None:
        n_across = default_n_across(m, x_min, x_max, depth)
    if np.any(profile.y <= -depth) or np.any(profile.y >= depth):
        raise ValueError("fault trace leaves the domain")
    xi_op = build_sbp_1d(m, (x_max - x_min) / (m - 1), order, d2_form)
    eta_op = build_sbp_1d(n_across, depth / (n_across - 1), order, d2_form)
    t = np.linspace(0.0, 1.0, n_across)
    x2 = np.repeat(profile.x[:, None], n_across, axis=1)
    yf = profile.y[:, None]
    y_minus = -depth + t[None, :] * (yf + depth)
    y_plus = yf + t[None, :] * (depth - yf)
    # both blocks must share bit-identical fault nodes
    y_minus[:, -1] = y_plus[:, 0] = profile.y
    y_minus[:, 0], y_plus[:, -1] = -depth, depth
    blocks = []
    for name, yy, fault_edge in (("minus", y_minus, "top"), ("plus", y_plus, "bottom")):
        if cartesian:
            if not (profile.is_planar and profile.y[0] == 0.0):
                raise ValueError("Cartesian metrics require a planar fault at y = 0")
            one, zero = np.ones((m, n_across)), np.zeros((m, n_across))
            met = Metrics(one, zero, zero.copy(), one.copy())
        else:
            met = metrics_from_coordinates(xi_op, eta_op, x2, yy)
        if np.any(met.jacobian <= 0):
            raise ValueError(f"folded mapping in block {name}: roughness too large for the grid")
        blocks.append(Block(name, x2.copy(), yy, met, xi_op, eta_op, fault_edge))
    return CurvilinearGrid(profile, float(depth), blocks[0], blocks[1])


def fault_arclength(profile: FaultProfile, refine: int = 16) -> np.ndarray:
    """Cumulative arc length at the fault nodes (km), starting at zero.

    Fractal profiles are resampled ``refine`` times finer from their Fourier
    series; other profiles use the trapezoidal rule on the stored slope.
    """
    x = profile.x
    if profile.is_planar:
        return x - x[0]
    if profile.seed is not None and profile.band is not None:
        fine = make_fractal_profile(
            refine * (len(x) - 1) + 1, x[0], x[-1], profile.amplitude_ratio, profile.band, profile.seed
        )
        fx, fslope, stride = fine.x, fine.slope, refine
    else:
        fx, fslope, stride = x, profile.slope, 1
    ds = np.sqrt(1.0 + fslope**2)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(fx) * (ds[1:] + ds[:-1]))])
    return cum[::stride]
