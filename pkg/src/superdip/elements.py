"""Single-dipole physics and array geometry.

Thin center-fed dipoles parallel to the z axis, carrying the sinusoidal
standing-wave current I(z) = I(0) sin(k(l/2 - |z|))/sin(kl/2).  This module
provides the element pattern, skin-effect loss resistance, steering vectors
and the far-field/radiation-intensity expressions an array built from such
elements produces.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FarFieldWarning, GeometryError, ModelValidityError
from .numerics import Quadrature1D, composite_nodes

MU_0 = 4e-7 * math.pi          # vacuum permeability, H/m
C_0 = 299792458.0              # speed of light, m/s
Z_0 = MU_0 * C_0               # free-space wave impedance, ~376.73 ohm

# The sinusoidal-current model degenerates as the dipole approaches one
# wavelength (its input-current normalization 1/sin(kl/2) blows up).
_MAX_ELL_OVER_LAMBDA = 0.98


@dataclass(frozen=True)
class CarrierSpec:
    """Carrier frequency and the derived free-space quantities."""

    frequency: float  # Hz

    def __post_init__(self) -> None:
        if not self.frequency > 0.0:
            raise ConfigError(f"carrier frequency must be positive, got {self.frequency}")

    @property
    def wavelength(self) -> float:
        return C_0 / self.frequency

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.wavelength


@dataclass(frozen=True)
class DipoleSpec:
    """Physical description of one dipole element."""

    length: float        # m
    radius: float        # m
    conductivity: float  # S/m

    def __post_init__(self) -> None:
        if not self.length > 0.0:
            raise ConfigError(f"dipole length must be positive, got {self.length}")
        if not self.radius > 0.0:
            raise ConfigError(f"dipole radius must be positive, got {self.radius}")
        if not self.conductivity > 0.0:
            raise ConfigError(f"conductivity must be positive, got {self.conductivity}")
        if self.radius >= self.length / 20.0:
            raise ModelValidityError(
                f"thin-wire model requires radius << length "
                f"(radius {self.radius} vs length {self.length})"
            )


@dataclass(frozen=True)
class Direction:
    """Spherical direction: polar theta from the z axis, azimuth phi from x."""

    theta: float  # rad, in [0, pi]
    phi: float    # rad, in [0, 2*pi)

    def __post_init__(self) -> None:
        if not 0.0 <= self.theta <= math.pi:
            raise ConfigError(f"theta must lie in [0, pi], got {self.theta}")
        if not 0.0 <= self.phi < 2.0 * math.pi:
            raise ConfigError(f"phi must lie in [0, 2*pi), got {self.phi}")

    @property
    def unit_vector(self) -> np.ndarray:
        st = math.sin(self.theta)
        return np.array([st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)])


@dataclass(frozen=True)
class ArrayGeometry:
    """Positions of N identical z-parallel dipoles."""

    positions: np.ndarray = field(repr=False)  # (N, 3), m
    dipole: DipoleSpec

    def __post_init__(self) -> None:
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise GeometryError(f"positions must be an (N, 3) array, got shape {pos.shape}")
        pos = pos.copy()
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        n = pos.shape[0]
        for i in range(n):
            for j in range(i + 1, n):
                sep = float(np.linalg.norm(pos[i] - pos[j]))
                if sep <= 2.0 * self.dipole.radius:
                    raise GeometryError(
                        f"dipoles {i} and {j} overlap: separation {sep:.3e} m "
                        f"<= wire diameter {2 * self.dipole.radius:.3e} m"
                    )

    @property
    def n_elements(self) -> int:
        return self.positions.shape[0]

    @classmethod
    def uniform_linear(cls, n: int, spacing: float, dipole: DipoleSpec) -> "ArrayGeometry":
        """Uniform linear array along x: r_n = (n*d, 0, 0)."""
        if n < 1:
            raise GeometryError(f"array needs at least one element, got n = {n}")
        if n > 1 and not spacing > 0.0:
            raise GeometryError(f"element spacing must be positive, got {spacing}")
        pos = np.zeros((n, 3))
        pos[:, 0] = spacing * np.arange(n)
        return cls(positions=pos, dipole=dipole)


def _check_length(length: float, k: float) -> float:
    kl = k * length
    if not 0.0 < kl < 2.0 * math.pi * _MAX_ELL_OVER_LAMBDA:
        raise ModelValidityError(
            f"dipole length {length / (2 * math.pi / k):.4g} wavelengths outside "
            f"the sinusoidal-current model's validity range (0, {_MAX_ELL_OVER_LAMBDA})"
        )
    return kl


def element_pattern(length: float, k: float, theta):
    """Normalized field pattern F(theta) of a z-directed sinusoidal-current dipole.

    F(theta) = [cos(k*l/2 * cos theta) - cos(k*l/2)] / [sin(k*l/2) sin theta],
    referenced to the input current.  Accepts scalar or array theta; the
    axial values theta in {0, pi} take the analytic limit 0.
    """
    kl_half = 0.5 * _check_length(length, k)
    theta_arr = np.asarray(theta, dtype=float)
    ct = np.cos(theta_arr)
    st = np.sin(theta_arr)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (np.cos(kl_half * ct) - math.cos(kl_half)) / (math.sin(kl_half) * st)
    out = np.where(np.abs(st) < 1e-12, 0.0, val)
    return float(out) if np.isscalar(theta) or theta_arr.ndim == 0 else out


def loss_resistance_per_length(radius: float, frequency: float, conductivity: float) -> float:
    """Skin-effect series resistance per unit length of a round wire, ohm/m."""
    if min(radius, frequency, conductivity) <= 0.0:
        raise ConfigError("radius, frequency and conductivity must all be positive")
    return math.sqrt(frequency * MU_0 / (math.pi * conductivity)) / (2.0 * radius)


def loss_resistance(dipole: DipoleSpec, carrier: CarrierSpec) -> float:
    """Ohmic loss resistance referenced to the input current, ohm.

    Closed form of R_bar * integral |I(z)/I(0)|^2 dz over the wire:
    (k*l - sin(k*l)) / (4*k*rho*sin^2(k*l/2)) * sqrt(f*mu/(pi*sigma)).
    """
    kl = _check_length(dipole.length, carrier.wavenumber)
    surf = math.sqrt(carrier.frequency * MU_0 / (math.pi * dipole.conductivity))
    return (kl - math.sin(kl)) / (4.0 * carrier.wavenumber * dipole.radius
                                  * math.sin(0.5 * kl) ** 2) * surf


def loss_resistance_quadrature(dipole: DipoleSpec, carrier: CarrierSpec,
                               q: Quadrature1D = Quadrature1D(nodes=64, panels=8)) -> float:
    """Loss resistance via direct quadrature of the squared current shape.

    Independent route kept alongside the closed form: integrates
    R_bar * sin^2(k(l/2 - |z|))/sin^2(k*l/2) over the wire, splitting at the
    center kink.
    """
    kl = _check_length(dipole.length, carrier.wavenumber)
    k = carrier.wavenumber
    h = 0.5 * dipole.length
    rbar = loss_resistance_per_length(dipole.radius, carrier.frequency, dipole.conductivity)

    def shape_sq(z):
        return np.sin(k * (h - np.abs(z))) ** 2

    x1, w1 = composite_nodes(-h, 0.0, q)
    x2, w2 = composite_nodes(0.0, h, q)
    integral = float(np.sum(w1 * shape_sq(x1)) + np.sum(w2 * shape_sq(x2)))
    return rbar * integral / math.sin(0.5 * kl) ** 2


def steering_vector(geom: ArrayGeometry, direction: Direction, k: float) -> np.ndarray:
    """Array response a(theta, phi) with entries exp(-j k rhat . r_n)."""
    phase = geom.positions @ direction.unit_vector
    return np.exp(-1j * k * phase)


def _far_field_check(geom: ArrayGeometry, carrier: CarrierSpec, r: float) -> None:
    pos = geom.positions
    extent = 0.0
    if geom.n_elements > 1:
        diffs = pos[:, None, :] - pos[None, :, :]
        extent = float(np.max(np.linalg.norm(diffs, axis=-1)))
    aperture = max(extent, geom.dipole.length)
    limit = max(10.0 * aperture, 2.0 * aperture**2 / carrier.wavelength)
    if r < limit:
        warnings.warn(
            f"receiver range {r:.4g} m is below the far-field distance "
            f"{limit:.4g} m for this aperture",
            FarFieldWarning,
            stacklevel=3,
        )


def scd_field_magnitude(geom: ArrayGeometry, direction: Direction, carrier: CarrierSpec,
                        currents: np.ndarray, r: float) -> complex:
    """Far-zone electric field E_theta at range r, V/m.

    E_theta = j Z0 exp(-j k r)/(2 pi r) * F(theta) * a^H i.  Ranges short of
    the far-field distance only warn; the formula is still evaluated.
    """
    if not r > 0.0:
        raise ConfigError(f"range must be positive, got {r}")
    _far_field_check(geom, carrier, r)
    k = carrier.wavenumber
    f_pat = element_pattern(geom.dipole.length, k, direction.theta)
    a = steering_vector(geom, direction, k)
    array_factor = complex(np.vdot(a, np.asarray(currents, dtype=complex)))
    return 1j * Z_0 * cmath.exp(-1j * k * r) / (2.0 * math.pi * r) * f_pat * array_factor


def radiation_intensity(geom: ArrayGeometry, direction: Direction, carrier: CarrierSpec,
                        currents: np.ndarray) -> float:
    """Radiation intensity U(theta, phi) = Z0/(8 pi^2) F(theta)^2 |a^H i|^2, W/sr."""
    k = carrier.wavenumber
    f_pat = element_pattern(geom.dipole.length, k, direction.theta)
    a = steering_vector(geom, direction, k)
    array_factor = np.vdot(a, np.asarray(currents, dtype=complex))
    return Z_0 / (8.0 * math.pi**2) * f_pat**2 * abs(array_factor) ** 2
