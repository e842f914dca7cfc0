"""Optimal excitation under a power budget, port matching and link rate.

Maximizing the rate under P_total <= P_t is equivalent to maximizing the
generalized Rayleigh quotient eta*G = |a^H i|^2-form over C = Re(Z_M) +
Re(Z_in), whose optimum is i = sqrt(2 P_t / (a^H C^-1 a)) C^-1 a.  Under
active-impedance conjugate matching the load depends on the excitation
itself; that self-reference is resolved in closed form (the total power
becomes exactly twice the input power, so maximizing eta*G reduces to
maximizing G alone) rather than by fixed-point iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coupling import ImpedanceSet
from .elements import CarrierSpec, Direction, Z_0, element_pattern, steering_vector
from .errors import ConditioningError, ConfigError, DomainError, UndefinedPortError
from .numerics import solve_linear

ACTIVE_CONJUGATE = "active-conjugate"
INPUT_CONJUGATE = "input-conjugate"
CUSTOM = "custom"
_MODES = (ACTIVE_CONJUGATE, INPUT_CONJUGATE, CUSTOM)

# Ports carrying less than this fraction of the excitation norm have no
# meaningful active impedance (the defining ratio v_n/i_n degenerates).
_PORT_CURRENT_FLOOR = 1e-12


@dataclass(frozen=True)
class MatchSpec:
    """Single-port matching strategy: one load impedance Z_M,n per port."""

    mode: str
    z_m: np.ndarray | None = None  # diagonal entries, required for mode "custom"

    def __post_init__(self) -> None:
        if self.mode not in _MODES:
            raise ConfigError(f"unknown matching mode {self.mode!r}; expected one of {_MODES}")
        if self.mode == CUSTOM:
            if self.z_m is None:
                raise ConfigError("custom matching requires explicit per-port z_m values")
            z_m = np.asarray(self.z_m, dtype=complex)
            if np.any(z_m.real < 0.0):
                raise ConfigError("matching impedances must have non-negative real part")
            object.__setattr__(self, "z_m", z_m)
        elif self.z_m is not None:
            raise ConfigError(f"mode {self.mode!r} derives z_m itself; do not supply one")


@dataclass(frozen=True)
class LinkSpec:
    """Line-of-sight link budget parameters."""

    bandwidth: float      # Hz
    noise_density: float  # W/Hz
    power_budget: float   # W
    distance: float       # m
    direction: Direction

    def __post_init__(self) -> None:
        for name in ("bandwidth", "noise_density", "power_budget", "distance"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class ExcitationSolution:
    """Port currents/voltages with the full power and matching breakdown."""

    currents: np.ndarray = field(repr=False)    # A
    voltages: np.ndarray = field(repr=False)    # V, Z_in @ i
    z_active: np.ndarray = field(repr=False)    # ohm, diagonal entries of Z_a
    z_match: np.ndarray = field(repr=False)     # ohm, diagonal entries of Z_M
    reflection: np.ndarray = field(repr=False)  # per-port Gamma_n
    p_rad: float
    p_loss: float
    p_in: float
    p_total: float
    eta: float
    gain: float


def _resolved_z_m(iset: ImpedanceSet, match: MatchSpec, currents: np.ndarray) -> np.ndarray:
    """Concrete per-port matching impedances for the given excitation."""
    input_conj = np.conj(np.diag(iset.z_in))
    if match.mode == INPUT_CONJUGATE:
        return input_conj
    if match.mode == CUSTOM:
        z_m = match.z_m
        if z_m.shape != (iset.n_ports,):
            raise ConfigError(f"custom z_m has shape {z_m.shape}, expected ({iset.n_ports},)")
        return z_m
    z_a = active_impedances(iset, currents, undefined="nan")
    # Ports with no usable active impedance fall back to input-conjugate.
    return np.where(np.isnan(z_a), input_conj, np.conj(z_a))


def optimal_currents(iset: ImpedanceSet, match: MatchSpec, direction: Direction,
                     p_t: float) -> np.ndarray:
    """Rate-optimal port currents with total consumed power exactly p_t.

    For fixed matching loads this is the Rayleigh-quotient optimum
    i = sqrt(2 p_t / (a^H C^-1 a)) C^-1 a, C = Re(Z_M) + Re(Z_in).  Under
    active-conjugate matching it reduces to i proportional to Re(Z_in)^-1 a.
    """
    if not p_t > 0.0:
        raise ConfigError(f"power budget must be positive, got {p_t}")
    a = steering_vector(iset.geometry, direction, iset.carrier.wavenumber)
    r_in = iset.re_z_in
    if match.mode == ACTIVE_CONJUGATE:
        y = solve_linear(r_in, a)
        quad = float(np.vdot(a, y).real)
        if quad <= 0.0:
            raise ConditioningError(f"a^H Re(Z_in)^-1 a = {quad:.3e} is not positive")
        # P_total = i^H Re(Z_in) i = p_t fixes the scale.
        return math.sqrt(p_t / quad) * y
    z_m = _resolved_z_m(iset, match, np.array([]))
    c_mat = np.diag(z_m.real) + r_in
    y = solve_linear(c_mat, a)
    quad = float(np.vdot(a, y).real)
    if quad <= 0.0:
        raise ConditioningError(f"a^H C^-1 a = {quad:.3e} is not positive")
    return math.sqrt(2.0 * p_t / quad) * y


def active_impedances(iset: ImpedanceSet, currents: np.ndarray,
                      undefined: str = "raise") -> np.ndarray:
    """Diagonal of the active impedance matrix: Z_a,n = (Z_in i)_n / i_n.

    Ports whose current magnitude falls below 1e-12 of the excitation norm
    have no defined active impedance; `undefined` selects whether to raise
    or to mark them NaN.
    """
    i = np.asarray(currents, dtype=complex)
    v = iset.z_in @ i
    floor = _PORT_CURRENT_FLOOR * np.linalg.norm(i)
    dead = np.abs(i) <= floor
    if np.any(dead):
        ports = np.flatnonzero(dead).tolist()
        if undefined == "raise":
            raise UndefinedPortError(
                f"active impedance undefined on ports {ports}: zero port current"
            )
        out = np.full(i.shape, np.nan, dtype=complex)
        live = ~dead
        out[live] = v[live] / i[live]
        return out
    return v / i


def reflection_coefficient(z_a_entry: complex, z_m_entry: complex) -> complex:
    """Port reflection Gamma = (Z_a - Z_M*) / (Z_a + Z_M)."""
    den = z_a_entry + z_m_entry
    if den == 0:
        raise DomainError(
            f"degenerate port: Z_a = {z_a_entry} cancels Z_M = {z_m_entry}"
        )
    return (z_a_entry - np.conj(z_m_entry)) / den


def power_breakdown(iset: ImpedanceSet, match: MatchSpec,
                    currents: np.ndarray) -> tuple[float, float, float, float, float]:
    """(P_rad, P_loss, P_in, P_total, eta) for an excitation under a matching mode.

    P_rad = 1/2 i^H Z_real i, P_loss = 1/2 R_loss |i|^2, P_in is their sum,
    and P_total adds the power dissipated in the matching loads.
    """
    i = np.asarray(currents, dtype=complex)
    p_rad = 0.5 * float(np.vdot(i, iset.z_real @ i).real)
    p_loss = 0.5 * iset.r_loss * float(np.vdot(i, i).real)
    p_in = p_rad + p_loss
    z_m = _resolved_z_m(iset, match, i)
    p_match = 0.5 * float(np.sum(z_m.real * np.abs(i) ** 2))
    p_total = p_in + p_match
    eta = p_in / p_total if p_total > 0.0 else 0.0
    return p_rad, p_loss, p_in, p_total, eta


def array_gain(iset: ImpedanceSet, direction: Direction, currents: np.ndarray) -> float:
    """G(theta, phi) = Z0 F^2(theta)/pi * |a^H i|^2 / (i^H Re(Z_in) i).

    Invariant under complex rescaling of the excitation.
    """
    i = np.asarray(currents, dtype=complex)
    denom = float(np.vdot(i, iset.re_z_in @ i).real)
    if denom <= 0.0:
        raise DomainError("array gain undefined for zero excitation")
    k = iset.carrier.wavenumber
    f_pat = element_pattern(iset.geometry.dipole.length, k, direction.theta)
    a = steering_vector(iset.geometry, direction, k)
    num = abs(np.vdot(a, i)) ** 2
    return Z_0 * f_pat**2 / math.pi * num / denom


def g_max(iset: ImpedanceSet, direction: Direction) -> float:
    """Maximum achievable gain Z0 F^2/pi * a^H Re(Z_in)^-1 a at a direction."""
    k = iset.carrier.wavenumber
    a = steering_vector(iset.geometry, direction, k)
    quad = float(np.vdot(a, solve_linear(iset.re_z_in, a)).real)
    if quad <= 0.0:
        raise ConditioningError(f"a^H Re(Z_in)^-1 a = {quad:.3e} is not positive")
    f_pat = element_pattern(iset.geometry.dipole.length, k, direction.theta)
    return Z_0 * f_pat**2 / math.pi * quad


def received_power_and_rate(link: LinkSpec, carrier: CarrierSpec, eta: float,
                            gain: float) -> tuple[float, float]:
    """Friis received power P_r = eta P_t (lambda/4 pi r)^2 G and Shannon rate."""
    lam = carrier.wavelength
    p_r = eta * link.power_budget * (lam / (4.0 * math.pi * link.distance)) ** 2 * gain
    rate = link.bandwidth * math.log2(1.0 + p_r / (link.bandwidth * link.noise_density))
    return p_r, rate


def solve_excitation(iset: ImpedanceSet, match: MatchSpec, direction: Direction,
                     p_t: float) -> ExcitationSolution:
    """End-to-end solve: optimal currents, matching loads, reflections, powers, gain."""
    i = optimal_currents(iset, match, direction, p_t)
    z_a = active_impedances(iset, i, undefined="nan")
    z_m = _resolved_z_m(iset, match, i)
    gamma = np.full(i.shape, np.nan, dtype=complex)
    for n in range(i.size):
        if not np.isnan(z_a[n]):
            gamma[n] = reflection_coefficient(z_a[n], z_m[n])
    p_rad, p_loss, p_in, p_total, eta = power_breakdown(iset, match, i)
    gain = array_gain(iset, direction, i)
    return ExcitationSolution(currents=i, voltages=iset.z_in @ i, z_active=z_a,
                              z_match=z_m, reflection=gamma, p_rad=p_rad,
                              p_loss=p_loss, p_in=p_in, p_total=p_total,
                              eta=eta, gain=gain)


def dbi(gain: float, floor: float = 1e-12) -> float:
    """Gain in dBi; values at or below `floor` clamp to the floor's level."""
    return 10.0 * math.log10(max(gain, floor))


def dbm(power_w: float) -> float:
    """Power in dBm."""
    if not power_w > 0.0:
        raise DomainError(f"dBm undefined for non-positive power {power_w}")
    return 10.0 * math.log10(power_w / 1e-3)
