"""Impedance matrices of coupled sinusoidal-current dipole arrays.

Two independent routes are kept side by side on purpose:

* ``z_real_matrix`` integrates the radiated cross-power over the far-field
  sphere (a 2-D Gauss-Legendre quadrature, validated by node doubling);
* ``mutual_impedance_emf`` evaluates the classical induced-EMF reaction
  integral in closed form through Si/Ci functions, giving the full complex
  impedance including reactance.

Their real parts describe the same physics and are cross-checked whenever a
full ``ImpedanceSet`` is assembled.  All impedances are referenced to the
input (feed-point) current, i.e. loop quantities divided by sin^2(k*l/2).
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .elements import ArrayGeometry, CarrierSpec, Z_0, element_pattern, loss_resistance
from .errors import GeometryError, NumericalError, ResolutionError
from .numerics import cos_integral, gauss_legendre, sin_integral

# Default Gauss-Legendre orders (theta x phi) for the spherical integral.
_N_THETA = 64
_N_PHI = 128
# Node-doubling agreement demanded of every spherical-quadrature entry.
_DOUBLING_RTOL = 1e-6
# Near-zero off-diagonal entries are judged against this fraction of the
# (always positive) diagonal instead of against themselves.
_SCALE_FLOOR = 1e-3


@dataclass(frozen=True)
class ImpedanceSet:
    """Impedance matrices of one array at one carrier.

    ``z_real`` is the radiated-power matrix from the spherical quadrature;
    ``z`` the complex lossless impedance matrix from the induced-EMF method.
    ``z_in`` combines them as r_loss*I + z_real + j*Im(z): its real part is
    exactly r_loss*I + z_real (positive definite by construction), while the
    0.5% cross-method agreement of Re(z) with z_real is checked separately
    at assembly time.
    """

    z_real: np.ndarray = field(repr=False)
    z: np.ndarray = field(repr=False)
    z_in: np.ndarray = field(repr=False)
    r_loss: float
    geometry: ArrayGeometry
    carrier: CarrierSpec
    z_real_method: str = "spherical-quadrature"
    z_method: str = "induced-emf"

    def __post_init__(self) -> None:
        for name in ("z_real", "z", "z_in"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def n_ports(self) -> int:
        return self.z_real.shape[0]

    @property
    def re_z_in(self) -> np.ndarray:
        return self.z_in.real


def _spherical_rule(n_theta: int, n_phi: int):
    tx, tw = gauss_legendre(n_theta)
    px, pw = gauss_legendre(n_phi)
    theta = 0.5 * math.pi * (tx + 1.0)
    w_theta = 0.5 * math.pi * tw
    phi = math.pi * (px + 1.0)
    w_phi = math.pi * pw
    return theta, w_theta, phi, w_phi


@lru_cache(maxsize=32)
def _pattern_weight(length: float, k: float, n_theta: int) -> tuple[np.ndarray, np.ndarray]:
    """Theta nodes paired with F(theta)^2 sin(theta) times the theta weights."""
    theta, w_theta, _, _ = _spherical_rule(n_theta, 2)
    f2 = element_pattern(length, k, theta) ** 2
    weight = w_theta * f2 * np.sin(theta)
    weight.setflags(write=False)
    theta.setflags(write=False)
    return theta, weight


@lru_cache(maxsize=32)
def _input_resistance(length: float, k: float, n_theta: int) -> float:
    """Diagonal of the radiated-power matrix (phase factor is unity)."""
    _, weight = _pattern_weight(length, k, n_theta)
    return Z_0 / (2.0 * math.pi) * float(np.sum(weight))


def _z_real_raw(delta: np.ndarray, length: float, k: float,
                n_theta: int, n_phi: int) -> complex:
    """Spherical quadrature of Z0/(4 pi^2) exp(-j k rhat.delta) F^2 sin(theta)."""
    theta, weight = _pattern_weight(length, k, n_theta)
    _, _, phi, w_phi = _spherical_rule(2, n_phi)
    st = np.sin(theta)
    ct = np.cos(theta)
    phase = k * (np.outer(st, np.cos(phi)) * delta[0]
                 + np.outer(st, np.sin(phi)) * delta[1]
                 + np.outer(ct, np.ones_like(phi)) * delta[2])
    acc = np.exp(-1j * phase) @ w_phi
    return complex(Z_0 / (4.0 * math.pi**2) * np.sum(weight * acc))


def _z_real_checked(delta: np.ndarray, length: float, k: float,
                    n_theta: int, n_phi: int, check: bool) -> float:
    coarse = _z_real_raw(delta, length, k, n_theta, n_phi)
    fine = _z_real_raw(delta, length, k, 2 * n_theta, 2 * n_phi)
    scale = max(abs(fine), _SCALE_FLOOR * _input_resistance(length, k, n_theta))
    if check and abs(coarse - fine) > _DOUBLING_RTOL * scale:
        raise ResolutionError(
            f"spherical quadrature not converged at node doubling: "
            f"{coarse:.9g} vs {fine:.9g} for displacement {delta} m; "
            f"raise n_theta/n_phi above ({n_theta}, {n_phi})"
        )
    if abs(fine.imag) > 1e-9 * scale:
        raise NumericalError(
            f"imaginary residue {fine.imag:.3e} of the radiated-power quadrature "
            f"exceeds 1e-9 of the entry scale {scale:.3e}"
        )
    return fine.real


def z_real_entry(geom: ArrayGeometry, carrier: CarrierSpec, n: int, m: int,
                 n_theta: int = _N_THETA, n_phi: int = _N_PHI,
                 check: bool = True) -> float:
    """Entry (n, m) of the radiated-power impedance matrix, ohm.

    Doubling the quadrature orders must reproduce the value to 1e-6 relative
    (with an absolute floor tied to the diagonal), else ResolutionError.
    """
    delta = geom.positions[n] - geom.positions[m]
    return _z_real_checked(delta, geom.dipole.length, carrier.wavenumber,
                           n_theta, n_phi, check)


def z_real_matrix(geom: ArrayGeometry, carrier: CarrierSpec,
                  n_theta: int = _N_THETA, n_phi: int = _N_PHI) -> np.ndarray:
    """Radiated-power matrix: real, symmetric, positive semi-definite.

    Entries depend only on the relative displacement, so repeated pair
    geometries (e.g. a uniform line) are computed once.  The upper triangle
    is mirrored for exact symmetry.
    """
    n_el = geom.n_elements
    length = geom.dipole.length
    k = carrier.wavenumber
    lam = carrier.wavelength
    out = np.zeros((n_el, n_el))
    cache: dict[tuple, float] = {}
    for n in range(n_el):
        for m in range(n, n_el):
            delta = geom.positions[n] - geom.positions[m]
            key_arr = np.round(delta / lam, 9)
            nz = key_arr[key_arr != 0.0]
            if nz.size and nz[0] < 0.0:  # sign-canonical: the integral is even in delta
                key_arr = -key_arr
            key = tuple(key_arr)
            if key not in cache:
                cache[key] = _z_real_checked(delta, length, k, n_theta, n_phi, True)
            out[n, m] = cache[key]
            out[m, n] = cache[key]
    return out


def _e1_of(x: float) -> complex:
    """E1(jx) expressed through Si/Ci for x > 0."""
    return complex(-cos_integral(x), sin_integral(x) - 0.5 * math.pi)


def _emf_reaction(k: float, h: float, d: float) -> complex:
    """Closed-form induced-EMF reaction integral of two parallel side-by-side
    sinusoidal dipoles of half-length h at lateral distance d (loop reference).
    """
    kh = k * h
    rp = math.hypot(d, h)
    r2 = math.hypot(d, 2.0 * h)
    g0 = _e1_of(k * d)
    gp = _e1_of(k * (rp + h))
    gm = _e1_of(k * (rp - h))
    gp2 = _e1_of(k * (r2 + 2.0 * h))
    gm2 = _e1_of(k * (r2 - 2.0 * h))
    c = math.cos(kh)
    eik = complex(math.cos(kh), math.sin(kh))
    ei2k = eik * eik
    val = (4.0 * c * eik * gp + 4.0 * c * gm / eik
           - (2.0 + 4.0 * c * c) * g0 - ei2k * gp2 - gm2 / ei2k)
    return Z_0 / (4.0 * math.pi) * val


def mutual_impedance_emf(geom: ArrayGeometry, carrier: CarrierSpec, n: int, m: int) -> complex:
    """Complex mutual impedance (n, m) by the induced EMF method, ohm.

    Referenced to the input current; the self term (n == m) uses the wire
    radius as the effective lateral distance.  Only equal-height, z-parallel
    (side-by-side) dipoles are supported.
    """
    k = carrier.wavenumber
    h = 0.5 * geom.dipole.length
    if n == m:
        d = geom.dipole.radius
    else:
        delta = geom.positions[n] - geom.positions[m]
        if abs(delta[2]) > 1e-12 * carrier.wavelength:
            raise GeometryError(
                f"dipoles {n} and {m} are staggered along z by {delta[2]:.3e} m; "
                f"the EMF formulas cover side-by-side elements only"
            )
        d = math.hypot(delta[0], delta[1])
        if d == 0.0:
            raise GeometryError(f"dipoles {n} and {m} share the same position")
    sin_kh = math.sin(k * h)
    return _emf_reaction(k, h, d) / (sin_kh * sin_kh)


def emf_matrix(geom: ArrayGeometry, carrier: CarrierSpec) -> np.ndarray:
    """Full complex impedance matrix via the induced EMF method (symmetric)."""
    n_el = geom.n_elements
    out = np.zeros((n_el, n_el), dtype=complex)
    cache: dict[float, complex] = {}
    for n in range(n_el):
        for m in range(n, n_el):
            if n == m:
                d_key = round(geom.dipole.radius / carrier.wavelength, 12)
            else:
                delta = geom.positions[n] - geom.positions[m]
                d_key = round(math.hypot(delta[0], delta[1]) / carrier.wavelength, 12)
            if d_key not in cache:
                cache[d_key] = mutual_impedance_emf(geom, carrier, n, m)
            out[n, m] = cache[d_key]
            out[m, n] = cache[d_key]
    return out


def _consistency_check(z_real: np.ndarray, z: np.ndarray, rtol: float = 5e-3) -> None:
    scale = np.maximum(np.abs(z_real), _SCALE_FLOOR * np.max(np.diag(z_real)))
    rel = np.abs(z.real - z_real) / scale
    worst = np.unravel_index(int(np.argmax(rel)), rel.shape)
    if rel[worst] > rtol:
        raise NumericalError(
            f"EMF and spherical-quadrature impedances disagree at entry {worst}: "
            f"Re(Z_emf) = {z.real[worst]:.6g} ohm vs Z_real = {z_real[worst]:.6g} ohm "
            f"({rel[worst]:.2%} relative)"
        )


def input_impedance_matrix(geom: ArrayGeometry, carrier: CarrierSpec,
                           n_theta: int = _N_THETA, n_phi: int = _N_PHI) -> ImpedanceSet:
    """Assemble the ImpedanceSet for a geometry: Z_real, Z and Z_in = R_loss*I + Z."""
    z_real = z_real_matrix(geom, carrier, n_theta, n_phi)
    z = emf_matrix(geom, carrier)
    _consistency_check(z_real, z)
    r_loss = loss_resistance(geom.dipole, carrier)
    z_in = r_loss * np.eye(geom.n_elements) + z_real + 1j * z.imag
    return ImpedanceSet(z_real=z_real, z=z, z_in=z_in, r_loss=r_loss,
                        geometry=geom, carrier=carrier)


def uncoupled_impedance_set(geom: ArrayGeometry, carrier: CarrierSpec,
                            n_theta: int = _N_THETA) -> ImpedanceSet:
    """Impedance set with all mutual terms removed (ideal uncoupled baseline).

    The shared diagonal R_i is computed once, so downstream quantities are
    exactly linear/constant in N by construction.
    """
    r_i = _z_real_checked(np.zeros(3), geom.dipole.length, carrier.wavenumber,
                          n_theta, 2 * n_theta, True)
    z_self = mutual_impedance_emf(geom, carrier, 0, 0)
    eye = np.eye(geom.n_elements)
    z_real = r_i * eye
    z = z_self * eye
    r_loss = loss_resistance(geom.dipole, carrier)
    z_in = (r_loss + r_i + 1j * z_self.imag) * eye
    return ImpedanceSet(z_real=z_real, z=z, z_in=z_in, r_loss=r_loss,
                        geometry=geom, carrier=carrier,
                        z_real_method="spherical-quadrature/uncoupled",
                        z_method="induced-emf/uncoupled")


def dump_matrix(path, matrix: np.ndarray) -> None:
    """Write a matrix as whitespace-separated re+imj tokens, one row per line."""
    mat = np.atleast_2d(np.asarray(matrix, dtype=complex))
    lines = []
    for row in mat:
        lines.append(" ".join(f"{v.real:.17g}{v.imag:+.17g}j" for v in row))
    text = "\n".join(lines) + "\n"
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def load_matrix(path) -> np.ndarray:
    """Inverse of dump_matrix."""
    with open(path) as fh:
        rows = [[complex(tok) for tok in line.split()] for line in fh if line.strip()]
    return np.asarray(rows, dtype=complex)
