"""Thin-wire method-of-moments solver used to validate the sinusoidal model.

The array gain produced by the closed-form design path rests on the assumed
sinusoidal current shape.  This module re-derives the gain from first
principles instead: the coupled Hallen integral equations of the parallel
center-fed dipoles are solved by point matching with pulse basis functions
(delta-gap feeds, reduced thin-wire kernel), and the resulting sampled
currents are turned into space factors, radiation intensity and input
powers.  Agreement of the two gains is the model-validation criterion.

The dipoles must be parallel to the z axis with a common center plane
(side-by-side layout); this symmetry lets each current be solved on the
non-negative half of the wire, which halves the system size while remaining
exact.  The full, unfolded point-matched system is still verified a
posteriori through a Toeplitz residual check.
"""

from __future__ import annotations

import math
import os
import tempfile
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import matmul_toeplitz

from . import design
from .coupling import ImpedanceSet, input_impedance_matrix
from .elements import (
    ArrayGeometry,
    CarrierSpec,
    Direction,
    Z_0,
    loss_resistance_per_length,
    steering_vector,
)
from .errors import (
    ConditioningError,
    DiscretizationWarning,
    GeometryError,
    ModelValidityError,
    NumericalError,
    PassivityError,
)
from .numerics import gauss_legendre, solve_linear

# Gauss-Legendre order for the smooth (kernel minus singularity) part of one
# pulse-cell integral; the 1/R singularity itself is integrated exactly.
_CELL_NODES = 8
# Relative residual demanded of the unfolded point-matched system.
_RESIDUAL_RTOL = 1e-8
# Tolerance for the common-center-plane requirement, relative to length.
_PLANE_RTOL = 1e-9


@dataclass(frozen=True)
class MomDiscretization:
    """Uniform sampling of one dipole: 2M+1 nodes spaced length/(2M) apart."""

    m_half: int
    length: float

    def __post_init__(self) -> None:
        if int(self.m_half) != self.m_half or self.m_half < 10:
            raise ModelValidityError(
                f"need at least 10 half-samples, got M={self.m_half}")
        if self.length <= 0.0:
            raise ModelValidityError(f"dipole length must be positive, got {self.length}")

    @property
    def n_samples(self) -> int:
        return 2 * self.m_half + 1

    @property
    def spacing(self) -> float:
        return self.length / (2.0 * self.m_half)

    def sample_z(self) -> np.ndarray:
        """Sample coordinates m*spacing for m = -M .. M."""
        return self.spacing * np.arange(-self.m_half, self.m_half + 1)


@dataclass(frozen=True)
class MomSolution:
    """Sampled currents and derived quantities of one Hallen solve."""

    currents: np.ndarray = field(repr=False)
    i_in: np.ndarray = field(repr=False)
    v_in: np.ndarray = field(repr=False)
    p_rad: float
    p_loss: float
    gain: float

    def __post_init__(self) -> None:
        for name in ("currents", "i_in", "v_in"):
            getattr(self, name).setflags(write=False)
        peak = np.abs(self.currents).max(axis=1)
        ends = np.abs(self.currents[:, [0, -1]]).max(axis=1)
        bad = peak > 0.0
        if np.any(ends[bad] > 1e-3 * peak[bad]):
            raise NumericalError("current does not vanish at the wire ends")
        if np.linalg.norm(self.v_in) > 0.0 and self.p_rad <= 0.0:
            raise PassivityError(
                f"nonzero drive radiates {self.p_rad} W; solver output is unphysical")


def _require_side_by_side(geometry: ArrayGeometry, disc: MomDiscretization) -> None:
    z_span = np.ptp(geometry.positions[:, 2]) if geometry.n_elements > 1 else 0.0
    if z_span > _PLANE_RTOL * disc.length:
        raise GeometryError(
            "dipole centers must share one z plane for the symmetric Hallen solve; "
            f"z coordinates span {z_span:.3g} m")


def _lateral_separations(geometry: ArrayGeometry) -> np.ndarray:
    """Kernel distances b[q, p]: wire radius on the diagonal, center-to-center
    lateral distance off it."""
    xy = geometry.positions[:, :2]
    diff = xy[:, None, :] - xy[None, :, :]
    b = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(b, geometry.dipole.radius)
    return b


def _cell_integrals(k: float, b: float, disc: MomDiscretization, n_lags: int) -> np.ndarray:
    """Integrals of exp(-jkR)/R over one pulse cell, per lag s = 0 .. n_lags-1.

    R = sqrt(v^2 + b^2) with v the axial offset; the cell spans
    [s*D - D/2, s*D + D/2].  The static 1/R part has the exact antiderivative
    asinh(v/b); the remainder (exp(-jkR) - 1)/R is smooth and handled by a
    short Gauss-Legendre rule.
    """
    delta = disc.spacing
    s = np.arange(n_lags, dtype=float) * delta
    exact = np.arcsinh((s + 0.5 * delta) / b) - np.arcsinh((s - 0.5 * delta) / b)
    nodes, weights = gauss_legendre(_CELL_NODES)
    v = s[:, None] + 0.5 * delta * nodes[None, :]
    r = np.hypot(v, b)
    smooth = (np.exp(-1j * k * r) - 1.0) / r
    return exact + 0.5 * delta * (smooth @ weights)


def _lag_tables(geometry: ArrayGeometry, k: float, disc: MomDiscretization,
                n_lags: int):
    """Per-pair lag vectors a_qp[s], deduplicated by kernel distance."""
    b = _lateral_separations(geometry)
    cache: dict[float, np.ndarray] = {}
    n = geometry.n_elements
    table = np.empty((n, n), dtype=object)
    for q in range(n):
        for p in range(n):
            key = round(float(b[q, p]), 15)
            if key not in cache:
                cache[key] = _cell_integrals(k, float(b[q, p]), disc, n_lags)
            table[q, p] = cache[key]
    return table


def hallen_solve(geometry: ArrayGeometry, carrier: CarrierSpec, v_in: np.ndarray,
                 disc: MomDiscretization, check: bool = True) -> np.ndarray:
    """Sampled currents (N, 2M+1) of delta-gap-driven coupled dipoles.

    Point matching at the sample nodes turns each Hallen equation

        (j*Z_0 / 2 pi) sum_p integral I_p(z') exp(-jkR_qp)/R_qp dz'
            = C_q cos(kz) + V_q sin(k|z|)

    into a linear system for the current samples plus one homogeneous-solution
    constant per dipole; the endpoint currents I(+-l/2) are fixed to zero by
    construction.  The z symmetry of the side-by-side layout is exploited by
    folding to the non-negative sample half; when ``check`` is set, the
    returned currents are substituted back into the full unfolded system and
    the relative residual must stay below 1e-8.
    """
    if abs(disc.length - geometry.dipole.length) > 1e-12 * geometry.dipole.length:
        raise ModelValidityError(
            f"discretization is for length {disc.length} m but the array "
            f"dipoles are {geometry.dipole.length} m")
    lam = carrier.wavelength
    if disc.spacing >= lam / 10.0:
        raise ModelValidityError(
            f"sample spacing {disc.spacing:.4g} m must stay below lambda/10 = "
            f"{lam / 10.0:.4g} m; increase the sample count")
    if geometry.dipole.radius >= lam / 20.0:
        raise ModelValidityError(
            f"thin-wire kernel needs radius well below the wavelength; got "
            f"rho = {geometry.dipole.radius:.4g} m at lambda = {lam:.4g} m")
    if disc.spacing < geometry.dipole.radius:
        warnings.warn(
            f"sample spacing {disc.spacing:.3g} m is below the wire radius "
            f"{geometry.dipole.radius:.3g} m; the reduced-kernel point-matched "
            "currents may oscillate, prefer a coarser grid",
            DiscretizationWarning, stacklevel=2)
    _require_side_by_side(geometry, disc)

    n = geometry.n_elements
    v_in = np.asarray(v_in, dtype=complex).reshape(-1)
    if v_in.shape != (n,):
        raise ModelValidityError(f"expected {n} drive voltages, got {v_in.shape}")

    k = carrier.wavenumber
    m_half = disc.m_half
    delta = disc.spacing
    scale = 1j * Z_0 / (2.0 * math.pi)
    lags = _lag_tables(geometry, k, disc, 2 * m_half + 1)

    # Unknowns per dipole: I(0..M-1) followed by the constant C; matching rows
    # run over the nodes r = 0..M of the non-negative half.
    block = m_half + 1
    size = n * block
    rows = np.arange(block)
    cols = np.arange(m_half)
    fold_lo = np.abs(rows[:, None] - cols[None, :])
    fold_hi = rows[:, None] + cols[None, :]
    z_match = delta * rows

    a_mat = np.zeros((size, size), dtype=complex)
    rhs = np.zeros(size, dtype=complex)
    for q in range(n):
        r0 = q * block
        for p in range(n):
            c0 = p * block
            a = lags[q, p]
            sub = a[fold_lo] + np.where(cols[None, :] >= 1, a[fold_hi], 0.0)
            a_mat[r0:r0 + block, c0:c0 + m_half] = scale * sub
        a_mat[r0:r0 + block, r0 + m_half] = -np.cos(k * z_match)
        rhs[r0:r0 + block] = v_in[q] * np.sin(k * z_match)

    try:
        x = solve_linear(a_mat, rhs)
    except ConditioningError as exc:
        raise ConditioningError(
            f"{exc}; the point-matched system is near-singular, try a "
            f"different sample count (e.g. M={m_half + 1} or M={2 * m_half})") from exc

    currents = np.zeros((n, 2 * m_half + 1), dtype=complex)
    constants = np.empty(n, dtype=complex)
    for q in range(n):
        half = x[q * block:q * block + m_half]
        currents[q, m_half:2 * m_half] = half
        currents[q, 1:m_half + 1] = half[::-1]
        constants[q] = x[q * block + m_half]

    if check:
        _verify_residual(currents, constants, v_in, lags, k, disc, scale)
    return currents


def _verify_residual(currents: np.ndarray, constants: np.ndarray, v_in: np.ndarray,
                     lags, k: float, disc: MomDiscretization, scale: complex) -> None:
    """Substitute the folded solution into the full 2M+1-row system."""
    n = currents.shape[0]
    z_full = disc.sample_z()
    res_sq = 0.0
    rhs_sq = 0.0
    for q in range(n):
        lhs = np.zeros(2 * disc.m_half + 1, dtype=complex)
        for p in range(n):
            a = lags[q, p]
            lhs += scale * matmul_toeplitz((a, a), currents[p])
        rhs = constants[q] * np.cos(k * z_full) + v_in[q] * np.sin(k * np.abs(z_full))
        res_sq += float(np.sum(np.abs(lhs - rhs) ** 2))
        rhs_sq += float(np.sum(np.abs(rhs) ** 2))
    if rhs_sq == 0.0:
        rel = math.sqrt(res_sq)
    else:
        rel = math.sqrt(res_sq / rhs_sq)
    if rel > _RESIDUAL_RTOL:
        raise NumericalError(
            f"unfolded Hallen system residual {rel:.3g} exceeds {_RESIDUAL_RTOL:g}")


def dense_kernel_matrix(geometry: ArrayGeometry, carrier: CarrierSpec,
                        disc: MomDiscretization) -> np.ndarray:
    """Full point-matched kernel matrix over all N(2M+1) nodes.

    Exposed for direct inspection (reciprocity of the discrete operator);
    intended for small sample counts only, as it is dense.
    """
    n = geometry.n_elements
    k = carrier.wavenumber
    scale = 1j * Z_0 / (2.0 * math.pi)
    lags = _lag_tables(geometry, k, disc, 2 * disc.m_half + 1)
    side = 2 * disc.m_half + 1
    idx = np.abs(np.arange(side)[:, None] - np.arange(side)[None, :])
    out = np.empty((n * side, n * side), dtype=complex)
    for q in range(n):
        for p in range(n):
            out[q * side:(q + 1) * side, p * side:(p + 1) * side] = scale * lags[q, p][idx]
    return out


def space_factor(samples: np.ndarray, theta, disc: MomDiscretization, k: float):
    """Line-source radiation integral of one dipole's sampled current.

    Evaluates sum_m I(m*D) exp(jk m D cos(theta)) * w with the pulse-cell
    weight w = sin(k D cos(theta) / 2) / (k cos(theta) / 2), which tends to
    the plain cell width D broadside.  ``theta`` may be a scalar or an array.
    """
    samples = np.asarray(samples, dtype=complex)
    if samples.shape != (disc.n_samples,):
        raise ModelValidityError(
            f"expected {disc.n_samples} current samples, got {samples.shape}")
    theta_arr = np.asarray(theta, dtype=float)
    ct = np.cos(theta_arr)
    delta = disc.spacing
    weight = delta * np.sinc(k * delta * ct / (2.0 * math.pi))
    m = np.arange(-disc.m_half, disc.m_half + 1)
    phases = np.exp(1j * k * delta * ct[..., None] * m)
    out = (phases @ samples) * weight
    if theta_arr.ndim == 0:
        return complex(out)
    return out


def mom_radiation_intensity(geometry: ArrayGeometry, direction: Direction,
                            carrier: CarrierSpec, space_factors: np.ndarray) -> float:
    """Radiation intensity (W/sr) from per-dipole space factors.

    U = Z_0 k^2 / (32 pi^2) * sin^2(theta) * |sum_n exp(+jk r_hat.r_n) S_n|^2;
    the sin(theta) element factor belongs to the thin-wire far field and is
    kept here even though the array sum alone is sometimes quoted.
    """
    space_factors = np.asarray(space_factors, dtype=complex).reshape(-1)
    if space_factors.shape != (geometry.n_elements,):
        raise ModelValidityError(
            f"expected {geometry.n_elements} space factors, got {space_factors.shape}")
    k = carrier.wavenumber
    phases = np.conj(steering_vector(geometry, direction, k))
    total = np.sum(phases * space_factors)
    return Z_0 * k * k / (32.0 * math.pi ** 2) * math.sin(direction.theta) ** 2 \
        * float(abs(total)) ** 2


def mom_powers(v_in: np.ndarray, i_in: np.ndarray, currents: np.ndarray,
               disc: MomDiscretization, loss_per_length: float):
    """Radiated and dissipated power of one solved array.

    P_rad = Re(v_in^H i_in)/2 is the power entering the feed gaps; P_loss
    integrates the per-length loss resistance over every sampled current.
    A clearly negative P_rad signals a solver defect and is rejected.
    """
    v_in = np.asarray(v_in, dtype=complex).reshape(-1)
    i_in = np.asarray(i_in, dtype=complex).reshape(-1)
    p_rad = 0.5 * float(np.vdot(v_in, i_in).real)
    if p_rad < -1e-9:
        raise PassivityError(
            f"input power {p_rad} W is negative; the Hallen solution violates passivity")
    p_rad = max(p_rad, 0.0)
    p_loss = 0.5 * loss_per_length * disc.spacing \
        * float(np.sum(np.abs(currents) ** 2))
    return p_rad, p_loss


def mom_gain_pipeline(geometry: ArrayGeometry, carrier: CarrierSpec,
                      direction: Direction, p_t: float, disc: MomDiscretization,
                      iset: ImpedanceSet | None = None):
    """Array gain re-derived through the integral-equation route.

    Steps: (1) take the rate-optimal currents of the sinusoidal model under
    per-port conjugate matching; (2) convert them to delta-gap drive voltages
    through the lossless induced-EMF impedance matrix; (3) solve the coupled
    Hallen system for the true current shapes; (4) evaluate the gain
    4 pi U / (P_rad + P_loss) from the sampled currents.  Returns the gain
    and the full solution record.  ``iset`` may be passed to reuse an
    already-assembled impedance set.
    """
    if iset is None:
        iset = input_impedance_matrix(geometry, carrier)
    currents_scd = design.optimal_currents(
        iset, design.MatchSpec(design.ACTIVE_CONJUGATE), direction, p_t)
    v_in = iset.z @ currents_scd
    samples = hallen_solve(geometry, carrier, v_in, disc)
    i_in = samples[:, disc.m_half].copy()

    k = carrier.wavenumber
    factors = np.array([space_factor(samples[n_], direction.theta, disc, k)
                        for n_ in range(geometry.n_elements)])
    u = mom_radiation_intensity(geometry, direction, carrier, factors)
    loss_per_length = loss_resistance_per_length(
        geometry.dipole.radius, carrier.frequency, geometry.dipole.conductivity)
    p_rad, p_loss = mom_powers(v_in, i_in, samples, disc, loss_per_length)
    p_in = p_rad + p_loss
    if p_in <= 0.0:
        raise PassivityError("zero input power; cannot form a gain")
    gain = 4.0 * math.pi * u / p_in
    solution = MomSolution(currents=samples, i_in=i_in, v_in=v_in,
                           p_rad=p_rad, p_loss=p_loss, gain=gain)
    return gain, solution


def dump_currents(path, currents: np.ndarray, disc: MomDiscretization) -> None:
    """Write sampled currents as CSV rows (dipole_index, z_m, re_I, im_I)."""
    currents = np.atleast_2d(np.asarray(currents, dtype=complex))
    z = disc.sample_z()
    lines = ["dipole_index,z_m,re_I,im_I"]
    for n_, row in enumerate(currents):
        for z_m, value in zip(z, row):
            lines.append(f"{n_},{z_m:.17g},{value.real:.17g},{value.imag:.17g}")
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
