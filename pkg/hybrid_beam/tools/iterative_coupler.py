"""
Iterative Fourier-domain coupling of the virtual rig with the numerical substructure.

For one excitation frequency the loop applies actuator-voltage harmonics,
waits for the rig to settle, extracts the interface harmonics measured on
the physical side and drives the interface residual

    R = U_P - D_N^-1 (F_N - F_P)

to zero with Broyden's method. A sweep repeats this per frequency,
warm-starting the voltages and the inverse-Jacobian estimate.
"""

from __future__ import annotations

import asyncio
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..config import (
    COMPENSATION_ANGLE,
    CONVERGENCE_TOLERANCE,
    HIGHEST_HARMONIC,
    MAX_BLOCKS,
    MAX_ITERATIONS,
    N_PERIODS,
    SWEEP_START_HZ,
    SWEEP_STEP_HZ,
    SWEEP_STOP_HZ,
    TARGET_INTERFACE_AMPLITUDE,
    TRANSIENT_TOLERANCE,
)
from ..core import (
    InvalidArgumentError,
    NumericalFailureError,
    angular,
    hz_to_khz,
    khz_to_hz,
    snap_frequency,
    wrap_phase,
)
from .harmonics import (
    DISPLACEMENT_CHANNELS,
    FORCE_CHANNELS,
    VOLTAGE_CHANNELS,
    HarmonicVector,
    compensate_phase,
    extract_harmonics,
)
from .substructuring import CondensedInterface, Partition, SubModel, condense, condense_force, hybrid_frf
from .virtual_rig import MeasurementWindow, VirtualRig, reconstruct_displacement, reconstruct_forces

logger = logging.getLogger("hybrid_beam.coupler")

# below this NS amplitude a synchronisation metric is undefined
SYNC_MIN_AMPLITUDE = 1e-12
BROYDEN_MIN_DENOMINATOR = 1e-14


class BroydenConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    initial: Literal["probe", "identity"] = Field(
        "probe", description="Initial inverse Jacobian: finite-difference probes or a scaled identity"
    )
    probe_size: float = Field(0.1, gt=0, description="Voltage perturbation per probe (V)")
    identity_scale: float = Field(1.0, gt=0, description="Scale of the identity initial guess (V/mm)")
    damping: float = Field(1.0, gt=0, le=1.0, description="Step damping")
    max_halvings: int = Field(3, ge=0, description="Backtracking halvings on residual increase")
    warm_start: bool = Field(True, description="Carry the inverse Jacobian along the sweep")


class CouplerConfig(BaseModel):
    """Parameters of the coupling loop and of the frequency sweep."""

    model_config = ConfigDict(extra="forbid")

    freq_start_hz: float = Field(SWEEP_START_HZ, gt=0)
    freq_stop_hz: float = Field(SWEEP_STOP_HZ, gt=0)
    freq_step_hz: float = Field(SWEEP_STEP_HZ, gt=0)
    n_periods: int = Field(N_PERIODS, ge=1, description="Periods per measurement window")
    transient_tol: float = Field(TRANSIENT_TOLERANCE, gt=0, description="Steadiness tolerance (mm)")
    convergence_tol: float = Field(CONVERGENCE_TOLERANCE, gt=0, description="Residual tolerance (mm)")
    max_iter: int = Field(MAX_ITERATIONS, ge=1)
    max_blocks: int = Field(MAX_BLOCKS, ge=2, description="Windows waited for steadiness per voltage update")
    n_harmonics: int = Field(HIGHEST_HARMONIC, ge=1, description="Highest harmonic N_H")
    compensation: Literal["fixed", "identified"] = "fixed"
    compensation_angle: float = Field(COMPENSATION_ANGLE, description="Filter lag advanced on the force channels (rad)")
    phase_scaling: Union[Literal["proportional", "constant"], list[float]] = "proportional"
    residual_form: Literal["displacement", "force"] = "displacement"
    forcing_amplitude: Optional[float] = Field(
        None, gt=0, description="F_N amplitude (kN); calibrated to target_amplitude when omitted"
    )
    forcing_position: Optional[float] = Field(
        None, gt=0, description="Forcing point on the numerical beam (mm from the root); interface when omitted"
    )
    target_amplitude: float = Field(TARGET_INTERFACE_AMPLITUDE, gt=0, description="Peak interface deflection (mm)")
    broyden: BroydenConfig = Field(default_factory=BroydenConfig)

    @model_validator(mode="after")
    def _tolerances(self):
        if self.convergence_tol < self.transient_tol:
            raise ValueError("convergence_tol must not be smaller than transient_tol")
        if self.freq_stop_hz < self.freq_start_hz:
            raise ValueError("freq_stop_hz must not be below freq_start_hz")
        return self

    def frequencies(self, dt: float) -> list[float]:
        """Sweep grid in kHz, snapped to whole-sample periods."""
        count = int(math.floor((self.freq_stop_hz - self.freq_start_hz) / self.freq_step_hz + 1e-9)) + 1
        grid_hz = self.freq_start_hz + self.freq_step_hz * np.arange(count)
        return [snap_frequency(hz_to_khz(f), dt) for f in grid_hz]


class NumericalSubstructure:
    """Numerical side of the hybrid test: the root span and its external forcing."""

    def __init__(self, part: Partition, forcing: float, forcing_position: Optional[float] = None):
        self.part = part
        self.sub = part.N_part
        self.forcing = float(forcing)
        self.forcing_position = forcing_position
        self._cache: dict[tuple[float, int], CondensedInterface] = {}
        self._bulk_row: Optional[int] = None
        if forcing_position is not None:
            model = self.sub.model
            node = int(np.argmin(np.abs(model.node_coords - model.node_coords[0] - forcing_position)))
            dof = int(model.dof_map[node, 0])
            if dof < 0 or dof in set(self.sub.iface):
                raise InvalidArgumentError(f"forcing point {forcing_position} mm is not a free bulk node")
            self._bulk_row = int(np.flatnonzero(self.sub.bulk == dof)[0])

    def with_forcing(self, forcing: float) -> "NumericalSubstructure":
        clone = NumericalSubstructure(self.part, forcing, self.forcing_position)
        clone._cache = self._cache
        return clone

    def stiffness(self, omega: float, k: int = 1) -> CondensedInterface:
        """D_N at ``s = i k 2pi omega``, cached."""
        key = (float(omega), int(k))
        if key not in self._cache:
            self._cache[key] = condense(self.sub, 1j * angular(omega) * k)
        return self._cache[key]

    def external_force(self, omega: float, n_harmonics: int) -> HarmonicVector:
        """Condensed F_N^(e): a harmonic force at the first harmonic only."""
        F = HarmonicVector.zeros(omega, FORCE_CHANNELS, n_harmonics)
        s = 1j * angular(omega)
        if self._bulk_row is None:
            f1 = np.array([self.forcing, 0.0], dtype=complex)
        else:
            bulk = np.zeros(len(self.sub.bulk), dtype=complex)
            bulk[self._bulk_row] = self.forcing
            f1 = condense_force(self.sub, s, bulk, np.zeros(2))
        return F.with_harmonic(1, f1)

    def stiffness_set(self, omega: float, n_harmonics: int) -> list[CondensedInterface]:
        return [self.stiffness(omega, k) for k in range(1, n_harmonics + 1)]


def _solve_harmonic(D: CondensedInterface, rhs: np.ndarray, k: int) -> np.ndarray:
    if np.linalg.cond(D.D) > 1e14:
        raise NumericalFailureError(f"numerical substructure singular at harmonic {k} (s={D.s:.6g})")
    return np.linalg.solve(D.D, rhs)


def residual(
    U_P: HarmonicVector,
    F_P: HarmonicVector,
    D_N_at: Sequence[CondensedInterface],
    F_N_ext: HarmonicVector,
    form: Literal["displacement", "force"] = "displacement",
) -> HarmonicVector:
    """Interface residual per harmonic 1..N_H (harmonic 0 is left out).

    ``displacement``: ``R = U_P - D_N^-1 (F_N - F_P)`` in (mm, rad).
    ``force``: ``R_F = D_N U_P - (F_N - F_P)`` in (kN, kN·mm).

    Raises:
        NumericalFailureError: if D_N is singular at some harmonic.
    """
    n_h = U_P.n_harmonics
    if len(D_N_at) != n_h or F_P.n_harmonics != n_h or F_N_ext.n_harmonics != n_h:
        raise InvalidArgumentError("residual operands carry different harmonic counts")
    coeffs = np.zeros((2, n_h + 1), dtype=complex)
    for k in range(1, n_h + 1):
        D = D_N_at[k - 1]
        net = F_N_ext.coeffs[:, k] - F_P.coeffs[:, k]
        if form == "displacement":
            coeffs[:, k] = U_P.coeffs[:, k] - _solve_harmonic(D, net, k)
        elif form == "force":
            coeffs[:, k] = D.D @ U_P.coeffs[:, k] - net
        else:
            raise InvalidArgumentError(f"unknown residual form '{form}'")
    channels = DISPLACEMENT_CHANNELS if form == "displacement" else FORCE_CHANNELS
    return HarmonicVector(U_P.omega, channels, coeffs)


def displacement_residual(R: HarmonicVector, D_N_at: Sequence[CondensedInterface]) -> HarmonicVector:
    """Map a force-form residual to displacement units (``D_N^-1 R_F``)."""
    if R.channels == DISPLACEMENT_CHANNELS:
        return R
    coeffs = np.zeros_like(R.coeffs)
    for k in range(1, R.n_harmonics + 1):
        coeffs[:, k] = _solve_harmonic(D_N_at[k - 1], R.coeffs[:, k], k)
    return HarmonicVector(R.omega, DISPLACEMENT_CHANNELS, coeffs)


def steady_check(history: Sequence[float], tol: float = TRANSIENT_TOLERANCE) -> bool:
    """Steady once two consecutive residual norms differ by less than ``tol``."""
    if len(history) < 2:
        return False
    return abs(history[-1] - history[-2]) < tol


@dataclass
class BroydenState:
    """Inverse-Jacobian estimate and the last accepted point."""

    B: np.ndarray
    V_prev: Optional[np.ndarray] = None
    R_prev: Optional[np.ndarray] = None
    updates: int = 0
    skipped: int = 0

    def rebased(self) -> "BroydenState":
        """Same estimate with the secant history cleared."""
        return BroydenState(self.B.copy())


def broyden_update(state: BroydenState, V: np.ndarray, R: np.ndarray) -> BroydenState:
    """Good-Broyden rank-one update of the inverse Jacobian from the last accepted point."""
    V = np.asarray(V, dtype=float)
    R = np.asarray(R, dtype=float)
    B = state.B
    updates, skipped = state.updates, state.skipped
    if state.V_prev is not None:
        dV = V - state.V_prev
        dR = R - state.R_prev
        BdR = B @ dR
        den = float(dV @ BdR)
        if abs(den) < BROYDEN_MIN_DENOMINATOR:
            skipped += 1
        else:
            B = B + np.outer(dV - BdR, dV @ B) / den
            updates += 1
    return BroydenState(B, V.copy(), R.copy(), updates, skipped)


def broyden_step(
    state: BroydenState, V: np.ndarray, R: np.ndarray, damping: float = 1.0
) -> tuple[np.ndarray, BroydenState]:
    """Update the estimate with ``(V, R)`` and return ``V - damping B R``."""
    state = broyden_update(state, V, R)
    return state.V_prev - damping * (state.B @ state.R_prev), state


def probe_jacobian(evaluate: Callable[[np.ndarray], np.ndarray], V: np.ndarray, R: np.ndarray, h: float) -> np.ndarray:
    """Forward-difference Jacobian, one perturbation per unknown."""
    J = np.empty((len(R), len(V)))
    for j in range(len(V)):
        Vj = V.copy()
        Vj[j] += h
        J[:, j] = (evaluate(Vj) - R) / h
    return J


def invert_jacobian(J: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.inv(J)
    except np.linalg.LinAlgError:
        logger.warning("probe Jacobian singular, using its pseudo-inverse")
        return np.linalg.pinv(J)


def sync_metrics(
    U_N: HarmonicVector,
    F_N_implied: HarmonicVector,
    U_P: HarmonicVector,
    F_P: HarmonicVector,
    k: int = 1,
    min_amplitude: float = SYNC_MIN_AMPLITUDE,
) -> dict[str, dict[str, Optional[float]]]:
    """Delay (ms) and amplification (%) of every PS channel against its NS counterpart.

    ``delay = -(phase_PS - phase_NS) / (k Omega)``, positive when the
    physical signal lags; ``amplification = |PS|/|NS| - 1``. Channels whose
    NS amplitude is below ``min_amplitude`` are reported as None.

    The NS force is the one implied by the current PS displacement,
    ``F_N - D_N U_P``, not ``F_N - D_N U_N``. Since ``U_N = D_N^-1 (F_N - F_P)``
    the latter is ``F_P`` identically and would always report perfect force
    synchronization.
    """
    w = k * angular(U_P.omega)
    metrics = {}
    for ns, ps in ((F_N_implied, F_P), (U_N, U_P)):
        for name in ps.channels:
            a_ns = ns.channel(name)[k]
            a_ps = ps.channel(name)[k]
            if abs(a_ns) < min_amplitude:
                metrics[name] = {"delay_ms": None, "amplification_pct": None}
                continue
            dphi = wrap_phase(np.angle(a_ps) - np.angle(a_ns))
            metrics[name] = {
                "delay_ms": float(-dphi / w),
                "amplification_pct": float((abs(a_ps) / abs(a_ns) - 1.0) * 100.0),
            }
    return metrics


@dataclass
class Evaluation:
    """Interface harmonics measured for one voltage vector."""

    V: HarmonicVector
    U_P: HarmonicVector
    F_P: HarmonicVector
    R: HarmonicVector
    norm: float
    blocks: int
    history: list[float]
    window: MeasurementWindow


@dataclass
class SweepRecord:
    """Outcome of one solution point."""

    omega: float
    V: HarmonicVector
    U_P: HarmonicVector
    F_P: HarmonicVector
    U_N: HarmonicVector
    F_N: HarmonicVector
    residual: HarmonicVector
    residual_norm: float
    iterations: int
    probes: int
    blocks: int
    converged: bool
    forcing: float
    sync: dict = field(default_factory=dict)
    reference: Optional[HarmonicVector] = None
    norm_history: list[float] = field(default_factory=list)
    jacobian: Optional[np.ndarray] = field(default=None, repr=False)
    window: Optional[MeasurementWindow] = field(default=None, repr=False)

    @property
    def omega_hz(self) -> float:
        return khz_to_hz(self.omega)

    def reference_error(self, weights: Sequence[float]) -> Optional[float]:
        """Weighted distance of U_P from the monolithic reference (mm)."""
        if self.reference is None:
            return None
        return (self.U_P - self.reference).norm(weights)

    def to_row(self, weights: Sequence[float] = (1.0, 1.0)) -> dict:
        row = {"omega_hz": self.omega_hz}
        for side, vectors in (("ps", (self.U_P, self.F_P)), ("ns", (self.U_N, self.F_N))):
            for vec in vectors:
                for name in vec.channels:
                    row[f"{side}_{name}_amp"] = vec.amplitude(name)
                    row[f"{side}_{name}_phase_rad"] = vec.phase(name)
        row["forcing_kn"] = self.forcing
        row["u_per_force_mm_per_kn"] = self.U_P.amplitude("u") / self.forcing
        for j, name in enumerate(self.V.channels):
            row[f"{name}_re_V"] = float(self.V.coeffs[j, 1].real)
            row[f"{name}_im_V"] = float(self.V.coeffs[j, 1].imag)
        if self.reference is not None:
            row["ref_u_amp"] = self.reference.amplitude("u")
            row["ref_u_phase_rad"] = self.reference.phase("u")
            row["ref_error_mm"] = self.reference_error(weights)
        row["residual_norm_mm"] = self.residual_norm
        row["iterations"] = self.iterations
        row["probes"] = self.probes
        row["converged"] = self.converged
        for name, values in self.sync.items():
            row[f"delay_ms_{name}"] = values["delay_ms"]
            row[f"amplification_pct_{name}"] = values["amplification_pct"]
        return row


class HybridLoop:
    """Measurement pipeline of one hybrid test: rig, numerical side and loop settings."""

    def __init__(self, rig: VirtualRig, numerical: NumericalSubstructure, cfg: CouplerConfig):
        self.rig = rig
        self.numerical = numerical
        self.cfg = cfg
        d_l = rig.config.sensors.laser_separation
        # rotation residual scaled by the laser separation into mm
        self.weights = np.array([1.0, d_l])
        self.force_weights = np.array([1.0, 1.0 / d_l])

    def compensation_angles(self, omega: float) -> tuple[float, Union[str, list[float]]]:
        cfg = self.cfg
        if not self.rig.filters_forces:
            return 0.0, "proportional"
        if cfg.compensation == "identified":
            lags = [self.rig.identify_filter_lag(k * omega) for k in range(1, cfg.n_harmonics + 1)]
            return 0.0, lags
        return cfg.compensation_angle, cfg.phase_scaling

    def interface_harmonics(self, window: MeasurementWindow) -> tuple[HarmonicVector, HarmonicVector]:
        """(U_P, F_P) harmonics of a raw window."""
        cfg, rig = self.cfg, self.rig
        omega, n = window.omega, window.n
        raw = extract_harmonics(
            {"l1": window.l1, "l2": window.l2, "eps1": window.eps1, "eps2": window.eps2},
            omega, n, cfg.n_harmonics, rig.dt,
        )
        sensors = rig.config.sensors
        u, phi = reconstruct_displacement(raw.channel("l1"), raw.channel("l2"), sensors.laser_separation)
        U_P = HarmonicVector(omega, DISPLACEMENT_CHANNELS, np.vstack([u, phi]))
        if sensors.force_sensing == "reaction":
            F_P = extract_harmonics(window.reaction.T, omega, n, cfg.n_harmonics, rig.dt, FORCE_CHANNELS)
        else:
            T, M = reconstruct_forces(raw.channel("eps1"), raw.channel("eps2"), sensors.gauge_1, sensors.gauge_2, rig.c)
            F_P = HarmonicVector(omega, FORCE_CHANNELS, np.vstack([T, -M]))
            theta, scaling = self.compensation_angles(omega)
            F_P = compensate_phase(F_P, theta, scaling)
        return U_P, F_P

    def to_vector(self, R: HarmonicVector) -> np.ndarray:
        weights = self.weights if R.channels == DISPLACEMENT_CHANNELS else self.force_weights
        return R.to_real(weights)

    def evaluate(self, V: HarmonicVector) -> Evaluation:
        """Apply ``V``, wait for steadiness and return the measured residual."""
        cfg, rig = self.cfg, self.rig
        omega = V.omega
        D_set = self.numerical.stiffness_set(omega, cfg.n_harmonics)
        F_N = self.numerical.external_force(omega, cfg.n_harmonics)
        if rig.config.prime_steady_state:
            rig.prime(V, omega)
        history: list[float] = []
        for block in range(1, cfg.max_blocks + 1):
            window = rig.measure_window(V, omega, cfg.n_periods)
            U_P, F_P = self.interface_harmonics(window)
            R = residual(U_P, F_P, D_set, F_N, cfg.residual_form)
            norm = displacement_residual(R, D_set).norm(self.weights)
            history.append(norm)
            if steady_check(history, cfg.transient_tol):
                break
        else:
            logger.warning(
                "%.2f Hz: residual not steady after %d windows (last change %.4g mm)",
                khz_to_hz(omega), cfg.max_blocks, abs(history[-1] - history[-2]),
            )
        logger.debug("%.2f Hz: |R| = %.5g mm after %d windows", khz_to_hz(omega), norm, block)
        return Evaluation(V, U_P, F_P, R, norm, block, history, window)

    def voltages(self, omega: float, x: np.ndarray) -> HarmonicVector:
        return HarmonicVector.from_real(omega, VOLTAGE_CHANNELS, x)

    def initial_guess(self, omega: float, fraction: float = 0.1) -> HarmonicVector:
        """Small voltage whose quasi-static shaker force is a fraction of F_N."""
        F_N = self.numerical.external_force(omega, self.cfg.n_harmonics)
        gain = self.rig.input_matrix
        coeffs = np.zeros((2, self.cfg.n_harmonics + 1), dtype=complex)
        coeffs[:, 1] = fraction * np.linalg.solve(gain, F_N.coeffs[:, 1])
        return HarmonicVector(omega, VOLTAGE_CHANNELS, coeffs)

    def implied(self, ev: Evaluation) -> tuple[HarmonicVector, HarmonicVector]:
        """NS-side displacement ``D_N^-1(F_N - F_P)`` and force ``F_N - D_N U_P``."""
        omega = ev.V.omega
        n_h = self.cfg.n_harmonics
        F_ext = self.numerical.external_force(omega, n_h)
        U_N = np.zeros((2, n_h + 1), dtype=complex)
        F_NS = np.zeros((2, n_h + 1), dtype=complex)
        for k, D in enumerate(self.numerical.stiffness_set(omega, n_h), start=1):
            U_N[:, k] = _solve_harmonic(D, F_ext.coeffs[:, k] - ev.F_P.coeffs[:, k], k)
            F_NS[:, k] = F_ext.coeffs[:, k] - D.D @ ev.U_P.coeffs[:, k]
        return (
            HarmonicVector(omega, DISPLACEMENT_CHANNELS, U_N),
            HarmonicVector(omega, FORCE_CHANNELS, F_NS),
        )


def reference_response(numerical: NumericalSubstructure, ps: SubModel, omega: float, n_harmonics: int = 1) -> HarmonicVector:
    """Monolithic interface response ``(D_N + D_P)^-1 F_N`` at every harmonic."""
    F_N = numerical.external_force(omega, n_harmonics)
    coeffs = np.zeros((2, n_harmonics + 1), dtype=complex)
    for k in range(1, n_harmonics + 1):
        D_N = numerical.stiffness(omega, k)
        D_P = condense(ps, D_N.s)
        coeffs[:, k] = hybrid_frf(D_N, D_P, F_N.coeffs[:, k])
    return HarmonicVector(omega, DISPLACEMENT_CHANNELS, coeffs)


def calibrate_forcing(
    numerical: NumericalSubstructure, ps: SubModel, omegas: Sequence[float], target: float = TARGET_INTERFACE_AMPLITUDE
) -> float:
    """Forcing amplitude (kN) whose peak monolithic interface deflection over ``omegas`` is ``target`` mm."""
    unit = numerical.with_forcing(1.0)
    peak = max(reference_response(unit, ps, w).amplitude("u") for w in omegas)
    if not peak > 0:
        raise NumericalFailureError("reference response vanishes over the sweep")
    forcing = target / peak
    logger.info("forcing calibrated to %.5g kN for a %.3g mm peak", forcing, target)
    return forcing


def solve_point(
    rig: VirtualRig,
    omega: float,
    V0: Optional[HarmonicVector],
    cfg: CouplerConfig,
    numerical: NumericalSubstructure,
    jacobian: Optional[np.ndarray] = None,
) -> SweepRecord:
    """Run the coupling loop at one frequency until ``|R| < convergence_tol`` or ``max_iter``.

    Args:
        rig: virtual rig driven by the loop.
        omega: excitation frequency (kHz), commensurate with ``rig.dt``.
        V0: initial voltages; a small quasi-static guess when None.
        cfg: loop settings.
        numerical: numerical substructure and forcing.
        jacobian: inverse-Jacobian estimate carried from a previous point.

    Returns:
        SweepRecord: converged or labelled non-converged; never raises for
        non-convergence.
    """
    snapped = snap_frequency(omega, rig.dt)
    if not math.isclose(snapped, omega, rel_tol=1e-9):
        raise InvalidArgumentError(f"{omega} kHz is not commensurate with dt={rig.dt} ms; use {snapped}")
    loop = HybridLoop(rig, numerical, cfg)
    bcfg = cfg.broyden
    if V0 is None:
        V = loop.initial_guess(omega)
    else:
        if V0.n_harmonics != cfg.n_harmonics:
            raise InvalidArgumentError("initial voltages carry a different harmonic count")
        V = HarmonicVector(omega, V0.channels, V0.coeffs)

    ev = loop.evaluate(V)
    x = V.to_real()
    r = loop.to_vector(ev.R)
    blocks = ev.blocks
    probes = 0

    if jacobian is not None and bcfg.warm_start:
        B = jacobian
    elif bcfg.initial == "probe" and ev.norm >= cfg.convergence_tol:
        def measure(xj: np.ndarray) -> np.ndarray:
            nonlocal blocks
            probe = loop.evaluate(loop.voltages(omega, xj))
            blocks += probe.blocks
            return loop.to_vector(probe.R)

        J = probe_jacobian(measure, x, r, bcfg.probe_size)
        probes = len(x)
        B = invert_jacobian(J)
    else:
        B = bcfg.identity_scale * np.eye(len(x))

    state = BroydenState(B)
    history = [ev.norm]
    iterations = 0
    while ev.norm >= cfg.convergence_tol and iterations < cfg.max_iter:
        x_next, state = broyden_step(state, x, r, bcfg.damping)
        step = x_next - x
        scale = 1.0
        for halving in range(bcfg.max_halvings + 1):
            trial = loop.evaluate(loop.voltages(omega, x + scale * step))
            iterations += 1
            blocks += trial.blocks
            if trial.norm <= ev.norm or halving == bcfg.max_halvings or iterations >= cfg.max_iter:
                break
            logger.debug("%.2f Hz: residual grew to %.4g mm, halving step", khz_to_hz(omega), trial.norm)
            scale *= 0.5
        ev = trial
        x = ev.V.to_real()
        r = loop.to_vector(ev.R)
        history.append(ev.norm)
        logger.debug("%.2f Hz iteration %d: |R| = %.5g mm", khz_to_hz(omega), iterations, ev.norm)

    converged = ev.norm < cfg.convergence_tol
    if converged:
        logger.info(
            "%.2f Hz converged: |R| = %.4g mm in %d iterations (+%d probes)",
            khz_to_hz(omega), ev.norm, iterations, probes,
        )
    else:
        logger.warning("%.2f Hz not converged after %d iterations: |R| = %.4g mm", khz_to_hz(omega), iterations, ev.norm)

    U_N, F_NS = loop.implied(ev)
    if converged:
        sync = sync_metrics(U_N, F_NS, ev.U_P, ev.F_P)
    else:
        sync = {name: {"delay_ms": None, "amplification_pct": None} for name in FORCE_CHANNELS + DISPLACEMENT_CHANNELS}
    reference = reference_response(numerical, rig.ps, omega, cfg.n_harmonics)
    # secant history is tied to this frequency; only the estimate carries over
    final = broyden_update(state, x, r).B if iterations else state.B
    return SweepRecord(
        omega=omega,
        V=ev.V,
        U_P=ev.U_P,
        F_P=ev.F_P,
        U_N=U_N,
        F_N=F_NS,
        residual=displacement_residual(ev.R, numerical.stiffness_set(omega, cfg.n_harmonics)),
        residual_norm=ev.norm,
        iterations=iterations,
        probes=probes,
        blocks=blocks,
        converged=converged,
        forcing=numerical.forcing,
        sync=sync,
        reference=reference,
        norm_history=history,
        jacobian=final,
        window=ev.window,
    )


def sweep(
    rig: VirtualRig,
    omegas: Sequence[float],
    cfg: CouplerConfig,
    numerical: NumericalSubstructure,
    V0: Optional[HarmonicVector] = None,
) -> list[SweepRecord]:
    """Sequential sweep warm-started from the previous converged point."""
    omegas = list(omegas)
    if any(b < a for a, b in zip(omegas, omegas[1:])):
        raise InvalidArgumentError("sweep frequencies must be sorted")
    records: list[SweepRecord] = []
    V, jacobian = V0, None
    for omega in omegas:
        record = solve_point(rig, omega, V, cfg, numerical, jacobian)
        records.append(record)
        if record.converged:
            V, jacobian = record.V, record.jacobian
    n_conv = sum(r.converged for r in records)
    logger.info("sweep finished: %d/%d points converged", n_conv, len(records))
    return records


async def sweep_parallel(
    rig_factory: Callable[[], VirtualRig],
    omegas: Sequence[float],
    cfg: CouplerConfig,
    numerical: NumericalSubstructure,
) -> list[SweepRecord]:
    """Verification sweep: one cold-started rig per frequency, run in worker threads."""

    def run(omega: float) -> SweepRecord:
        return solve_point(rig_factory(), omega, None, cfg, numerical)

    # warm the shared condensation cache before fanning out
    for omega in omegas:
        numerical.stiffness_set(omega, cfg.n_harmonics)
    records = await asyncio.gather(*(asyncio.to_thread(run, w) for w in omegas))
    return sorted(records, key=lambda r: r.omega)


@dataclass(frozen=True)
class DampingEstimate:
    peak_hz: float
    peak: float
    zeta: Optional[float]


def estimate_damping(freqs_hz: Sequence[float], amplitudes: Sequence[float]) -> DampingEstimate:
    """Peak and half-power damping ratio of a sampled amplitude curve.

    ``zeta`` is None when the curve does not fall below peak/sqrt(2) on
    both sides of the peak inside the sampled range.
    """
    f = np.asarray(freqs_hz, dtype=float)
    a = np.asarray(amplitudes, dtype=float)
    if f.size < 3 or f.size != a.size:
        raise InvalidArgumentError("need at least three matching frequency/amplitude samples")
    i = int(np.argmax(a))
    peak = float(a[i])
    level = peak / math.sqrt(2.0)

    def crossing(indices) -> Optional[float]:
        prev = i
        for j in indices:
            if a[j] < level:
                return float(np.interp(level, [a[j], a[prev]], [f[j], f[prev]]))
            prev = j
        return None

    lo = crossing(range(i - 1, -1, -1))
    hi = crossing(range(i + 1, len(a)))
    zeta = None if lo is None or hi is None else (hi - lo) / (2.0 * f[i])
    return DampingEstimate(float(f[i]), peak, zeta)


def build_numerical(part: Partition, ps: SubModel, cfg: CouplerConfig, omegas: Sequence[float]) -> NumericalSubstructure:
    """Numerical substructure with the forcing from config or calibrated to the target amplitude."""
    numerical = NumericalSubstructure(part, cfg.forcing_amplitude or 1.0, cfg.forcing_position)
    if cfg.forcing_amplitude is None:
        numerical = numerical.with_forcing(calibrate_forcing(numerical, ps, omegas, cfg.target_amplitude))
    return numerical


def calibrate_rig_noise(rig: VirtualRig, numerical: NumericalSubstructure, omega: float) -> float:
    """Scale the rig noise to the gauge signal of the reference interface motion at ``omega``."""
    U = reference_response(numerical, rig.ps, omega)
    return rig.calibrate_noise(omega, U.harmonic(1))
