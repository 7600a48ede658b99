"""
Virtual test rig for the physical substructure.

The physical beam (free-free P-side model) has its interface section held by
a rigid clamp of given mass and rotary inertia. The clamp rests on two
support springs and dashpots and is driven by two shakers at the front and
back lever arms. The rig measures two laser displacements and two strain
gauges near the clamp; the gauges pick up mains and white noise and pass
through a second-order anti-aliasing filter.

Time integration is Newmark average acceleration at the acquisition rate.
Each shaker is a static gain with a first-order lag and an optional delay
of whole samples. The voltage applied for step n+1 is the command sampled
at t_{n+1}, held over the step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Literal, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.signal
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..config import (
    ACTUATOR_GAIN,
    ACTUATOR_LAG,
    CLAMP_DASHPOT,
    CLAMP_INERTIA,
    CLAMP_MASS,
    CLAMP_SPRING,
    DEFAULT_SEED,
    FILTER_CUTOFF,
    FILTER_DAMPING,
    GAUGE_POSITION_1,
    GAUGE_POSITION_2,
    COMPENSATION_ANGLE,
    LASER_SEPARATION,
    LEVER_ARM_BACK,
    LEVER_ARM_FRONT,
    MAINS_FREQUENCY,
    MAINS_RATIO,
    SAMPLE_PERIOD,
    WHITE_NOISE_RATIO,
)
from ..core import InvalidArgumentError, NumericalFailureError, period_samples
from .harmonics import DISPLACEMENT_CHANNELS, FORCE_CHANNELS, HarmonicVector, period_average
from .substructuring import SubModel

logger = logging.getLogger("hybrid_beam.rig")


class ClampConfig(BaseModel):
    """Rigid clamp carried by the shakers (kg, kg·mm², kN/mm, kN·ms/mm, mm)."""

    model_config = ConfigDict(extra="forbid")

    mass: float = Field(CLAMP_MASS, gt=0, description="Clamp mass (kg)")
    inertia: float = Field(CLAMP_INERTIA, gt=0, description="Rotary inertia about the interface (kg·mm²)")
    spring_front: float = Field(CLAMP_SPRING, ge=0, description="Front support spring (kN/mm)")
    spring_back: float = Field(CLAMP_SPRING, ge=0, description="Back support spring (kN/mm)")
    dashpot_front: float = Field(CLAMP_DASHPOT, ge=0, description="Front support dashpot (kN·ms/mm)")
    dashpot_back: float = Field(CLAMP_DASHPOT, ge=0, description="Back support dashpot (kN·ms/mm)")
    lever_front: float = Field(LEVER_ARM_FRONT, gt=0, description="Front shaker lever arm (mm)")
    lever_back: float = Field(LEVER_ARM_BACK, gt=0, description="Back shaker lever arm (mm)")
    friction: float = Field(0.0, ge=0, description="Coulomb bearing friction force (kN), 0 disables")
    friction_velocity: float = Field(1e-3, gt=0, description="Velocity smoothing the friction sign (mm/ms)")


class ActuatorConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    gain: float = Field(ACTUATOR_GAIN, gt=0, description="Static gain (kN/V)")
    lag: float = Field(ACTUATOR_LAG, ge=0, description="First-order lag time constant (ms)")
    delay: float = Field(0.0, ge=0, description="Pure delay (ms), rounded to whole samples")


class SensorConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    laser_separation: float = Field(LASER_SEPARATION, gt=0, description="d_l (mm)")
    gauge_1: float = Field(GAUGE_POSITION_1, gt=0, description="d_1 from the interface (mm)")
    gauge_2: float = Field(GAUGE_POSITION_2, gt=0, description="d_2 from the interface (mm)")
    strain_to_moment: Optional[float] = Field(
        None, gt=0, description="c (kN·mm); derived as 2EI/h when omitted"
    )
    force_sensing: Literal["gauges", "reaction"] = Field(
        "gauges", description="Interface force from the gauges or from the exact reaction"
    )

    @model_validator(mode="after")
    def _gauge_order(self):
        if not self.gauge_2 > self.gauge_1:
            raise ValueError("gauge_2 must be farther from the interface than gauge_1")
        return self


class NoiseConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    enabled: bool = True
    mains_amplitude: Optional[float] = Field(
        None, ge=0, description="T_N in strain units; calibrated from mains_ratio when omitted"
    )
    mains_ratio: float = Field(MAINS_RATIO, ge=0, description="T_N over the gauge signal amplitude")
    mains_frequency: float = Field(MAINS_FREQUENCY, gt=0, description="Mains frequency (kHz)")
    mains_phase: float = Field(0.0, description="phi_N (rad)")
    mains_gains: tuple[float, float] = Field((1.0, 1.0), description="Mains pick-up per gauge")
    white_sigma: Optional[float] = Field(None, ge=0, description="White noise sigma in strain units")
    white_ratio: float = Field(WHITE_NOISE_RATIO, ge=0, description="sigma over the gauge signal amplitude")
    seed: int = Field(DEFAULT_SEED, ge=0)


class FilterConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    enabled: bool = True
    type: Literal["lowpass2"] = "lowpass2"
    cutoff: float = Field(FILTER_CUTOFF, gt=0, description="Cut-off frequency (kHz)")
    damping: float = Field(FILTER_DAMPING, gt=0, description="Damping ratio of the second-order section")
    reported_lag: float = Field(COMPENSATION_ANGLE, ge=0, description="Nominal phase lag in the operating band (rad)")


class RigConfig(BaseModel):
    """Parameters of the virtual rig; the physical beam model is bound at construction."""

    model_config = ConfigDict(extra="forbid")

    clamp: ClampConfig = Field(default_factory=ClampConfig)
    actuators: list[ActuatorConfig] = Field(default_factory=lambda: [ActuatorConfig(), ActuatorConfig()])
    sensors: SensorConfig = Field(default_factory=SensorConfig)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    filter: FilterConfig = Field(default_factory=FilterConfig)
    dt: float = Field(SAMPLE_PERIOD, gt=0, description="Sample period (ms)")
    damping_scale: float = Field(1.0, gt=0, description="Multiplier on the physical beam damping")
    prime_steady_state: bool = Field(
        False, description="Skip the simulated transient: start each voltage update on the exact periodic steady state"
    )

    @field_validator("actuators")
    @classmethod
    def _two_shakers(cls, value):
        if len(value) != 2:
            raise ValueError("the rig has exactly two shakers (front, back)")
        return value

    def ideal(self) -> "RigConfig":
        """Noise-free, lag-free, filter-free copy with exact reaction sensing."""
        data = self.model_dump()
        data["noise"]["enabled"] = False
        data["filter"]["enabled"] = False
        data["sensors"]["force_sensing"] = "reaction"
        for act in data["actuators"]:
            act["lag"] = 0.0
            act["delay"] = 0.0
        data["clamp"]["friction"] = 0.0
        return RigConfig.model_validate(data)


@dataclass(frozen=True)
class RigState:
    """Rig configuration at time ``t`` (ms).

    ``delay_line`` holds the last commanded voltages of each shaker, oldest
    first; ``filter_state`` is the direct-form state of each gauge filter.
    """

    q: np.ndarray
    v: np.ndarray
    a: np.ndarray
    force: np.ndarray
    delay_line: np.ndarray
    filter_state: np.ndarray
    t: float


@dataclass(frozen=True)
class SensorFrame:
    """Raw channels at one sampling instant."""

    l1: float
    l2: float
    eps1: float
    eps2: float
    t: float
    reaction: tuple[float, float] = (0.0, 0.0)


@dataclass
class MeasurementWindow:
    """Raw samples over exactly ``n`` periods, sample ``j`` at phase ``j*dt``."""

    omega: float
    n: int
    dt: float
    t: np.ndarray
    l1: np.ndarray
    l2: np.ndarray
    eps1: np.ndarray
    eps2: np.ndarray
    voltages: np.ndarray
    reaction: np.ndarray

    @property
    def period(self) -> int:
        return len(self.t) // self.n

    @property
    def averaged(self) -> dict[str, np.ndarray]:
        """Period-synchronous average of every raw channel."""
        return {
            name: period_average(getattr(self, name), self.period)
            for name in ("l1", "l2", "eps1", "eps2")
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t_ms": self.t,
                "l1_mm": self.l1,
                "l2_mm": self.l2,
                "eps1": self.eps1,
                "eps2": self.eps2,
                "v_front_V": self.voltages[:, 0],
                "v_back_V": self.voltages[:, 1],
            }
        )


@dataclass(frozen=True)
class SteadyResponse:
    """Periodic steady state of the linear rig for a voltage harmonic vector."""

    omega: float
    q: np.ndarray
    force: np.ndarray
    interface: HarmonicVector
    reaction: HarmonicVector
    strain: np.ndarray
    filtered_strain: np.ndarray


def reconstruct_displacement(l1, l2, d_l: float):
    """Interface deflection and rotation from the two lasers: ``u = l1``, ``phi = (l1 - l2)/d_l``."""
    if not d_l > 0:
        raise InvalidArgumentError(f"laser separation must be positive, got {d_l}")
    l1 = np.asarray(l1)
    l2 = np.asarray(l2)
    u = l1
    phi = (l1 - l2) / d_l
    if u.ndim == 0:
        return u.item(), phi.item()
    return u, phi


def reconstruct_forces(eps1, eps2, d1: float, d2: float, c: float):
    """Shear and bending moment at the interface from two gauge strains.

    ``T = c (eps2 - eps1)/(d2 - d1)`` by finite difference of the moment
    field ``m = c*eps``, and ``M = c (eps1 - d1 (eps2 - eps1)/(d2 - d1))`` by
    linear extrapolation to the interface.

    Sign convention: gauges sit on the top fibre, ``eps = (h/2) w''``, and
    w is positive upward. A static tip load of magnitude P acting in +w on
    the clamped physical beam therefore reads ``T = -P`` and ``M = P L_P``:
    |T| equals P and the minus sign is the gauge orientation, not a loss of
    load. The generalized interface force fed back to the numerical side is
    ``(T, -M)``, which is the reaction the cut exerts on the physical part.
    """
    if not d2 > d1:
        raise InvalidArgumentError(f"gauge positions must satisfy d2 > d1, got {d1}, {d2}")
    eps1 = np.asarray(eps1)
    eps2 = np.asarray(eps2)
    slope = (eps2 - eps1) / (d2 - d1)
    T = c * slope
    M = c * (eps1 - d1 * slope)
    if T.ndim == 0:
        return T.item(), M.item()
    return T, M


def noise_bound(T_N: float, rho_N: float, phi_N: float, n: int) -> tuple[float, float]:
    """Error of the cosine and sine force coefficients caused by a mains sinusoid.

    A disturbance ``T_N sin(rho_N Omega t + phi_N)`` averaged over ``n``
    periods of ``Omega`` biases the coefficients by

        err_C = 2 T_N/(n pi) * rho/(rho² - 1) * sin(n pi rho + phi) sin(n pi rho)
        err_S = 2 T_N/(n pi) *   1/(rho² - 1) * cos(n pi rho + phi) sin(n pi rho)

    Raises:
        InvalidArgumentError: if ``rho_N == 1`` or ``n < 1``.
    """
    if n < 1 or int(n) != n:
        raise InvalidArgumentError(f"n must be a positive integer, got {n}")
    if math.isclose(rho_N, 1.0, rel_tol=0.0, abs_tol=1e-12):
        raise InvalidArgumentError("mains frequency coincides with the fundamental")
    factor = 2.0 * T_N / (n * math.pi) / (rho_N**2 - 1.0)
    arg = n * math.pi * rho_N
    s = math.sin(arg)
    if rho_N == int(rho_N):
        s = 0.0
    err_c = factor * rho_N * math.sin(arg + phi_N) * s
    err_s = factor * math.cos(arg + phi_N) * s
    return err_c, err_s


def noise_bound_limit(T_N: float, rho_N: float, n: int) -> float:
    """Phase-independent bound on both coefficient errors."""
    return 2.0 * T_N / (n * math.pi) * max(rho_N, 1.0) / abs(rho_N**2 - 1.0)


class VirtualRig:
    """Single-threaded time-stepping simulation of the physical side.

    Args:
        ps_part: free-free physical substructure; its interface DOFs are the
            clamp coordinates.
        config: rig parameters.
    """

    def __init__(self, ps_part: SubModel, config: Optional[RigConfig] = None):
        self.config = config or RigConfig()
        cfg = self.config
        self.dt = cfg.dt
        self.ps = ps_part.with_damping(cfg.damping_scale)
        props = self.ps.model.props
        iu, ip = (int(j) for j in self.ps.iface)
        self.iface = np.array([iu, ip])

        clamp = cfg.clamp
        # generalized interface force per unit shaker force: (front, back)
        self.B = np.array([[1.0, 1.0], [clamp.lever_front, -clamp.lever_back]])
        support_k = self.B @ np.diag([clamp.spring_front, clamp.spring_back]) @ self.B.T
        support_c = self.B @ np.diag([clamp.dashpot_front, clamp.dashpot_back]) @ self.B.T

        n = self.ps.model.ndof
        self.M = self.ps.M.copy()
        self.C = self.ps.C.copy()
        self.K = self.ps.K.copy()
        ix = np.ix_(self.iface, self.iface)
        self.M[ix] += np.diag([clamp.mass, clamp.inertia])
        self.C[ix] += support_c
        self.K[ix] += support_k
        self.ndof = n

        dt = self.dt
        self._c0 = 4.0 / dt**2
        self._c1 = 2.0 / dt
        k_eff = self.K + self._c1 * self.C + self._c0 * self.M
        try:
            self._lu = scipy.linalg.lu_factor(k_eff)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise NumericalFailureError(f"effective stiffness factorisation failed: {e}") from e

        sensors = cfg.sensors
        self.c = sensors.strain_to_moment or 2.0 * props.EI / props.h
        self._gauges = np.vstack(
            [self._curvature_row(sensors.gauge_1), self._curvature_row(sensors.gauge_2)]
        ) * (props.h / 2.0)
        self._reaction_rows = (self.ps.M[self.iface], self.ps.C[self.iface], self.ps.K[self.iface])

        self._lag = np.array([math.exp(-dt / a.lag) if a.lag > 0 else 0.0 for a in cfg.actuators])
        self._gain = np.array([a.gain for a in cfg.actuators])
        self._delay = np.array([int(round(a.delay / dt)) for a in cfg.actuators])
        self._line_length = max(1, int(self._delay.max()))

        f = cfg.filter
        w_c = 2.0 * math.pi * f.cutoff
        self._analog = ([w_c**2], [1.0, 2.0 * f.damping * w_c, w_c**2])
        self._b, self._a = scipy.signal.bilinear(*self._analog, fs=1.0 / dt)
        self._zi_unit = scipy.signal.lfilter_zi(self._b, self._a)

        noise = cfg.noise
        self.mains_amplitude = noise.mains_amplitude or 0.0
        self.white_sigma = noise.white_sigma or 0.0
        self._rng = np.random.default_rng(noise.seed)

        self.state = self.initial_state()
        self._omega: Optional[float] = None
        self._origin = 0.0
        logger.debug(
            "rig: %d DOFs, c=%.4g kN·mm, lag factors %s, delays %s samples",
            n, self.c, self._lag, self._delay,
        )

    def _curvature_row(self, x: float) -> np.ndarray:
        """Row mapping the DOFs to w''(x), x measured from the interface."""
        model = self.ps.model
        coords = model.node_coords - model.node_coords[0]
        if not 0.0 <= x < coords[-1]:
            raise InvalidArgumentError(f"gauge at {x} mm lies outside the physical beam")
        e = int(np.searchsorted(coords, x, side="right") - 1)
        e = min(max(e, 0), model.n_elements - 1)
        le = coords[e + 1] - coords[e]
        xi = (x - coords[e]) / le
        shape = np.array(
            [(-6.0 + 12.0 * xi) / le**2, (-4.0 + 6.0 * xi) / le, (6.0 - 12.0 * xi) / le**2, (-2.0 + 6.0 * xi) / le]
        )
        row = np.zeros(model.ndof)
        dofs = [model.dof_map[e, 0], model.dof_map[e, 1], model.dof_map[e + 1, 0], model.dof_map[e + 1, 1]]
        for weight, dof in zip(shape, dofs):
            if dof >= 0:
                row[dof] += weight
        return row

    def initial_state(self) -> RigState:
        n = self.ndof
        return RigState(
            q=np.zeros(n),
            v=np.zeros(n),
            a=np.zeros(n),
            force=np.zeros(2),
            delay_line=np.zeros((2, self._line_length)),
            filter_state=np.zeros((2, len(self._a) - 1)),
            t=0.0,
        )

    def reset(self):
        """Back to rest at t = 0 with the noise generator reseeded."""
        self.state = self.initial_state()
        self._rng = np.random.default_rng(self.config.noise.seed)
        self._omega = None
        self._origin = 0.0

    @property
    def input_matrix(self) -> np.ndarray:
        """Generalized interface force per shaker volt (static gains)."""
        return self.B @ np.diag(self._gain)

    @property
    def filters_forces(self) -> bool:
        """True when the interface forces reach the coupler through the gauge filter."""
        cfg = self.config
        return cfg.sensors.force_sensing == "gauges" and cfg.filter.enabled

    def energy(self, state: RigState) -> float:
        """Kinetic plus elastic energy of the rig."""
        return 0.5 * float(state.v @ self.M @ state.v) + 0.5 * float(state.q @ self.K @ state.q)

    def lasers(self, q: np.ndarray) -> tuple[float, float]:
        u, phi = q[self.iface]
        return float(u), float(u - self.config.sensors.laser_separation * phi)

    def strains(self, q: np.ndarray) -> np.ndarray:
        """Noise-free gauge strains of configuration ``q``."""
        return self._gauges @ q

    def reaction(self, q: np.ndarray, v: np.ndarray, a: np.ndarray) -> np.ndarray:
        """Generalized interface force exerted by the clamp on the beam."""
        M, C, K = self._reaction_rows
        return M @ a + C @ v + K @ q

    def _advance(self, state: RigState, v: np.ndarray):
        """Mechanical part of one step: actuators, clamp and beam."""
        cfg = self.config
        line = state.delay_line
        applied = v.copy()
        for j, d in enumerate(self._delay):
            if d > 0:
                applied[j] = line[j, self._line_length - d]
        line = np.roll(line, -1, axis=1)
        line[:, -1] = v
        force = self._lag * state.force + (1.0 - self._lag) * self._gain * applied

        load = np.zeros(self.ndof)
        load[self.iface] = self.B @ force
        if cfg.clamp.friction > 0:
            vu = state.v[self.iface[0]]
            load[self.iface[0]] -= cfg.clamp.friction * math.tanh(vu / cfg.clamp.friction_velocity)

        rhs = load + self.M @ (self._c0 * state.q + 2.0 * self._c1 * state.v + state.a)
        rhs += self.C @ (self._c1 * state.q + state.v)
        q = scipy.linalg.lu_solve(self._lu, rhs, check_finite=False)
        if not np.all(np.isfinite(q)):
            raise NumericalFailureError(f"rig integration diverged at t={state.t + self.dt:.4f} ms")
        vel = self._c1 * (q - state.q) - state.v
        acc = self._c0 * (q - state.q) - 2.0 * self._c1 * state.v - state.a
        return RigState(q, vel, acc, force, line, state.filter_state, state.t + self.dt)

    def _sense(self, t: np.ndarray, eps: np.ndarray, zi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Noise and anti-aliasing filter on gauge strains of shape (samples, 2)."""
        noise = self.config.noise
        if noise.enabled:
            mains = self.mains_amplitude * np.sin(2.0 * math.pi * noise.mains_frequency * t + noise.mains_phase)
            eps = eps + mains[:, None] * np.asarray(noise.mains_gains)[None, :]
            eps = eps + self.white_sigma * self._rng.standard_normal(eps.shape)
        if self.config.filter.enabled:
            eps, zi = scipy.signal.lfilter(self._b, self._a, eps, axis=0, zi=zi.T)
            zi = zi.T
        return eps, zi

    def step(self, state: RigState, v: Sequence[float]) -> tuple[RigState, SensorFrame]:
        """Advance one sample with shaker voltages ``v`` (front, back)."""
        new = self._advance(state, np.asarray(v, dtype=float))
        eps, zi = self._sense(np.array([new.t]), self.strains(new.q)[None, :], state.filter_state)
        new = replace(new, filter_state=zi)
        l1, l2 = self.lasers(new.q)
        reaction = self.reaction(new.q, new.v, new.a)
        frame = SensorFrame(l1, l2, float(eps[0, 0]), float(eps[0, 1]), new.t, (float(reaction[0]), float(reaction[1])))
        return new, frame

    def voltage(self, V: HarmonicVector, t_rel) -> np.ndarray:
        """Shaker voltages at time(s) ``t_rel`` after the phase origin, shape (..., 2)."""
        t_rel = np.asarray(t_rel, dtype=float)
        k = np.arange(V.n_harmonics + 1)
        phasor = np.exp(1j * 2.0 * math.pi * V.omega * np.multiply.outer(k, t_rel))
        return np.moveaxis(np.tensordot(V.coeffs, phasor, axes=(1, 0)).real, 0, -1)

    def _align(self, omega: float) -> int:
        """Number of samples per period; a new frequency moves the phase origin to the next sample."""
        period = period_samples(omega, self.dt)
        if self._omega is None or not math.isclose(omega, self._omega, rel_tol=1e-12):
            self._omega = omega
            self._origin = self.state.t + self.dt
        return period

    def _run(self, V: HarmonicVector, samples: int) -> dict[str, np.ndarray]:
        state = self.state
        t_rel = state.t + self.dt * np.arange(1, samples + 1) - self._origin
        volts = self.voltage(V, t_rel)
        Q = np.empty((samples, self.ndof))
        Vel = np.empty_like(Q)
        Acc = np.empty_like(Q)
        for j in range(samples):
            state = self._advance(state, volts[j])
            Q[j], Vel[j], Acc[j] = state.q, state.v, state.a
        t = self.state.t + self.dt * np.arange(1, samples + 1)
        eps, zi = self._sense(t, Q @ self._gauges.T, self.state.filter_state)
        self.state = replace(state, filter_state=zi)
        M, C, K = self._reaction_rows
        u = Q[:, self.iface[0]]
        phi = Q[:, self.iface[1]]
        return {
            "t": t,
            "l1": u,
            "l2": u - self.config.sensors.laser_separation * phi,
            "eps1": eps[:, 0],
            "eps2": eps[:, 1],
            "voltages": volts,
            "reaction": Acc @ M.T + Vel @ C.T + Q @ K.T,
        }

    def measure_window(self, V: HarmonicVector, omega: float, n: int) -> MeasurementWindow:
        """Drive the rig with ``V`` and record exactly ``n`` periods of ``omega``.

        The window starts on a period boundary of the current phase origin;
        if the rig is mid-period it first runs to the next boundary.
        """
        if n < 1:
            raise InvalidArgumentError(f"window must span at least one period, got n={n}")
        if not math.isclose(V.omega, omega, rel_tol=1e-12):
            raise InvalidArgumentError("voltage harmonics are not at the measured frequency")
        period = self._align(omega)
        offset = int(round((self.state.t + self.dt - self._origin) / self.dt)) % period
        if offset:
            self._run(V, period - offset)
        data = self._run(V, n * period)
        return MeasurementWindow(omega=omega, n=n, dt=self.dt, **data)

    def filter_response(self, omega: float, discrete: bool = True) -> complex:
        """Complex gain of the gauge filter at ``omega`` (kHz), 1 when disabled."""
        if not self.config.filter.enabled:
            return 1.0 + 0.0j
        w = 2.0 * math.pi * omega
        if discrete:
            _, h = scipy.signal.freqz(self._b, self._a, worN=[w * self.dt])
        else:
            _, h = scipy.signal.freqs(*self._analog, worN=[w])
        return complex(h[0])

    def identify_filter_lag(self, omega: float) -> float:
        """Phase lag (rad) of the gauge filter at ``omega`` (kHz)."""
        return float(-np.angle(self.filter_response(omega)))

    def _actuator_gain(self, omega: float, k: int, discrete: bool) -> np.ndarray:
        cfg = self.config
        w = 2.0 * math.pi * omega * k
        if discrete:
            z = np.exp(1j * w * self.dt)
            lag = (1.0 - self._lag) * z / (z - self._lag)
            return self._gain * lag * z ** (-self._delay.astype(float))
        taus = np.array([a.lag for a in cfg.actuators])
        delays = self._delay * self.dt
        return self._gain * np.exp(-1j * w * delays) / (1.0 + 1j * w * taus)

    def steady_response(self, V: HarmonicVector, omega: Optional[float] = None, discrete: bool = True) -> SteadyResponse:
        """Periodic steady state of the linear rig driven by ``V``.

        With ``discrete=True`` this is the exact orbit of the sampled system
        (Newmark average acceleration is the trapezoidal rule); otherwise the
        continuous-time transfer functions are used. Friction is ignored.
        """
        omega = V.omega if omega is None else omega
        n_h = V.n_harmonics
        q = np.zeros((self.ndof, n_h + 1), dtype=complex)
        force = np.zeros((2, n_h + 1), dtype=complex)
        filt = np.zeros((2, n_h + 1), dtype=complex)
        sigma_all = np.zeros(n_h + 1, dtype=complex)
        for k in range(n_h + 1):
            w = 2.0 * math.pi * omega * k
            if k == 0:
                sigma = 0.0j
                gain = self._gain.astype(complex)
            elif discrete:
                sigma = 2.0j / self.dt * math.tan(w * self.dt / 2.0)
                gain = self._actuator_gain(omega, k, True)
            else:
                sigma = 1j * w
                gain = self._actuator_gain(omega, k, False)
            sigma_all[k] = sigma
            force[:, k] = gain * V.coeffs[:, k]
            load = np.zeros(self.ndof, dtype=complex)
            load[self.iface] = self.B @ force[:, k]
            D = sigma * sigma * self.M + sigma * self.C + self.K
            try:
                q[:, k] = np.linalg.solve(D, load)
            except np.linalg.LinAlgError as e:
                raise NumericalFailureError(f"rig steady state singular at harmonic {k}") from e
            filt[:, k] = self.filter_response(omega * k, discrete) if k > 0 else 1.0
        strain = self._gauges @ q
        M, C, K = self._reaction_rows
        reaction = (sigma_all**2)[None, :] * (M @ q) + sigma_all[None, :] * (C @ q) + K @ q
        return SteadyResponse(
            omega=omega,
            q=q,
            force=force,
            interface=HarmonicVector(omega, DISPLACEMENT_CHANNELS, q[self.iface]),
            reaction=HarmonicVector(omega, FORCE_CHANNELS, reaction),
            strain=strain,
            filtered_strain=strain * filt,
        )

    def prime(self, V: HarmonicVector, omega: Optional[float] = None, preroll: int = 400):
        """Put the rig on its periodic orbit for ``V``, one sample before the phase origin."""
        omega = V.omega if omega is None else omega
        resp = self.steady_response(V, omega, discrete=True)
        self._omega = omega
        self._origin = self.state.t + self.dt
        k = np.arange(V.n_harmonics + 1)
        z = np.exp(1j * 2.0 * math.pi * omega * k * self.dt)
        sigma = np.array([0.0] + [2.0j / self.dt * math.tan(math.pi * omega * j * self.dt) for j in k[1:]])

        at = z ** -1
        q = (resp.q @ at).real
        vel = (resp.q @ (sigma * at)).real
        acc = (resp.q @ (sigma**2 * at)).real
        force = (resp.force @ at).real

        line = np.zeros((2, self._line_length))
        for j in range(self._line_length):
            line[:, j] = self.voltage(V, (j - self._line_length) * self.dt)

        zi = np.zeros((2, len(self._a) - 1))
        if self.config.filter.enabled:
            idx = np.arange(-preroll, 0)
            history = (resp.strain @ (z[:, None] ** idx[None, :])).real
            for ch in range(2):
                _, zi[ch] = scipy.signal.lfilter(
                    self._b, self._a, history[ch], zi=self._zi_unit * history[ch, 0]
                )
        self.state = RigState(q, vel, acc, force, line, zi, self.state.t)

    def calibrate_noise(self, omega: float, U_iface: Sequence[complex]) -> float:
        """Set noise levels relative to the gauge signal of interface motion ``U_iface``.

        The physical beam is moved by the prescribed first-harmonic interface
        motion; mains and white levels configured as None follow from
        ``mains_ratio`` and ``white_ratio``.

        Returns:
            float: the gauge signal amplitude used as reference.
        """
        s = 2j * math.pi * omega
        ps = self.ps
        D = s * s * ps.M + s * ps.C + ps.K
        b, i = ps.bulk, ps.iface
        q = np.zeros(self.ndof, dtype=complex)
        q[i] = np.asarray(U_iface, dtype=complex)
        q[b] = -np.linalg.solve(D[np.ix_(b, b)], D[np.ix_(b, i)] @ q[i])
        amplitude = float(np.max(np.abs(self._gauges @ q)))
        noise = self.config.noise
        if noise.mains_amplitude is None:
            self.mains_amplitude = noise.mains_ratio * amplitude
        if noise.white_sigma is None:
            self.white_sigma = noise.white_ratio * amplitude
        logger.info(
            "gauge signal %.3g, mains amplitude %.3g, white sigma %.3g",
            amplitude, self.mains_amplitude, self.white_sigma,
        )
        return amplitude

    def mains_error(self, window: MeasurementWindow) -> np.ndarray:
        """Closed-form shift of each gauge's first-harmonic coefficient caused by mains pick-up.

        The filter is taken in its steady state at the mains frequency, so
        the disturbance seen by the extraction is ``|H| T_N sin(...)`` with the
        filter phase added. Returns ``err_C - i err_S`` per gauge, zeros when
        the noise is disabled.
        """
        noise = self.config.noise
        if not noise.enabled or self.mains_amplitude == 0.0:
            return np.zeros(2, dtype=complex)
        h = self.filter_response(noise.mains_frequency)
        rho = noise.mains_frequency / window.omega
        phase = 2.0 * math.pi * noise.mains_frequency * float(window.t[0]) + noise.mains_phase + float(np.angle(h))
        errors = []
        for gain in noise.mains_gains:
            err_c, err_s = noise_bound(self.mains_amplitude * gain * abs(h), rho, phase, window.n)
            errors.append(complex(err_c, -err_s))
        return np.array(errors)

    def mains_limit(self, omega: float, n: int) -> float:
        """Phase-independent bound on :meth:`mains_error` for ``n`` periods of ``omega``."""
        noise = self.config.noise
        if not noise.enabled:
            return 0.0
        gain = max(abs(g) for g in noise.mains_gains)
        T_N = self.mains_amplitude * gain * abs(self.filter_response(noise.mains_frequency))
        return noise_bound_limit(T_N, noise.mains_frequency / omega, n)
