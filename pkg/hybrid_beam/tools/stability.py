"""
Delay stability of the hybrid beam.

With the same delay ``tau`` on every interface signal the hybrid structure
has the characteristic function

    C(s, alpha, tau) = det(D_N(s) + D_P(s) exp(-s tau))
                     = P0 + P1 x + P2 x²,   x = exp(-s tau),

evaluated through the 2x2 condensed matrices. ``C`` inherits the poles of
both condensations (the clamped-interface modes), so roots are searched on
the equivalent pole-free function

    C_reg = det(A(s, x)) / (det K_Nbb det K_Pbb),

the determinant of the full delayed block system, which equals
``C · det(D_Nbb)/det(K_Nbb) · det(D_Pbb)/det(K_Pbb)``.

Throughout this module ``alpha`` is the interface position as a fraction of
the beam length (0.5 is mid-span); it is snapped to the nearest interior node.
"""

from __future__ import annotations

import asyncio
import functools
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from ..config import (
    NEAR_POLE_CONDITION,
    STABILITY_DELTA_RANGE,
    STABILITY_FREQ_RANGE,
    STABILITY_TAU_MAX,
)
from ..core import HybridBeamError, InvalidArgumentError, NearPoleError
from .beam_fe import FEModel, node_at, pencil_eigenvalues
from .mdbm import CellBisection
from .substructuring import Partition, SubModel, condense, partition

logger = logging.getLogger("hybrid_beam.stability")

DELAY_FREE = "delay-free-continuation"
DELAY_BORN = "delay-born"
STABLE_UP_TO_RANGE = "stable-up-to-range"

ROOT_TOLERANCE = 1e-9
DEDUP_RADIUS = 1e-4
TERMS_CACHE_SIZE = 8192
WARNING_HISTORY = 256


@dataclass(frozen=True)
class SearchBox:
    """Rectangle of the complex plane: real part (rad/ms) and frequency (kHz)."""

    delta_range: tuple[float, float] = STABILITY_DELTA_RANGE
    f_range: tuple[float, float] = STABILITY_FREQ_RANGE

    def __post_init__(self):
        for lo, hi in (self.delta_range, self.f_range):
            if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
                raise InvalidArgumentError(f"invalid search box {self}")

    def contains(self, s: complex, slack: float = 1e-9) -> bool:
        (d0, d1), (f0, f1) = self.delta_range, self.f_range
        f = s.imag / (2.0 * math.pi)
        tol_d = slack * (d1 - d0)
        tol_f = slack * (f1 - f0)
        return d0 - tol_d <= s.real <= d1 + tol_d and f0 - tol_f <= f <= f1 + tol_f

    def distance(self, a: complex, b: complex) -> float:
        """Distance in coordinates normalised by the box extents."""
        width_d = self.delta_range[1] - self.delta_range[0]
        width_w = 2.0 * math.pi * (self.f_range[1] - self.f_range[0])
        return math.hypot((a.real - b.real) / width_d, (a.imag - b.imag) / width_w)


@dataclass(frozen=True)
class Resolution:
    """Initial grid cells per axis and refinement levels of the root search."""

    n_delta: int = 48
    n_f: int = 72
    levels: int = 3

    def __post_init__(self):
        if self.n_delta < 4 or self.n_f < 4:
            raise InvalidArgumentError("resolution must be at least 4 cells per axis")
        if self.levels < 0:
            raise InvalidArgumentError("refinement levels must be non-negative")


@dataclass(frozen=True)
class Root:
    """A root ``s = delta + 2*pi*i*f`` of the characteristic function."""

    s: complex
    tau: float
    alpha: float
    family: str
    residual: float = 0.0

    @property
    def delta(self) -> float:
        return self.s.real

    @property
    def f(self) -> float:
        return self.s.imag / (2.0 * math.pi)

    @property
    def unstable(self) -> bool:
        return self.s.real > 0.0

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "tau_ms": self.tau,
            "delta": self.delta,
            "f_khz": self.f,
            "family": self.family,
        }


@dataclass
class LocusCurve:
    """Roots of one branch followed over increasing delay."""

    family: str
    points: list[Root] = field(default_factory=list)


@dataclass(frozen=True)
class CriticalDelay:
    """Smallest delay giving an unstable root below the cut-off.

    ``crossing`` is ``"axis"`` (root on the imaginary axis below the cut-off),
    ``"cutoff"`` (unstable root entering through the cut-off frequency) or
    ``"stable-up-to-range"`` when no crossing was found; ``tau`` is then None.
    """

    alpha: float
    f_cutoff: float
    tau: Optional[float]
    crossing: str
    root: Optional[Root] = None

    @property
    def stable_up_to_range(self) -> bool:
        return self.tau is None


@dataclass(frozen=True)
class BoundaryPoint:
    alpha: float
    f_cutoff: float
    tau_crit: Optional[float]
    crossing: str
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "f_cutoff_khz": self.f_cutoff,
            "alpha": self.alpha,
            "tau_crit_ms": self.tau_crit,
            "crossing": self.crossing,
            "error": self.error or "",
        }


class _BlockSystem:
    """Delayed hybrid system over [N bulk | interface | P bulk].

    ``A(s, x) = G0(s) + x G1(s)`` where ``G1`` holds the P-side columns that
    multiply the delayed interface displacement.
    """

    def __init__(self, part: Partition):
        n_side, p_side = part.N_part, part.P_part
        n_nb, n_pb = len(n_side.bulk), len(p_side.bulk)
        size = n_nb + 2 + n_pb

        idx_n = np.empty(n_side.model.ndof, dtype=int)
        idx_n[n_side.bulk] = np.arange(n_nb)
        idx_n[n_side.iface] = n_nb + np.arange(2)
        idx_p = np.empty(p_side.model.ndof, dtype=int)
        idx_p[p_side.iface] = n_nb + np.arange(2)
        idx_p[p_side.bulk] = n_nb + 2 + np.arange(n_pb)

        delayed = np.zeros(p_side.model.ndof, dtype=bool)
        delayed[p_side.iface] = True

        self.G0 = []
        self.G1 = []
        for name in ("M", "C", "K"):
            g0 = np.zeros((size, size))
            g1 = np.zeros((size, size))
            g0[np.ix_(idx_n, idx_n)] += getattr(n_side, name)
            mat_p = getattr(p_side, name)
            g0[np.ix_(idx_p, idx_p)] += mat_p * ~delayed[None, :]
            g1[np.ix_(idx_p, idx_p)] += mat_p * delayed[None, :]
            self.G0.append(g0)
            self.G1.append(g1)

        self.log_static = self._static_logdet(n_side) + self._static_logdet(p_side)

    @staticmethod
    def _static_logdet(side: SubModel) -> float:
        b = side.bulk
        if len(b) == 0:
            return 0.0
        sign, logabs = np.linalg.slogdet(side.K[np.ix_(b, b)])
        return float(logabs)

    @staticmethod
    def _eval(mats, s):
        M, C, K = mats
        return s * s * M + s * C + K

    @staticmethod
    def _deriv(mats, s):
        M, C, _ = mats
        return 2.0 * s * M + C

    def matrix(self, s: complex, tau: float) -> tuple[np.ndarray, complex]:
        x = np.exp(-s * tau)
        return self._eval(self.G0, s) + x * self._eval(self.G1, s), x

    def value(self, s: complex, tau: float, lu=None) -> complex:
        if lu is None:
            A, _ = self.matrix(s, tau)
            lu = scipy.linalg.lu_factor(A, check_finite=False)
        LU, piv = lu
        swaps = int(np.count_nonzero(piv != np.arange(len(piv))))
        log_det = np.sum(np.log(np.diag(LU).astype(complex))) + 1j * math.pi * swaps
        return complex(np.exp(log_det - self.log_static))

    def newton_step(self, s: complex, tau: float) -> tuple[complex, complex]:
        """Regularised value at ``s`` and the Newton correction ``-C/C'``."""
        A, x = self.matrix(s, tau)
        lu = scipy.linalg.lu_factor(A, check_finite=False)
        value = self.value(s, tau, lu)
        dA = (
            self._deriv(self.G0, s)
            + x * self._deriv(self.G1, s)
            - tau * x * self._eval(self.G1, s)
        )
        trace = np.trace(scipy.linalg.lu_solve(lu, dA, check_finite=False))
        if trace == 0 or not np.isfinite(trace):
            return value, complex("nan")
        return value, complex(-1.0 / trace)


class DelayCharacteristic:
    """Characteristic function of the delayed hybrid beam for any interface position.

    Partitions and block systems are cached per interface node; the expansion
    terms (P0, P1, P2) per Laplace point in an LRU cache of ``cache_size``
    entries. Near-pole exclusions are counted in ``pole_hits`` and the latest
    ``WARNING_HISTORY`` of them kept in ``warnings``.

    An instance is not shared between threads; use :meth:`fork` for workers
    and :meth:`absorb` to collect their exclusions.
    """

    def __init__(self, model: FEModel, threshold: float = NEAR_POLE_CONDITION, cache_size: int = TERMS_CACHE_SIZE):
        self.model = model
        self.threshold = threshold
        self.cache_size = cache_size
        self._partitions: dict[int, Partition] = {}
        self._blocks: dict[int, _BlockSystem] = {}
        self._terms = functools.lru_cache(maxsize=cache_size)(self._expansion)
        self.warnings: deque[dict] = deque(maxlen=WARNING_HISTORY)
        self.pole_hits = 0

    def fork(self) -> DelayCharacteristic:
        """Fresh instance on the same model, for another thread."""
        return DelayCharacteristic(self.model, self.threshold, self.cache_size)

    def absorb(self, other: DelayCharacteristic):
        self.pole_hits += other.pole_hits
        self.warnings.extend(other.warnings)

    def record_pole(self, record: dict):
        self.pole_hits += 1
        self.warnings.append(record)

    def cache_info(self):
        return self._terms.cache_info()

    def node_for(self, alpha: float) -> int:
        if not 0.0 < alpha < 1.0:
            raise InvalidArgumentError(f"alpha must lie in (0, 1), got {alpha}")
        node = node_at(self.model, self.model.node_coords[0] + alpha * self.model.length)
        return int(min(max(node, 1), self.model.n_nodes - 2))

    def _partition_at(self, node: int) -> Partition:
        if node not in self._partitions:
            self._partitions[node] = partition(self.model, node)
        return self._partitions[node]

    def partition(self, alpha: float) -> Partition:
        return self._partition_at(self.node_for(alpha))

    def snapped_alpha(self, alpha: float) -> float:
        return self.partition(alpha).position

    def blocks(self, alpha: float) -> _BlockSystem:
        node = self.node_for(alpha)
        if node not in self._blocks:
            self._blocks[node] = _BlockSystem(self.partition(alpha))
        return self._blocks[node]

    def terms(self, s: complex, alpha: float) -> tuple[complex, complex, complex]:
        """Expansion terms ``(P0, P1, P2)`` at ``s``."""
        return self._terms(complex(s), self.node_for(alpha))

    def _expansion(self, s: complex, node: int) -> tuple[complex, complex, complex]:
        part = self._partition_at(node)
        dn = condense(part.N_part, s, self.threshold).D
        dp = condense(part.P_part, s, self.threshold).D
        p0 = dn[0, 0] * dn[1, 1] - dn[0, 1] * dn[1, 0]
        p2 = dp[0, 0] * dp[1, 1] - dp[0, 1] * dp[1, 0]
        p1 = dn[0, 0] * dp[1, 1] + dn[1, 1] * dp[0, 0] - dn[0, 1] * dp[1, 0] - dn[1, 0] * dp[0, 1]
        return complex(p0), complex(p1), complex(p2)

    def regularized(self, s: complex, alpha: float, tau: float) -> complex:
        return self.blocks(alpha).value(complex(s), tau)

    def newton(
        self,
        s0: complex,
        alpha: float,
        tau: float,
        scale: Optional[float] = None,
        max_steps: int = 50,
    ) -> tuple[complex, float, bool]:
        """Damped complex Newton on the regularised function.

        Returns:
            tuple[complex, float, bool]: the polished point, ``|C_reg|/scale``
            there, and whether the tolerance was met.
        """
        blocks = self.blocks(alpha)
        s = complex(s0)
        value, step = blocks.newton_step(s, tau)
        if scale is None:
            # |C'| times a small radius stands in for the local magnitude
            scale = abs(value / step) * 1e-3 * (1.0 + abs(s)) if np.isfinite(step) and step != 0 else abs(value)
        scale = scale if scale > 0 else 1.0
        for _ in range(max_steps):
            if not np.isfinite(step):
                return s, float("inf"), False
            trial = s + step
            trial_value, trial_step = blocks.newton_step(trial, tau)
            halvings = 0
            while abs(trial_value) > abs(value) and halvings < 8:
                step *= 0.5
                trial = s + step
                trial_value, trial_step = blocks.newton_step(trial, tau)
                halvings += 1
            s, value, step = trial, trial_value, trial_step
            if abs(step) <= 1e-12 * (1.0 + abs(s)):
                break
        ratio = abs(value) / scale
        return s, ratio, bool(ratio < ROOT_TOLERANCE or abs(value) == 0.0)


def characteristic_value(ctx: DelayCharacteristic, s: complex, alpha: float, tau: float) -> complex:
    """``det(D_N(s) + D_P(s) exp(-s tau))`` through the quadratic expansion.

    Raises:
        NearPoleError: if ``s`` is too close to a clamped-interface mode.
    """
    if tau < 0:
        raise InvalidArgumentError(f"delay must be non-negative, got {tau}")
    p0, p1, p2 = ctx.terms(s, alpha)
    x = np.exp(-complex(s) * tau)
    return p0 + p1 * x + p2 * x * x


def delay_free_roots(ctx: DelayCharacteristic, box: SearchBox, margin: float = 0.5) -> list[complex]:
    """Monolithic pencil eigenvalues with f >= 0 near ``box``."""
    lam = pencil_eigenvalues(ctx.model)
    (d0, d1), (f0, f1) = box.delta_range, box.f_range
    widen_d = margin * (d1 - d0)
    widen_f = margin * (f1 - f0) * 0.2
    kept = []
    for value in lam:
        f = value.imag / (2.0 * math.pi)
        if value.imag >= 0 and d0 - widen_d <= value.real <= d1 + widen_d and f0 <= f <= f1 + widen_f:
            kept.append(complex(value))
    return sorted(kept, key=lambda z: (z.imag, z.real))


def _track(
    ctx: DelayCharacteristic,
    s: complex,
    alpha: float,
    tau_from: float,
    tau_to: float,
    dtau: float = 0.05,
) -> Optional[complex]:
    """Follow one root from ``tau_from`` to ``tau_to`` with adaptive steps."""
    tau = tau_from
    step = min(dtau, abs(tau_to - tau_from)) or dtau
    direction = 1.0 if tau_to >= tau_from else -1.0
    while direction * (tau_to - tau) > 1e-12:
        target = tau + direction * min(step, abs(tau_to - tau))
        s_new, _, ok = ctx.newton(s, alpha, target)
        jump = abs(s_new - s)
        if ok and jump <= 0.1 * (1.0 + abs(s)):
            s, tau = s_new, target
            step = min(2.0 * step, dtau)
        else:
            step *= 0.5
            if step < 1e-4:
                return None
    return s


def _normalise(s: complex) -> complex:
    return s.conjugate() if s.imag < 0 else s


def find_roots(
    ctx: DelayCharacteristic,
    alpha: float,
    tau: float,
    box: SearchBox = SearchBox(),
    resolution: Resolution = Resolution(),
    tag: bool = True,
) -> list[Root]:
    """All roots in ``box`` at delay ``tau``, sorted by frequency.

    Candidate cells come from sign changes of (Re, Im) of the regularised
    function on a refined grid; the delay-free roots continued to ``tau``
    are added as extra starting points and tag their family.
    """
    if tau < 0:
        raise InvalidArgumentError(f"delay must be non-negative, got {tau}")
    alpha_snapped = ctx.snapped_alpha(alpha)

    def func(delta: float, f: float) -> complex:
        return ctx.regularized(complex(delta, 2.0 * math.pi * f), alpha, tau)

    bisection = CellBisection(
        func, box.delta_range, box.f_range, resolution.n_delta, resolution.n_f, resolution.levels
    )
    cells = bisection.run()
    starts = [(complex(c.center[0], 2.0 * math.pi * c.center[1]), c.scale) for c in cells]

    continued: list[complex] = []
    if tag or tau == 0.0:
        for seed in delay_free_roots(ctx, box):
            end = seed if tau == 0.0 else _track(ctx, seed, alpha, 0.0, tau)
            if end is not None:
                continued.append(_normalise(end))
        starts.extend((s, None) for s in continued)

    roots: list[Root] = []
    for s0, scale in starts:
        s, ratio, ok = ctx.newton(s0, alpha, tau, scale)
        if not ok:
            continue
        s = _normalise(s)
        if not box.contains(s, slack=1e-6):
            continue
        if any(box.distance(s, r.s) < DEDUP_RADIUS for r in roots):
            continue
        try:
            characteristic_value(ctx, s, alpha, tau)
        except NearPoleError as e:
            record = {"alpha": alpha_snapped, "tau": tau, "s": s, "condition": e.condition}
            ctx.record_pole(record)
            logger.warning("root at s=%.6g coincides with a condensation pole, excluded", s)
            continue
        if tau == 0.0 or any(box.distance(s, c) < 1e-6 for c in continued):
            family = DELAY_FREE
        else:
            family = DELAY_BORN
        roots.append(Root(s=s, tau=float(tau), alpha=alpha_snapped, family=family, residual=ratio))

    roots.sort(key=lambda r: (r.f, r.delta))
    logger.info(
        "alpha=%.3f tau=%.3f ms: %d roots (%d unstable), %d function evaluations",
        alpha_snapped, tau, len(roots), sum(r.unstable for r in roots), bisection.evaluations,
    )
    return roots


def root_locus(
    ctx: DelayCharacteristic,
    alpha: float,
    taus: Sequence[float],
    box: SearchBox = SearchBox(),
    resolution: Resolution = Resolution(),
    reseed_every: int = 5,
) -> list[LocusCurve]:
    """Roots followed by continuation over the ascending delays ``taus``.

    A branch ends when Newton loses it or it leaves ``box``; every
    ``reseed_every`` delays the box is searched again and new roots start
    new branches.
    """
    taus = [float(t) for t in taus]
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise InvalidArgumentError("delays must be strictly ascending")
    alpha_snapped = ctx.snapped_alpha(alpha)
    curves: list[LocusCurve] = []
    active: list[LocusCurve] = []

    for j, tau in enumerate(taus):
        survivors = []
        for curve in active:
            last = curve.points[-1]
            s = _track(ctx, last.s, alpha, last.tau, tau)
            if s is None or not box.contains(_normalise(s), slack=1e-6):
                logger.debug("branch %s lost at tau=%.3f ms", curve.family, tau)
                continue
            s = _normalise(s)
            curve.points.append(Root(s, tau, alpha_snapped, curve.family))
            survivors.append(curve)
        active = survivors

        if j % reseed_every == 0:
            for root in find_roots(ctx, alpha, tau, box, resolution, tag=(j == 0)):
                if any(box.distance(root.s, c.points[-1].s) < 1e-3 for c in active):
                    continue
                family = root.family if j == 0 else DELAY_BORN
                curve = LocusCurve(family, [Root(root.s, tau, alpha_snapped, family, root.residual)])
                curves.append(curve)
                active.append(curve)

    curves.sort(key=lambda c: (c.family, c.points[0].tau, c.points[0].f))
    return curves


def _crossing_candidates(values: np.ndarray) -> np.ndarray:
    """Indices (a, b) of grid cells where both Re and Im change sign."""
    corners = np.stack(
        [values[:-1, :-1], values[1:, :-1], values[:-1, 1:], values[1:, 1:]], axis=-1
    )
    finite = np.all(np.isfinite(corners), axis=-1)
    re, im = corners.real, corners.imag
    mask = (
        finite
        & (re.min(axis=-1) <= 0) & (re.max(axis=-1) >= 0)
        & (im.min(axis=-1) <= 0) & (im.max(axis=-1) >= 0)
    )
    return np.argwhere(mask)


def _crossings(
    ctx: DelayCharacteristic,
    alpha: float,
    make_s,
    y_grid: np.ndarray,
    tau_grid: np.ndarray,
    y_bounds: tuple[float, float],
) -> list[tuple[float, complex]]:
    """Roots of C over a (y, tau) grid, y parametrising ``s = make_s(y)``."""
    columns = []
    for y in y_grid:
        s = make_s(y)
        try:
            columns.append(ctx.terms(s, alpha))
        except NearPoleError as e:
            ctx.record_pole({"alpha": ctx.snapped_alpha(alpha), "s": s, "condition": e.condition})
            columns.append((np.nan, np.nan, np.nan))
    terms = np.array(columns, dtype=complex)
    s_col = np.array([make_s(y) for y in y_grid])
    x = np.exp(-np.outer(s_col, tau_grid))
    values = terms[:, 0:1] + terms[:, 1:2] * x + terms[:, 2:3] * x * x

    found = []
    for a, b in _crossing_candidates(values):
        corner_vals = values[a : a + 2, b : b + 2]
        scale = float(np.median(np.abs(corner_vals)))

        def equations(z, scale=scale):
            s = make_s(z[0])
            try:
                c = characteristic_value(ctx, s, alpha, z[1])
            except NearPoleError:
                return [1e6, 1e6]
            return [c.real / scale, c.imag / scale]

        guess = [0.5 * (y_grid[a] + y_grid[a + 1]), 0.5 * (tau_grid[b] + tau_grid[b + 1])]
        sol = scipy.optimize.root(equations, guess, method="hybr", options={"xtol": 1e-13})
        y, tau = sol.x
        if not sol.success or not (y_bounds[0] - 1e-9 <= y <= y_bounds[1] + 1e-9):
            continue
        if not (tau_grid[0] - 1e-9 <= tau <= tau_grid[-1] + 1e-9):
            continue
        s = make_s(y)
        p0, p1, p2 = ctx.terms(s, alpha)
        xv = np.exp(-s * tau)
        size = abs(p0) + abs(p1 * xv) + abs(p2 * xv * xv)
        if abs(p0 + p1 * xv + p2 * xv * xv) > 1e-8 * size:
            continue
        found.append((float(tau), s))
    return found


def critical_delay(
    ctx: DelayCharacteristic,
    alpha: float,
    f_cutoff: float,
    tau_range: tuple[float, float] = (0.02, STABILITY_TAU_MAX),
    delta_max: float = 2.0,
    n_freq: int = 100,
    n_delta: int = 60,
    phase_step: float = 0.1,
) -> CriticalDelay:
    """Smallest delay at which the cut-off system has an unstable root.

    Two crossings are searched on a grid and polished: a root on the
    imaginary axis (delta = 0) with f <= f_cutoff, unknowns (f, tau), and an
    unstable root on the cut-off line f = f_cutoff with delta >= 0, unknowns
    (delta, tau). The smaller delay wins.
    """
    if not f_cutoff > 0:
        raise InvalidArgumentError(f"cut-off frequency must be positive, got {f_cutoff}")
    tau_lo, tau_hi = tau_range
    if not 0 <= tau_lo < tau_hi:
        raise InvalidArgumentError(f"invalid delay range {tau_range}")
    alpha_snapped = ctx.snapped_alpha(alpha)
    w_c = 2.0 * math.pi * f_cutoff
    n_tau = max(8, int(math.ceil((tau_hi - tau_lo) * w_c / phase_step)))
    tau_grid = np.linspace(tau_lo, tau_hi, n_tau + 1)

    w_grid = np.linspace(w_c / n_freq, w_c, n_freq)
    axis = _crossings(ctx, alpha, lambda w: complex(0.0, w), w_grid, tau_grid, (0.0, w_c))
    d_grid = np.linspace(0.0, delta_max, n_delta + 1)
    edge = _crossings(ctx, alpha, lambda d: complex(d, w_c), d_grid, tau_grid, (0.0, delta_max))

    best = None
    for kind, found in (("axis", axis), ("cutoff", edge)):
        for tau, s in found:
            if best is None or tau < best[0]:
                best = (tau, s, kind)
    if best is None:
        logger.info("alpha=%.3f f_c=%.3f kHz: stable up to %.2f ms", alpha_snapped, f_cutoff, tau_hi)
        return CriticalDelay(alpha_snapped, f_cutoff, None, STABLE_UP_TO_RANGE)
    tau, s, kind = best
    root = Root(s=s, tau=tau, alpha=alpha_snapped, family=DELAY_BORN)
    logger.info(
        "alpha=%.3f f_c=%.3f kHz: tau_crit=%.4f ms (%s crossing, f=%.4f kHz)",
        alpha_snapped, f_cutoff, tau, kind, root.f,
    )
    return CriticalDelay(alpha_snapped, f_cutoff, tau, kind, root)


def _boundary_point(ctx: DelayCharacteristic, alpha: float, f_cutoff: float, **kwargs) -> BoundaryPoint:
    try:
        result = critical_delay(ctx, alpha, f_cutoff, **kwargs)
    except HybridBeamError as e:
        logger.warning("alpha=%.3f: critical delay failed: %s", alpha, e)
        return BoundaryPoint(alpha, f_cutoff, None, "failed", str(e))
    return BoundaryPoint(result.alpha, f_cutoff, result.tau, result.crossing)


def _check_grid(alpha_grid: Sequence[float]) -> list[float]:
    grid = sorted(float(a) for a in alpha_grid)
    if any(not 0.0 < a < 1.0 for a in grid):
        raise InvalidArgumentError("alpha grid must lie inside (0, 1)")
    return grid


def stability_boundary(
    ctx: DelayCharacteristic, f_cutoff: float, alpha_grid: Sequence[float], **kwargs
) -> list[BoundaryPoint]:
    """Critical delay for every interface position of ``alpha_grid``."""
    return [_boundary_point(ctx, a, f_cutoff, **kwargs) for a in _check_grid(alpha_grid)]


async def stability_boundary_async(
    ctx: DelayCharacteristic, f_cutoff: float, alpha_grid: Sequence[float], **kwargs
) -> list[BoundaryPoint]:
    """Same as :func:`stability_boundary` with one worker thread, and one forked ``ctx``, per position."""
    grid = _check_grid(alpha_grid)
    workers = [ctx.fork() for _ in grid]
    points = await asyncio.gather(
        *(asyncio.to_thread(_boundary_point, w, a, f_cutoff, **kwargs) for w, a in zip(workers, grid))
    )
    for w in workers:
        ctx.absorb(w)
    return sorted(points, key=lambda p: p.alpha)
