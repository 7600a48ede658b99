"""
Dynamic substructuring of a beam model at an interface node.

The parent beam is split into a numerical substructure (root side, N) and a
physical substructure (tip side, P). Each side is condensed on the two
interface DOFs, always ordered (deflection, rotation), through a Schur
complement of its dynamic stiffness.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np
import scipy.linalg

from ..config import NEAR_POLE_CONDITION
from ..core import InvalidArgumentError, NearPoleError, NumericalFailureError
from .beam_fe import BoundaryCondition, FEModel, assemble_nodes, mode_shapes, node_at

logger = logging.getLogger("hybrid_beam.fe")


class StructuralMatrices(Protocol):
    M: np.ndarray
    C: np.ndarray
    K: np.ndarray


@dataclass(frozen=True)
class SubModel:
    """One substructure with its bulk and interface index sets.

    ``global_dofs[j]`` is the parent free-DOF index of local DOF ``j``; the
    interface DOFs of both substructures map to the same parent indices.
    """

    name: str
    model: FEModel
    bulk: np.ndarray
    iface: np.ndarray
    global_dofs: np.ndarray = field(repr=False)

    @property
    def M(self) -> np.ndarray:
        return self.model.M

    @property
    def C(self) -> np.ndarray:
        return self.model.C

    @property
    def K(self) -> np.ndarray:
        return self.model.K

    @property
    def length(self) -> float:
        return self.model.length

    def with_damping(self, scale: float) -> "SubModel":
        """Copy whose damping matrix is multiplied by ``scale``."""
        model = FEModel(
            self.model.props,
            self.model.n_elements,
            self.model.node_coords,
            self.model.M,
            scale * self.model.C,
            self.model.K,
            self.model.bc,
            self.model.dof_map,
        )
        return SubModel(self.name, model, self.bulk, self.iface, self.global_dofs)


@dataclass(frozen=True)
class Partition:
    """Split of a parent beam at an interior node.

    Attributes:
        alpha: length ratio L_N / L_P.
        position: interface position as a fraction of the beam length, L_N / L.
    """

    parent: FEModel
    interface_node: int
    alpha: float
    position: float
    N_part: SubModel
    P_part: SubModel

    @property
    def L_N(self) -> float:
        return self.N_part.length

    @property
    def L_P(self) -> float:
        return self.P_part.length


@dataclass(frozen=True)
class CondensedInterface:
    """2x2 interface dynamic stiffness of one substructure at Laplace point ``s``."""

    s: complex
    D: np.ndarray

    @property
    def det(self) -> complex:
        D = self.D
        return D[0, 0] * D[1, 1] - D[0, 1] * D[1, 0]


def dynamic_stiffness(model: StructuralMatrices, s: complex) -> np.ndarray:
    """``D(s) = s²M + sC + K`` for any object carrying M, C and K."""
    s = complex(s)
    return s * s * model.M + s * model.C + model.K.astype(complex)


def _sub_model(parent: FEModel, name: str, nodes: np.ndarray, iface_local: int) -> SubModel:
    clamped = [j for j, node in enumerate(nodes) if parent.dof_map[node, 0] < 0]
    if clamped:
        bc = BoundaryCondition.CLAMPED_CLAMPED if len(clamped) == 2 else BoundaryCondition.CLAMPED_FREE
    else:
        bc = BoundaryCondition.FREE_FREE
    coords = parent.node_coords[nodes]
    span_props = parent.props.with_length(float(coords[-1] - coords[0]))
    model = assemble_nodes(span_props, coords, clamped, bc)
    iface = model.dof_map[iface_local].copy()
    bulk = np.array([d for d in range(model.ndof) if d not in set(iface)], dtype=int)
    global_dofs = np.empty(model.ndof, dtype=int)
    for j, node in enumerate(nodes):
        for comp in (0, 1):
            local = model.dof_map[j, comp]
            if local >= 0:
                global_dofs[local] = parent.dof_map[node, comp]
    return SubModel(name, model, bulk, iface, global_dofs)


def partition(model: FEModel, interface_node: int) -> Partition:
    """Split ``model`` at ``interface_node`` into N (root side) and P (tip side).

    Raises:
        InvalidArgumentError: if the node is the clamped root or the tip.
    """
    last = model.n_nodes - 1
    if not 0 < interface_node < last:
        raise InvalidArgumentError(
            f"interface node must be strictly interior (1..{last - 1}), got {interface_node}"
        )
    nodes = np.arange(model.n_nodes)
    n_part = _sub_model(model, "N", nodes[: interface_node + 1], interface_node)
    p_part = _sub_model(model, "P", nodes[interface_node:], 0)

    L_N, L_P = n_part.length, p_part.length
    part = Partition(
        parent=model,
        interface_node=int(interface_node),
        alpha=L_N / L_P,
        position=L_N / model.length,
        N_part=n_part,
        P_part=p_part,
    )
    logger.debug("partition at node %d: L_N=%.1f mm, L_P=%.1f mm", interface_node, L_N, L_P)
    return part


def partition_at(model: FEModel, position: float) -> Partition:
    """Partition at the node nearest to ``position`` mm from the root."""
    return partition(model, node_at(model, model.node_coords[0] + position))


def _split(D: np.ndarray, part: SubModel):
    b, i = part.bulk, part.iface
    return D[np.ix_(b, b)], D[np.ix_(b, i)], D[np.ix_(i, b)], D[np.ix_(i, i)]


def _bulk_factor(Dbb: np.ndarray, s: complex, threshold: float):
    cond = np.linalg.cond(Dbb)
    if not np.isfinite(cond) or cond > threshold:
        raise NearPoleError(s, cond)
    return scipy.linalg.lu_factor(Dbb, check_finite=False)


def condense(part: SubModel, s: complex, threshold: float = NEAR_POLE_CONDITION) -> CondensedInterface:
    """Schur complement ``D_ii - D_ib D_bb^-1 D_bi`` at ``s``.

    Raises:
        NearPoleError: if ``D_bb`` is numerically singular at ``s``.
    """
    D = dynamic_stiffness(part, s)
    Dbb, Dbi, Dib, Dii = _split(D, part)
    if Dbb.size == 0:
        return CondensedInterface(complex(s), Dii.copy())
    lu = _bulk_factor(Dbb, s, threshold)
    Dc = Dii - Dib @ scipy.linalg.lu_solve(lu, Dbi, check_finite=False)
    return CondensedInterface(complex(s), Dc)


def condense_force(
    part: SubModel,
    s: complex,
    F_bulk: Sequence[complex],
    F_iface: Sequence[complex],
    threshold: float = NEAR_POLE_CONDITION,
) -> np.ndarray:
    """Condensed external force ``F_i - D_ib D_bb^-1 F_b``."""
    F_bulk = np.asarray(F_bulk, dtype=complex)
    F_iface = np.asarray(F_iface, dtype=complex)
    if F_iface.shape != (2,) or F_bulk.shape != (len(part.bulk),):
        raise InvalidArgumentError(
            f"expected F_bulk of length {len(part.bulk)} and a 2-vector F_iface"
        )
    if not np.any(F_bulk):
        return F_iface.copy()
    D = dynamic_stiffness(part, s)
    Dbb, _, Dib, _ = _split(D, part)
    lu = _bulk_factor(Dbb, s, threshold)
    return F_iface - Dib @ scipy.linalg.lu_solve(lu, F_bulk, check_finite=False)


def hybrid_frf(D_N: CondensedInterface, D_P: CondensedInterface, F: Sequence[complex]) -> np.ndarray:
    """Interface response ``(D_N + D_P)^-1 F`` of the coupled structure.

    Raises:
        InvalidArgumentError: if the two condensations are at different ``s``.
        NumericalFailureError: if the coupled matrix is singular.
    """
    if not np.isclose(D_N.s, D_P.s, rtol=1e-12, atol=1e-15):
        raise InvalidArgumentError(f"condensations at different s: {D_N.s} vs {D_P.s}")
    total = D_N.D + D_P.D
    F = np.asarray(F, dtype=complex)
    if np.linalg.cond(total) > 1e14:
        raise NumericalFailureError(f"coupled interface matrix singular at s={D_N.s:.6g}")
    return np.linalg.solve(total, F)


def clamped_interface_modes(part: SubModel, k: int) -> list[float]:
    """Undamped frequencies (Hz) of ``part`` with its interface DOFs fixed."""
    n_bulk = len(part.bulk)
    if k < 1 or k > n_bulk:
        raise InvalidArgumentError(f"k must be in [1, {n_bulk}], got {k}")
    b = part.bulk
    try:
        w2 = scipy.linalg.eigh(
            part.K[np.ix_(b, b)],
            part.M[np.ix_(b, b)],
            eigvals_only=True,
            subset_by_index=[0, k - 1],
        )
    except np.linalg.LinAlgError as e:
        raise NumericalFailureError(f"clamped-interface eigen-solve failed: {e}") from e
    return [math.sqrt(max(w, 0.0)) / (2.0 * math.pi) * 1000.0 for w in w2]


def condensed_table(part: SubModel, freqs_hz: Sequence[float]) -> list[dict]:
    """Rows of Re/Im of the four condensed entries over ``freqs_hz``."""
    rows = []
    for f in freqs_hz:
        D = condense(part, 2j * math.pi * f / 1000.0).D
        row = {"side": part.name, "freq_hz": float(f)}
        for r, c, tag in ((0, 0, "uu"), (0, 1, "up"), (1, 0, "pu"), (1, 1, "pp")):
            row[f"re_{tag}"] = D[r, c].real
            row[f"im_{tag}"] = D[r, c].imag
        rows.append(row)
    return rows


def placement_warnings(
    part: Partition,
    band_hz: tuple[float, float],
    harmonics: Sequence[int] = (1, 2),
    margin: float = 0.10,
    node_margin: float = 10.0,
    n_modes: int = 4,
) -> list[str]:
    """Interface placement problems of ``part`` for an operating band.

    Three checks: the interface lies within ``node_margin`` mm of a node of
    the targeted parent mode (the second), the first P-side clamped-interface
    mode falls inside the band, and a P-side clamped-interface mode lies
    within ``margin`` of a harmonic k·Omega of the band.
    """
    warnings: list[str] = []
    lo, hi = band_hz
    parent = part.parent

    _, shapes = mode_shapes(parent, 2)
    shape = shapes[:, 1]
    x = parent.node_coords
    tip = x[-1]
    for j in range(len(x) - 1):
        a, b = shape[j], shape[j + 1]
        if a == 0.0 or a * b >= 0.0:
            continue
        x_node = x[j] + (x[j + 1] - x[j]) * a / (a - b)
        distance = tip - x_node
        if abs(part.L_P - distance) < node_margin:
            warnings.append(
                f"interface at L_P={part.L_P:.0f} mm is {abs(part.L_P - distance):.1f} mm from "
                f"the mode-2 node ({distance:.1f} mm from the tip): the targeted mode is barely excited"
            )

    modes = clamped_interface_modes(part.P_part, min(n_modes, len(part.P_part.bulk)))
    if lo <= modes[0] <= hi:
        warnings.append(
            f"first P-side clamped-interface mode {modes[0]:.2f} Hz lies inside the "
            f"operating band {lo:g}-{hi:g} Hz"
        )
    for k in harmonics:
        for f_mode in modes:
            if k * lo * (1 - margin) <= f_mode <= k * hi * (1 + margin):
                if k == 1 and lo <= f_mode <= hi:
                    continue
                warnings.append(
                    f"P-side clamped-interface mode {f_mode:.2f} Hz collides with harmonic "
                    f"{k} of the operating band ({k * lo:g}-{k * hi:g} Hz)"
                )
    for w in warnings:
        logger.warning(w)
    return warnings
