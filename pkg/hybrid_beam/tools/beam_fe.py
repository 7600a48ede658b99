"""
Euler-Bernoulli beam finite elements.

Hermitian-cubic two-node elements with consistent mass, assembled into clamped
or free beams with mass- and stiffness-proportional (Rayleigh) damping, plus
the modal queries used to check the models against the closed-form cantilever
frequencies.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from ..core import InvalidArgumentError, NumericalFailureError

logger = logging.getLogger("hybrid_beam.fe")

# Clamped-free characteristic roots beta_n * L
CANTILEVER_ROOTS = (
    1.875104068711961,
    4.694091132974175,
    7.854757438237613,
    10.995540734875467,
    14.137168391046470,
    17.278759532088237,
    20.420352251041251,
    23.561944901806445,
    26.703537555518299,
    29.845130209102254,
)


class BoundaryCondition(str, Enum):
    """Which end sections of a beam or sub-span are clamped."""

    CLAMPED_FREE = "clamped-free"
    CLAMPED_CLAMPED = "clamped-clamped"
    FREE_FREE = "free-free"

    @property
    def clamped_ends(self) -> tuple[bool, bool]:
        return {
            BoundaryCondition.CLAMPED_FREE: (True, False),
            BoundaryCondition.CLAMPED_CLAMPED: (True, True),
            BoundaryCondition.FREE_FREE: (False, False),
        }[self]


@dataclass(frozen=True)
class BeamProperties:
    """Material, geometry and damping of a uniform beam.

    Attributes:
        E: Young's modulus (kg/ms²/mm).
        rho: density (kg/mm³).
        b: width (mm).
        h: thickness (mm).
        L: length (mm).
        zeta_M: mass-proportional damping (1/ms).
        zeta_K: stiffness-proportional damping (ms).
    """

    E: float
    rho: float
    b: float
    h: float
    L: float
    zeta_M: float = 0.0
    zeta_K: float = 0.0

    def __post_init__(self):
        for name in ("E", "rho", "b", "h", "L"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be strictly positive")
        for name in ("zeta_M", "zeta_K"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be non-negative")

    @property
    def A(self) -> float:
        return self.b * self.h

    @property
    def I(self) -> float:
        return self.b * self.h**3 / 12.0

    @property
    def EI(self) -> float:
        return self.E * self.I

    @property
    def rhoA(self) -> float:
        return self.rho * self.A

    def with_length(self, L: float) -> "BeamProperties":
        """Copy of these properties for a beam of another length."""
        return BeamProperties(self.E, self.rho, self.b, self.h, L, self.zeta_M, self.zeta_K)


@dataclass(frozen=True)
class FEModel:
    """Assembled beam model over its free degrees of freedom.

    ``dof_map[node]`` holds the global indices of (deflection, rotation) of a
    node, with -1 for a constrained DOF.
    """

    props: BeamProperties
    n_elements: int
    node_coords: np.ndarray
    M: np.ndarray
    C: np.ndarray
    K: np.ndarray
    bc: BoundaryCondition
    dof_map: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.node_coords)

    @property
    def ndof(self) -> int:
        return self.M.shape[0]

    @property
    def length(self) -> float:
        return float(self.node_coords[-1] - self.node_coords[0])


@dataclass(frozen=True)
class ModalResult:
    """One mode of the damped quadratic pencil."""

    frequency_hz: float
    damping_ratio: float
    eigenvalue: complex

    def to_dict(self) -> dict:
        return {
            "frequency_hz": self.frequency_hz,
            "damping_ratio": self.damping_ratio,
            "eigenvalue_re": self.eigenvalue.real,
            "eigenvalue_im": self.eigenvalue.imag,
        }


def element_matrices(props: BeamProperties, le: float) -> tuple[np.ndarray, np.ndarray]:
    """Consistent mass and bending stiffness of one Hermitian-cubic element.

    Local DOF order is (w1, theta1, w2, theta2).

    Args:
        props: beam properties.
        le: element length (mm).

    Returns:
        tuple[np.ndarray, np.ndarray]: ``(Me, Ke)``, both 4x4 and symmetric.

    Raises:
        InvalidArgumentError: if ``le`` is not positive.
    """
    if not le > 0:
        raise InvalidArgumentError(f"element length must be positive, got {le}")
    L = le
    Me = props.rhoA * L / 420.0 * np.array(
        [
            [156.0, 22.0 * L, 54.0, -13.0 * L],
            [22.0 * L, 4.0 * L**2, 13.0 * L, -3.0 * L**2],
            [54.0, 13.0 * L, 156.0, -22.0 * L],
            [-13.0 * L, -3.0 * L**2, -22.0 * L, 4.0 * L**2],
        ]
    )
    Ke = props.EI / L**3 * np.array(
        [
            [12.0, 6.0 * L, -12.0, 6.0 * L],
            [6.0 * L, 4.0 * L**2, -6.0 * L, 2.0 * L**2],
            [-12.0, -6.0 * L, 12.0, -6.0 * L],
            [6.0 * L, 2.0 * L**2, -6.0 * L, 4.0 * L**2],
        ]
    )
    return Me, Ke


def assemble_nodes(
    props: BeamProperties,
    node_coords: Sequence[float],
    clamped_nodes: Sequence[int] = (),
    bc: BoundaryCondition = BoundaryCondition.CLAMPED_FREE,
) -> FEModel:
    """Assemble a beam over arbitrary node positions.

    Constrained DOFs are removed from the matrices rather than penalised.
    """
    coords = np.asarray(node_coords, dtype=float)
    n_nodes = len(coords)
    n_elements = n_nodes - 1
    if n_elements < 1:
        raise InvalidArgumentError("a beam needs at least one element")
    lengths = np.diff(coords)
    if np.any(lengths <= 0):
        raise InvalidArgumentError("node coordinates must be strictly increasing")

    size = 2 * n_nodes
    M = np.zeros((size, size))
    K = np.zeros((size, size))
    for e, le in enumerate(lengths):
        Me, Ke = element_matrices(props, float(le))
        idx = np.arange(2 * e, 2 * e + 4)
        M[np.ix_(idx, idx)] += Me
        K[np.ix_(idx, idx)] += Ke

    constrained = set()
    for node in clamped_nodes:
        constrained.update((2 * node, 2 * node + 1))
    free = np.array([d for d in range(size) if d not in constrained], dtype=int)

    dof_map = -np.ones((n_nodes, 2), dtype=int)
    for new, old in enumerate(free):
        dof_map[old // 2, old % 2] = new

    M = M[np.ix_(free, free)]
    K = K[np.ix_(free, free)]
    # exact symmetry, not just to round-off
    M = 0.5 * (M + M.T)
    K = 0.5 * (K + K.T)
    C = props.zeta_M * M + props.zeta_K * K
    return FEModel(props, n_elements, coords, M, C, K, bc, dof_map)


def assemble(
    props: BeamProperties,
    n_elements: int,
    bc: BoundaryCondition = BoundaryCondition.CLAMPED_FREE,
    span: Optional[tuple[float, float]] = None,
) -> FEModel:
    """Assemble a uniform mesh of ``n_elements`` over ``span`` (default the full beam).

    Args:
        props: beam properties.
        n_elements: number of elements, at least 2.
        bc: which ends of the span are clamped.
        span: ``(x0, x1)`` in mm, a sub-span clamped according to ``bc``.

    Returns:
        FEModel: matrices over the free DOFs with ``C = zeta_M*M + zeta_K*K``.
    """
    if n_elements < 2:
        raise InvalidArgumentError(f"need at least 2 elements, got {n_elements}")
    bc = BoundaryCondition(bc)
    x0, x1 = span if span is not None else (0.0, props.L)
    if not x1 > x0:
        raise InvalidArgumentError(f"invalid span {span}")
    coords = np.linspace(x0, x1, n_elements + 1)
    left, right = bc.clamped_ends
    clamped = ([0] if left else []) + ([n_elements] if right else [])
    model = assemble_nodes(props, coords, clamped, bc)
    logger.debug("assembled %s beam, %d elements, %d DOFs", bc.value, n_elements, model.ndof)
    return model


def pencil_eigenvalues(model: FEModel) -> np.ndarray:
    """All eigenvalues (1/ms) of ``s²M + sC + K`` via state-space linearisation."""
    n = model.ndof
    I = np.eye(n)
    Z = np.zeros((n, n))
    A = np.block([[Z, I], [-model.K, -model.C]])
    B = np.block([[I, Z], [Z, model.M]])
    try:
        lam = scipy.linalg.eig(A, B, right=False)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericalFailureError(f"eigen-solve of the {n}-DOF pencil failed: {e}") from e
    if not np.all(np.isfinite(lam)):
        raise NumericalFailureError("pencil eigen-solve returned non-finite eigenvalues")
    return lam


def natural_frequencies(model: FEModel, k: int) -> list[ModalResult]:
    """The ``k`` lowest oscillatory modes of the damped pencil, ascending.

    Frequencies are undamped-equivalent, ``|lambda| / 2pi``, reported in Hz;
    the damping ratio is ``-Re(lambda) / |lambda|``. Rigid-body and
    overdamped (real) eigenvalues are skipped.
    """
    if k < 1 or k > model.ndof:
        raise InvalidArgumentError(f"k must be in [1, {model.ndof}], got {k}")
    lam = pencil_eigenvalues(model)
    scale = np.max(np.abs(lam))
    oscillatory = lam[lam.imag > 1e-12 * scale]
    oscillatory = oscillatory[np.argsort(np.abs(oscillatory))]
    if len(oscillatory) < k:
        raise NumericalFailureError(
            f"only {len(oscillatory)} oscillatory modes available, {k} requested"
        )
    modes = []
    for lam_j in oscillatory[:k]:
        mag = abs(lam_j)
        modes.append(
            ModalResult(
                frequency_hz=mag / (2.0 * math.pi) * 1000.0,
                damping_ratio=-lam_j.real / mag,
                eigenvalue=complex(lam_j),
            )
        )
    return modes


def analytic_cantilever_frequencies(props: BeamProperties, k: int) -> list[float]:
    """Closed-form undamped cantilever frequencies (Hz)."""
    if k < 1 or k > len(CANTILEVER_ROOTS):
        raise InvalidArgumentError(
            f"k must be between 1 and {len(CANTILEVER_ROOTS)}, got {k}"
        )
    root = math.sqrt(props.EI / props.rhoA)
    return [
        (beta_l**2) / (2.0 * math.pi * props.L**2) * root * 1000.0
        for beta_l in CANTILEVER_ROOTS[:k]
    ]


def node_at(model: FEModel, x: float) -> int:
    """Index of the node nearest to position ``x`` (mm)."""
    return int(np.argmin(np.abs(model.node_coords - x)))


def mode_shapes(model: FEModel, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Undamped frequencies (Hz) and nodal deflection shapes of the first ``k`` modes.

    Returns:
        tuple[np.ndarray, np.ndarray]: frequencies of shape ``(k,)`` and
        deflections of shape ``(n_nodes, k)``; constrained nodes read zero.
    """
    if k < 1 or k > model.ndof:
        raise InvalidArgumentError(f"k must be in [1, {model.ndof}], got {k}")
    try:
        w2, vecs = scipy.linalg.eigh(model.K, model.M, subset_by_index=[0, k - 1])
    except np.linalg.LinAlgError as e:
        raise NumericalFailureError(f"undamped eigen-solve failed: {e}") from e
    freqs = np.sqrt(np.clip(w2, 0.0, None)) / (2.0 * math.pi) * 1000.0
    shapes = np.zeros((model.n_nodes, k))
    rows = model.dof_map[:, 0]
    present = rows >= 0
    shapes[present] = vecs[rows[present]]
    return freqs, shapes
