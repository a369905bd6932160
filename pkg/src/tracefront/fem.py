"""1D finite element benchmark problem: meshes, Lagrange bases, mass matrices.

The discrete problem is the L2 projection of a scalar function onto the
space of continuous piecewise polynomials of degree p over a uniform
interval mesh.  Its Gram (mass) matrix is symmetric positive definite,
which is what the downstream factorization machinery assumes.

Global degree-of-freedom indices are 1-based everywhere in this package;
element-local indices are 0-based positions into a front.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidGeometryError, UnsupportedDegreeError

SUPPORTED_DEGREES = (1, 2, 3)

#: Named right-hand-side functions selectable from the CLI.
RHS_FUNCTIONS: dict[str, Callable[[float], float]] = {
    "one": lambda x: 1.0,
    "sin_pi": lambda x: math.sin(math.pi * x),
    "x_squared": lambda x: x * x,
}


def _check_degree(degree: int) -> None:
    if degree not in SUPPORTED_DEGREES:
        raise UnsupportedDegreeError(
            f"degree must be one of {SUPPORTED_DEGREES}, got {degree}"
        )


@dataclass(frozen=True)
class Mesh:
    """Uniform 1D mesh with (p+1)-node Lagrange elements.

    DOF numbering increases left to right; the p-1 interior DOFs of an
    element sit between its endpoint DOFs, so element e (0-based) owns
    global DOFs e*p+1 .. e*p+p+1 (1-based).
    """

    n_elements: int
    degree: int
    domain_start: float = 0.0
    domain_end: float = 1.0

    def __post_init__(self) -> None:
        if self.n_elements < 1:
            raise InvalidGeometryError(f"n_elements must be >= 1, got {self.n_elements}")
        _check_degree(self.degree)
        if not self.domain_start < self.domain_end:
            raise InvalidGeometryError(
                f"empty domain [{self.domain_start}, {self.domain_end}]"
            )

    @property
    def n_dof(self) -> int:
        return self.degree * self.n_elements + 1

    @property
    def element_width(self) -> float:
        return (self.domain_end - self.domain_start) / self.n_elements

    def element_dofs(self, element: int) -> tuple[int, ...]:
        """Global 1-based DOF indices of one element, left to right."""
        base = element * self.degree
        return tuple(base + k + 1 for k in range(self.degree + 1))

    def element_offset(self, element: int) -> float:
        return self.domain_start + element * self.element_width

    def dof_coordinate(self, dof: int) -> float:
        """Physical coordinate of a global 1-based DOF."""
        return self.domain_start + (dof - 1) / self.degree * self.element_width


def reference_basis(degree: int, xi: float) -> np.ndarray:
    """Values of the p+1 equispaced Lagrange basis functions at xi in [0, 1]."""
    _check_degree(degree)
    nodes = [k / degree for k in range(degree + 1)]
    out = np.empty(degree + 1)
    for k, xk in enumerate(nodes):
        v = 1.0
        for m, xm in enumerate(nodes):
            if m != k:
                v *= (xi - xm) / (xk - xm)
        out[k] = v
    return out


def gauss_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points/weights on [0, 1], exact for the mass integrand.

    Point count is ceil((2p+2)/2) + 1 = p + 2, exact through degree 2p + 3.
    """
    n_q = degree + 2
    pts, wts = np.polynomial.legendre.leggauss(n_q)
    return (pts + 1.0) / 2.0, wts / 2.0


def element_mass_matrix(width: float, degree: int) -> np.ndarray:
    """Dense (p+1)x(p+1) Gram matrix of the basis over one element."""
    _check_degree(degree)
    if width <= 0:
        raise InvalidGeometryError(f"element width must be positive, got {width}")
    xi, w = gauss_rule(degree)
    basis = np.array([reference_basis(degree, x) for x in xi])  # n_q x (p+1)
    return width * (basis.T * w) @ basis


def element_load_vector(
    width: float,
    degree: int,
    f: Callable[[float], float],
    element_offset: float,
) -> np.ndarray:
    """Moments of f against the element basis, by the same Gauss rule."""
    _check_degree(degree)
    if width <= 0:
        raise InvalidGeometryError(f"element width must be positive, got {width}")
    xi, w = gauss_rule(degree)
    basis = np.array([reference_basis(degree, x) for x in xi])
    fvals = np.array([f(element_offset + x * width) for x in xi])
    return width * basis.T @ (w * fvals)


@dataclass
class GlobalSystem:
    """Assembled sparse system M u = b with symmetric lower-triangle storage.

    ``entries`` keys are 1-based (row, col) pairs with row >= col; the
    upper triangle is implied by symmetry.
    """

    n_dof: int
    entries: dict[tuple[int, int], float] = field(default_factory=dict)
    rhs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def add(self, i: int, j: int, value: float) -> None:
        key = (i, j) if i >= j else (j, i)
        self.entries[key] = self.entries.get(key, 0.0) + value

    def entry(self, i: int, j: int) -> float:
        key = (i, j) if i >= j else (j, i)
        return self.entries.get(key, 0.0)

    def symmetric_items(self):
        """Iterate every stored position in both orientations."""
        for (i, j), v in self.entries.items():
            yield (i, j), v
            if i != j:
                yield (j, i), v

    def total_entry_sum(self) -> float:
        """Sum over the full (symmetrically expanded) matrix."""
        return sum(v if i == j else 2.0 * v for (i, j), v in self.entries.items())

    def to_dense(self) -> np.ndarray:
        m = np.zeros((self.n_dof, self.n_dof))
        for (i, j), v in self.symmetric_items():
            m[i - 1, j - 1] = v
        return m

    def matvec(self, u: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n_dof)
        for (i, j), v in self.symmetric_items():
            out[i - 1] += v * u[j - 1]
        return out


@dataclass(frozen=True, eq=False)
class Front:
    """A dense (elemental or merged) submatrix plus its global index map.

    ``indices`` maps local position -> global 1-based DOF index and must be
    injective.  ``membership`` counts, per local position, how many fronts
    at the same tree level contain that global index.  ``computed`` marks
    positions whose pivot was already eliminated at a lower tree level.
    Merged fronts above the leaf level carry no numeric values
    (``values is None``): numbers live in the global matrix state.
    """

    front_id: int
    indices: tuple[int, ...]
    membership: tuple[int, ...]
    computed: tuple[bool, ...]
    values: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if len(set(self.indices)) != len(self.indices):
            raise ValueError(f"front {self.front_id}: index map is not injective")
        if any(m < 1 for m in self.membership):
            raise ValueError(f"front {self.front_id}: membership counts must be >= 1")
        if not (len(self.indices) == len(self.membership) == len(self.computed)):
            raise ValueError(f"front {self.front_id}: field lengths disagree")
        if self.values is not None and self.values.shape != (self.size, self.size):
            raise ValueError(f"front {self.front_id}: values shape mismatch")

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def min_index(self) -> int:
        return min(self.indices)

    @property
    def index_set(self) -> frozenset[int]:
        return frozenset(self.indices)


def assemble_system(mesh: Mesh, f: Callable[[float], float]) -> GlobalSystem:
    """Sum elemental mass matrices and load vectors into the global system."""
    system = GlobalSystem(n_dof=mesh.n_dof, rhs=np.zeros(mesh.n_dof))
    h = mesh.element_width
    local_mass = element_mass_matrix(h, mesh.degree)
    for e in range(mesh.n_elements):
        dofs = mesh.element_dofs(e)
        for a, ga in enumerate(dofs):
            for b, gb in enumerate(dofs):
                if ga >= gb:
                    system.add(ga, gb, local_mass[a, b])
        load = element_load_vector(h, mesh.degree, f, mesh.element_offset(e))
        for a, ga in enumerate(dofs):
            system.rhs[ga - 1] += load[a]
    return system


def generate_fronts(mesh: Mesh) -> list[Front]:
    """One leaf front per element, in left-to-right mesh order.

    Endpoint DOFs shared with a neighbouring element get membership 2,
    every other DOF (domain boundary, element interior) membership 1.
    """
    local_mass = element_mass_matrix(mesh.element_width, mesh.degree)
    fronts = []
    for e in range(mesh.n_elements):
        dofs = mesh.element_dofs(e)
        membership = [1] * len(dofs)
        if e > 0:
            membership[0] = 2
        if e < mesh.n_elements - 1:
            membership[-1] = 2
        fronts.append(
            Front(
                front_id=e,
                indices=dofs,
                membership=tuple(membership),
                computed=(False,) * len(dofs),
                values=local_mass.copy(),
            )
        )
    return fronts


def l2_projection_error(
    mesh: Mesh, coefficients: np.ndarray, f: Callable[[float], float]
) -> float:
    """L2 norm of (u_h - f) over the domain, by per-element quadrature.

    Uses a rule two points richer than the assembly rule so the error
    integral is not systematically underestimated.
    """
    n_q = mesh.degree + 4
    pts, wts = np.polynomial.legendre.leggauss(n_q)
    xi = (pts + 1.0) / 2.0
    w = wts / 2.0
    basis = np.array([reference_basis(mesh.degree, x) for x in xi])
    h = mesh.element_width
    total = 0.0
    for e in range(mesh.n_elements):
        dofs = mesh.element_dofs(e)
        local = np.array([coefficients[g - 1] for g in dofs])
        uh = basis @ local
        fx = np.array([f(mesh.element_offset(e) + x * h) for x in xi])
        total += h * float(w @ (uh - fx) ** 2)
    return math.sqrt(total)
