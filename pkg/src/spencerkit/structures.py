"""Algebra of almost-complex and quaternionic structures.

Representation conventions, fixed once for the whole package:

* ``j_tan`` acts on tangent-vector components, ``(JX)^k = sum_j T[k,j] X^j``.
* ``j_cot`` acts on 1-form coefficients, ``(J*w)_q = sum_p C[q,p] w_p``;
  it is the pointwise transpose of ``j_tan``.
* The sign convention is anchored by requiring that ``x1 + i*x2`` be
  almost holomorphic for the structure generated by the pair
  ``(P, Q) = (0, -E)``; its cotangent matrix is ``[[0, 1], [-1, 0]]``
  per coordinate pair.

The generation rule builds the cotangent matrix from an (n x n) pair
``(P, Q)`` with ``Q`` invertible::

    j_cot = [[-P Q^-1,  -P Q^-1 P - Q],
             [ Q^-1,     Q^-1 P      ]]

and satisfies ``j_cot^2 = -E`` identically, for every such pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .expr import Num, add, mul, neg, sub
from .fields import MatrixField, Patch, ScalarField, resolve_mode

__all__ = [
    "InvalidStructureError",
    "SingularMatrixError",
    "AlmostComplexStructure",
    "PQPair",
    "BlockDecomposition",
    "HypercomplexStructure",
    "validate_acs",
    "reconstruct_from_pq",
    "normalize_at_origin",
    "extract_pq",
    "quaternionic_standard",
    "twistor_structure",
    "nijenhuis_residual",
    "make_hypercomplex",
    "ACS_TOLERANCE",
]

ACS_TOLERANCE = 1e-8


class InvalidStructureError(ValueError):
    """Matrix field does not square to minus the identity."""

    def __init__(self, residual: float, node: tuple[int, ...], tolerance: float):
        super().__init__(
            f"J(x)^2 + E has sup norm {residual:.3e} at node {node} "
            f"(tolerance {tolerance:.1e})")
        self.residual = residual
        self.node = node


class SingularMatrixError(ValueError):
    """Pointwise inversion hit a (near) singular node."""

    def __init__(self, message: str, node: tuple[int, ...]):
        super().__init__(f"{message} at node {node}")
        self.node = node


def _square_residual(values: np.ndarray) -> tuple[float, tuple[int, ...]]:
    d = values.shape[-1]
    gap = np.einsum("...ik,...kj->...ij", values, values) + np.eye(d)
    per_node = np.abs(gap).max(axis=(-2, -1))
    node = np.unravel_index(int(np.argmax(per_node)), per_node.shape)
    return float(per_node.max()), tuple(int(i) for i in node)


def _det_scale(values: np.ndarray) -> np.ndarray:
    """Relative singularity scale max(1, max|entry|)^n per node."""
    n = values.shape[-1]
    mag = np.abs(values).max(axis=(-2, -1))
    return np.maximum(1.0, mag) ** n


def pointwise_inverse(values: np.ndarray, what: str = "matrix",
                      threshold: float = 1e-12) -> np.ndarray:
    """LU-based inverse at every node, with a detectable singularity guard."""
    det = np.linalg.det(values)
    bad = np.abs(det) <= threshold * _det_scale(values)
    if bad.any():
        node = tuple(int(i) for i in np.argwhere(bad)[0])
        raise SingularMatrixError(f"{what} is singular", node)
    return np.linalg.inv(values)


@dataclass(eq=False)
class AlmostComplexStructure:
    """Validated structure with both tangent and cotangent representations."""

    patch: Patch
    j_tan: MatrixField
    j_cot: MatrixField
    acs_residual: float
    tolerance: float = ACS_TOLERANCE

    @property
    def dim(self) -> int:
        return self.patch.dim

    @property
    def n(self) -> int:
        return self.patch.dim_half

    @property
    def is_exact(self) -> bool:
        return self.j_cot.is_exact

    @property
    def valid(self) -> bool:
        return self.acs_residual <= self.tolerance

    def cot_values(self) -> np.ndarray:
        return self.j_cot.values

    def tan_values(self) -> np.ndarray:
        return self.j_tan.values


def validate_acs(m: MatrixField, rep: str = "cot", tolerance: float = ACS_TOLERANCE,
                 strict: bool = True) -> AlmostComplexStructure:
    """Check ``J(x)^2 = -E`` on the grid and build the structure.

    ``rep`` names the representation the input matrix uses ("cot" acts on
    1-form coefficients, "tan" on vector components).  With ``strict`` a
    residual above tolerance raises ``InvalidStructureError`` carrying the
    worst node; otherwise the returned structure is flagged invalid.
    """
    r, c = m.shape
    if r != c:
        raise ValueError(f"structure matrix must be square, got {m.shape}")
    if r % 2 != 0:
        raise ValueError(f"structure matrix must have even dimension, got {r}")
    if r != m.patch.dim:
        raise ValueError(f"matrix dimension {r} does not match patch dimension "
                         f"{m.patch.dim}")
    residual, node = _square_residual(m.values)
    if strict and residual > tolerance:
        raise InvalidStructureError(residual, node, tolerance)
    if rep == "cot":
        j_cot, j_tan = m, m.transpose()
    elif rep == "tan":
        j_tan, j_cot = m, m.transpose()
    else:
        raise ValueError(f"unknown representation {rep!r}")
    return AlmostComplexStructure(m.patch, j_tan, j_cot, residual, tolerance)


@dataclass(eq=False)
class PQPair:
    """Local moduli coordinates: n x n matrix fields with Q invertible."""

    patch: Patch
    P: MatrixField
    Q: MatrixField
    q_condition: float = 0.0

    def __post_init__(self):
        n = self.patch.dim_half
        if self.P.shape != (n, n) or self.Q.shape != (n, n):
            raise ValueError(f"P and Q must be {n} x {n} matrix fields")
        qv = self.Q.values
        det = np.linalg.det(qv)
        bad = np.abs(det) <= 1e-12 * _det_scale(qv)
        if bad.any():
            node = tuple(int(i) for i in np.argwhere(bad)[0])
            raise SingularMatrixError("Q is singular", node)
        qinv = np.linalg.inv(qv)
        norm = np.abs(qv).sum(axis=-1).max(axis=-1)
        inv_norm = np.abs(qinv).sum(axis=-1).max(axis=-1)
        cond = float((norm * inv_norm).max())
        if cond >= 1e12:
            raise SingularMatrixError(
                f"Q condition estimate {cond:.2e} exceeds 1e12",
                tuple(int(i) for i in
                      np.unravel_index(int(np.argmax(norm * inv_norm)), det.shape)))
        self.q_condition = cond


# -- symbolic adjugate inversion (small matrices of expression entries) -----


def _sym_det(entries) -> "object":
    n = len(entries)
    if n == 1:
        return entries[0][0]
    if n == 2:
        return sub(mul(entries[0][0], entries[1][1]),
                   mul(entries[0][1], entries[1][0]))
    acc = Num(0.0)
    for j in range(n):
        minor = [[entries[r][c] for c in range(n) if c != j] for r in range(1, n)]
        term = mul(entries[0][j], _sym_det(minor))
        acc = add(acc, term) if j % 2 == 0 else sub(acc, term)
    return acc


def symbolic_inverse(m: MatrixField) -> MatrixField:
    """Adjugate inverse with expression entries; practical for n <= 4."""
    n = m.shape[0]
    if not m.is_square:
        raise ValueError("only square matrices can be inverted")
    if n > 4:
        raise ValueError("symbolic inversion is limited to n <= 4")
    if not m.is_exact:
        raise ValueError("symbolic inversion needs expression-backed entries")
    entries = [[m.entries[i][j].expr for j in range(n)] for i in range(n)]
    det = _sym_det(entries)
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            minor = [[entries[r][c] for c in range(n) if c != i]
                     for r in range(n) if r != j]
            cof = _sym_det(minor) if n > 1 else Num(1.0)
            if (i + j) % 2 == 1:
                cof = neg(cof)
            row.append(ScalarField(m.patch, expr=cof))
        rows.append(row)
    det_field = ScalarField(m.patch, expr=det)
    return MatrixField(m.patch, [[entry / det_field for entry in row] for row in rows])


def reconstruct_from_pq(pq: PQPair, symbolic: str = "auto") -> AlmostComplexStructure:
    """Generate the cotangent matrix of a structure from a (P, Q) pair.

    The result squares to -E identically; the reported residual is pure
    roundoff.  With ``symbolic`` "auto" the entries stay expression-backed
    whenever P and Q are expression-backed and n <= 3 (so the structure can
    be differentiated exactly downstream); "never" forces sampled entries,
    "always" errors if the symbolic path is unavailable.
    """
    n = pq.patch.dim_half
    want_sym = symbolic != "never" and pq.P.is_exact and pq.Q.is_exact and n <= 3
    if symbolic == "always" and not want_sym:
        raise ValueError("symbolic reconstruction unavailable for this pair")
    if want_sym:
        qinv = symbolic_inverse(pq.Q)
        tl = -(pq.P @ qinv)
        tr = -(pq.P @ qinv @ pq.P) - pq.Q
        bl = qinv
        br = qinv @ pq.P
        rows = [list(tl.entries[i]) + list(tr.entries[i]) for i in range(n)]
        rows += [list(bl.entries[i]) + list(br.entries[i]) for i in range(n)]
        j_cot = MatrixField(pq.patch, rows)
    else:
        pv, qv = pq.P.values, pq.Q.values
        qinv = pointwise_inverse(qv, "Q")
        grid = pq.patch.resolution
        out = np.empty(grid + (2 * n, 2 * n))
        pqinv = pv @ qinv
        out[..., :n, :n] = -pqinv
        out[..., :n, n:] = -(pqinv @ pv) - qv
        out[..., n:, :n] = qinv
        out[..., n:, n:] = qinv @ pv
        j_cot = MatrixField.from_values(pq.patch, out)
    return validate_acs(j_cot, rep="cot", tolerance=1e-10)


@dataclass(eq=False)
class BlockDecomposition:
    """Constant change of frame G with G^-1 j_cot G = [[A, B+E], [C-E, D]]."""

    patch: Patch
    G: np.ndarray
    A: MatrixField
    B: MatrixField
    C: MatrixField
    D: MatrixField

    @property
    def n(self) -> int:
        return self.patch.dim_half

    def reassembled(self) -> np.ndarray:
        """[[A, B+E], [C-E, D]] stacked per node."""
        n = self.n
        grid = self.patch.resolution
        out = np.empty(grid + (2 * n, 2 * n))
        eye = np.eye(n)
        out[..., :n, :n] = self.A.values
        out[..., :n, n:] = self.B.values + eye
        out[..., n:, :n] = self.C.values - eye
        out[..., n:, n:] = self.D.values
        return out

    def identity_residuals(self) -> dict[str, float]:
        """Sup norms of the four block identities implied by J^2 = -E."""
        n = self.n
        eye = np.eye(n)
        a, d = self.A.values, self.D.values
        bp = self.B.values + eye
        cm = self.C.values - eye

        def sup(x):
            return float(np.abs(x).max())

        return {
            "sq_top": sup(a @ a + bp @ cm + eye),
            "off_top": sup(a @ bp + bp @ d),
            "off_bottom": sup(cm @ a + d @ cm),
            "sq_bottom": sup(cm @ bp + d @ d + eye),
        }


_NORMAL_FORM_CACHE: dict[int, np.ndarray] = {}


def _normal_form(n: int) -> np.ndarray:
    # [[0, E], [-E, 0]]: the cotangent matrix of the normalized structure
    if n not in _NORMAL_FORM_CACHE:
        z = np.zeros((n, n))
        e = np.eye(n)
        _NORMAL_FORM_CACHE[n] = np.block([[z, e], [-e, z]])
    return _NORMAL_FORM_CACHE[n]


def normalizing_frame(m0: np.ndarray, tolerance: float = 1e-8) -> np.ndarray:
    """Constant G with G^-1 m0 G = [[0, E], [-E, 0]].

    Built from the eigenvectors of m0 for eigenvalue +i: writing an
    eigenvector as a + ib, the columns of G are (a_1..a_n, b_1..b_n).
    """
    d = m0.shape[0]
    n = d // 2
    if np.abs(m0 - _normal_form(n)).max() <= 1e-12:
        return np.eye(d)
    w, v = np.linalg.eig(m0)
    order = np.argsort(np.abs(w - 1j))
    picked = order[:n]
    if np.abs(w[picked] - 1j).max() > tolerance:
        raise InvalidStructureError(float(np.abs(w[picked] - 1j).max()),
                                    (0,) * d, tolerance)
    cols = v[:, picked]
    cols = cols / np.abs(cols).max(axis=0)
    G = np.hstack([cols.real, cols.imag])
    if abs(np.linalg.det(G)) < 1e-10:
        raise ValueError("eigenvector frame is degenerate; structure may be "
                         "defective at the base point")
    return G


def conjugate_by_constant(m: MatrixField, left: np.ndarray,
                          right: np.ndarray) -> MatrixField:
    """left @ m(x) @ right with constant matrices, expression-aware."""
    if m.is_exact:
        lf = MatrixField.constant(m.patch, left)
        rf = MatrixField.constant(m.patch, right)
        return lf @ m @ rf
    vals = np.einsum("ik,...kl,lj->...ij", left, m.values, right)
    return MatrixField.from_values(m.patch, vals)


def normalize_at_origin(acs: AlmostComplexStructure,
                        base_point: tuple[int, ...] | None = None,
                        ) -> BlockDecomposition:
    """Decompose j_cot around a base node.

    Computes a constant frame G taking ``j_cot(base)`` to ``[[0, E], [-E, 0]]``
    (so A, B, C, D all vanish at the base node), then the four block fields on
    the whole patch.  Fails if ``C(x) - E`` becomes singular somewhere on the
    patch, which signals that the structure left the normalized neighborhood.
    """
    patch = acs.patch
    n = patch.dim_half
    if base_point is None:
        base_point = tuple(r // 2 for r in patch.resolution)
    for i, r in zip(base_point, patch.resolution):
        if not 0 <= i < r:
            raise ValueError(f"base point {base_point} is outside the grid")
    m0 = acs.cot_values()[tuple(base_point)]
    G = normalizing_frame(m0)
    Ginv = np.linalg.inv(G)
    jg = conjugate_by_constant(acs.j_cot, Ginv, G)
    eye = MatrixField.identity(patch, n)
    A = jg.block(slice(0, n), slice(0, n))
    B = jg.block(slice(0, n), slice(n, 2 * n)) - eye
    C = jg.block(slice(n, 2 * n), slice(0, n)) + eye
    D = jg.block(slice(n, 2 * n), slice(n, 2 * n))
    cm = C.values - np.eye(n)
    det = np.linalg.det(cm)
    bad = np.abs(det) <= 1e-12 * _det_scale(cm)
    if bad.any():
        node = tuple(int(i) for i in np.argwhere(bad)[0])
        raise SingularMatrixError(
            "C(x) - E is singular (structure leaves the normalized "
            "neighborhood; try a smaller patch)", node)
    return BlockDecomposition(patch, G, A, B, C, D)


def extract_pq(bd: BlockDecomposition) -> PQPair:
    """Moduli pair of a decomposition: P = (C-E)^-1 D, Q = (C-E)^-1."""
    n = bd.n
    cm = bd.C.values - np.eye(n)
    cminv = pointwise_inverse(cm, "C(x) - E")
    qv = cminv
    pv = cminv @ bd.D.values
    P = MatrixField.from_values(bd.patch, pv)
    Q = MatrixField.from_values(bd.patch, qv)
    return PQPair(bd.patch, P, Q)


def quaternionic_standard() -> tuple[np.ndarray, np.ndarray]:
    """The 4x4 right-multiplication matrices of the quaternion units i and j."""
    s = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, -1.0],
        [0.0, 0.0, 1.0, 0.0],
    ])
    t = np.array([
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, -1.0, 0.0, 0.0],
    ])
    return s, t


@dataclass(eq=False)
class HypercomplexStructure:
    """Anticommuting pair of almost-complex structures on a 4n patch."""

    patch: Patch
    J: AlmostComplexStructure
    K: AlmostComplexStructure
    anti_residual: float

    @property
    def quaternion_dim(self) -> int:
        return self.patch.dim // 4


def make_hypercomplex(J: AlmostComplexStructure, K: AlmostComplexStructure,
                      tolerance: float = ACS_TOLERANCE) -> HypercomplexStructure:
    if J.patch != K.patch:
        raise ValueError("J and K live on different patches")
    if J.patch.dim % 4 != 0:
        raise ValueError("hypercomplex structures need dimension 4n")
    jt, kt = J.tan_values(), K.tan_values()
    anti = float(np.abs(jt @ kt + kt @ jt).max())
    if anti > tolerance:
        raise InvalidStructureError(anti, (0,) * J.patch.dim, tolerance)
    return HypercomplexStructure(J.patch, J, K, anti)


def twistor_structure(h: HypercomplexStructure, b: float, c: float, d: float,
                      ) -> AlmostComplexStructure:
    """Structure b*J + c*K + d*(JK) for a unit point (b, c, d).

    The composition is taken in the cotangent representation
    (``j_cot_J @ j_cot_K``), which pairs the flat structure with the
    right-multiplication matrix b*S + c*T + d*(S@T).
    """
    if abs(b * b + c * c + d * d - 1.0) > 1e-12:
        raise ValueError("(b, c, d) must lie on the unit sphere")
    jk = h.J.j_cot @ h.K.j_cot
    combo = h.J.j_cot.scaled(b) + h.K.j_cot.scaled(c) + jk.scaled(d)
    return validate_acs(combo, rep="cot", tolerance=1e-10)


def nijenhuis_residual(acs: AlmostComplexStructure, mode: str = "auto") -> float:
    """Sup norm of the Nijenhuis tensor on coordinate vector-field pairs.

    ``N(e_i, e_j)^k`` is evaluated from the tangent representation at every
    interior node; the residual vanishes (up to mode tolerance) exactly for
    integrable structures.
    """
    mode = resolve_mode(mode, acs.is_exact)
    patch = acs.patch
    d = patch.dim
    npnts = patch.n_points
    T = acs.tan_values().reshape(npnts, d, d)
    DT = np.empty((npnts, d, d, d))  # [node, s, k, j] = d_s T[k, j]
    for s in range(1, d + 1):
        DT[:, s - 1] = acs.j_tan.diff(s, mode).values.reshape(npnts, d, d)
    term1 = np.einsum("nsi,nskj->nkij", T, DT)
    term3 = np.einsum("nks,njsi->nkij", T, DT)
    N = term1 - term1.transpose(0, 1, 3, 2) + term3 - term3.transpose(0, 1, 3, 2)
    interior = patch.interior_flat
    return float(np.abs(N[interior]).max())
