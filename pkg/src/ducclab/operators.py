"""Many-body operators as dense matrices over a Fock-sector basis.

Everything is correctness-first dense complex linear algebra: the sector
dimension is capped by the desk-scale guard in :mod:`ducclab.fock`, so
Hamiltonians, exponentials and logarithms are ordinary LAPACK-sized
problems.  hbar = 1 throughout.
"""

from __future__ import annotations

import re
from itertools import combinations

import numpy as np
import scipy.linalg

from .errors import (BranchCutError, InvalidDimensionError,
                     OperatorPropertyError, SectorMismatchError)
from .fock import FockBasis, apply_operator_string

#: term = (coefficient, creators, annihilators) in operator-string order,
#: i.e. coefficient * a+_{c1}..a+_{cm} a_{x1}..a_{xn}.
Term = tuple[complex, tuple[int, ...], tuple[int, ...]]


class QOperator:
    """A many-body operator as a dense complex matrix over a FockBasis.

    Optionally carries the second-quantized term list it was built from.
    """

    def __init__(self, matrix: np.ndarray, basis: FockBasis,
                 terms: tuple[Term, ...] | None = None):
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise InvalidDimensionError(f"operator matrix must be square, got {matrix.shape}")
        if matrix.shape[0] != basis.size:
            raise InvalidDimensionError(
                f"matrix dimension {matrix.shape[0]} != basis size {basis.size}")
        self.matrix = matrix
        self.basis = basis
        self.terms = terms

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, basis: FockBasis) -> "QOperator":
        return cls(np.zeros((basis.size, basis.size), dtype=complex), basis)

    @classmethod
    def identity(cls, basis: FockBasis) -> "QOperator":
        return cls(np.eye(basis.size, dtype=complex), basis)

    @classmethod
    def from_terms(cls, terms, basis: FockBasis) -> "QOperator":
        """Assemble the matrix of a second-quantized term list.

        Each term is applied literally to every basis determinant with
        fermionic phases, so the stored matrix always equals the sum of the
        term applications.
        """
        mat = np.zeros((basis.size, basis.size), dtype=complex)
        terms = tuple((complex(c), tuple(cr), tuple(an)) for c, cr, an in terms)
        for coeff, creators, annihilators in terms:
            if coeff == 0:
                continue
            for j, mask in enumerate(basis.masks):
                res = apply_operator_string(mask, creators, annihilators)
                if res is None:
                    continue
                new_mask, sign = res
                mat[basis.index_of(new_mask), j] += coeff * sign
        return cls(mat, basis, terms=terms)

    # -- algebra -----------------------------------------------------------

    def dagger(self) -> "QOperator":
        return QOperator(self.matrix.conj().T, self.basis)

    def _check_same_basis(self, other: "QOperator"):
        if not self.basis.same_sector(other.basis):
            raise SectorMismatchError("operators live on different Fock sectors")

    def __add__(self, other: "QOperator") -> "QOperator":
        self._check_same_basis(other)
        return QOperator(self.matrix + other.matrix, self.basis)

    def __sub__(self, other: "QOperator") -> "QOperator":
        self._check_same_basis(other)
        return QOperator(self.matrix - other.matrix, self.basis)

    def __neg__(self) -> "QOperator":
        return QOperator(-self.matrix, self.basis)

    def __mul__(self, scalar) -> "QOperator":
        return QOperator(self.matrix * scalar, self.basis)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, QOperator):
            self._check_same_basis(other)
            return QOperator(self.matrix @ other.matrix, self.basis)
        return self.matrix @ other

    def apply(self, vec: np.ndarray) -> np.ndarray:
        return self.matrix @ vec

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix))

    # -- property checks ---------------------------------------------------

    def hermiticity_defect(self) -> float:
        return float(np.linalg.norm(self.matrix - self.matrix.conj().T))

    def anti_hermiticity_defect(self) -> float:
        return float(np.linalg.norm(self.matrix + self.matrix.conj().T))

    def unitarity_defect(self) -> float:
        eye = np.eye(self.basis.size)
        return float(np.linalg.norm(self.matrix @ self.matrix.conj().T - eye))

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return self.hermiticity_defect() <= tol

    def is_anti_hermitian(self, tol: float = 1e-10) -> bool:
        return self.anti_hermiticity_defect() <= tol

    def is_unitary(self, tol: float = 1e-10) -> bool:
        return self.unitarity_defect() <= tol

    def __repr__(self):
        return f"QOperator(dim={self.basis.size}, M={self.basis.M}, N={self.basis.N})"


class IntegralSet:
    """One- and two-body integrals over M spin orbitals (Hartree units).

    Two-body integrals are stored in the antisymmetrized physicist
    convention ``v[p,q,r,s] = <pq||rs>``; the Hamiltonian they define is
    ``sum h[p,q] a+_p a_q + 1/4 sum <pq||rs> a+_p a+_q a_s a_r + core``.
    """

    def __init__(self, one_body: np.ndarray, two_body: np.ndarray,
                 core_energy: float = 0.0):
        h = np.asarray(one_body, dtype=complex)
        v = np.asarray(two_body, dtype=complex)
        M = h.shape[0]
        if h.shape != (M, M) or v.shape != (M, M, M, M):
            raise InvalidDimensionError("integral arrays have inconsistent shapes")
        scale = max(1.0, float(np.abs(h).max(initial=0.0)), float(np.abs(v).max(initial=0.0)))
        if np.linalg.norm(h - h.conj().T) > 1e-10 * scale:
            raise OperatorPropertyError("one-body integrals are not Hermitian")
        for perm, sgn in (((1, 0, 2, 3), -1), ((0, 1, 3, 2), -1)):
            if np.abs(v - sgn * v.transpose(perm)).max() > 1e-10 * scale:
                raise OperatorPropertyError("two-body integrals are not antisymmetrized")
        if np.abs(v - v.transpose(2, 3, 0, 1).conj()).max() > 1e-10 * scale:
            raise OperatorPropertyError("two-body integrals are not Hermitian")
        self.one_body = h
        self.two_body = v
        self.core_energy = float(core_energy)
        self.M = M

    @classmethod
    def from_chemist(cls, one_body: np.ndarray, two_body_chem: np.ndarray,
                     core_energy: float = 0.0) -> "IntegralSet":
        """Ingest chemist-notation integrals (pq|rs) and antisymmetrize.

        <pq|rs> = (pr|qs), so <pq||rs> = (pr|qs) - (ps|qr).
        """
        chem = np.asarray(two_body_chem, dtype=complex)
        phys = chem.transpose(0, 2, 1, 3)
        v = phys - phys.transpose(0, 1, 3, 2)
        return cls(one_body, v, core_energy)


def hamiltonian_from_integrals(ints: IntegralSet, basis: FockBasis) -> QOperator:
    """Dense sector Hamiltonian built by applying every integral term with
    fermionic phases."""
    if ints.M != basis.M:
        raise InvalidDimensionError(
            f"integral orbital count {ints.M} != basis orbital count {basis.M}")
    dim = basis.size
    M = basis.M
    h = ints.one_body
    v = ints.two_body
    mat = np.zeros((dim, dim), dtype=complex)
    for j, mask in enumerate(basis.masks):
        occ = [p for p in range(M) if mask >> p & 1]
        mat[j, j] += ints.core_energy
        # one-body: sum_pq h[p,q] a+_p a_q
        for q in occ:
            m1, s1 = apply_operator_string(mask, (), (q,))
            for p in range(M):
                if h[p, q] == 0 or m1 >> p & 1:
                    continue
                m2, s2 = apply_operator_string(m1, (p,), ())
                mat[basis.index_of(m2), j] += h[p, q] * s1 * s2
        # two-body: sum_{p<q, r<s} <pq||rs> a+_p a+_q a_s a_r
        for ri in range(len(occ)):
            r = occ[ri]
            m1, s1 = apply_operator_string(mask, (), (r,))
            for si in range(ri + 1, len(occ)):
                s = occ[si]
                m2, s2 = apply_operator_string(m1, (), (s,))
                empty = [p for p in range(M) if not m2 >> p & 1]
                for p, q in combinations(empty, 2):
                    val = v[p, q, r, s]
                    if val == 0:
                        continue
                    m3, s3 = apply_operator_string(m2, (q,), ())
                    m4, s4 = apply_operator_string(m3, (p,), ())
                    mat[basis.index_of(m4), j] += val * s1 * s2 * s3 * s4
    return QOperator(mat, basis)


def build_hubbard(L: int, t: float, U: float, basis: FockBasis) -> QOperator:
    """Open-boundary Hubbard chain, H = -t sum (c+ c + h.c.) + U sum n_up n_dn.

    Spin orbital p = 2*site + spin (spin 0 = up, 1 = down).  Built by direct
    term application, independently of the integral pathway.
    """
    if basis.M != 2 * L:
        raise InvalidDimensionError(f"basis has M={basis.M} orbitals, expected 2L={2 * L}")
    terms: list[Term] = []
    for i in range(L - 1):
        for sp in (0, 1):
            p, q = 2 * i + sp, 2 * (i + 1) + sp
            terms.append((-t, (p,), (q,)))
            terms.append((-t, (q,), (p,)))
    for i in range(L):
        up, dn = 2 * i, 2 * i + 1
        terms.append((U, (up, dn), (dn, up)))  # a+_up a+_dn a_dn a_up = n_up n_dn
    return QOperator.from_terms(terms, basis)


def hubbard_integrals(L: int, t: float, U: float) -> IntegralSet:
    """The same Hubbard chain expressed as an IntegralSet (cross-check path)."""
    M = 2 * L
    h = np.zeros((M, M), dtype=complex)
    for i in range(L - 1):
        for sp in (0, 1):
            p, q = 2 * i + sp, 2 * (i + 1) + sp
            h[p, q] = h[q, p] = -t
    chem = np.zeros((M, M, M, M), dtype=complex)
    for i in range(L):
        up, dn = 2 * i, 2 * i + 1
        chem[up, up, dn, dn] = U
        chem[dn, dn, up, up] = U
    return IntegralSet.from_chemist(h, chem)


def build_pairing(levels: int, g: float, basis: FockBasis,
                  spacing: float = 1.0) -> QOperator:
    """Picket-fence pairing model: doubly degenerate levels eps_p = p*spacing
    and H = sum eps_p n_p - g sum_{pq} P+_p P_q with P+_p = a+_{p,up} a+_{p,dn}."""
    if basis.M != 2 * levels:
        raise InvalidDimensionError(
            f"basis has M={basis.M} orbitals, expected 2*levels={2 * levels}")
    terms: list[Term] = []
    for p in range(levels):
        for sp in (0, 1):
            orb = 2 * p + sp
            terms.append((spacing * p, (orb,), (orb,)))
    for p in range(levels):
        for q in range(levels):
            terms.append((-g, (2 * p, 2 * p + 1), (2 * q + 1, 2 * q)))
    return QOperator.from_terms(terms, basis)


def random_hermitian_hamiltonian(basis: FockBasis, rng: np.random.Generator,
                                 spread: float = 1.0,
                                 coupling: float = 0.3) -> QOperator:
    """Random Hermitian sector Hamiltonian whose ground state is dominated by
    the lowest-mask (aufbau) determinant.

    A rising diagonal keeps the reference coefficient large enough for
    cluster analysis; ``coupling`` scales a dense Hermitian perturbation.
    """
    dim = basis.size
    diag = spread * np.arange(dim, dtype=float)
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    mat = np.diag(diag).astype(complex) + coupling * 0.5 * (a + a.conj().T)
    return QOperator(mat, basis)


def expm(X: QOperator) -> QOperator:
    """Matrix exponential (scaling-and-squaring Pade)."""
    if not np.all(np.isfinite(X.matrix)):
        raise OperatorPropertyError("expm input has non-finite entries")
    return QOperator(scipy.linalg.expm(X.matrix), X.basis)


def logm_unitary(U: QOperator, unitary_tol: float = 1e-10,
                 branch_tol: float = 1e-10) -> QOperator:
    """Principal logarithm of a unitary operator, returned anti-Hermitian.

    Uses the complex Schur form (exact diagonalization for normal input).
    Raises :class:`BranchCutError` when an eigenvalue sits on the branch
    cut at -1, where the principal logarithm is ambiguous.
    """
    A = U.matrix
    if not np.all(np.isfinite(A)):
        raise OperatorPropertyError("logm input has non-finite entries")
    defect = U.unitarity_defect()
    if defect > unitary_tol:
        raise OperatorPropertyError(f"logm input not unitary (defect {defect:.3e})")
    T, Z = scipy.linalg.schur(A, output="complex")
    lam = np.diag(T)
    if np.abs(lam + 1.0).min() < branch_tol:
        raise BranchCutError("unitary has an eigenvalue at -1; principal log undefined")
    L = (Z * np.log(lam)) @ Z.conj().T
    L = 0.5 * (L - L.conj().T)  # exact log of unitary input is anti-Hermitian
    return QOperator(L, U.basis)


def commutator(A: QOperator, B: QOperator) -> QOperator:
    """[A, B] = AB - BA."""
    if not A.basis.same_sector(B.basis):
        raise SectorMismatchError("commutator arguments live on different sectors")
    return QOperator(A.matrix @ B.matrix - B.matrix @ A.matrix, A.basis)


# -- FCIDUMP-style ingestion -----------------------------------------------

_FCIDUMP_HEADER = re.compile(r"NORB\s*=\s*(\d+)", re.IGNORECASE)
_FCIDUMP_NELEC = re.compile(r"NELEC\s*=\s*(\d+)", re.IGNORECASE)


def read_fcidump(path) -> tuple[IntegralSet, int]:
    """Read an FCIDUMP-style text file over spin orbitals.

    Data lines are ``value i j k l`` with 1-based indices: ``i j k l`` a
    chemist two-electron integral (ij|kl), ``i j 0 0`` a one-electron
    integral, ``0 0 0 0`` the core energy.  The header is validated for
    NORB/NELEC and otherwise ignored.  Real eightfold permutational
    symmetry is applied to two-electron entries.

    Returns the IntegralSet and the NELEC declared in the header.
    """
    with open(path) as fh:
        text = fh.read()
    m = _FCIDUMP_HEADER.search(text)
    if m is None:
        raise OperatorPropertyError("FCIDUMP header lacks NORB")
    norb = int(m.group(1))
    m = _FCIDUMP_NELEC.search(text)
    nelec = int(m.group(1)) if m else -1

    lines = text.splitlines()
    start = 0
    for k, line in enumerate(lines):
        if "&END" in line.upper() or line.strip() == "/":
            start = k + 1
            break
    else:
        # single-line header: skip the first line
        start = 1

    h = np.zeros((norb, norb), dtype=complex)
    chem = np.zeros((norb, norb, norb, norb), dtype=complex)
    core = 0.0
    for line in lines[start:]:
        parts = line.split()
        if len(parts) != 5:
            if parts:
                raise OperatorPropertyError(f"malformed FCIDUMP line: {line!r}")
            continue
        val = float(parts[0].replace("D", "E").replace("d", "e"))
        i, j, k, l = (int(x) for x in parts[1:])
        if i == j == k == l == 0:
            core = val
        elif k == l == 0:
            h[i - 1, j - 1] = val
            h[j - 1, i - 1] = val
        else:
            i, j, k, l = i - 1, j - 1, k - 1, l - 1
            for a, b, c, d in ((i, j, k, l), (j, i, k, l), (i, j, l, k), (j, i, l, k),
                               (k, l, i, j), (l, k, i, j), (k, l, j, i), (l, k, j, i)):
                chem[a, b, c, d] = val
    return IntegralSet.from_chemist(h, chem, core), nelec
