"""Downfolded (effective) Hamiltonians over the active-space sub-basis.

Two flavours: the similarity-transformed, generally non-Hermitian one built
from external excitation amplitudes, and the unitarily transformed Hermitian
one built from an anti-Hermitian external generator.  Both act on the CAS
sub-basis ordered reference-first, then internal determinants in parent
basis order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .cluster import Amplitudes, excitation_matrix
from .errors import OperatorPropertyError
from .fock import (DetClass, Determinant, FockBasis, SpinOrbitalPartition,
                   classify_determinant)
from .operators import QOperator


def cas_indices(ref: Determinant, part: SpinOrbitalPartition,
                basis: FockBasis) -> np.ndarray:
    """Parent-basis indices of the CAS sub-basis: reference first, internal
    determinants after in parent order."""
    internal = [j for j, det in enumerate(basis)
                if classify_determinant(det, ref, part) is DetClass.INTERNAL]
    return np.array([basis.index_of(ref)] + internal, dtype=int)


@dataclass
class EffectiveHamiltonian:
    """Downfolded Hamiltonian on the CAS sub-basis."""

    matrix: np.ndarray
    cas: np.ndarray              # parent-basis indices, reference first
    basis: FockBasis             # parent basis
    source: str                  # 'sescc' | 'ducc' | 'ducc-td'
    hermitian: bool
    _eig: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def lift(self, c: np.ndarray) -> np.ndarray:
        """Embed a CAS vector into the parent sector."""
        full = np.zeros(self.basis.size, dtype=complex)
        full[self.cas] = c
        return full

    def restrict(self, psi: np.ndarray) -> np.ndarray:
        """CAS components of a parent-sector vector."""
        return np.asarray(psi, dtype=complex)[self.cas]

    def eigensystem(self):
        """Cached full spectrum (see :func:`cas_eigensolve`)."""
        if self._eig is None:
            self._eig = cas_eigensolve(self)
        return self._eig


def _transformed_projected(H: QOperator, gen_matrix: np.ndarray,
                           cas: np.ndarray) -> np.ndarray:
    right = scipy.linalg.expm(gen_matrix)
    left = scipy.linalg.expm(-gen_matrix)
    hbar = left @ H.matrix @ right
    return hbar[np.ix_(cas, cas)]


def downfold_sescc(H: QOperator, t_ext: Amplitudes, ref: Determinant,
                   part: SpinOrbitalPartition) -> EffectiveHamiltonian:
    """(P+Q_int) e^{-T_ext} H e^{T_ext} (P+Q_int) on the CAS sub-basis.

    Generally non-Hermitian; raises if the amplitude set contains an
    internal signature.
    """
    for sig, _ in t_ext:
        if part.is_internal_signature(sig):
            raise OperatorPropertyError(f"internal signature {sig} in external amplitude set")
    cas = cas_indices(ref, part, H.basis)
    sub = _transformed_projected(H, excitation_matrix(t_ext, H.basis), cas)
    return EffectiveHamiltonian(sub, cas, H.basis, "sescc", hermitian=False)


def downfold_ducc(H: QOperator, sigma_ext: QOperator, ref: Determinant,
                  part: SpinOrbitalPartition, anti_tol: float = 1e-10,
                  source: str = "ducc") -> EffectiveHamiltonian:
    """(P+Q_int) e^{-sigma_ext} H e^{sigma_ext} (P+Q_int), Hermitian on CAS."""
    defect = sigma_ext.anti_hermiticity_defect()
    if defect > anti_tol:
        raise OperatorPropertyError(
            f"external generator not anti-Hermitian (defect {defect:.3e})")
    cas = cas_indices(ref, part, H.basis)
    sub = _transformed_projected(H, sigma_ext.matrix, cas)
    herm_defect = float(np.linalg.norm(sub - sub.conj().T))
    if herm_defect > 1e-10 * max(1.0, float(np.linalg.norm(sub))):
        raise OperatorPropertyError(
            f"downfolded matrix unexpectedly non-Hermitian (defect {herm_defect:.3e})")
    sub = 0.5 * (sub + sub.conj().T)
    return EffectiveHamiltonian(sub, cas, H.basis, source, hermitian=True)


def cas_ci(H: QOperator, ref: Determinant,
           part: SpinOrbitalPartition) -> EffectiveHamiltonian:
    """Bare CAS-CI Hamiltonian (no transformation), Hermitian for Hermitian H."""
    cas = cas_indices(ref, part, H.basis)
    sub = H.matrix[np.ix_(cas, cas)]
    hermitian = float(np.linalg.norm(sub - sub.conj().T)) <= 1e-10
    if hermitian:
        sub = 0.5 * (sub + sub.conj().T)
    return EffectiveHamiltonian(sub, cas, H.basis, "cas-ci", hermitian=hermitian)


def cas_eigensolve(heff: EffectiveHamiltonian):
    """Full spectrum of the effective Hamiltonian.

    Hermitian path: real ascending eigenvalues, orthonormal eigenvectors.
    Non-Hermitian path: complex eigenvalues sorted by real part, right
    eigenvectors normalized to unit 2-norm.
    """
    if heff.hermitian:
        vals, vecs = np.linalg.eigh(heff.matrix)
        return vals, vecs
    vals, vecs = np.linalg.eig(heff.matrix)
    order = np.argsort(vals.real, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    vecs = vecs / np.linalg.norm(vecs, axis=0, keepdims=True)
    return vals, vecs


def match_root(heff: EffectiveHamiltonian, target_cas: np.ndarray) -> int:
    """Index of the eigenvector with maximal overlap with ``target_cas``.

    Root selection is by eigenvector overlap, not energy ordering: the
    non-Hermitian spectrum can reorder roots.
    """
    vals, vecs = heff.eigensystem()
    t = target_cas / np.linalg.norm(target_cas)
    overlaps = np.abs(vecs.conj().T @ t) / np.linalg.norm(vecs, axis=0)
    return int(np.argmax(overlaps))


# -- export -----------------------------------------------------------------


def effective_to_dict(heff: EffectiveHamiltonian,
                      part: SpinOrbitalPartition | None = None,
                      residuals: dict | None = None) -> dict:
    """JSON-serializable dump: dense matrix plus metadata."""
    out = {
        "source": heff.source,
        "hermitian": heff.hermitian,
        "dim": heff.dim,
        "parent_sector": {"M": heff.basis.M, "N": heff.basis.N},
        "cas_determinants": [heff.basis.determinant(int(j)).bitstring()
                             for j in heff.cas],
        "matrix_real": heff.matrix.real.tolist(),
        "matrix_imag": heff.matrix.imag.tolist(),
    }
    if part is not None:
        out["partition"] = {
            "occ_inactive": list(part.occ_inactive),
            "occ_active": list(part.occ_active),
            "virt_active": list(part.virt_active),
            "virt_inactive": list(part.virt_inactive),
        }
    if residuals:
        out["residuals"] = residuals
    return out


def write_effective_json(heff: EffectiveHamiltonian, path,
                         part: SpinOrbitalPartition | None = None,
                         residuals: dict | None = None):
    with open(path, "w") as fh:
        json.dump(effective_to_dict(heff, part, residuals), fh, indent=2, sort_keys=True)
        fh.write("\n")


def effective_matrix_dump(heff: EffectiveHamiltonian) -> str:
    """FCIDUMP-like plain-text matrix dump with a basis listing.

    Header line, one line per CAS determinant, then 1-based
    ``re im i j`` entries for the nonzero matrix elements.
    """
    lines = [f"&HEFF DIM={heff.dim} SOURCE={heff.source} "
             f"HERMITIAN={int(heff.hermitian)} M={heff.basis.M} N={heff.basis.N} &END"]
    for rank, j in enumerate(heff.cas):
        lines.append(f"DET {rank + 1} {heff.basis.determinant(int(j)).bitstring()}")
    for i in range(heff.dim):
        for j in range(heff.dim):
            z = heff.matrix[i, j]
            if z != 0:
                lines.append(f"{z.real:.17g} {z.imag:.17g} {i + 1} {j + 1}")
    return "\n".join(lines) + "\n"
