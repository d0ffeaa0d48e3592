"""Cluster amplitudes: extraction from exact states, internal/external
splitting, lowest-order anti-Hermitian generators, active-space projectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import IntermediateNormalizationError, SectorMismatchError
from .fock import (DetClass, Determinant, ExcitationSignature, FockBasis,
                   SpinOrbitalPartition, apply_deexcitation, apply_excitation,
                   classify_determinant, enumerate_signatures)
from .operators import QOperator


@dataclass
class Amplitudes:
    """Rank-indexed map from excitation signatures to complex amplitudes.

    Holds excitation sets (T and its internal/external parts) as well as
    de-excitation sets (Lambda, X) -- the latter are simply applied in
    adjoint form by :func:`deexcitation_matrix`.
    """

    entries: dict[ExcitationSignature, complex] = field(default_factory=dict)

    @property
    def max_rank(self) -> int:
        return max((sig.rank for sig in self.entries), default=0)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries.items())

    def __getitem__(self, sig: ExcitationSignature) -> complex:
        return self.entries.get(sig, 0.0 + 0.0j)

    def norm(self) -> float:
        return float(np.sqrt(sum(abs(t) ** 2 for t in self.entries.values())))

    def scaled(self, factor: complex) -> "Amplitudes":
        return Amplitudes({sig: factor * t for sig, t in self.entries.items()})


def excitation_matrix(amps: Amplitudes, basis: FockBasis) -> np.ndarray:
    """Matrix of sum_sig t_sig E_sig over the basis (rank 0 contributes the
    identity)."""
    mat = np.zeros((basis.size, basis.size), dtype=complex)
    for sig, t in amps:
        if t == 0:
            continue
        if sig.rank == 0:
            mat += t * np.eye(basis.size)
            continue
        for j, det in enumerate(basis):
            res = apply_excitation(sig, det)
            if res is None:
                continue
            d2, ph = res
            mat[basis.index_of(d2), j] += t * ph
    return mat


def deexcitation_matrix(amps: Amplitudes, basis: FockBasis) -> np.ndarray:
    """Matrix of sum_sig x_sig (E_sig)+ -- amplitude sets applied in adjoint
    (de-excitation) form, coefficients NOT conjugated."""
    mat = np.zeros((basis.size, basis.size), dtype=complex)
    for sig, t in amps:
        if t == 0:
            continue
        if sig.rank == 0:
            mat += t * np.eye(basis.size)
            continue
        for j, det in enumerate(basis):
            res = apply_deexcitation(sig, det)
            if res is None:
                continue
            d2, ph = res
            mat[basis.index_of(d2), j] += t * ph
    return mat


def cluster_analyze(psi: np.ndarray, ref: Determinant, basis: FockBasis,
                    c0_tol: float = 1e-12) -> Amplitudes:
    """Extract T with e^T |ref> = psi / <ref|psi> exactly.

    Rank-by-rank recursion: the coefficient of a rank-k determinant in
    e^T|ref> is the rank-k amplitude (times a phase) plus disconnected
    products of lower ranks; the products are obtained by exponentiating
    the lower-rank amplitude matrix rather than by hand-coded
    antisymmetrized sums, so one code path covers every rank.
    """
    if len(psi) != basis.size:
        raise SectorMismatchError("state vector length does not match basis")
    i0 = basis.index_of(ref)
    c0 = psi[i0]
    if abs(c0) < c0_tol:
        raise IntermediateNormalizationError(
            f"reference coefficient {abs(c0):.3e} below {c0_tol:.0e}")
    c = np.asarray(psi, dtype=complex) / c0
    e_ref = basis.unit_vector(i0)

    entries: dict[ExcitationSignature, complex] = {}
    max_rank = min(ref.N, ref.M - ref.N)
    for k in range(1, max_rank + 1):
        if entries:
            low = scipy.linalg.expm(excitation_matrix(Amplitudes(entries), basis)) @ e_ref
        else:
            low = e_ref
        for sig in enumerate_signatures(ref):
            if sig.rank != k:
                continue
            det, ph = apply_excitation(sig, ref)
            idx = basis.index_of(det)
            t = (c[idx] - low[idx]) / ph
            if t != 0:
                entries[sig] = complex(t)
    return Amplitudes(entries)


def split_amplitudes(T: Amplitudes, part: SpinOrbitalPartition
                     ) -> tuple[Amplitudes, Amplitudes]:
    """Internal part (all indices active) and external remainder; their
    union reproduces T exactly."""
    t_int, t_ext = {}, {}
    for sig, t in T:
        (t_int if part.is_internal_signature(sig) else t_ext)[sig] = t
    return Amplitudes(t_int), Amplitudes(t_ext)


def sigma_lowest_order(tpart: Amplitudes, basis: FockBasis) -> QOperator:
    """Lowest-order anti-Hermitian generator T - T+."""
    m = excitation_matrix(tpart, basis)
    return QOperator(m - m.conj().T, basis)


@dataclass
class Projectors:
    """Diagonal 0/1 projectors onto reference, internal and external spaces.

    P + Q_int + Q_ext is the identity and pairwise products vanish.
    """

    P: QOperator
    Q_int: QOperator
    Q_ext: QOperator


def build_projectors(ref: Determinant, basis: FockBasis,
                     part: SpinOrbitalPartition) -> Projectors:
    dim = basis.size
    diag_p = np.zeros(dim)
    diag_i = np.zeros(dim)
    diag_e = np.zeros(dim)
    for j, det in enumerate(basis):
        cls = classify_determinant(det, ref, part)
        if cls is DetClass.REFERENCE:
            diag_p[j] = 1.0
        elif cls is DetClass.INTERNAL:
            diag_i[j] = 1.0
        else:
            diag_e[j] = 1.0
    return Projectors(
        P=QOperator(np.diag(diag_p).astype(complex), basis),
        Q_int=QOperator(np.diag(diag_i).astype(complex), basis),
        Q_ext=QOperator(np.diag(diag_e).astype(complex), basis),
    )


def random_amplitudes(ref: Determinant, rng: np.random.Generator,
                      part: SpinOrbitalPartition | None = None,
                      kind: str = "any", scale: float = 0.1,
                      max_rank: int | None = None,
                      real: bool = False) -> Amplitudes:
    """Random amplitude set for property tests and verification batteries.

    kind: 'any', 'internal' or 'external' (the latter two need ``part``).
    Magnitudes are uniform in [-scale, scale] per quadrature component.
    """
    if kind not in ("any", "internal", "external"):
        raise ValueError(f"unknown amplitude kind {kind!r}")
    entries = {}
    for sig in enumerate_signatures(ref, max_rank=max_rank):
        if kind != "any":
            internal = part.is_internal_signature(sig)
            if (kind == "internal") != internal:
                continue
        val = rng.uniform(-scale, scale)
        if not real:
            val = val + 1j * rng.uniform(-scale, scale)
        entries[sig] = complex(val)
    return Amplitudes(entries)
