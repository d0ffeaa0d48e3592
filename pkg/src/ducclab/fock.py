"""Determinants, fermionic phases, and active-space classification.

Conventions used everywhere downstream:

* Spin orbitals are indexed 0..M-1. Bit p of a determinant's occupation
  mask is set iff orbital p is occupied; printed bitstrings put orbital 0
  leftmost, so ``|1100>`` means orbitals 0 and 1 occupied.
* An excitation string ``a+_{a1}..a+_{ak} a_{ik}..a_{i1}`` acts right to
  left, and every elementary creator/annihilator picks up the sign
  ``(-1)**(number of occupied orbitals with smaller index at the moment it
  acts)``.
* A spin-orbital partition lists its four classes as occupied-inactive,
  occupied-active, virtual-active, virtual-inactive.  By default the four
  classes must be contiguous ascending index blocks in that order; the
  elimination-order guarantees of the sweep module rely on this ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from math import comb

import numpy as np

from .errors import InvalidDimensionError, SectorMismatchError

#: Desk-scale guard: dense sector matrices up to C(16,8)^2 stay tractable.
MAX_ORBITALS = 16


class DetClass(Enum):
    REFERENCE = "reference"
    INTERNAL = "internal"
    EXTERNAL = "external"


@dataclass(frozen=True)
class Determinant:
    """An M-orbital occupation-number state with a fixed particle content."""

    occupation: int
    M: int

    def __post_init__(self):
        if not 1 <= self.M <= MAX_ORBITALS:
            raise InvalidDimensionError(
                f"orbital count {self.M} outside 1..{MAX_ORBITALS}")
        if self.occupation < 0 or self.occupation >> self.M:
            raise InvalidDimensionError(
                f"occupation mask {self.occupation:#x} has bits outside 0..{self.M - 1}")

    @property
    def N(self) -> int:
        return self.occupation.bit_count()

    def is_occupied(self, p: int) -> bool:
        return bool(self.occupation >> p & 1)

    def occupied(self) -> tuple[int, ...]:
        return tuple(p for p in range(self.M) if self.occupation >> p & 1)

    def virtuals(self) -> tuple[int, ...]:
        return tuple(p for p in range(self.M) if not self.occupation >> p & 1)

    def bitstring(self) -> str:
        return "".join("1" if self.occupation >> p & 1 else "0" for p in range(self.M))

    def __str__(self) -> str:
        return f"|{self.bitstring()}>"


@dataclass(frozen=True)
class ExcitationSignature:
    """Ordered occupied/virtual index tuples of an excitation operator.

    ``occ`` are the reference orbitals annihilated and ``virt`` the ones
    created; both tuples are strictly ascending and of equal length.  The
    rank-0 signature ``((), ())`` is the identity.
    """

    occ: tuple[int, ...]
    virt: tuple[int, ...]

    def __post_init__(self):
        occ = tuple(self.occ)
        virt = tuple(self.virt)
        object.__setattr__(self, "occ", occ)
        object.__setattr__(self, "virt", virt)
        if len(occ) != len(virt):
            raise InvalidDimensionError("occ and virt tuples differ in length")
        for tup in (occ, virt):
            if any(b <= a for a, b in zip(tup, tup[1:])):
                raise InvalidDimensionError(f"index tuple {tup} not strictly ascending")
        if set(occ) & set(virt):
            raise InvalidDimensionError("occ and virt tuples overlap")

    @property
    def rank(self) -> int:
        return len(self.occ)


@dataclass(frozen=True)
class SpinOrbitalPartition:
    """The four orbital classes of an active-space partition.

    ``occ_inactive`` and ``occ_active`` together must be exactly the
    orbitals occupied in the reference determinant this partition is used
    with; :meth:`reference` builds that determinant.
    """

    occ_inactive: tuple[int, ...]
    occ_active: tuple[int, ...]
    virt_active: tuple[int, ...]
    virt_inactive: tuple[int, ...]
    allow_arbitrary: bool = False

    def __post_init__(self):
        blocks = [tuple(sorted(b)) for b in
                  (self.occ_inactive, self.occ_active, self.virt_active, self.virt_inactive)]
        for name, blk in zip(
                ("occ_inactive", "occ_active", "virt_active", "virt_inactive"), blocks):
            object.__setattr__(self, name, blk)
        flat = [p for blk in blocks for p in blk]
        if sorted(flat) != list(range(len(flat))):
            raise InvalidDimensionError(
                "partition classes must be disjoint and cover 0..M-1 exactly")
        if not self.allow_arbitrary and flat != sorted(flat):
            raise InvalidDimensionError(
                "partition classes must be contiguous ascending blocks "
                "(occ_inactive < occ_active < virt_active < virt_inactive); "
                "pass allow_arbitrary=True to bypass")

    @property
    def M(self) -> int:
        return (len(self.occ_inactive) + len(self.occ_active)
                + len(self.virt_active) + len(self.virt_inactive))

    @property
    def N(self) -> int:
        return len(self.occ_inactive) + len(self.occ_active)

    def reference(self) -> Determinant:
        mask = 0
        for p in self.occ_inactive + self.occ_active:
            mask |= 1 << p
        return Determinant(mask, self.M)

    def is_internal_signature(self, sig: ExcitationSignature) -> bool:
        """True iff every index of ``sig`` lies in the active classes.

        Rank-0 (the scalar/identity signature) counts as internal.
        """
        return (set(sig.occ) <= set(self.occ_active)
                and set(sig.virt) <= set(self.virt_active))


def homo_lumo_partition(M: int, N: int, n_occ_active: int,
                        n_virt_active: int) -> SpinOrbitalPartition:
    """Contiguous partition placing the active window around the Fermi level
    of the aufbau reference (orbitals 0..N-1 occupied)."""
    if not (0 <= n_occ_active <= N and 0 <= n_virt_active <= M - N):
        raise InvalidDimensionError(
            f"active window ({n_occ_active},{n_virt_active}) does not fit M={M}, N={N}")
    return SpinOrbitalPartition(
        occ_inactive=tuple(range(N - n_occ_active)),
        occ_active=tuple(range(N - n_occ_active, N)),
        virt_active=tuple(range(N, N + n_virt_active)),
        virt_inactive=tuple(range(N + n_virt_active, M)),
    )


class FockBasis:
    """All N-electron determinants of M spin orbitals, ordered by ascending
    occupation-mask value (deterministic)."""

    def __init__(self, M: int, N: int):
        if not (0 <= N <= M <= MAX_ORBITALS):
            raise InvalidDimensionError(
                f"need 0 <= N <= M <= {MAX_ORBITALS}, got M={M}, N={N}")
        self.M = M
        self.N = N
        masks = sorted(sum(1 << p for p in occ) for occ in combinations(range(M), N))
        self.masks = tuple(masks)
        self.dets = tuple(Determinant(m, M) for m in masks)
        self._index = {m: i for i, m in enumerate(masks)}
        assert len(masks) == comb(M, N)

    @property
    def size(self) -> int:
        return len(self.masks)

    def __len__(self) -> int:
        return len(self.masks)

    def __iter__(self):
        return iter(self.dets)

    def index_of(self, det: Determinant | int) -> int:
        mask = det.occupation if isinstance(det, Determinant) else det
        try:
            return self._index[mask]
        except KeyError:
            raise SectorMismatchError(
                f"determinant {mask:#x} is not in the (M={self.M}, N={self.N}) sector"
            ) from None

    def determinant(self, i: int) -> Determinant:
        return self.dets[i]

    def unit_vector(self, det: Determinant | int) -> np.ndarray:
        v = np.zeros(self.size, dtype=complex)
        v[self.index_of(det) if isinstance(det, Determinant) else det] = 1.0
        return v

    def same_sector(self, other: "FockBasis") -> bool:
        return self.M == other.M and self.N == other.N


def build_basis(M: int, N: int) -> FockBasis:
    """All N-electron determinants over M spin orbitals (desk-scale guarded)."""
    return FockBasis(M, N)


def aufbau_reference(M: int, N: int) -> Determinant:
    """Reference determinant with the N lowest-index orbitals occupied."""
    return Determinant((1 << N) - 1, M)


def _lower_count(mask: int, p: int) -> int:
    return (mask & ((1 << p) - 1)).bit_count()


def apply_operator_string(mask: int, creators: tuple[int, ...],
                          annihilators: tuple[int, ...]) -> tuple[int, int] | None:
    """Apply ``a+_{c1}..a+_{cm} a_{x1}..a_{xn}`` to an occupation mask.

    Tuples are given in operator-string order; the rightmost operator acts
    first.  Returns ``(new_mask, sign)`` or ``None`` when the string
    annihilates the state.
    """
    sign = 1
    for p in reversed(annihilators):
        if not mask >> p & 1:
            return None
        if _lower_count(mask, p) & 1:
            sign = -sign
        mask &= ~(1 << p)
    for p in reversed(creators):
        if mask >> p & 1:
            return None
        if _lower_count(mask, p) & 1:
            sign = -sign
        mask |= 1 << p
    return mask, sign


def apply_excitation(sig: ExcitationSignature,
                     det: Determinant) -> tuple[Determinant, int] | None:
    """Apply the excitation ``a+_{a1}..a+_{ak} a_{ik}..a_{i1}`` to ``det``.

    Returns ``(new_determinant, phase)`` with phase +-1, or ``None`` if any
    annihilated orbital is empty or any created orbital is filled.  The
    rank-0 signature returns ``(det, +1)``.
    """
    res = apply_operator_string(det.occupation, sig.virt, tuple(reversed(sig.occ)))
    if res is None:
        return None
    mask, sign = res
    return Determinant(mask, det.M), sign


def apply_deexcitation(sig: ExcitationSignature,
                       det: Determinant) -> tuple[Determinant, int] | None:
    """Apply the adjoint string ``a+_{i1}..a+_{ik} a_{ak}..a_{a1}``."""
    res = apply_operator_string(det.occupation, sig.occ, tuple(reversed(sig.virt)))
    if res is None:
        return None
    mask, sign = res
    return Determinant(mask, det.M), sign


def holes_and_particles(ref: Determinant,
                        det: Determinant) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Orbitals occupied in ref but not det (holes) and vice versa (particles)."""
    holes = ref.occupation & ~det.occupation
    parts = det.occupation & ~ref.occupation
    to_tuple = lambda m: tuple(p for p in range(ref.M) if m >> p & 1)
    return to_tuple(holes), to_tuple(parts)


def signature_between(ref: Determinant, det: Determinant) -> ExcitationSignature:
    """The unique signature with ``apply_excitation(sig, ref) -> det`` (up to phase)."""
    holes, parts = holes_and_particles(ref, det)
    return ExcitationSignature(holes, parts)


def classify_determinant(det: Determinant, ref: Determinant,
                         part: SpinOrbitalPartition) -> DetClass:
    """Reference / internal / external classification of ``det`` w.r.t. the
    active space.

    Internal means every hole lies in ``occ_active`` and every particle in
    ``virt_active``; anything touching an inactive orbital is external.
    """
    if det.M != ref.M or det.N != ref.N or part.M != ref.M:
        raise SectorMismatchError("determinant, reference and partition disagree on sector")
    if det.occupation == ref.occupation:
        return DetClass.REFERENCE
    holes, parts = holes_and_particles(ref, det)
    if set(holes) <= set(part.occ_active) and set(parts) <= set(part.virt_active):
        return DetClass.INTERNAL
    return DetClass.EXTERNAL


def enumerate_signatures(ref: Determinant, max_rank: int | None = None,
                         include_identity: bool = False):
    """Yield excitation signatures of the reference in (rank, occ, virt)
    lexicographic order."""
    occ = ref.occupied()
    virt = ref.virtuals()
    top = min(len(occ), len(virt))
    if max_rank is not None:
        top = min(top, max_rank)
    if include_identity:
        yield ExcitationSignature((), ())
    for k in range(1, top + 1):
        for o in combinations(occ, k):
            for v in combinations(virt, k):
                yield ExcitationSignature(o, v)
