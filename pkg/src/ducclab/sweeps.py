"""Double-unitary sweep decomposition of exact states.

A normalized state with nonzero reference overlap is reduced to the
reference determinant by an ordered product of elementary two-level
unitaries ``exp(theta * (e^{i phi} E_sig - e^{-i phi} E_sig+))``, each of
which zeroes the coefficient of one target determinant against the
reference.  Three sweeps run in sequence:

1. eliminate every determinant with at least one inactive-occupied hole,
   grouped by its smallest hole (ascending), rank-ascending inside a group;
2. eliminate every remaining external determinant (all holes active, at
   least one inactive-virtual particle), grouped by its LARGEST particle,
   groups in DESCENDING order, rank-ascending inside a group;
3. eliminate the internal determinants, grouped by smallest hole
   (ascending), which leaves e^{i delta} times the reference.

The group keys matter: an elementary rotation acts on every determinant
pair related by its signature, so a later rotation may only touch an
already-eliminated determinant if the other pair member is also already
zero.  Grouping sweep 1 by the smallest (necessarily inactive) hole and
sweep 2 by the largest (necessarily inactive) particle guarantees exactly
that: the partner of an eliminated determinant always retains the group's
defining inactive index (hence was eliminated in the same, fully processed
group or an earlier one), or is the reference itself.  Keying sweep 2 on
occupied indices instead breaks the guarantee, because the partner can
lose all inactive particles and become an internal determinant that is
never eliminated; the ordering monitor below would trip on it.

Sweeps 1 and 2 use only external signatures, sweep 3 only internal ones,
so the logarithms of the accumulated unitaries provide the anti-Hermitian
external and internal generators of the product decomposition
``psi = e^{sigma_ext} e^{sigma_int} |ref>``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (CasSupportError, IntermediateNormalizationError,
                     InvalidDimensionError, OrderingViolationError)
from .fock import (DetClass, Determinant, ExcitationSignature, FockBasis,
                   SpinOrbitalPartition, apply_excitation, classify_determinant,
                   signature_between)
from .operators import QOperator, expm, logm_unitary

#: Coefficients with magnitude below this are treated as already eliminated.
ZERO_TOL = 1e-14
#: A previously eliminated coefficient re-growing past this trips the monitor.
REGROWTH_TOL = 1e-10


@dataclass(frozen=True)
class RotationStep:
    """One elementary rotation: generator
    ``angle * (e^{i phase} E_{occ}^{virt} - e^{-i phase} E^{occ}_{virt})``."""

    occ: tuple[int, ...]
    virt: tuple[int, ...]
    angle: float
    phase: float

    @property
    def signature(self) -> ExcitationSignature:
        return ExcitationSignature(self.occ, self.virt)


def rotation_pairs(sig: ExcitationSignature, basis: FockBasis
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All determinant pairs coupled by E_sig: (low indices, high indices,
    fermionic phases of <high|E_sig|low>)."""
    occ_mask = sum(1 << p for p in sig.occ)
    virt_mask = sum(1 << p for p in sig.virt)
    lows, highs, phases = [], [], []
    for j, mask in enumerate(basis.masks):
        if mask & occ_mask != occ_mask or mask & virt_mask:
            continue
        det2, ph = apply_excitation(sig, basis.determinant(j))
        lows.append(j)
        highs.append(basis.index_of(det2))
        phases.append(ph)
    return (np.asarray(lows, dtype=int), np.asarray(highs, dtype=int),
            np.asarray(phases, dtype=float))


def _apply_rotation(step: RotationStep, pairs, *arrays):
    """Left-multiply vectors/matrices in place by the rotation unitary.

    On each coupled pair (low, high) with phase ph the unitary acts as
        low'  =  cos(t)        * low - e^{-i phi} ph sin(t) * high
        high' =  e^{i phi} ph sin(t) * low + cos(t)         * high
    and as the identity elsewhere.
    """
    lows, highs, phases = pairs
    if lows.size == 0 or step.angle == 0.0:
        return
    c = np.cos(step.angle)
    s = np.sin(step.angle)
    eip = np.exp(1j * step.phase)
    for arr in arrays:
        lo = arr[lows].copy()
        hi = arr[highs].copy()
        ph = phases if lo.ndim == 1 else phases[:, None]
        arr[lows] = c * lo - np.conj(eip) * ph * s * hi
        arr[highs] = eip * ph * s * lo + c * hi


def rotation_generator(step: RotationStep, basis: FockBasis) -> QOperator:
    """Dense anti-Hermitian generator of the rotation (for provenance checks)."""
    lows, highs, phases = rotation_pairs(step.signature, basis)
    g = np.zeros((basis.size, basis.size), dtype=complex)
    eip = np.exp(1j * step.phase)
    for lo, hi, ph in zip(lows, highs, phases):
        g[hi, lo] += step.angle * eip * ph
        g[lo, hi] -= step.angle * np.conj(eip) * ph
    return QOperator(g, basis)


def rotation_unitary(step: RotationStep, basis: FockBasis) -> QOperator:
    """Dense unitary of one rotation, assembled pairwise (equals
    expm(rotation_generator))."""
    u = np.eye(basis.size, dtype=complex)
    _apply_rotation(step, rotation_pairs(step.signature, basis), u)
    return QOperator(u, basis)


def rotation_for_target(state: np.ndarray, target: Determinant,
                        ref: Determinant, basis: FockBasis) -> RotationStep:
    """Angle and phase that zero <target|state> against the de-excited
    partner (the reference for full-signature sweeps).

    With c = <target|state>, c' = <partner|state> and ph the fermionic sign
    of the generator matrix element, the rotated target coefficient is
    ``e^{i phi} ph sin(t) c' + cos(t) c``; it vanishes for
    ``e^{i phi} tan(t) = -c / (ph c')``.
    """
    sig = signature_between(ref, target)
    det2, ph = apply_excitation(sig, ref)
    assert det2.occupation == target.occupation
    c_t = complex(state[basis.index_of(target)])
    c_p = complex(state[basis.index_of(ref)])
    if abs(c_t) <= ZERO_TOL:
        return RotationStep(sig.occ, sig.virt, 0.0, 0.0)
    if abs(c_p) <= ZERO_TOL:
        # partner empty: a quarter turn moves |c_t| onto the partner
        return RotationStep(sig.occ, sig.virt, np.pi / 2, float(np.angle(-ph * c_t)))
    z = -c_t / (ph * c_p)
    return RotationStep(sig.occ, sig.virt, float(np.arctan(abs(z))), float(np.angle(z)))


def _sorted_group(items):
    return sorted(items, key=lambda sd: (sd[0].rank, sd[0].occ, sd[0].virt))


def _check_sweep_ordering(part: SpinOrbitalPartition):
    """The non-reintroduction guarantee needs the inactive classes at the
    index extremes: every inactive hole below the active holes, every
    inactive particle above the active particles."""
    if part.occ_inactive and part.occ_active \
            and max(part.occ_inactive) > min(part.occ_active):
        raise InvalidDimensionError(
            "sweep ordering requires all occ_inactive indices below occ_active")
    if part.virt_inactive and part.virt_active \
            and min(part.virt_inactive) < max(part.virt_active):
        raise InvalidDimensionError(
            "sweep ordering requires all virt_inactive indices above virt_active")


def external_targets(ref: Determinant, part: SpinOrbitalPartition,
                     basis: FockBasis) -> tuple[list, list]:
    """Ordered sweep-1 and sweep-2 target lists of (signature, index)."""
    _check_sweep_ordering(part)
    sweep1 = {mu: [] for mu in part.occ_inactive}
    sweep2 = {al: [] for al in part.virt_inactive}
    occ_inact = set(part.occ_inactive)
    for j, det in enumerate(basis):
        if classify_determinant(det, ref, part) is not DetClass.EXTERNAL:
            continue
        sig = signature_between(ref, det)
        if set(sig.occ) & occ_inact:
            sweep1[sig.occ[0]].append((sig, j))  # smallest hole is inactive
        else:
            sweep2[sig.virt[-1]].append((sig, j))  # largest particle is inactive
    ordered1 = [sd for mu in part.occ_inactive for sd in _sorted_group(sweep1[mu])]
    ordered2 = [sd for al in reversed(part.virt_inactive)
                for sd in _sorted_group(sweep2[al])]
    return ordered1, ordered2


def internal_targets(ref: Determinant, part: SpinOrbitalPartition,
                     basis: FockBasis) -> list:
    groups = {i: [] for i in part.occ_active}
    for j, det in enumerate(basis):
        if classify_determinant(det, ref, part) is not DetClass.INTERNAL:
            continue
        sig = signature_between(ref, det)
        groups[sig.occ[0]].append((sig, j))
    return [sd for i in part.occ_active for sd in _sorted_group(groups[i])]


def _run_targets(state, omegas, targets, ref, basis, check, eliminated):
    """Eliminate targets in order, accumulating rotations into the matrices
    of ``omegas`` and recording steps. ``eliminated`` holds indices whose
    coefficients must stay dead."""
    steps = []
    for sig, j in targets:
        step = rotation_for_target(state, basis.determinant(j), ref, basis)
        if step.angle != 0.0:
            pairs = rotation_pairs(sig, basis)
            _apply_rotation(step, pairs, state, *omegas)
            steps.append(step)
        eliminated.append(j)
        if check and eliminated:
            worst = float(np.abs(state[eliminated]).max())
            if worst > REGROWTH_TOL:
                raise OrderingViolationError(
                    f"eliminated coefficient re-grew to {worst:.3e} "
                    f"while processing target {sig}")
    return steps


@dataclass
class ExternalSweep:
    """Sweeps 1-2: accumulated unitaries and the CAS-supported state."""

    omega1: QOperator
    omega2: QOperator
    psi_act: np.ndarray
    steps1: list[RotationStep]
    steps2: list[RotationStep]

    @property
    def omega12(self) -> QOperator:
        return self.omega2 @ self.omega1


@dataclass
class InternalSweep:
    omega3: QOperator
    delta: float
    steps3: list[RotationStep]


@dataclass
class SweepResult:
    """Full decomposition psi = e^{sigma_ext} e^{sigma_int} |ref>."""

    omega1: QOperator
    omega2: QOperator
    omega3: QOperator
    sigma_ext: QOperator
    sigma_int: QOperator
    delta: float
    residual: float
    steps1: list[RotationStep]
    steps2: list[RotationStep]
    steps3: list[RotationStep]
    psi_act: np.ndarray

    @property
    def omega12(self) -> QOperator:
        return self.omega2 @ self.omega1


def sweep_external(psi: np.ndarray, ref: Determinant, part: SpinOrbitalPartition,
                   basis: FockBasis, check: bool = True) -> ExternalSweep:
    """Rotate away all external determinants; every generator is external.

    Raises OrderingViolationError if an already-eliminated coefficient
    re-grows (which would indicate a broken elimination order).
    """
    if abs(psi[basis.index_of(ref)]) < 1e-14:
        raise IntermediateNormalizationError("state has (numerically) zero reference overlap")
    state = np.array(psi, dtype=complex)
    dim = basis.size
    om1 = np.eye(dim, dtype=complex)
    om2 = np.eye(dim, dtype=complex)
    targets1, targets2 = external_targets(ref, part, basis)
    eliminated: list[int] = []
    steps1 = _run_targets(state, [om1], targets1, ref, basis, check, eliminated)
    steps2 = _run_targets(state, [om2], targets2, ref, basis, check, eliminated)
    return ExternalSweep(QOperator(om1, basis), QOperator(om2, basis),
                         state, steps1, steps2)


def sweep_internal(psi_act: np.ndarray, ref: Determinant,
                   part: SpinOrbitalPartition, basis: FockBasis,
                   check: bool = True, support_tol: float = 1e-10) -> InternalSweep:
    """Rotate a CAS-supported state onto e^{i delta}|ref> with internal
    generators only."""
    proj_ext = np.array([
        classify_determinant(d, ref, part) is DetClass.EXTERNAL for d in basis])
    ext_norm = float(np.linalg.norm(psi_act[proj_ext]))
    if ext_norm > support_tol:
        raise CasSupportError(
            f"state has external support {ext_norm:.3e} (tol {support_tol:.0e})")
    state = np.array(psi_act, dtype=complex)
    om3 = np.eye(basis.size, dtype=complex)
    eliminated: list[int] = []
    steps3 = _run_targets(state, [om3], internal_targets(ref, part, basis),
                          ref, basis, check, eliminated)
    c_ref = state[basis.index_of(ref)]
    delta = float(np.angle(c_ref))
    return InternalSweep(QOperator(om3, basis), delta, steps3)


def extract_sigmas(omega12: QOperator, omega3: QOperator, delta: float
                   ) -> tuple[QOperator, QOperator]:
    """Anti-Hermitian generators from the accumulated unitaries.

    sigma_ext = log(omega12^-1); sigma_int = log(omega3^-1) + i delta,
    the global phase being carried by the internal generator.
    """
    sigma_ext = logm_unitary(omega12.dagger())
    sigma_int = logm_unitary(omega3.dagger())
    eye = np.eye(omega3.basis.size)
    sigma_int = QOperator(sigma_int.matrix + 1j * delta * eye, omega3.basis)
    return sigma_ext, sigma_int


def decompose_state(psi: np.ndarray, ref: Determinant, part: SpinOrbitalPartition,
                    basis: FockBasis, check: bool = True) -> SweepResult:
    """Full pipeline: sweeps, generator extraction, reconstruction residual."""
    nrm = float(np.linalg.norm(psi))
    if nrm == 0.0:
        raise IntermediateNormalizationError("cannot decompose the zero vector")
    psi_n = np.asarray(psi, dtype=complex) / nrm
    ext = sweep_external(psi_n, ref, part, basis, check=check)
    intr = sweep_internal(ext.psi_act, ref, part, basis, check=check)
    sigma_ext, sigma_int = extract_sigmas(ext.omega12, intr.omega3, intr.delta)
    recon = expm(sigma_ext).matrix @ (expm(sigma_int).matrix @ basis.unit_vector(
        basis.index_of(ref)))
    residual = float(np.linalg.norm(recon - psi_n))
    return SweepResult(
        omega1=ext.omega1, omega2=ext.omega2, omega3=intr.omega3,
        sigma_ext=sigma_ext, sigma_int=sigma_int, delta=intr.delta,
        residual=residual, steps1=ext.steps1, steps2=ext.steps2,
        steps3=intr.steps3, psi_act=ext.psi_act)
