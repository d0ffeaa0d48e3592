"""Real-time propagation and its downfolded counterparts.

The full-space propagation is the oracle: exact stepping with a precomputed
exponential propagator.  The downfolded side propagates active-space
coefficients under a time-dependent Hermitian effective Hamiltonian built
from the external generator and its velocity via the derivative-of-
exponential series.  hbar = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .cluster import Amplitudes, build_projectors, deexcitation_matrix, excitation_matrix
from .downfold import EffectiveHamiltonian, cas_indices
from .errors import NormDriftError, OperatorPropertyError
from .fock import Determinant, FockBasis, SpinOrbitalPartition
from .operators import QOperator
from .sweeps import decompose_state

#: Default truncation order of the derivative-of-exponential series.
DEFAULT_SERIES_ORDER = 12


@dataclass
class TimeDecomposition:
    """Per-time sweep products: external generator, CAS coefficients of the
    internal state, global phase, reconstruction residual."""

    sigma_ext: QOperator
    c_int: np.ndarray
    delta: float
    residual: float


@dataclass
class Trajectory:
    """Stored states of a unitary evolution on a uniform time grid."""

    times: np.ndarray
    states: np.ndarray            # shape (n_times, dim)
    basis: FockBasis
    decompositions: list[TimeDecomposition] | None = None

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def state(self, k: int) -> np.ndarray:
        return self.states[k]


def propagate_full(H: QOperator, psi0: np.ndarray, dt: float,
                   nsteps: int) -> Trajectory:
    """Exact full-space evolution: state(t_k) = exp(-i H t_k) psi0.

    H must be Hermitian and time-independent; the step propagator is
    exponentiated once.  The initial state is normalized.
    """
    if not H.is_hermitian():
        raise OperatorPropertyError(
            f"propagation Hamiltonian not Hermitian (defect {H.hermiticity_defect():.3e})")
    if dt <= 0 or nsteps < 0:
        raise ValueError("need dt > 0 and nsteps >= 0")
    psi = np.asarray(psi0, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    u_dt = scipy.linalg.expm(-1j * dt * H.matrix)
    states = np.empty((nsteps + 1, H.basis.size), dtype=complex)
    states[0] = psi
    for k in range(nsteps):
        states[k + 1] = u_dt @ states[k]
    times = dt * np.arange(nsteps + 1)
    return Trajectory(times, states, H.basis)


# -- derivative of the exponential map ---------------------------------------


def _dexp_terms(X: np.ndarray, Xdot: np.ndarray, K: int):
    """Terms (-1)^k/(k+1)! I_k with I_0 = Xdot, I_k = [X, I_{k-1}]."""
    Ik = Xdot
    yield Ik
    for k in range(1, K + 1):
        Ik = X @ Ik - Ik @ X
        yield (-1) ** k / math.factorial(k + 1) * Ik


def _dexp_np(X: np.ndarray, Xdot: np.ndarray, K: int) -> np.ndarray:
    A = np.zeros_like(Xdot)
    for term in _dexp_terms(X, Xdot, K):
        A = A + term
    return A


#: Tail-norm certificate threshold: ||term_K|| / ||A|| must fall below this.
TAIL_CERTIFICATE = 1e-12
_K_CAP = 80


def _dexp_certified(X: np.ndarray, Xdot: np.ndarray, K_min: int) -> np.ndarray:
    """Series sum extended past K_min until the last term certifies
    convergence (factorial decay makes this cheap)."""
    A = np.zeros_like(Xdot)
    last = 0.0
    for k, term in enumerate(_dexp_terms(X, Xdot, _K_CAP)):
        A = A + term
        last = float(np.linalg.norm(term))
        if k >= K_min and last <= TAIL_CERTIFICATE * max(np.linalg.norm(A), 1e-300):
            return A
    raise OperatorPropertyError(
        f"derivative-of-exponential series not certified by order {_K_CAP} "
        f"(last term norm {last:.3e})")


def dexp_series(X: QOperator, Xdot: QOperator, K: int = DEFAULT_SERIES_ORDER) -> QOperator:
    """A(X, Xdot) with d/dt e^{X(t)} = e^{X} A: truncated commutator series
    sum_{k=0..K} (-1)^k/(k+1)! ad_X^k Xdot.

    Anti-Hermitian whenever X and Xdot are.
    """
    if K < 0:
        raise ValueError("series order K must be >= 0")
    return QOperator(_dexp_np(X.matrix, Xdot.matrix, K), X.basis)


def dexp_tail_ratio(X: QOperator, Xdot: QOperator,
                    K: int = DEFAULT_SERIES_ORDER) -> float:
    """Norm of the K-th series term over the norm of the sum: a cheap
    convergence certificate (factorial decay makes it fall fast)."""
    terms = list(_dexp_terms(X.matrix, Xdot.matrix, K))
    total = np.linalg.norm(sum(terms))
    if total == 0.0:
        return 0.0
    return float(np.linalg.norm(terms[-1]) / total)


def build_heff_td(H: QOperator, sigma_ext: QOperator, sigma_ext_dot: QOperator,
                  ref: Determinant, part: SpinOrbitalPartition,
                  K: int = DEFAULT_SERIES_ORDER, certify: bool = True,
                  anti_tol: float = 1e-10) -> EffectiveHamiltonian:
    """Time-dependent downfolded Hamiltonian
    (P+Q_int){ e^{-sigma} H e^{sigma} - i A(sigma, sigma_dot) }(P+Q_int).

    Hermitian: the transformed Hamiltonian is Hermitian and -iA is Hermitian
    for anti-Hermitian A.  With ``certify`` the velocity series is extended
    past K until its tail norm passes the convergence certificate.
    """
    for op, name in ((sigma_ext, "sigma_ext"), (sigma_ext_dot, "sigma_ext_dot")):
        defect = op.anti_hermiticity_defect()
        if defect > anti_tol:
            raise OperatorPropertyError(f"{name} not anti-Hermitian (defect {defect:.3e})")
    if certify:
        A = _dexp_certified(sigma_ext.matrix, sigma_ext_dot.matrix, K)
    else:
        A = _dexp_np(sigma_ext.matrix, sigma_ext_dot.matrix, K)
    right = scipy.linalg.expm(sigma_ext.matrix)
    left = scipy.linalg.expm(-sigma_ext.matrix)
    full = left @ H.matrix @ right - 1j * A
    cas = cas_indices(ref, part, H.basis)
    sub = full[np.ix_(cas, cas)]
    defect = float(np.linalg.norm(sub - sub.conj().T))
    if defect > 1e-9 * max(1.0, float(np.linalg.norm(sub))):
        raise OperatorPropertyError(
            f"time-dependent downfolded matrix not Hermitian (defect {defect:.3e})")
    sub = 0.5 * (sub + sub.conj().T)
    return EffectiveHamiltonian(sub, cas, H.basis, "ducc-td", hermitian=True)


# -- trajectory decomposition -------------------------------------------------


def decompose_trajectory(traj: Trajectory, ref: Determinant,
                         part: SpinOrbitalPartition,
                         check: bool = True) -> Trajectory:
    """Sweep-decompose every stored state; the global phase delta(t) is
    unwrapped continuously across steps so the generators stay smooth."""
    basis = traj.basis
    cas = cas_indices(ref, part, basis)
    decos: list[TimeDecomposition] = []
    prev_delta = None
    e_ref = basis.unit_vector(basis.index_of(ref))
    for k in range(len(traj.times)):
        res = decompose_state(traj.states[k], ref, part, basis, check=check)
        delta = res.delta
        if prev_delta is not None:
            delta += 2 * np.pi * round((prev_delta - delta) / (2 * np.pi))
        prev_delta = delta
        c_full = np.exp(1j * delta) * (res.omega3.matrix.conj().T @ e_ref)
        decos.append(TimeDecomposition(
            sigma_ext=res.sigma_ext, c_int=c_full[cas],
            delta=delta, residual=res.residual))
    return Trajectory(traj.times, traj.states, basis, decompositions=decos)


def sigma_dot_grid(sigmas: Sequence[np.ndarray], dt: float,
                   order: int = 2) -> list[np.ndarray]:
    """Finite-difference velocities of a matrix-valued grid function.

    Central differences in the interior, one-sided stencils of matching
    order at the endpoints.  order in {2, 4}.
    """
    n = len(sigmas)
    if order not in (2, 4):
        raise ValueError("finite-difference order must be 2 or 4")
    need = order + 1
    if n < need:
        raise ValueError(f"need at least {need} grid points for order {order}")
    f = sigmas
    out: list[np.ndarray] = []
    for k in range(n):
        if order == 2:
            if k == 0:
                d = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * dt)
            elif k == n - 1:
                d = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * dt)
            else:
                d = (f[k + 1] - f[k - 1]) / (2 * dt)
        else:
            if k == 0:
                d = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * dt)
            elif k == 1:
                d = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * dt)
            elif k == n - 2:
                d = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * dt)
            elif k == n - 1:
                d = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * dt)
            else:
                d = (f[k - 2] - 8 * f[k - 1] + 8 * f[k + 1] - f[k + 2]) / (12 * dt)
        out.append(d)
    return out


def heff_grid(H: QOperator, traj: Trajectory, ref: Determinant,
              part: SpinOrbitalPartition, K: int = DEFAULT_SERIES_ORDER,
              fd_order: int = 2) -> list[EffectiveHamiltonian]:
    """Time-dependent effective Hamiltonians on the trajectory's grid, with
    the generator velocity obtained by differencing the sweep output."""
    if traj.decompositions is None:
        traj = decompose_trajectory(traj, ref, part)
    sigmas = [d.sigma_ext.matrix for d in traj.decompositions]
    dots = sigma_dot_grid(sigmas, traj.dt, order=fd_order)
    out = []
    for sig, dot in zip(sigmas, dots):
        dot = 0.5 * (dot - dot.conj().T)  # differencing noise breaks anti-hermiticity
        out.append(build_heff_td(H, QOperator(sig, traj.basis),
                                 QOperator(dot, traj.basis), ref, part, K=K))
    return out


def grid_provider(times: np.ndarray, heffs: Sequence[EffectiveHamiltonian]
                  ) -> Callable[[float], np.ndarray]:
    """Callable t -> CAS matrix. Exact at grid nodes, linear in between."""
    mats = [h.matrix for h in heffs]
    t0 = float(times[0])
    dt = float(times[1] - times[0]) if len(times) > 1 else 1.0

    def provider(t: float) -> np.ndarray:
        x = (t - t0) / dt
        k = int(round(x))
        if 0 <= k < len(mats) and abs(x - k) < 1e-8:
            return mats[k]
        lo = int(np.floor(x))
        lo = min(max(lo, 0), len(mats) - 2)
        w = x - lo
        return (1 - w) * mats[lo] + w * mats[lo + 1]

    return provider


def propagate_internal(heff_provider: Callable[[float], np.ndarray],
                       c0: np.ndarray, dt: float, nsteps: int,
                       renormalize: bool = False,
                       drift_tol: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-step classical RK4 for i dc/dt = Heff(t) c.

    The provider is evaluated at the step midpoint for the internal stages.
    A per-step norm drift beyond ``drift_tol`` raises (the generator is
    Hermitian, so the exact flow is norm-preserving).
    """
    c = np.asarray(c0, dtype=complex).copy()
    dim = c.shape[0]
    out = np.empty((nsteps + 1, dim), dtype=complex)
    out[0] = c
    times = dt * np.arange(nsteps + 1)
    for k in range(nsteps):
        t = times[k]
        h0 = heff_provider(t)
        hm = heff_provider(t + 0.5 * dt)
        h1 = heff_provider(t + dt)
        norm_before = np.linalg.norm(c)
        k1 = -1j * (h0 @ c)
        k2 = -1j * (hm @ (c + 0.5 * dt * k1))
        k3 = -1j * (hm @ (c + 0.5 * dt * k2))
        k4 = -1j * (h1 @ (c + dt * k3))
        c = c + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        drift = abs(np.linalg.norm(c) - norm_before)
        if drift > drift_tol:
            raise NormDriftError(f"norm drift {drift:.3e} at step {k} exceeds {drift_tol:.0e}")
        if renormalize:
            c = c / np.linalg.norm(c)
        out[k + 1] = c
    return times, out


# -- Lagrangian evaluators ----------------------------------------------------


def evaluate_lagrangians(H: QOperator, sigma_int: QOperator, sigma_ext: QOperator,
                         sigma_int_dot: QOperator, sigma_ext_dot: QOperator,
                         ref: Determinant, part: SpinOrbitalPartition,
                         K: int = DEFAULT_SERIES_ORDER) -> tuple[complex, complex, complex]:
    """Three assembly routes of the double-unitary Lagrangian
    <ref| e^{-s_int} e^{-s_ext} (i d/dt - H) e^{s_ext} e^{s_int} |ref>.

    L_a: raw form, both exponential derivatives via the series.
    L_b: transformed form with the external velocity operator split off.
    L_c: effective-Hamiltonian form with active-space projectors inserted.
    All three agree identically for active-space-preserving internal
    generators; computing them independently cross-checks the plumbing.
    """
    basis = H.basis
    phi = basis.unit_vector(basis.index_of(ref))
    Ai = _dexp_np(sigma_int.matrix, sigma_int_dot.matrix, K)
    Ae = _dexp_np(sigma_ext.matrix, sigma_ext_dot.matrix, K)
    Ue = scipy.linalg.expm(sigma_ext.matrix)
    Uem = scipy.linalg.expm(-sigma_ext.matrix)
    Ui = scipy.linalg.expm(sigma_int.matrix)
    Uim = scipy.linalg.expm(-sigma_int.matrix)

    ket_i = Ui @ phi
    # raw: d/dt (e^{s_ext} e^{s_int}) = e^{s_ext} A_ext e^{s_int} + e^{s_ext} e^{s_int} A_int
    ddt_full = Ue @ (Ae @ ket_i) + Ue @ (Ui @ (Ai @ phi))
    l_a = phi.conj() @ (Uim @ (Uem @ (1j * ddt_full - H.matrix @ (Ue @ ket_i))))

    hbar = Uem @ H.matrix @ Ue
    ddt_int = Ui @ (Ai @ phi)
    l_b = phi.conj() @ (Uim @ (1j * ddt_int - (hbar - 1j * Ae) @ ket_i))

    projs = build_projectors(ref, basis, part)
    pq = projs.P.matrix + projs.Q_int.matrix
    heff_full = pq @ (hbar - 1j * Ae) @ pq
    l_c = phi.conj() @ (Uim @ (1j * ddt_int - heff_full @ ket_i))
    return complex(l_a), complex(l_b), complex(l_c)


def evaluate_sescc_lagrangian(H: QOperator, t_int: Amplitudes, t_ext: Amplitudes,
                              lam_int: Amplitudes, lam_ext: Amplitudes,
                              dt_int: Amplitudes, dt_ext: Amplitudes,
                              ref: Determinant) -> tuple[complex, complex]:
    """Two assembly routes of the bi-variational Lagrangian with the bra
    <ref|(1 + Lambda) e^{-T}.

    form1 evaluates the single expression directly; form2 evaluates the
    split into an internal block and an external-coupling block.  Equality
    is a pure operator identity (excitation operators commute and external
    excitations leave the active block).
    """
    basis = H.basis
    phi = basis.unit_vector(basis.index_of(ref))
    Ti = excitation_matrix(t_int, basis)
    Te = excitation_matrix(t_ext, basis)
    dTi = excitation_matrix(dt_int, basis)
    dTe = excitation_matrix(dt_ext, basis)
    Li = deexcitation_matrix(lam_int, basis)
    Le = deexcitation_matrix(lam_ext, basis)
    eye = np.eye(basis.size)
    eTi = scipy.linalg.expm(Ti)
    eTe = scipy.linalg.expm(Te)
    eTim = scipy.linalg.expm(-Ti)
    eTem = scipy.linalg.expm(-Te)

    ket = eTe @ (eTi @ phi)
    bra1 = phi.conj() @ (eye + Li + Le)
    form1 = bra1 @ (eTim @ (eTem @ (1j * ((dTe + dTi) @ ket) - H.matrix @ ket)))

    hbar = eTem @ H.matrix @ eTe
    ket_i = eTi @ phi
    inner = 1j * (dTi @ ket_i) - hbar @ ket_i
    term1 = (phi.conj() @ (eye + Li)) @ (eTim @ inner)
    term2 = (phi.conj() @ Le) @ (eTim @ (1j * (dTe @ ket_i) + inner))
    return complex(form1), complex(term1 + term2)


# -- export -------------------------------------------------------------------


def trajectory_to_csv(traj: Trajectory, H: QOperator, cas: np.ndarray, path,
                      heff_eigs: Sequence[np.ndarray] | None = None):
    """CSV dump: time, energy expectation, norm, active-space weight, and
    optionally the per-root effective-Hamiltonian eigenvalues.

    Floats are written with 17 significant digits for bit-exact re-reading.
    """
    g = lambda x: format(float(x), ".17g")
    header = ["time", "energy", "norm", "cas_weight"]
    if heff_eigs is not None:
        header += [f"heff_eig_{r}" for r in range(len(heff_eigs[0]))]
    lines = [",".join(header)]
    for k in range(len(traj.times)):
        psi = traj.states[k]
        energy = (psi.conj() @ (H.matrix @ psi)).real
        row = [g(traj.times[k]), g(energy), g(np.linalg.norm(psi)),
               g(np.linalg.norm(psi[cas]))]
        if heff_eigs is not None:
            row += [g(e) for e in heff_eigs[k]]
        lines.append(",".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
