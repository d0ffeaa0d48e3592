"""Wick-rotated flows of the downfolded Hamiltonian.

Shifted steepest-descent evolution of active-space coefficients,
c(tau+dtau) = N exp(-dtau (Heff - S)) c(tau) with the shift S recomputed
each step as the instantaneous energy of the normalized state.  Exponential
(exact) stepping is the default; an explicit-Euler mode mirrors the literal
first-order flow.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg

from .downfold import EffectiveHamiltonian
from .errors import ConvergenceError, OperatorPropertyError


@dataclass
class ImaginaryFlowState:
    """One point of the flow: unit-norm CAS vector, the shift used to reach
    it (energy of the pre-step state), and the (tau, shift) history."""

    tau: float
    c_int: np.ndarray
    shift: float
    energy_history: list[tuple[float, float]]


class FlowResult(NamedTuple):
    energy: float
    c_int: np.ndarray
    history: list[tuple[float, float, float]]  # (tau, shift, residual norm)


def _rayleigh(mat: np.ndarray, c: np.ndarray) -> float:
    return float((c.conj() @ (mat @ c)).real / (c.conj() @ c).real)


def initial_flow_state(c0: np.ndarray, heff: EffectiveHamiltonian) -> ImaginaryFlowState:
    c = np.asarray(c0, dtype=complex)
    c = c / np.linalg.norm(c)
    s = _rayleigh(heff.matrix, c)
    return ImaginaryFlowState(0.0, c, s, [(0.0, s)])


def imaginary_step(state: ImaginaryFlowState, heff: EffectiveHamiltonian,
                   dtau: float, explicit_euler: bool = False) -> ImaginaryFlowState:
    """One shifted descent step followed by renormalization.

    The shift is the energy of the incoming state; with exponential
    stepping it only rescales the norm, so descent monotonicity is exact.
    """
    if dtau <= 0:
        raise ValueError("dtau must be positive")
    if not heff.hermitian:
        raise OperatorPropertyError("imaginary-time flow needs a Hermitian generator")
    c = state.c_int
    s = _rayleigh(heff.matrix, c)
    if explicit_euler:
        c1 = c - dtau * (heff.matrix @ c - s * c)
    else:
        vals, vecs = heff.eigensystem()  # cached on the operator
        c1 = vecs @ (np.exp(-dtau * (vals - s)) * (vecs.conj().T @ c))
    c1 = c1 / np.linalg.norm(c1)
    tau1 = state.tau + dtau
    return ImaginaryFlowState(tau1, c1, s, state.energy_history + [(tau1, s)])


def imaginary_evolve(heff: EffectiveHamiltonian, c0: np.ndarray,
                     dtau: float = 0.1, tol: float = 1e-10,
                     max_steps: int = 100_000,
                     explicit_euler: bool = False) -> FlowResult:
    """Iterate the stationary flow until successive shifts agree within tol.

    Converges to the lowest eigenpair the start vector overlaps; a start
    exactly orthogonal to the ground state descends to the lowest reachable
    excited state instead (the flow preserves exact orthogonality).
    """
    state = initial_flow_state(c0, heff)
    energy = state.shift
    history: list[tuple[float, float, float]] = []
    resid = float(np.linalg.norm(heff.matrix @ state.c_int - energy * state.c_int))
    history.append((state.tau, energy, resid))
    for _ in range(max_steps):
        prev_energy = energy
        state = imaginary_step(state, heff, dtau, explicit_euler=explicit_euler)
        energy = _rayleigh(heff.matrix, state.c_int)
        resid = float(np.linalg.norm(heff.matrix @ state.c_int - energy * state.c_int))
        history.append((state.tau, energy, resid))
        if abs(energy - prev_energy) < tol:
            return FlowResult(energy, state.c_int, history)
    raise ConvergenceError(f"imaginary-time flow not converged in {max_steps} steps")


def imaginary_step_nonstationary(state: ImaginaryFlowState,
                                 heff_provider: Callable[[float], EffectiveHamiltonian],
                                 dtau: float) -> ImaginaryFlowState:
    """Shifted descent step under a tau-dependent generator.

    As the provider's generator stops changing this coincides with
    :func:`imaginary_step` for the stationary operator.
    """
    if dtau <= 0:
        raise ValueError("dtau must be positive")
    heff = heff_provider(state.tau)
    if not heff.hermitian:
        raise OperatorPropertyError("provider returned a non-Hermitian generator")
    c = state.c_int
    s = _rayleigh(heff.matrix, c)
    c1 = scipy.linalg.expm(-dtau * (heff.matrix - s * np.eye(heff.dim))) @ c
    c1 = c1 / np.linalg.norm(c1)
    tau1 = state.tau + dtau
    return ImaginaryFlowState(tau1, c1, s, state.energy_history + [(tau1, s)])


def write_flow_log(history, path):
    """Convergence log CSV: step, tau, shift, residual norm ||(Heff - S)c||."""
    g = lambda x: format(float(x), ".17g")
    lines = ["step,tau,shift,residual"]
    for step, (tau, shift, resid) in enumerate(history):
        lines.append(f"{step},{g(tau)},{g(shift)},{g(resid)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
