"""Batch driver: parse a run configuration, execute named verification
tasks, emit a machine-readable report plus per-task CSV artifacts.

Config files are JSON::

    {
      "system":    {"kind": "hubbard", "L": 2, "t": 1.0, "U": 4.0},
      "electrons": 2,
      "partition": {"auto_homo_lumo": [1, 1]},
      "tasks":     [{"name": "fci"}, {"name": "downfold"}],
      "output_dir": "out",
      "seed": 1
    }

Exit codes: 0 success, 1 a task failed numerically, 2 configuration error.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np
import scipy
import scipy.linalg

from . import __version__
from .cluster import (build_projectors, cluster_analyze, random_amplitudes,
                      sigma_lowest_order, split_amplitudes, excitation_matrix)
from .downfold import (cas_indices, downfold_ducc, downfold_sescc,
                       effective_matrix_dump, match_root, write_effective_json)
from .dynamics import (Trajectory, decompose_trajectory, evaluate_lagrangians,
                       evaluate_sescc_lagrangian, grid_provider, heff_grid,
                       propagate_full, propagate_internal, trajectory_to_csv)
from .ecc import EccConfiguration, eval_ecc_action_integrand, eval_ldt_forms, \
    eval_lh_forms, x_int_ext_bch
from .errors import ConfigError, DuccLabError
from .fock import (SpinOrbitalPartition, build_basis, homo_lumo_partition)
from .imagtime import imaginary_evolve, write_flow_log
from .operators import (QOperator, build_hubbard, build_pairing,
                        hamiltonian_from_integrals, read_fcidump)
from .sweeps import decompose_state

TASK_NAMES = ("fci", "cluster", "sweep", "downfold", "propagate",
              "imagtime", "ecc", "verify-all")


@dataclass
class RunContext:
    """Everything a task needs: system, partition, reference, output sink."""

    config: dict
    basis: object
    H: QOperator
    ref: object
    part: SpinOrbitalPartition | None
    outdir: str
    seed: int
    _cache: dict = field(default_factory=dict)

    def rng(self, task: str) -> np.random.Generator:
        # per-task stream keyed on the canonical task id keeps reports
        # independent of task ordering
        return np.random.default_rng([self.seed, TASK_NAMES.index(task)])

    def ground_state(self):
        if "ground" not in self._cache:
            vals, vecs = np.linalg.eigh(self.H.matrix)
            self._cache["ground"] = (vals, vecs)
        return self._cache["ground"]

    def need_partition(self) -> SpinOrbitalPartition:
        if self.part is None:
            raise ConfigError("this task requires a partition")
        return self.part

    def path(self, name: str) -> str:
        return os.path.join(self.outdir, name)


# -- configuration ------------------------------------------------------------


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be an object")
    cfg["_config_dir"] = os.path.dirname(os.path.abspath(path))
    return cfg


def _build_system(cfg: dict):
    sys_cfg = cfg.get("system")
    if not isinstance(sys_cfg, dict) or "kind" not in sys_cfg:
        raise ConfigError("config needs system.kind")
    nelec = cfg.get("electrons")
    if not isinstance(nelec, int) or nelec < 0:
        raise ConfigError("config needs a non-negative integer 'electrons'")
    kind = sys_cfg["kind"]
    try:
        if kind == "hubbard":
            L, t, U = int(sys_cfg["L"]), float(sys_cfg["t"]), float(sys_cfg["U"])
            basis = build_basis(2 * L, nelec)
            return basis, build_hubbard(L, t, U, basis)
        if kind == "pairing":
            levels, g = int(sys_cfg["levels"]), float(sys_cfg["g"])
            spacing = float(sys_cfg.get("spacing", 1.0))
            basis = build_basis(2 * levels, nelec)
            return basis, build_pairing(levels, g, basis, spacing=spacing)
        if kind == "fcidump":
            path = sys_cfg["path"]
            if not os.path.isabs(path):
                path = os.path.join(cfg["_config_dir"], path)
            ints, file_nelec = read_fcidump(path)
            if file_nelec >= 0 and file_nelec != nelec:
                raise ConfigError(
                    f"FCIDUMP NELEC={file_nelec} != config electrons={nelec}")
            basis = build_basis(ints.M, nelec)
            return basis, hamiltonian_from_integrals(ints, basis)
    except KeyError as exc:
        raise ConfigError(f"system.{exc.args[0]} missing for kind={kind!r}") from exc
    raise ConfigError(f"unknown system kind {kind!r}")


def _build_partition(cfg: dict, M: int, N: int) -> SpinOrbitalPartition | None:
    pcfg = cfg.get("partition")
    if pcfg is None:
        return None
    if not isinstance(pcfg, dict):
        raise ConfigError("partition must be an object")
    if "auto_homo_lumo" in pcfg:
        try:
            no, nv = (int(x) for x in pcfg["auto_homo_lumo"])
        except (TypeError, ValueError) as exc:
            raise ConfigError("auto_homo_lumo needs two integers") from exc
        try:
            return homo_lumo_partition(M, N, no, nv)
        except DuccLabError as exc:
            raise ConfigError(str(exc)) from exc
    keys = ("occ_inactive", "occ_active", "virt_active", "virt_inactive")
    if not all(k in pcfg for k in keys):
        raise ConfigError(f"explicit partition needs keys {keys}")
    try:
        return SpinOrbitalPartition(
            *(tuple(int(p) for p in pcfg[k]) for k in keys),
            allow_arbitrary=bool(pcfg.get("allow_arbitrary", False)))
    except DuccLabError as exc:
        raise ConfigError(str(exc)) from exc


def build_context(cfg: dict, outdir: str, seed: int) -> RunContext:
    basis, H = _build_system(cfg)
    part = _build_partition(cfg, basis.M, basis.N)
    if part is not None:
        if part.M != basis.M or part.N != basis.N:
            raise ConfigError(
                f"partition covers M={part.M}, N={part.N} but system has "
                f"M={basis.M}, N={basis.N}")
        ref = part.reference()
    else:
        from .fock import aufbau_reference
        ref = aufbau_reference(basis.M, basis.N)
    tasks = cfg.get("tasks")
    if not isinstance(tasks, list) or not tasks:
        raise ConfigError("no tasks configured")
    for t in tasks:
        if not isinstance(t, dict) or t.get("name") not in TASK_NAMES:
            raise ConfigError(f"unknown task entry {t!r}; valid names: {TASK_NAMES}")
    return RunContext(cfg, basis, H, ref, part, outdir, seed)


# -- tasks ---------------------------------------------------------------------


def task_fci(ctx: RunContext, params: dict) -> tuple[dict, list[str]]:
    vals, _ = ctx.ground_state()
    nroots = min(int(params.get("nroots", 6)), len(vals))
    path = ctx.path("fci_spectrum.csv")
    with open(path, "w") as fh:
        fh.write("root,energy\n")
        for k, e in enumerate(vals):
            fh.write(f"{k},{format(float(e), '.17g')}\n")
    return {"ground_energy": float(vals[0]),
            "roots": [float(e) for e in vals[:nroots]],
            "dimension": ctx.basis.size}, [path]


def task_cluster(ctx: RunContext, params: dict) -> tuple[dict, list[str]]:
    vals, vecs = ctx.ground_state()
    psi = vecs[:, 0]
    amps = cluster_analyze(psi, ctx.ref, ctx.basis)
    tmat = excitation_matrix(amps, ctx.basis)
    e_ref = ctx.basis.unit_vector(ctx.basis.index_of(ctx.ref))
    recon = scipy.linalg.expm(tmat) @ e_ref
    c0 = psi[ctx.basis.index_of(ctx.ref)]
    roundtrip = float(np.linalg.norm(recon - psi / c0))
    hbar = scipy.linalg.expm(-tmat) @ ctx.H.matrix @ scipy.linalg.expm(tmat)
    hbar_ref = hbar @ e_ref
    energy = complex(e_ref.conj() @ hbar_ref)
    residual = float(np.linalg.norm(hbar_ref - energy * e_ref))
    results = {
        "roundtrip_residual": roundtrip,
        "cc_residual": residual,
        "energy_deviation": abs(energy.real - float(vals[0])),
        "amplitude_count": len(amps),
        "max_rank": amps.max_rank,
    }
    if ctx.part is not None:
        t_int, t_ext = split_amplitudes(amps, ctx.part)
        results["internal_count"] = len(t_int)
        results["external_count"] = len(t_ext)
    return results, []


def task_sweep(ctx: RunContext, params: dict) -> tuple[dict, list[str]]:
    part = ctx.need_partition()
    _, vecs = ctx.ground_state()
    res = decompose_state(vecs[:, 0], ctx.ref, part, ctx.basis)
    projs = build_projectors(ctx.ref, ctx.basis, part)
    cas_support = float(np.linalg.norm(projs.Q_ext.matrix @ res.psi_act))
    return {
        "reconstruction_residual": res.residual,
        "external_support_after": cas_support,
        "delta": res.delta,
        "omega12_unitarity_defect": res.omega12.unitarity_defect(),
        "omega3_unitarity_defect": res.omega3.unitarity_defect(),
        "sigma_ext_antihermiticity": res.sigma_ext.anti_hermiticity_defect(),
        "rotations": len(res.steps1) + len(res.steps2) + len(res.steps3),
    }, []


def task_downfold(ctx: RunContext, params: dict) -> tuple[dict, list[str]]:
    part = ctx.need_partition()
    vals, vecs = ctx.ground_state()
    psi = vecs[:, 0]
    e_fci = float(vals[0])

    amps = cluster_analyze(psi, ctx.ref, ctx.basis)
    t_int, t_ext = split_amplitudes(amps, part)
    heff_s = downfold_sescc(ctx.H, t_ext, ctx.ref, part)
    target = heff_s.restrict(scipy.linalg.expm(
        excitation_matrix(t_int, ctx.basis)) @ ctx.basis.unit_vector(
            ctx.basis.index_of(ctx.ref)))
    svals, svecs = heff_s.eigensystem()
    root = match_root(heff_s, target)
    sescc_delta = abs(complex(svals[root]).real - e_fci)
    tnorm = target / np.linalg.norm(target)
    overlap_deficit = 1.0 - abs(np.vdot(svecs[:, root], tnorm))

    sweep = decompose_state(psi, ctx.ref, part, ctx.basis)
    heff_d = downfold_ducc(ctx.H, sweep.sigma_ext, ctx.ref, part)
    dvals, _ = heff_d.eigensystem()
    ducc_delta = abs(float(dvals[0]) - e_fci)

    sigma_low = sigma_lowest_order(t_ext, ctx.basis)
    heff_low = downfold_ducc(ctx.H, sigma_low, ctx.ref, part, source="ducc-lowest-order")
    lvals, _ = heff_low.eigensystem()

    files = []
    for heff, name in ((heff_s, "heff_sescc.json"), (heff_d, "heff_ducc.json")):
        path = ctx.path(name)
        write_effective_json(heff, path, part=part)
        files.append(path)
    dump_path = ctx.path("heff_ducc.dump")
    with open(dump_path, "w") as fh:
        fh.write(effective_matrix_dump(heff_d))
    files.append(dump_path)
    return {
        "fci_ground_energy": e_fci,
        "cas_dimension": heff_d.dim,
        "sescc_delta_e": sescc_delta,
        "sescc_overlap_deficit": float(overlap_deficit),
        "ducc_delta_e": ducc_delta,
        "ducc_lowest_order_delta_e": abs(float(lvals[0]) - e_fci),
        "sweep_residual": sweep.residual,
    }, files


def _initial_state(ctx: RunContext, params: dict) -> np.ndarray:
    kind = params.get("initial", "reference")
    sys_cfg = ctx.config["system"]
    if kind == "reference":
        # quench: the reference determinant is never an eigenstate of an
        # interacting H, and keeps a large reference overlap along the way
        return ctx.basis.unit_vector(ctx.basis.index_of(ctx.ref))
    if kind == "ground":
        return ctx.ground_state()[1][:, 0]
    if kind == "noninteracting-ground":
        if sys_cfg["kind"] == "hubbard":
            h0 = build_hubbard(int(sys_cfg["L"]), float(sys_cfg["t"]), 0.0, ctx.basis)
        elif sys_cfg["kind"] == "pairing":
            h0 = build_pairing(int(sys_cfg["levels"]), 0.0, ctx.basis,
                               spacing=float(sys_cfg.get("spacing", 1.0)))
        else:
            raise ConfigError(
                "noninteracting-ground initial state needs a hubbard/pairing system")
        return np.linalg.eigh(h0.matrix)[1][:, 0]
    raise ConfigError(f"unknown initial state {kind!r}")


def task_propagate(ctx: RunContext, params: dict) -> tuple[dict, list[str]]:
    """Quench evolution plus the downfolded-consistency study: the active
    coefficients are propagated under the time-dependent downfolded
    Hamiltonian and compared per step against the sweep decomposition."""
    part = ctx.need_partition()
    dt = float(params.get("dt", 0.02))
    nsteps = int(params.get("nsteps", 100))
    k_order = int(params.get("series_order", 12))
    fd_order = int(params.get("fd_order", 4))
    psi0 = _initial_state(ctx, params)

    # oracle on the half grid so stage values of the coarse integrator are exact
    fine = propagate_full(ctx.H, psi0, dt / 2, 2 * nsteps)
    fine = decompose_trajectory(fine, ctx.ref, part)
    heffs = heff_grid(ctx.H, fine, ctx.ref, part, K=k_order, fd_order=fd_order)
    provider = grid_provider(fine.times, heffs)
    c0 = fine.decompositions[0].c_int
    _, cs = propagate_internal(provider, c0, dt, nsteps)
    devs = [float(np.linalg.norm(cs[k] - fine.decompositions[2 * k].c_int))
            for k in range(nsteps + 1)]

    energies = np.array([(s.conj() @ (ctx.H.matrix @ s)).real for s in fine.states])
    norms = np.array([np.linalg.norm(s) for s in fine.states])
    cas = cas_indices(ctx.ref, part, ctx.basis)
    coarse_idx = np.arange(0, len(fine.times), 2)
    coarse = Trajectory(fine.times[coarse_idx], fine.states[coarse_idx], ctx.basis,
                        [fine.decompositions[k] for k in coarse_idx])
    eigs = [np.linalg.eigvalsh(heffs[k].matrix) for k in coarse_idx]
    path = ctx.path("trajectory.csv")
    trajectory_to_csv(coarse, ctx.H, cas, path, heff_eigs=eigs)
    return {
        "dt": dt,
        "nsteps": nsteps,
        "max_consistency_deviation": max(devs),
        "final_consistency_deviation": devs[-1],
        "energy_drift": float(np.abs(energies - energies[0]).max()),
        "norm_drift": float(np.abs(norms - 1.0).max()),
        "max_decomposition_residual": max(d.residual for d in fine.decompositions),
    }, [path]


def task_imagtime(ctx: RunContext, params: dict) -> tuple[dict, list[str]]:
    part = ctx.need_partition()
    dtau = float(params.get("dtau", 0.1))
    tol = float(params.get("tol", 1e-10))
    vals, vecs = ctx.ground_state()
    sweep = decompose_state(vecs[:, 0], ctx.ref, part, ctx.basis)
    heff = downfold_ducc(ctx.H, sweep.sigma_ext, ctx.ref, part)
    rng = ctx.rng("imagtime")
    c0 = rng.normal(size=heff.dim) + 1j * rng.normal(size=heff.dim)
    res = imaginary_evolve(heff, c0, dtau=dtau, tol=tol)
    shifts = [s for _, s, _ in res.history]
    monotone = all(s2 <= s1 + 1e-12 for s1, s2 in zip(shifts, shifts[1:]))
    path = ctx.path("imagtime_flow.csv")
    write_flow_log(res.history, path)
    return {
        "energy": res.energy,
        "delta_e_vs_fci": abs(res.energy - float(vals[0])),
        "steps": len(res.history) - 1,
        "monotone_shifts": bool(monotone),
    }, [path]


def task_ecc(ctx: RunContext, params: dict) -> tuple[dict, list[str]]:
    part = ctx.need_partition()
    n_configs = int(params.get("n_configs", 50))
    scale = float(params.get("scale", 0.1))
    rng = ctx.rng("ecc")
    max_v, max_w, max_act, max_bch = 0.0, 0.0, 0.0, 0.0
    for _ in range(n_configs):
        cfg = EccConfiguration(
            t_int=random_amplitudes(ctx.ref, rng, part, "internal", scale),
            t_ext=random_amplitudes(ctx.ref, rng, part, "external", scale),
            x_int=random_amplitudes(ctx.ref, rng, part, "internal", scale),
            x_ext=random_amplitudes(ctx.ref, rng, part, "external", scale),
            dt_int=random_amplitudes(ctx.ref, rng, part, "internal", scale),
            dt_ext=random_amplitudes(ctx.ref, rng, part, "external", scale),
        )
        v1, v2, _ = eval_ldt_forms(cfg, ctx.ref, ctx.basis)
        w1, w2 = eval_lh_forms(cfg, ctx.H, ctx.ref)
        _, act_dev = eval_ecc_action_integrand(cfg, ctx.H, ctx.ref)
        direct, series, _ = x_int_ext_bch(cfg, ctx.basis)
        max_v = max(max_v, abs(v1 - v2))
        max_w = max(max_w, abs(w1 - w2))
        max_act = max(max_act, act_dev)
        max_bch = max(max_bch, float(np.abs(direct - series).max()))
    return {
        "n_configs": n_configs,
        "max_ldt_deviation": max_v,
        "max_lh_deviation": max_w,
        "max_action_deviation": max_act,
        "max_bch_deviation": max_bch,
    }, []


def task_verify_all(ctx: RunContext, params: dict) -> tuple[dict, list[str]]:
    """Battery: every task above plus series/Lagrangian spot checks."""
    results: dict = {}
    files: list[str] = []
    for name in ("fci", "cluster", "sweep", "downfold", "propagate", "imagtime", "ecc"):
        sub_params = dict(params.get(name, {}))
        if name == "propagate":
            sub_params.setdefault("dt", 0.02)
            sub_params.setdefault("nsteps", 50)
        if name == "ecc":
            sub_params.setdefault("n_configs", 10)
        sub_results, sub_files = TASKS[name](ctx, sub_params)
        results[name] = sub_results
        files.extend(sub_files)

    part = ctx.need_partition()
    rng = ctx.rng("verify-all")
    sig_i = sigma_lowest_order(random_amplitudes(ctx.ref, rng, part, "internal", 0.1),
                               ctx.basis)
    sig_e = sigma_lowest_order(random_amplitudes(ctx.ref, rng, part, "external", 0.1),
                               ctx.basis)
    dsig_i = sigma_lowest_order(random_amplitudes(ctx.ref, rng, part, "internal", 0.1),
                                ctx.basis)
    dsig_e = sigma_lowest_order(random_amplitudes(ctx.ref, rng, part, "external", 0.1),
                                ctx.basis)
    la, lb, lc = evaluate_lagrangians(ctx.H, sig_i, sig_e, dsig_i, dsig_e,
                                      ctx.ref, part)
    f1, f2 = evaluate_sescc_lagrangian(
        ctx.H,
        random_amplitudes(ctx.ref, rng, part, "internal", 0.1),
        random_amplitudes(ctx.ref, rng, part, "external", 0.1),
        random_amplitudes(ctx.ref, rng, part, "internal", 0.1),
        random_amplitudes(ctx.ref, rng, part, "external", 0.1),
        random_amplitudes(ctx.ref, rng, part, "internal", 0.1),
        random_amplitudes(ctx.ref, rng, part, "external", 0.1),
        ctx.ref)
    results["lagrangians"] = {
        "ducc_max_mutual_deviation": max(abs(la - lb), abs(la - lc), abs(lb - lc)),
        "bivariational_deviation": abs(f1 - f2),
    }
    checks = {
        "fci_vs_downfold": results["downfold"]["ducc_delta_e"] < 1e-9,
        "sescc_exact": results["downfold"]["sescc_delta_e"] < 1e-9,
        "cluster_residual": results["cluster"]["cc_residual"] < 1e-9,
        "sweep_reconstruction": results["sweep"]["reconstruction_residual"] < 1e-9,
        "td_consistency": results["propagate"]["max_consistency_deviation"] < 1e-5,
        "imagtime_converged": results["imagtime"]["delta_e_vs_fci"] < 1e-8,
        "ecc_identities": max(results["ecc"]["max_ldt_deviation"],
                              results["ecc"]["max_lh_deviation"]) < 1e-10,
        "lagrangian_equivalence": results["lagrangians"]["ducc_max_mutual_deviation"] < 1e-9,
    }
    results["checks"] = checks
    if not all(checks.values()):
        failed = [k for k, ok in checks.items() if not ok]
        raise DuccLabError(f"verification checks failed: {', '.join(failed)}")
    return results, files


TASKS = {
    "fci": task_fci,
    "cluster": task_cluster,
    "sweep": task_sweep,
    "downfold": task_downfold,
    "propagate": task_propagate,
    "imagtime": task_imagtime,
    "ecc": task_ecc,
    "verify-all": task_verify_all,
}


# -- driver --------------------------------------------------------------------


def _echo_config(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


def run(cfg: dict, outdir: str, seed: int, parallel: bool = False) -> tuple[dict, int]:
    ctx = build_context(cfg, outdir, seed)
    os.makedirs(outdir, exist_ok=True)
    entries = [(t["name"], {k: v for k, v in t.items() if k != "name"})
               for t in cfg["tasks"]]

    def execute(name, params):
        try:
            results, files = TASKS[name](ctx, params)
            return {"name": name, "status": "ok", "results": results,
                    "files": [os.path.basename(f) for f in files]}
        except (DuccLabError, np.linalg.LinAlgError, ValueError,
                ArithmeticError) as exc:
            return {"name": name, "status": "failed", "results": {},
                    "files": [], "error": f"{type(exc).__name__}: {exc}"}

    if parallel:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=min(4, len(entries))) as pool:
            task_reports = list(pool.map(lambda e: execute(*e), entries))
    else:
        task_reports = [execute(name, params) for name, params in entries]

    report = {
        "config": _echo_config(cfg),
        "seed": seed,
        "versions": {
            "ducclab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": ".".join(str(x) for x in sys.version_info[:3]),
        },
        "generated_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "tasks": task_reports,
    }
    report_path = os.path.join(outdir, "report.json")
    with open(report_path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    failed = [t for t in task_reports if t["status"] != "ok"]
    for t in failed:
        print(f"task {t['name']} failed: {t['error']}", file=sys.stderr)
    return report, (1 if failed else 0)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ducclab",
        description="Coupled-cluster downfolding verification laboratory.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute the tasks of a config file")
    p_run.add_argument("config")
    p_run.add_argument("--output", help="output directory (default: config output_dir)")
    p_run.add_argument("--seed", type=int, help="override the config seed")
    p_run.add_argument("--parallel", action="store_true",
                       help="run independent tasks concurrently")
    p_val = sub.add_parser("validate", help="parse and validate a config file")
    p_val.add_argument("config")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.command == "validate":
            build_context(cfg, outdir=cfg.get("output_dir", "."),
                          seed=int(cfg.get("seed", 0)))
            print("config ok")
            return 0
        outdir = args.output or cfg.get("output_dir")
        if not outdir:
            raise ConfigError("no output directory (config output_dir or --output)")
        if not os.path.isabs(outdir):
            outdir = os.path.join(cfg["_config_dir"], outdir)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        _, code = run(cfg, outdir, seed, parallel=args.parallel)
        return code
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
