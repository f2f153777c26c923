"""Command-line driver: strict JSON configuration, run orchestration,
manifests, plain-text reports, and gnuplot script emission.

Subcommands: reference | solve | phase-diagram | sweep-attractive |
sweep-repulsive | validate.  Exit codes: 0 ok, 2 validation failure,
3 solver hard failure.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .constraints import ConstraintOperator, random_feasible
from .dual import decay_fit
from .energy import (
    CouplingParams,
    HamiltonianParams,
    MFGParams,
    PotentialSpec,
    Well,
    gn_quotient,
)
from .errors import MFGError, ParseError, SchemaMismatch, ValidationError
from .fields import GridSpec, dump_flux, dump_scalar, grad, flux_inner, inner, div
from .reference import (
    ReferenceConfig,
    _cache_load,
    pohozaev_residuals,
    solve_reference,
)
from .solve import SolverConfig, Verdict, classify_existence, continuation_solve
from .sweeps import (
    attractive_delta_schedule,
    attractive_sweep,
    fit_rate,
    phase_diagram,
    predicted_eps_attractive,
    repulsive_sweep,
    select_flattest,
    write_attractive_csv,
    write_repulsive_csv,
)

# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_REQUIRED_KEYS = (
    "kind", "dim", "half_width", "cells_per_axis", "gamma", "c_h",
    "alpha1", "alpha2", "beta", "v1", "v2", "seed",
)
# solver knobs may default; physics parameters may not
_OPTIONAL_KEYS = (
    "step0", "backtrack", "tol_grad", "tol_energy", "max_iter",
    "damping", "fp_tol", "fp_max_rounds", "out_dir",
)
_KINDS = ("reference", "solve", "phase-diagram", "sweep-attractive",
          "sweep-repulsive", "validate")


@dataclass(frozen=True)
class RunConfig:
    kind: str
    grid: GridSpec
    hp: HamiltonianParams
    couplings: CouplingParams
    v1: PotentialSpec
    v2: PotentialSpec
    solver: SolverConfig
    out_dir: str
    seed: int
    raw: dict = field(repr=False, default_factory=dict)

    def params(self) -> MFGParams:
        return MFGParams(hp=self.hp, couplings=self.couplings,
                         v1=self.v1, v2=self.v2)


def _parse_potential(key: str, spec, dim: int) -> PotentialSpec:
    """Wells are flat rows [center..., exponent, coefficient]."""
    if not isinstance(spec, list) or not spec:
        raise ParseError(f"key {key!r}: expected a non-empty list of wells")
    wells = []
    for row in spec:
        if not isinstance(row, list) or len(row) != dim + 2:
            raise ParseError(
                f"key {key!r}: each well must be a list of {dim + 2} numbers "
                "[center..., exponent, coefficient]")
        center = tuple(float(v) for v in row[:dim])
        exponent, coefficient = float(row[dim]), float(row[dim + 1])
        if exponent <= 0:
            raise ValidationError(f"{key}: well exponents must be positive")
        if coefficient <= 0:
            raise ValidationError(f"{key}: well coefficients must be positive")
        wells.append(Well(center, exponent, coefficient))
    form = "single" if len(wells) == 1 else "product"
    return PotentialSpec(wells=tuple(wells), form=form)


def load_config(path) -> RunConfig:
    """Parse and validate a strict flat JSON run configuration."""
    try:
        text = Path(path).read_text()
    except FileNotFoundError as exc:
        raise ParseError(f"config file not found: {path}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ParseError("config must be a JSON object")
    allowed = set(_REQUIRED_KEYS) | set(_OPTIONAL_KEYS)
    for key in doc:
        if key not in allowed:
            raise ParseError(f"unknown key {key!r}")
    for key in _REQUIRED_KEYS:
        if key not in doc:
            raise ParseError(f"missing required key {key!r}")

    kind = doc["kind"]
    if kind not in _KINDS:
        raise ValidationError(f"kind must be one of {_KINDS}")
    dim = int(doc["dim"])
    if dim not in (1, 2):
        raise ValidationError("dim must be 1 or 2")
    n = int(doc["cells_per_axis"])
    if n < 2 or (n & (n - 1)) != 0:
        raise ValidationError("cells_per_axis must be a power of two")
    if float(doc["half_width"]) <= 0:
        raise ValidationError("half_width must be positive")
    gamma = float(doc["gamma"])
    if gamma <= 1:
        raise ValidationError("gamma must exceed 1")
    hp = HamiltonianParams(gamma=gamma, c_h=float(doc["c_h"]))
    if hp.gamma_conj <= dim:
        raise ValidationError("gamma_conj must exceed dim")
    a1, a2 = float(doc["alpha1"]), float(doc["alpha2"])
    if a1 <= 0 or a2 <= 0:
        raise ValidationError("alpha1 and alpha2 must be positive")
    couplings = CouplingParams(alpha1=a1, alpha2=a2, beta=float(doc["beta"]))
    v1 = _parse_potential("v1", doc["v1"], dim)
    v2 = _parse_potential("v2", doc["v2"], dim)
    grid = GridSpec(dim=dim, half_width=float(doc["half_width"]),
                    cells_per_axis=n)
    solver_kwargs = {k: doc[k] for k in
                     ("step0", "backtrack", "tol_grad", "tol_energy",
                      "max_iter", "damping", "fp_tol", "fp_max_rounds")
                     if k in doc}
    if "max_iter" in solver_kwargs:
        solver_kwargs["max_iter"] = int(solver_kwargs["max_iter"])
    if "fp_max_rounds" in solver_kwargs:
        solver_kwargs["fp_max_rounds"] = int(solver_kwargs["fp_max_rounds"])
    seed = int(doc["seed"])
    solver = SolverConfig(seed=seed, **solver_kwargs)
    return RunConfig(kind=kind, grid=grid, hp=hp, couplings=couplings,
                     v1=v1, v2=v2, solver=solver,
                     out_dir=str(doc.get("out_dir", ".")), seed=seed, raw=doc)


def config_hash(cfg: RunConfig) -> str:
    """Stable under key reordering and whitespace: canonical JSON digest."""
    canon = json.dumps(cfg.raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

class RunManifest:
    """Inventory of a run: config hash, versions, timestamps, emitted files."""

    def __init__(self, cfg: RunConfig):
        self.config_hash = config_hash(cfg)
        self.versions = {
            "artifact": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        }
        self.started = datetime.datetime.now(datetime.timezone.utc).isoformat()
        self.finished = None
        self.notes = {}
        self.files = []

    def add_file(self, path) -> None:
        p = Path(path)
        digest = hashlib.sha256(p.read_bytes()).hexdigest()
        self.files.append({"path": p.name, "sha256": digest,
                           "bytes": p.stat().st_size})

    def write(self, out_dir) -> Path:
        self.finished = datetime.datetime.now(datetime.timezone.utc).isoformat()
        path = Path(out_dir) / "manifest.json"
        doc = {"config_hash": self.config_hash, "versions": self.versions,
               "started": self.started, "finished": self.finished,
               "notes": self.notes, "files": self.files}
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path


class Report:
    """Plain-text pass/fail report: one CI-greppable line per check."""

    def __init__(self):
        self.lines = []
        self.failed = False

    def check(self, name: str, ok: bool, detail: str = "") -> bool:
        tag = "PASS" if ok else "FAIL"
        if not ok:
            self.failed = True
        self.lines.append(f"{tag} {name}" + (f": {detail}" if detail else ""))
        return ok

    def info(self, text: str) -> None:
        self.lines.append(f"INFO {text}")

    def write(self, out_dir, name="report.txt") -> Path:
        path = Path(out_dir) / name
        path.write_text("\n".join(self.lines) + "\n")
        return path


# ---------------------------------------------------------------------------
# plot emission (gnuplot scripts: self-contained plain-text grammar)
# ---------------------------------------------------------------------------

def _csv_header(path) -> list:
    with open(path) as fh:
        first = fh.readline().strip()
        has_data = bool(fh.readline().strip())
    return first.split(",") if first else [], has_data


def emit_plots(csv_files, out_dir) -> list:
    """Write one gnuplot script per recognized CSV schema.  Empty CSVs emit
    a warning and no file; unrecognized headers raise SchemaMismatch."""
    out = []
    for csv_path in csv_files:
        csv_path = Path(csv_path)
        header, has_data = _csv_header(csv_path)
        if not has_data:
            print(f"warning: {csv_path.name} has no data rows; skipping plot",
                  file=sys.stderr)
            continue
        if header[:3] == ["delta", "eps_measured", "eps_predicted"]:
            out.append(_rate_plot(csv_path, out_dir, x_col=1, y_col=2,
                                  pred_col=3))
        elif header[:4] == ["delta1", "delta2", "eps1", "eps2"]:
            out.append(_rate_plot(csv_path, out_dir, x_col=2, y_col=4,
                                  pred_col=7))
        elif header == ["alpha1", "alpha2", "beta", "verdict"]:
            out.append(_phase_plot(csv_path, out_dir))
        else:
            raise SchemaMismatch(f"{csv_path.name}: unrecognized columns "
                                 f"{header}")
    return out


def _read_csv_columns(path):
    rows = np.genfromtxt(path, delimiter=",", names=True, dtype=None,
                         encoding="utf-8")
    return rows


def _rate_plot(csv_path: Path, out_dir, x_col: int, y_col: int,
               pred_col: int) -> Path:
    rows = _read_csv_columns(csv_path)
    names = rows.dtype.names
    xs = np.atleast_1d(rows[names[x_col - 1]]).astype(float)
    ys = np.atleast_1d(rows[names[y_col - 1]]).astype(float)
    keep = np.isfinite(xs) & np.isfinite(ys) & (xs > 0) & (ys > 0)
    lx, ly = np.log(xs[keep]), np.log(ys[keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    script = Path(out_dir) / (csv_path.stem + ".gp")
    script.write_text(f"""set datafile separator ","
set logscale xy
set xlabel "delta"
set ylabel "eps"
set key left top
set title "blow-up scale vs distance to criticality"
fitted(x) = {np.exp(intercept)!r} * x ** {slope!r}
set label 1 sprintf("fitted slope %.4f", {slope!r}) at graph 0.05, 0.9
plot "{csv_path.name}" using {x_col}:{y_col} skip 1 with points pt 7 \\
         title "measured", \\
     "{csv_path.name}" using {x_col}:{pred_col} skip 1 with lines \\
         title "predicted", \\
     fitted(x) with lines dt 2 title "fitted"
""")
    return script


def _phase_plot(csv_path: Path, out_dir) -> Path:
    verdict_code = {v.value: k for k, v in enumerate(Verdict)}
    rows = _read_csv_columns(csv_path)
    dat = Path(out_dir) / (csv_path.stem + ".dat")
    with open(dat, "w") as fh:
        for row in np.atleast_1d(rows):
            code = verdict_code.get(str(row["verdict"]), -1)
            fh.write(f"{float(row['alpha1'])!r} {float(row['beta'])!r} {code}\n")
    legend = ", ".join(f"{k}={v.value}" for v, k in
                       zip(Verdict, range(len(Verdict))))
    script = Path(out_dir) / (csv_path.stem + ".gp")
    script.write_text(f"""set xlabel "alpha"
set ylabel "beta"
set title "existence verdicts ({legend})"
set view map
set palette maxcolors {len(Verdict)}
splot "{dat.name}" using 1:2:3 with points pt 5 ps 3 palette notitle
""")
    return script


def emit_profile_plot(out_dir, profile_file: str, reference_file: str) -> Path:
    """Overlay plot of a rescaled density dump against the reference."""
    script = Path(out_dir) / "profiles.gp"
    script.write_text(f"""set xlabel "x"
set ylabel "density"
set title "rescaled minimizer vs reference profile"
plot "{profile_file}" using 1:2 with lines title "rescaled m", \\
     "{reference_file}" using 1:2 with lines dt 2 title "reference"
""")
    return script


def _dump_profile_xy(field, path) -> None:
    """Two-column plain-text (x, value) dump for 1D plotting."""
    grid = field.grid
    xs = grid.axis_centers()
    with open(path, "w") as fh:
        for x, v in zip(xs, np.asarray(field.values).ravel()):
            fh.write(f"{float(x)!r} {float(v)!r}\n")


# ---------------------------------------------------------------------------
# subcommand pipelines
# ---------------------------------------------------------------------------

def _get_reference(cfg: RunConfig, manifest: RunManifest):
    hit = _cache_load(cfg.hp, cfg.grid) is not None
    manifest.notes["reference_cache_hit"] = hit
    return solve_reference(cfg.hp, cfg.grid, ReferenceConfig(seed=cfg.seed))


def _cmd_reference(cfg: RunConfig, out: Path, manifest: RunManifest,
                   report: Report, threads: int) -> None:
    ref = _get_reference(cfg, manifest)
    dump_scalar(ref.m0, out / "m0.field")
    dump_flux(ref.w0, out / "w0.field")
    dump_scalar(ref.u0, out / "u0.field")
    for f in ("m0.field", "w0.field", "u0.field"):
        manifest.add_file(out / f)
    report.info(f"a_star={ref.a_star!r} M_star={ref.M_star!r} "
                f"lambda0={ref.lambda0!r}")
    mass_val = cfg.grid.cell_volume * float(np.sum(ref.m0.values))
    report.check("mass equals M_star",
                 abs(mass_val - ref.M_star) < 1e-8 * ref.M_star,
                 f"mass={mass_val!r}")
    r1, r2, r3 = pohozaev_residuals(ref.m0, ref.w0, ref.lambda0,
                                    ref.hp.gamma_conj / cfg.grid.dim, ref.hp)
    report.check("integral identities", max(abs(r1), abs(r2), abs(r3)) < 1e-3,
                 f"residuals=({r1:.2e},{r2:.2e},{r3:.2e})")
    fit = decay_fit(ref.m0)
    report.check("exponential tail decay", fit.r2 > 0.99,
                 f"r2={fit.r2:.5f} delta0={fit.delta0:.3f}")


def _cmd_solve(cfg: RunConfig, out: Path, manifest: RunManifest,
               report: Report, threads: int) -> None:
    ref = _get_reference(cfg, manifest)
    verdict = classify_existence(cfg.params(), cfg.solver, ref)
    report.info(f"verdict={verdict.verdict.value}")
    if verdict.result is not None:
        res = verdict.result
        for i, pair in enumerate(res.state, start=1):
            dump_scalar(pair.m, out / f"m{i}.field")
            dump_flux(pair.w, out / f"w{i}.field")
            manifest.add_file(out / f"m{i}.field")
            manifest.add_file(out / f"w{i}.field")
        report.info(f"energy={res.breakdown.total!r} eps={res.eps!r} "
                    f"lambda={res.lam!r}")
        report.check("solver converged", res.converged,
                     f"iterations={res.iterations}")
        report.check("state feasible",
                     max(p.residual_norm for p in res.state) < 1e-9)
        report.check("energy groupings agree",
                     abs(res.breakdown.total - res.breakdown.total_regrouped)
                     < 1e-8 * max(1.0, abs(res.breakdown.total)))
    report.check("verdict determined",
                 verdict.verdict is not Verdict.UNDETERMINED)


def _cmd_phase_diagram(cfg: RunConfig, out: Path, manifest: RunManifest,
                       report: Report, threads: int) -> None:
    ref = _get_reference(cfg, manifest)
    a = ref.a_star
    alphas = np.linspace(0.3, 1.7, 7) * a
    betas = np.linspace(-0.7, 0.7, 7) * a
    csv_path = out / "phase_diagram.csv"
    matrix = phase_diagram(alphas, betas, cfg.hp, ref, cfg.solver,
                           v1=cfg.v1, v2=cfg.v2, threads=threads,
                           csv_path=csv_path)
    manifest.add_file(csv_path)
    for script in emit_plots([csv_path], out):
        manifest.add_file(script)
    n_und = sum(1 for row in matrix for v in row
                if v.verdict is Verdict.UNDETERMINED)
    report.info(f"grid=7x7 undetermined={n_und}")
    report.check("all verdicts computed",
                 all(v is not None for row in matrix for v in row))


def _cmd_sweep_attractive(cfg: RunConfig, out: Path, manifest: RunManifest,
                          report: Report, threads: int) -> None:
    if cfg.couplings.beta <= 0:
        raise ValidationError("attractive sweep requires beta > 0")
    ref = _get_reference(cfg, manifest)
    selection = select_flattest(cfg.v1, cfg.v2)
    deltas = attractive_delta_schedule(ref, selection)
    records = attractive_sweep(cfg.hp, cfg.couplings.beta, cfg.v1, cfg.v2,
                               deltas, ref, cfg.solver, threads=threads)
    csv_path = out / "blowup_attractive.csv"
    write_attractive_csv(records, csv_path)
    manifest.add_file(csv_path)
    for script in emit_plots([csv_path], out):
        manifest.add_file(script)
    ok_records = [r for r in records if r.converged and r.resolved]
    report.check("all sweep points solved",
                 all(r.error is None for r in records),
                 f"{len(ok_records)}/{len(records)} usable")
    if len(ok_records) >= 4:
        fit = fit_rate(ok_records)
        gc = cfg.hp.gamma_conj
        p0 = selection.p0
        target = 1.0 / (gc + p0)
        pred_pref = predicted_eps_attractive(1.0, ref, selection)
        report.info(f"slope={fit.slope!r} prefactor={fit.prefactor!r} "
                    f"r2={fit.r2!r}")
        report.check("rate exponent matches prediction",
                     abs(fit.slope - target) < 0.1 * target,
                     f"fitted={fit.slope:.4f} predicted={target:.4f}")
        report.check("rate prefactor matches prediction",
                     abs(fit.prefactor - pred_pref) < 0.2 * pred_pref,
                     f"fitted={fit.prefactor:.4f} predicted={pred_pref:.4f}")
    smallest = ok_records[-1] if ok_records else None
    if smallest is not None:
        gc = cfg.hp.gamma_conj
        target = -gc / cfg.grid.dim
        lam_eps = smallest.lambda_eps_gamma
        report.check("multiplier scaling at smallest delta",
                     all(abs(le - target) < 0.05 * abs(target)
                         for le in lam_eps),
                     f"lambda*eps^gamma'={lam_eps!r} target={target!r}")
        report.check("symmetrization at smallest delta",
                     smallest.sq_diff < 0.05
                     and abs(smallest.kinetic_ratio - 1.0) < 0.05)
        m_file = out / "m1_rescaled.dat"
        _dump_profile_xy(_rescaled_density(smallest, ref), m_file)
        ref_file = out / "m0_unit.dat"
        _dump_profile_xy(ref.unit_profile(), ref_file)
        manifest.add_file(m_file)
        manifest.add_file(ref_file)
        if cfg.grid.dim == 1:
            manifest.add_file(emit_profile_plot(out, m_file.name,
                                                ref_file.name))


def _rescaled_density(record, ref):
    from .sweeps import rescale_blowup
    m_resc, _, _ = rescale_blowup(record.result, 0, ref)
    return m_resc


def _cmd_sweep_repulsive(cfg: RunConfig, out: Path, manifest: RunManifest,
                         report: Report, threads: int) -> None:
    if cfg.couplings.beta >= 0:
        raise ValidationError("repulsive sweep requires beta < 0")
    ref = _get_reference(cfg, manifest)
    deltas = attractive_delta_schedule(ref, select_flattest(cfg.v1, cfg.v1))
    records = repulsive_sweep(cfg.hp, cfg.couplings.beta, cfg.v1, cfg.v2,
                              deltas, ref, cfg.solver, threads=threads)
    csv_path = out / "blowup_repulsive.csv"
    write_repulsive_csv(records, csv_path)
    manifest.add_file(csv_path)
    for script in emit_plots([csv_path], out):
        manifest.add_file(script)
    ok_records = [r for r in records if r.converged and r.resolved]
    report.check("all sweep points solved",
                 all(r.error is None for r in records),
                 f"{len(ok_records)}/{len(records)} usable")
    if ok_records:
        smallest = ok_records[-1]
        # adjudicate which printed asymptotic formula the data matches
        for i in (0, 1):
            eps = smallest.eps_measured[i]
            first, second = smallest.eps_predicted[i]
            rel1 = abs(eps - first) / first
            rel2 = abs(eps - second) / second
            which = "first" if rel1 < rel2 else "second"
            report.info(f"population {i + 1}: measured eps={eps!r} matches "
                        f"the {which} formula "
                        f"(rel. err {min(rel1, rel2):.3f} vs "
                        f"{max(rel1, rel2):.3f})")
        report.check("separation at smallest delta",
                     smallest.overlap < 1e-4,
                     f"overlap={smallest.overlap:.3e}")


def _cmd_validate(cfg: RunConfig, out: Path, manifest: RunManifest,
                  report: Report, threads: int) -> None:
    """Property suite without experiments: sharp-constant inequality on
    random feasible pairs, integral identities of the reference state,
    gradient/divergence adjointness, projection idempotence."""
    ref = _get_reference(cfg, manifest)
    grid = cfg.grid
    op = ConstraintOperator(grid)

    worst = 0.0
    for k in range(200):
        pair = random_feasible(cfg.seed + k, grid)
        q = gn_quotient(pair.m, pair.w, cfg.hp)
        worst = max(worst, (ref.a_star - q) / ref.a_star)
    report.check("sharp constant is a lower bound on random pairs",
                 worst < 1e-6, f"worst relative violation={worst:.3e}")

    r1, r2, r3 = pohozaev_residuals(ref.m0, ref.w0, ref.lambda0,
                                    ref.hp.gamma_conj / grid.dim, ref.hp)
    report.check("integral identities of the reference state",
                 max(abs(r1), abs(r2), abs(r3)) < 1e-3,
                 f"residuals=({r1:.2e},{r2:.2e},{r3:.2e})")

    rng = np.random.default_rng(cfg.seed)
    worst_adj = 0.0
    for _ in range(10):
        u = type(ref.u0)(grid, rng.standard_normal(grid.shape))
        pair = random_feasible(int(rng.integers(1 << 30)), grid)
        lhs = flux_inner(grad(u), pair.w)
        rhs = -inner(u, div(pair.w))
        worst_adj = max(worst_adj,
                        abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
    report.check("gradient/divergence adjointness", worst_adj < 1e-12,
                 f"worst relative defect={worst_adj:.3e}")

    z = np.concatenate([ref.m0.values.ravel() / ref.M_star,
                        rng.standard_normal(
                            sum(int(np.prod(grid.face_shape(ax)))
                                for ax in range(grid.dim)))])
    z1 = op.project_vec(z)
    z2 = op.project_vec(z1)
    defect = float(np.max(np.abs(z2 - z1))) / max(float(np.max(np.abs(z1))),
                                                  1e-300)
    report.check("constraint projection idempotence", defect < 1e-8,
                 f"relative defect={defect:.3e}")


_COMMANDS = {
    "reference": _cmd_reference,
    "solve": _cmd_solve,
    "phase-diagram": _cmd_phase_diagram,
    "sweep-attractive": _cmd_sweep_attractive,
    "sweep-repulsive": _cmd_sweep_repulsive,
    "validate": _cmd_validate,
}


def run(command: str, cfg: RunConfig, out_dir=None, threads: int = 1) -> int:
    """Execute one subcommand pipeline; returns the process exit code."""
    if command not in _COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    if cfg.kind != command:
        raise ValidationError(
            f"config kind {cfg.kind!r} does not match command {command!r}")
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(cfg)
    report = Report()
    try:
        _COMMANDS[command](cfg, out, manifest, report, threads)
    except (ParseError, ValidationError):
        raise
    except MFGError as exc:
        report.check("run completed", False, f"{type(exc).__name__}: {exc}")
        manifest.add_file(report.write(out))
        manifest.write(out)
        return 3
    manifest.add_file(report.write(out))
    manifest.write(out)
    return 2 if report.failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mfg-ground",
        description="Two-population ergodic mean-field-game ground states: "
                    "reference problem, energy minimization, existence "
                    "classification, and blow-up sweeps.")
    parser.add_argument("command", choices=_KINDS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = RunConfig(kind=cfg.kind, grid=cfg.grid, hp=cfg.hp,
                            couplings=cfg.couplings, v1=cfg.v1, v2=cfg.v2,
                            solver=SolverConfig(
                                **{**cfg.solver.__dict__, "seed": args.seed}),
                            out_dir=cfg.out_dir, seed=args.seed,
                            raw={**cfg.raw, "seed": args.seed})
        return run(args.command, cfg, out_dir=args.out, threads=args.threads)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MFGError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
