"""Command line entry point: ``sharplab <subcommand> [flags]``.

Subcommands
-----------
check-variations  random-probe closure of the inner/Gateaux identities
solve             Newton critical points for every ε of a config
spectrum          lowest eigenpairs of the linearized operator
sweep             an ε-sweep experiment (see ``experiments.EXPERIMENTS``)
green             Green surface form against the smeared-source oracle
report            recompute the verdicts of a finished run from its rows

Exit codes: 0 all verdicts pass, 2 a verdict failed, 1 execution error,
64 usage or configuration error.  Every run writes ``manifest.<subcommand>.json``
under ``--out`` before starting and finalizes it afterwards.

Config files are JSON objects with the fields of
:class:`~sharplab.experiments.ExperimentConfig`::

    {"experiment": "eigen_bound_ac",
     "domain": {"shape": "rectangle", "L": [1.0, 1.0], "n": [64, 64]},
     "interface": {"kind": "segment", "x": 0.5},
     "eps": [0.08, 0.04, 0.02],
     "grid": {"eps_over_h": 4},
     "spectrum": {"k": 4, "boundary": "neumann", "symmetry": "none"},
     "tolerances": {"margin": 0.05}}

Domains are ``{"shape": "rectangle", "L": [L1, L2], "n": [n1, n2]}`` or
``{"shape": "disk", "R": R, "n": [n_r, n_theta]}``; interfaces are
``segment`` (``x``, ``y`` or ``endpoints``), ``diameter`` (``angle``) or
``circle`` (``center``, ``r``).  ``experiment`` may be omitted for
``solve``, ``spectrum`` and ``green``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from . import critical_points as cp
from . import energies as en
from . import experiments as ex
from . import spectra as spc
from .domain_geometry import InvalidSpecError, build_domain, build_interface, normal_speed
from .fields_calculus import canonical_json, save_field

log = logging.getLogger("sharplab")

EXIT_OK, EXIT_ERROR, EXIT_VERDICT, EXIT_USAGE = 0, 1, 2, 64

SPECTRUM_COLUMNS = ["eps", "k", "eigenvalue", "eigenvalue_over_eps", "residual", "rayleigh_defect"]
VARIATION_COLUMNS = ["probe", "functional", "residual", "value", "tolerance", "pass"]
GREEN_COLUMNS = ["probe", "n", "green_form", "smeared_form", "rel_gap", "tolerance"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


@dataclass
class RunManifest:
    subcommand: str
    config_hash: str
    inputs: list
    outputs: list = field(default_factory=list)
    version: str = __version__
    argv: list = field(default_factory=list)
    status: str = "running"
    exit_code: int | None = None
    started: str = ""
    finished: str | None = None
    wall_seconds: float | None = None

    def path(self, out: Path) -> Path:
        return out / f"manifest.{self.subcommand}.json"

    def write(self, out: Path) -> None:
        self.path(out).write_text(json.dumps(asdict(self), indent=2, sort_keys=True), encoding="utf-8")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_csv(path: Path, columns, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([ex._fmt(r.get(c)) for c in columns])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _eps_tag(eps: float) -> str:
    return format(eps, ".6g").replace(".", "p")


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------


def _load_config(path, default_experiment=None) -> ex.ExperimentConfig:
    if path is None:
        raise InvalidSpecError("--config: a config file is required")
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InvalidSpecError(f"--config: no such file {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidSpecError(f"config: invalid JSON ({exc})") from None
    if isinstance(raw, dict) and "experiment" not in raw and default_experiment is not None:
        raw = {**raw, "experiment": default_experiment(raw)}
    return ex.ExperimentConfig.from_dict(raw)


def _apply_flags(cfg: ex.ExperimentConfig, args) -> ex.ExperimentConfig:
    if args.seed is not None:
        d = cfg.to_dict()
        d["seed"] = args.seed
        cfg = ex.ExperimentConfig.from_dict(d)
    if args.tol_scale != 1.0:
        cfg = cfg.scaled(args.tol_scale)
    args.on_config(cfg.hash)
    return cfg


def _spectrum_experiment(raw):
    return "eigen_bound_ok" if raw.get("gamma") else "eigen_bound_ac"


# ---------------------------------------------------------------------------
# subcommands; each returns (config hash, input paths, verdicts)
# ---------------------------------------------------------------------------


def cmd_check_variations(args, out: Path, outputs: list):
    tol = 1e-10 * args.tol_scale
    seed = args.seed or 0
    args.on_config(hashlib.sha256(canonical_json(
        {"experiment": "identity_probes", "n": args.n, "probes": args.probes, "seed": seed,
         "tol": tol}).encode()).hexdigest())
    reports = []
    rep = ex.run_identity_probes(n=args.n, probes=args.probes, seed=seed, tol=tol,
                                 oracle=args.oracle, reports=reports)
    pdir = out / "variations"
    pdir.mkdir(exist_ok=True)
    summary = []
    for i, name, vr in reports:
        p = pdir / f"probe-{i:03d}-{name}.json"
        p.write_text(vr.to_json(), encoding="utf-8")
        outputs.append(str(p))
        for rname, r in vr.residuals.items():
            summary.append({"probe": i, "functional": name, "residual": rname, "value": r["value"],
                            "tolerance": r["tol"], "pass": bool(r["value"] <= r["tol"])})
    _write_csv(out / "variations.csv", VARIATION_COLUMNS, summary)
    rep.to_csv(out / "report.csv")
    rep.to_json(out / "report.json")
    outputs += [str(out / "variations.csv"), str(out / "report.csv"), str(out / "report.json")]
    verdicts = dict(rep.verdicts)
    verdicts["all_residuals"] = all(r["pass"] for r in summary)
    print(f"check-variations: {len(reports)} audits, max residual "
          f"{max(r['value'] for r in summary):.3g} (tolerance {tol:.3g})")
    return rep.config_hash, [], verdicts


def cmd_solve(args, out: Path, outputs: list):
    cfg = _apply_flags(_load_config(args.config, lambda raw: "criticality"), args)
    for eps in cfg.eps:
        domain, curve = ex._setup(cfg, eps)
        p = en.ModelParams(eps, cfg.gamma, cfg.m)
        t = time.perf_counter()
        res = ex.critical_point(cfg, domain, curve, p)
        secs = time.perf_counter() - t
        tag = _eps_tag(eps)
        fpath, jpath = out / f"u_eps{tag}.fld", out / f"u_eps{tag}.json"
        save_field(fpath, res.u)
        doc = json.loads(res.to_json())
        doc.update({"eps": eps, "gamma": cfg.gamma, "m": cfg.m, "seconds": secs, "field": fpath.name})
        jpath.write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
        outputs += [str(fpath), str(jpath)]
        print(f"solve: eps={eps:g} residual={res.residual_norm:.3g} iterations={res.iterations} "
              f"multiplier={res.multiplier}")
    return cfg.hash, [str(args.config)], {"converged": True}


def cmd_spectrum(args, out: Path, outputs: list):
    cfg = _apply_flags(_load_config(args.config, _spectrum_experiment), args)
    k = int(cfg.spectrum.get("k", 4))
    boundary = cfg.spectrum.get("boundary", "neumann")
    constraint = cfg.spectrum.get("constraint")
    rtol = float(cfg.spectrum.get("residual_tol", 1e-8)) * args.tol_scale
    rows, ok = [], True
    for eps in cfg.eps:
        domain, curve = ex._setup(cfg, eps)
        p = en.ModelParams(eps, cfg.gamma if cfg.experiment.endswith("_ok") else 0.0, cfg.m)
        sol = ex.critical_point(cfg, domain, curve, p)
        op = spc.assemble_linearized(sol.u, p, boundary)
        res = spc.eigenpairs(op, k, constraint=constraint)
        for i in range(k):
            lam = float(res.eigenvalues[i])
            rows.append({"eps": eps, "k": i + 1, "eigenvalue": lam, "eigenvalue_over_eps": lam / eps,
                         "residual": res.residuals[i], "rayleigh_defect": res.rayleigh_defects[i]})
            ok &= bool(res.residuals[i] <= rtol * (1 + abs(lam)))
            if cfg.spectrum.get("fields"):
                fpath = out / f"phi_eps{_eps_tag(eps)}_k{i + 1}.fld"
                save_field(fpath, spc.eigenfunction_field(op, res.eigenvectors[:, i]))
                outputs.append(str(fpath))
        jpath = out / f"spectrum_eps{_eps_tag(eps)}.json"
        doc = json.loads(res.to_json())
        doc.update({"eps": eps, "boundary": boundary, "constraint": constraint,
                    "newton_residual": sol.residual_norm})
        jpath.write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
        outputs.append(str(jpath))
    _write_csv(out / "spectrum.csv", SPECTRUM_COLUMNS, rows)
    outputs.append(str(out / "spectrum.csv"))
    for r in rows:
        print(f"spectrum: eps={r['eps']:g} k={r['k']} lambda/eps={r['eigenvalue_over_eps']:.6g} "
              f"residual={r['residual']:.2g}")
    return cfg.hash, [str(args.config)], {"certificates": ok}


def cmd_green(args, out: Path, outputs: list):
    cfg = _apply_flags(_load_config(args.config, lambda raw: "variation_limit_b"), args)
    tol = float(cfg.tolerances.get("green_rel", 1e-3 * args.tol_scale))
    domain = build_domain(cfg.domain)
    curve = build_interface(domain, cfg.interface)
    G = en.green_kernel(domain)
    rows = []
    for spec in ex._xi_specs(cfg, [{"kind": "cos", "k": 1}, {"kind": "cos", "k": 2}]):
        xi = normal_speed(curve, ex.xi_function(curve, spec))
        g = en.green_surface_form(G, curve, xi)
        s = en.smeared_source_form(domain, curve, xi)
        rows.append({"probe": ex._probe_label(spec), "n": domain.shape[0], "green_form": g,
                     "smeared_form": s, "rel_gap": abs(g - s) / max(abs(s), 1e-300), "tolerance": tol})
        print(f"green: {rows[-1]['probe']} form={g:.8g} oracle={s:.8g} gap={rows[-1]['rel_gap']:.2g}")
    _write_csv(out / "green.csv", GREEN_COLUMNS, rows)
    outputs.append(str(out / "green.csv"))
    return cfg.hash, [str(args.config)], {"oracle": all(r["rel_gap"] <= tol for r in rows)}


def cmd_sweep(args, out: Path, outputs: list):
    cfg = _apply_flags(_load_config(args.config), args)
    rep = ex.run(cfg, jobs=args.jobs)
    rep.to_csv(out / "report.csv")
    rep.to_json(out / "report.json")
    outputs += [str(out / "report.csv"), str(out / "report.json")]
    for name, ok in rep.verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'} {cfg.experiment} {name}")
    return cfg.hash, [str(args.config)], rep.verdicts


def rejudge(doc: dict) -> dict:
    """Verdicts of a persisted report recomputed from its rows and config."""
    rows = doc["rows"]
    if doc["experiment"] == "identity_probes":
        tol = doc["config"]["tol"]
        return {"identities": all(max(r["first_residual"], r["second_residual"]) <= tol for r in rows)}
    raw = dict(doc["config"])
    cfg = ex.ExperimentConfig.from_dict(raw)
    return ex.judge(cfg, rows)[1]


def cmd_report(args, out: Path, outputs: list):
    path = Path(args.config) if args.config else out / "report.json"
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InvalidSpecError(f"--config: no report at {path}") from None
    except json.JSONDecodeError as exc:
        raise InvalidSpecError(f"report: invalid JSON ({exc})") from None
    if doc.get("schema") != ex.SCHEMA:
        raise InvalidSpecError(f"schema: expected {ex.SCHEMA}, got {doc.get('schema')!r}")
    verdicts = rejudge(doc)
    stored = doc.get("verdicts", {})
    for name, ok in verdicts.items():
        note = "" if stored.get(name) == ok else "  (differs from stored verdict)"
        print(f"{'PASS' if ok else 'FAIL'} {doc['experiment']} {name}{note}")
    verdicts["matches_stored"] = all(stored.get(k) == v for k, v in verdicts.items())
    return doc.get("config_hash", ""), [str(path)], verdicts


COMMANDS = {
    "check-variations": cmd_check_variations,
    "solve": cmd_solve,
    "spectrum": cmd_spectrum,
    "sweep": cmd_sweep,
    "green": cmd_green,
    "report": cmd_report,
}


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("must be an unsigned 64-bit integer")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sharplab", description="Diffuse-interface variations and their sharp limits.")
    parser.add_argument("--version", action="version", version=f"sharplab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--out", metavar="DIR", default=None)
        p.add_argument("--jobs", metavar="N", type=_positive_int, default=os.cpu_count() or 1)
        p.add_argument("--seed", metavar="U64", type=_u64, default=None)
        p.add_argument("--tol-scale", metavar="REAL", type=_positive_float, default=1.0)
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "check-variations":
            p.add_argument("--probes", metavar="N", type=_positive_int, default=20)
            p.add_argument("--n", metavar="N", type=_positive_int, default=64,
                           help="grid nodes per side of the unit square")
            p.add_argument("--oracle", action="store_true", help="also run the deformation oracle")
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "report" and args.out is None and args.config:
        out = Path(args.config).resolve().parent
    else:
        out = Path(args.out or f"sharplab-{args.command}")
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(args.command, "", [args.config] if args.config else [], argv=argv, started=_now())
    manifest.write(out)

    def on_config(h):
        manifest.config_hash = h
        manifest.write(out)

    args.on_config = on_config
    t0 = time.perf_counter()
    outputs: list = []
    try:
        chash, inputs, verdicts = COMMANDS[args.command](args, out, outputs)
        manifest.config_hash, manifest.inputs = chash, inputs
        code = EXIT_OK if verdicts and all(verdicts.values()) else EXIT_VERDICT
        manifest.status = "passed" if code == EXIT_OK else "failed"
    except InvalidSpecError as exc:
        print(f"sharplab: error: {exc}", file=sys.stderr)
        code, manifest.status = EXIT_USAGE, "invalid"
    except (cp.ConvergenceError, cp.SingularJacobianError, spc.SpectralSolverError, en.LinearSolverError,
            OSError, ValueError, RuntimeError) as exc:
        print(f"sharplab: {type(exc).__name__}: {exc}", file=sys.stderr)
        code, manifest.status = EXIT_ERROR, "error"
    manifest.outputs = outputs
    manifest.exit_code = code
    manifest.finished = _now()
    manifest.wall_seconds = time.perf_counter() - t0
    manifest.write(out)
    return code


if __name__ == "__main__":
    sys.exit(main())
