"""``ewlab`` command line: catalog listing, verification, structure counts,
obstruction reports and grid export.

Exit status: 0 all checks pass, 1 a check failed, 2 configuration error,
3 a gate (precondition) failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import catalog as cat
from .charts import DerivedField, DomainError, JetOrderError, parse_expression, sample_points
from .expr import ExpressionError
from .jets import Jet, stack
from .report import (
    DEFAULT_TOLERANCES,
    EXIT_CONFIG,
    Check,
    ConfigError,
    Report,
    RunConfig,
    gated,
    info,
    measure,
)
from .toda import (
    TODA_CHART,
    NotTodaCongruence,
    build_toda,
    congruence_decompose,
    linearize,
    obstruction_cy,
    obstruction_orth,
    structure_values,
    toda_residual,
    toda_structure_count,
)
from .ward import (
    WARD_CHART,
    DegenerateProfile,
    eigenfunction_residual,
    harmonic_residual,
    harmonic_residual_from_V,
    height_loop_defect,
    joyce_consistency,
    profile_from_field,
    ward_build,
)
from .weylgeom import (
    GateError,
    NotPositiveDefinite,
    WeylStructure,
    dg_identity_residual,
    ew_residual,
    ewcurv_check,
    killing_gauge_checks,
)

PRIMARY_CLASS = {
    "ew": "ew",
    "toda": "toda",
    "harmonic": "harmonic",
    "crosscheck": "crosscheck",
    "killing": "coarse",
    "structures": "loop",
    "obstruct": "obstruction",
    "export": "ew",
}

CSV_COLUMNS = (
    "i", "j", "k", "c1", "c2", "c3",
    "g_11", "g_12", "g_13", "g_22", "g_23", "g_33",
    "omega_1", "omega_2", "omega_3",
    "ew_residual", "scal", "toda_residual", "harmonic_residual",
)  # fmt: skip

CONFIG_ERRORS = (
    ConfigError,
    cat.CatalogError,
    ExpressionError,
    DomainError,
    DegenerateProfile,
    JetOrderError,
    NotPositiveDefinite,
)


# -- subjects -----------------------------------------------------------------------


@dataclass
class Subject:
    label: str
    W: Optional[WeylStructure]
    profile: object = None
    u: object = None
    entry: Optional[cat.CatalogEntry] = None
    exact: bool = False


def _method(config, exact_default):
    if config.derivatives == "exact" or (config.derivatives == "auto" and exact_default):
        return "ad"
    return None


def _expr_field(text, chart, config, exact_default):
    spec = parse_expression(text, chart, method=_method(config, exact_default))
    return dataclasses.replace(spec, step=config.fd_step)


def _override(chart, domain):
    if not domain:
        return chart
    unknown = set(domain) - set(chart.coords)
    if unknown:
        raise ConfigError(f"unknown coordinate(s) {sorted(unknown)} for chart {chart.name} {chart.coords}")
    return chart.with_domain(**domain)


def _rechart(W, chart):
    if chart is W.chart:
        return W
    return WeylStructure(chart, W.g, W.omega, W.provenance, W.params)


def resolve(config, exact_default=False, need_structure=True):
    """Build the Weyl structure (and profile or potential) named by the config."""
    if config.space is not None:
        entry = cat.catalog(config.space, config.params)
        W = _rechart(entry.structure, _override(entry.structure.chart, config.domain))
        return Subject(config.space, W, entry.profile, entry.toda_u, entry, exact=True)
    if config.params:
        raise ConfigError("--params applies to catalog spaces (--space)")
    if config.u is not None:
        chart = _override(TODA_CHART, config.domain)
        u = _expr_field(config.u, chart, config, exact_default)
        return Subject(f"u={config.u}", build_toda(u, chart), u=u, exact=u.method == "ad")
    if config.V is not None:
        chart = _override(WARD_CHART, config.domain)
        V = _expr_field(config.V, chart, config, exact_default)
        P = dataclasses.replace(profile_from_field(V, f"V={config.V}"), chart=chart)
        W = ward_build(P) if need_structure else None
        return Subject(f"V={config.V}", W, profile=P, u=None, exact=V.method == "ad")
    raise ConfigError("no subject: pass one of --space, --u or --V")


# -- verify ---------------------------------------------------------------------------


def _verify_ew(config, report):
    s = resolve(config)
    pts = sample_points(s.W.chart, config.probes, config.seed)
    ew = report.add(measure("ew_residual", ew_residual(s.W, pts), config.tol("ew")))
    report.add(measure("dg_identity", dg_identity_residual(s.W, pts), config.tol("dg")))
    if ew.status == "pass":
        res = ewcurv_check(s.W, pts, ew_tol=config.tol("ew"))
        report.add(measure("ewcurv", res, config.tol("ewcurv")))
    else:
        report.add(gated("ewcurv", "inapplicable: not Einstein-Weyl at the probes"))


def _verify_toda(config, report):
    s = resolve(config)
    if s.u is None:
        raise ConfigError("verify toda needs --u or a Toda catalog space (hyperbolic)")
    pts = sample_points(s.W.chart, config.probes, config.seed)
    report.add(measure("toda_residual", toda_residual(s.u, pts), config.tol("toda")))
    report.add(measure("ew_residual", ew_residual(s.W, pts), config.tol("ew")))


def _height_loops(chart, pts, side=0.1):
    out = []
    mid = np.array([0.5 * (a + b) for a, b in chart.domain])
    for p in pts:
        sides = np.where(p[:2] < mid[:2], side, -side)
        out.append((p, sides))
    return out


def _verify_harmonic(config, report):
    s = resolve(config, need_structure=False)
    P = s.profile
    if P is None:
        raise ConfigError(f"{s.label} has no harmonic profile")
    fd = not s.exact
    chart = P.chart if s.W is None else s.W.chart
    pts = sample_points(chart, config.probes, config.seed)
    tol_h = config.tol("harmonic_fd" if fd else "harmonic")
    if config.V is not None:
        res = harmonic_residual_from_V(_expr_field(config.V, chart, config, False), pts) if fd else harmonic_residual(P, pts)
    else:
        res = harmonic_residual(P, pts)
    report.add(measure("harmonic_residual", res, tol_h))
    report.add(measure("eigenfunction_residual", eigenfunction_residual(P, pts), config.tol("harmonic_fd" if fd else "eigen")))
    loops = _height_loops(chart, pts[: min(len(pts), 10)])
    defects = [height_loop_defect(P, c, sd) / (2 * np.sum(np.abs(sd))) for c, sd in loops]
    report.add(measure("height_loop_defect", defects, config.tol("height"), note="per unit loop length"))
    try:
        gm, om = joyce_consistency(P, pts)
    except DegenerateProfile as exc:
        report.add(gated("joyce", str(exc)))
    else:
        report.add(measure("joyce_metric", gm, config.tol("joyce")))
        report.add(measure("joyce_omega", om, config.tol("joyce")))


def _verify_crosscheck(config, report):
    if config.space is None:
        raise ConfigError("verify crosscheck needs a catalog --space")
    entry = cat.catalog(config.space, config.params)
    if config.space == "s2h2-quotient":
        chart = _override(cat.s2h2_quotient(entry.params["b"], entry.params["c"]).chart, config.domain)
        pts = sample_points(chart, config.probes, config.seed)
        conf, om = cat.s2h2_quotient_check(entry.params["b"], entry.params["c"], pts)
        report.add(measure("quotient_conformal", conf, config.tol("quotient")))
        report.add(measure("quotient_omega", om, config.tol("quotient")))
        return
    if entry.closed_form is None or entry.profile is None:
        raise ConfigError(f"{config.space} has no closed form to cross-check")
    chart = _override(entry.closed_form.chart, config.domain)
    pts = sample_points(chart, config.probes, config.seed)
    report.add(measure("closed_form_crosscheck", cat.closed_form_crosscheck(entry, pts), config.tol("crosscheck")))


def _scalar(name, value, tol, n, note=""):
    ok = value < tol
    return Check(name, "pass" if ok else "fail", n, float(value), None, tol, note)


def _verify_killing(config, report):
    s = resolve(config)
    pts = sample_points(s.W.chart, config.probes, config.seed)
    gate = config.tol("killing_gate" if s.exact else "killing_gate_fd")
    try:
        rep = killing_gauge_checks(s.W, pts, gate_tol=gate)
    except GateError as exc:
        report.add(gated("killing_precondition", str(exc)))
        return
    n = len(pts)
    report.add(_scalar("killing_residual", rep.killing_residual, gate, n))
    report.notes.extend(rep.notes)
    report.notes.append(f"killing-gauge status: {rep.status}")
    if rep.status == "degenerate":
        return
    report.add(_scalar("identity_i", rep.identity_i, config.tol("coarse"), n))
    report.add(_scalar("identity_ii", rep.identity_ii, config.tol("coarse"), n))
    report.add(info("omega_dot_starF", [rep.omega_dot_starF], note="nonzero rules out Toda structures"))
    if rep.axial is not None:
        for k, v in rep.axial.as_dict().items():
            if k != "k_norm_min":
                report.add(_scalar(f"axial_{k}", v, config.tol("coarse"), n))


VERIFY = {
    "ew": _verify_ew,
    "toda": _verify_toda,
    "harmonic": _verify_harmonic,
    "crosscheck": _verify_crosscheck,
    "killing": _verify_killing,
}


# -- structures / obstruct ---------------------------------------------------------------


def _count(config, report, s, base=None):
    try:
        sc = toda_structure_count(s.W, base=base, ew_tol=config.tol("ew"))
    except GateError as exc:
        report.add(gated("einstein_weyl_gate", str(exc)))
        return None
    report.structure_count = sc.as_dict()
    if sc.upper_bound:
        report.add(_scalar("loop_residual", sc.loop_residual, config.tol("loop"), len(sc.basis) or 1))
    report.add(
        _scalar("kernel_gap_inverse", 1.0 / sc.gap, config.tol("gap"), 1, note=f"singular-value gap {sc.gap:.3g}")
    )
    return sc


def _structures(config, report, base=None):
    s = resolve(config, exact_default=True)
    _count(config, report, s, base)


def _unit_field(W, comps):
    def fn(X, G, *C):
        v = stack(list(C))
        n2 = Jet.einsum("a,a->", Jet.einsum("ab,b->a", G, v), v)
        return Jet.einsum("a,->a", v, n2.sqrt().reciprocal())

    return DerivedField(fn, [W.g, *comps], shape=(3,), label="chi")


def _obstruct(config, report, congruence="auto", base=None):
    s = resolve(config, exact_default=True)
    pts = sample_points(s.W.chart, config.probes, config.seed)
    tol_o, tol_c = config.tol("obstruction"), config.tol("coarse")
    if congruence == "auto":
        sc = _count(config, report, s, base)
        if sc is None:
            report.add(gated("obstruction_orth", "no structure count"))
            return
        if not sc.basis:
            report.notes.append("no confirmed Toda structures: obstructions vacuous")
            return
        Psi = structure_values(s.W, sc.basis, pts)
        pairs = [(f"structure{k}", Psi[:, k, :3], Psi[:, k, 3]) for k in range(len(sc.basis))]
    else:
        parts = [p.strip() for p in congruence.split(",")]
        if len(parts) != 3:
            raise ConfigError("--congruence takes three comma-separated component expressions")
        comps = [_expr_field(p, s.W.chart, config, True) for p in parts]
        chi = _unit_field(s.W, comps)
        rep = congruence_decompose(s.W, chi, pts)
        tol_g = config.tol("congruence")
        checks = [
            report.add(measure("shear", rep.shear_norm, tol_g)),
            report.add(measure("twist", rep.twist_norm, tol_g)),
            report.add(measure("acceleration", rep.acceleration_norm, tol_g)),
        ]
        report.add(info("tau", rep.tau))
        if any(c.status != "pass" for c in checks):
            report.add(gated("obstruction_orth", "not a Toda congruence"))
            return
        try:
            X, sigma = linearize(s.W, chi, pts, tol=tol_g)
        except NotTodaCongruence as exc:  # pragma: no cover - checked above
            report.add(gated("obstruction_orth", str(exc)))
            return
        pairs = [("congruence", X, sigma)]
    for name, X, sigma in pairs:
        report.add(measure(f"orth[{name}]", obstruction_orth(s.W, X, pts), tol_o))
        res, null = obstruction_cy(s.W, X, sigma, pts)
        report.add(measure(f"cotton_york[{name}]", res, tol_c))
        report.add(measure(f"cy_null[{name}]", null, tol_c))


# -- export ------------------------------------------------------------------------------


def parse_grid(text):
    try:
        dims = tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ConfigError(f"bad grid {text!r}: expected NxMxK") from None
    if len(dims) != 3 or min(dims) < 1:
        raise ConfigError(f"bad grid {text!r}: expected three positive integers NxMxK")
    return dims


def grid_points(chart, dims):
    axes = []
    for (lo, hi), n in zip(chart.domain, dims):
        axes.append(np.array([0.5 * (lo + hi)]) if n == 1 else np.linspace(lo, hi, n))
    idx = np.stack(np.meshgrid(*[np.arange(n) for n in dims], indexing="ij"), axis=-1).reshape(-1, 3)
    pts = np.stack([axes[a][idx[:, a]] for a in range(3)], axis=1)
    return idx, pts


def _fmt(v):
    return "" if v is None else "%.17g" % v


def _export(config, report, grid, out):
    s = resolve(config)
    dims = parse_grid(grid)
    idx, pts = grid_points(s.W.chart, dims)
    s.W.chart.check(pts)
    out = Path(out)
    if out.suffix.lower() == ".json":
        raise ConfigError("--out names the CSV file; the JSON report is written next to it")
    geo = s.W.geometry(pts, order=2)
    ew = np.max(np.abs(geo.EW.value), axis=(1, 2))
    scal = geo.Scal.value
    toda = toda_residual(s.u, pts) if s.u is not None else None
    harm = harmonic_residual(s.profile, pts) if s.profile is not None else None
    rows = [",".join(CSV_COLUMNS)]
    for n in range(len(pts)):
        g = geo.g[n]
        vals = [
            *(str(int(v)) for v in idx[n]),
            *(_fmt(v) for v in pts[n]),
            *(_fmt(g[a, b]) for a, b in ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))),
            *(_fmt(v) for v in geo.omega[n]),
            _fmt(ew[n]),
            _fmt(scal[n]),
            _fmt(None if toda is None else toda[n]),
            _fmt(None if harm is None else harm[n]),
        ]
        rows.append(",".join(vals))
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text("\n".join(rows) + "\n", encoding="ascii")
    except OSError as exc:
        raise ConfigError(f"cannot write {out}: {exc}") from None
    report.add(info("grid_ew_residual", ew, note=f"{len(pts)} rows written to {out.name}"))
    report.notes.append(f"coordinates c1,c2,c3 = {','.join(s.W.chart.coords)}")
    return out


# -- argument handling ---------------------------------------------------------------------


def _kv_floats(text, what):
    try:
        return cat.parse_params(text)
    except cat.CatalogError as exc:
        raise ConfigError(f"bad {what}: {exc}") from None


def parse_domain(text):
    out = {}
    if not text:
        return out
    for item in text.split(","):
        if "=" not in item or ":" not in item:
            raise ConfigError(f"bad domain override {item!r}: expected name=lo:hi")
        name, iv = item.split("=", 1)
        lo, hi = iv.split(":", 1)
        try:
            out[name.strip()] = (float(lo), float(hi))
        except ValueError:
            raise ConfigError(f"bad domain override {item!r}") from None
    return out


def _common(p):
    p.add_argument("--space", help="catalog label (see 'ewlab catalog list')")
    p.add_argument("--params", default="", help="catalog parameters, e.g. a=1,b=1,c=1")
    p.add_argument("--u", help="Toda potential u(x, y, z) as an expression")
    p.add_argument("--V", help="axisymmetric potential V(rho, eta) as an expression")
    p.add_argument("--domain", default="", help="chart domain override, e.g. rho=0.5:2,eta=-1:1")
    p.add_argument("--probes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, help="tolerance of the command's primary check class")
    p.add_argument("--tol-class", default="", help="per-class tolerances, e.g. coarse=1e-4,ew=1e-7")
    p.add_argument("--fd-step", type=float, default=1e-3)
    p.add_argument("--derivatives", choices=("auto", "fd", "exact"), default="auto")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--report", help="also write the JSON report to this path")


def build_parser():
    ap = argparse.ArgumentParser(prog="ewlab", description="Numerical laboratory for three-dimensional Weyl geometry.")
    sub = ap.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("catalog", help="list catalog spaces")
    pc.add_argument("action", choices=("list",))
    pc.add_argument("--format", choices=("text", "json"), default="text")

    pv = sub.add_parser("verify", help="run a pointwise check over seeded probes")
    pv.add_argument("check", choices=tuple(VERIFY))
    _common(pv)

    ps = sub.add_parser("structures", help="count Toda structures")
    _common(ps)
    ps.add_argument("--base", help="base point x,y,z (default: near the domain centre)")

    po = sub.add_parser("obstruct", help="curvature obstructions for Toda structures")
    _common(po)
    po.add_argument("--congruence", default="auto", help="'auto' (confirmed structures) or three component expressions")
    po.add_argument("--base", help="base point x,y,z for the structure count")

    pe = sub.add_parser("export", help="write grid values to CSV with a JSON report")
    _common(pe)
    pe.add_argument("--grid", required=True, help="grid size NxMxK")
    pe.add_argument("--out", required=True, help="CSV path; the report goes to the same stem with .json")
    return ap


def config_from_args(args):
    tols = dict(DEFAULT_TOLERANCES)
    tols.update(_kv_floats(args.tol_class, "--tol-class"))
    unknown = set(_kv_floats(args.tol_class, "--tol-class")) - set(DEFAULT_TOLERANCES)
    if unknown:
        raise ConfigError(f"unknown tolerance class(es): {sorted(unknown)}")
    key = args.check if args.command == "verify" else args.command
    if args.tol is not None:
        tols[PRIMARY_CLASS[key]] = args.tol
        if key == "harmonic":
            tols["harmonic_fd"] = args.tol
    return RunConfig(
        space=args.space,
        params=_kv_floats(args.params, "--params"),
        u=args.u,
        V=args.V,
        domain=parse_domain(args.domain),
        probes=args.probes,
        seed=args.seed,
        fd_step=args.fd_step,
        derivatives=args.derivatives,
        tolerances=tols,
        output_format=args.format,
    )


def _base(text):
    if not text:
        return None
    try:
        b = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ConfigError(f"bad base point {text!r}") from None
    if b.shape != (3,):
        raise ConfigError("base point needs three coordinates")
    return b


def run(command, config, **kw):
    """Run one command and return its :class:`Report`."""
    report = Report(command, config)
    t0 = time.perf_counter()
    try:
        if command.startswith("verify "):
            VERIFY[command.split()[1]](config, report)
        elif command == "structures":
            _structures(config, report, _base(kw.get("base")))
        elif command == "obstruct":
            _obstruct(config, report, kw.get("congruence", "auto"), _base(kw.get("base")))
        elif command == "export":
            _export(config, report, kw["grid"], kw["out"])
        else:
            raise ConfigError(f"unknown command {command!r}")
    except CONFIG_ERRORS as exc:
        report.config_error = True
        report.notes.append(f"configuration error: {exc}")
    report.wall_time_ms = 1000.0 * (time.perf_counter() - t0)
    return report


def _catalog_list(fmt):
    rows = [{"label": lb, "params": cat._DEFAULTS[lb], "description": cat.describe(lb)} for lb in cat.LABELS]
    if fmt == "json":
        print(json.dumps(rows, indent=2))
    else:
        for r in rows:
            prm = ",".join(f"{k}={v:g}" for k, v in r["params"].items()) or "-"
            print(f"{r['label']:18s} {prm:18s} {r['description']}")
    return 0


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.command == "catalog":
        return _catalog_list(args.format)
    try:
        config = config_from_args(args)
    except ConfigError as exc:
        print(f"ewlab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    command = f"verify {args.check}" if args.command == "verify" else args.command
    report = run(
        command,
        config,
        base=getattr(args, "base", None),
        congruence=getattr(args, "congruence", "auto"),
        grid=getattr(args, "grid", None),
        out=getattr(args, "out", None),
    )
    text = report.to_json()
    if args.report:
        Path(args.report).write_text(text + "\n")
    if command == "export" and not report.config_error:
        Path(args.out).with_suffix(".json").write_text(text + "\n")
    if config.output_format == "json":
        print(text)
    else:
        print(report.to_text())
    if report.config_error:
        print(f"ewlab: error: {report.notes[-1].split(': ', 1)[1]}", file=sys.stderr)
    return report.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
