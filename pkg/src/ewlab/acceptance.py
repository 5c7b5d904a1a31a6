"""Acceptance suite: the ten end-to-end criteria, each with its tolerance.

Run as ``python -m ewlab.acceptance [--json PATH] [--seed S]``.  The JSON
record holds every measured value but no timings, so two runs with the
same seed must produce identical bytes.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import catalog as cat
from .charts import Chart, builtin_field, convergence_order, fd_jet, sample_points
from .cli import run
from .report import RunConfig
from .toda import (
    axial_symmetry_checks,
    dstar_flatness,
    obstruction_cy,
    obstruction_orth,
    structure_values,
    toda_structure_count,
    wronskian,
)
from .ward import (
    eigenfunction_residual,
    eguchi_hanson_profile,
    linear_eta,
    log_rho,
    point_source,
    taubnut_profile,
    ward_build,
)
from .weylgeom import GateError, ew_residual, ewcurv_check


@dataclass
class Criterion:
    number: int
    title: str
    passed: bool
    detail: str
    values: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        return f"criterion {self.number:2d} {'PASS' if self.passed else 'FAIL'}  {self.title}: {self.detail}"


def _f(x):
    return float(f"{float(x):.6e}")


def ward_profiles():
    return {
        "log(rho)": log_rho(),
        "eta": linear_eta(1.0),
        "1/r": point_source(1.0),
        "taubnut(1,1,1)": taubnut_profile(1, 1, 1),
        "eh1(0,1,1)": eguchi_hanson_profile(-1, 0, 1, 1),
        "eh2(1,1,1)": eguchi_hanson_profile(1, 1, 1, 1),
    }


def criterion_1(seed):
    t0 = time.perf_counter()
    vals = {}
    for name, P in ward_profiles().items():
        W = ward_build(P)
        pts = sample_points(W.chart, 100, seed)
        vals[name] = _f(np.max(np.abs(ew_residual(W, pts))))
    dt = time.perf_counter() - t0
    ok = max(vals.values()) < 1e-6 and dt < 30
    worst = max(vals, key=vals.get)
    return Criterion(1, "Ward construction", ok, f"max ew {vals[worst]:.2e} ({worst}) < 1e-6; {dt:.1f} s < 30 s", vals, dt)


def criterion_2(seed):
    vals = {}
    ok = True
    for u in ("0", "log(1+z)", "x+y"):
        rep = run("verify toda", RunConfig(u=u, probes=100, seed=seed)).as_dict()
        ew = rep["checks"][1]["max_abs"]
        vals[u] = {"toda": _f(rep["checks"][0]["max_abs"]), "ew": _f(ew)}
        ok &= ew < 1e-6
    rep = run("verify toda", RunConfig(u="x^2", probes=100, seed=seed)).as_dict()
    ew = rep["checks"][1]["max_abs"]
    dev = _f(np.max(np.abs(np.asarray(toda_values(seed)) - 2.0)))
    vals["x^2"] = {"toda_minus_2": dev, "ew": _f(ew)}
    ok &= dev < 1e-6 and ew > 1e-2
    detail = (
        f"harmonic/log u max ew {max(v['ew'] for k, v in vals.items() if k != 'x^2'):.2e} < 1e-6; "
        f"x^2: |toda-2| {dev:.1e}, ew {ew:.2f} > 1e-2"
    )
    return Criterion(2, "Toda <=> Einstein-Weyl", bool(ok), detail, vals)


def toda_values(seed):
    from .charts import parse_expression
    from .toda import TODA_CHART, toda_residual

    u = parse_expression("x^2", TODA_CHART)
    return toda_residual(u, sample_points(TODA_CHART, 100, seed))


COUNT_CASES = (
    ("flat", "flat", {}, 4),
    ("build_toda(log z)", "hyperbolic", {}, 4),
    ("taubnut(1,1,1)", "taubnut", {"a": 1, "b": 1, "c": 1}, 2),
    ("eguchi-hanson-1(0,1,1)", "eguchi-hanson-1", {"a": 0, "b": 1, "c": 1}, 2),
    ("berger(a=1.5)", "berger", {"a": 1.5}, 0),
)


def criterion_3(seed):
    vals = {}
    ok = True
    fails = []
    for name, label, prm, want in COUNT_CASES:
        t0 = time.perf_counter()
        W = cat.catalog(label, prm).structure
        try:
            sc = toda_structure_count(W)
        except GateError as exc:
            vals[name] = {"gated": str(exc)}
            ok = False
            fails.append(f"{name} gated ({exc})")
            continue
        dt = time.perf_counter() - t0
        vals[name] = {"upper_bound": sc.upper_bound, "confirmed": sc.confirmed, "gap": _f(sc.gap)}
        good = sc.confirmed == want and sc.upper_bound == want and sc.gap >= 1e5 and dt < 60
        if not good:
            fails.append(f"{name}: {sc.confirmed} (want {want}), gap {sc.gap:.1e}, {dt:.0f} s")
        ok &= good
    # supplementary: an Einstein-Weyl member of the Berger family
    sc = toda_structure_count(cat.catalog("berger", {"a": 0.7}).structure)
    vals["berger(a=0.7) [supplementary]"] = {"confirmed": sc.confirmed, "gap": _f(sc.gap)}
    counts = ", ".join(
        f"{k} {v['confirmed']}" for k, v in vals.items() if "confirmed" in v and "supplementary" not in k
    )
    detail = counts + ("; " + "; ".join(fails) if fails else "; all gaps >= 1e5")
    detail += f"; berger(a=0.7) -> {sc.confirmed}"
    return Criterion(3, "structure counts", bool(ok), detail, vals)


def criterion_4(seed):
    vals = {}
    ok = True
    for name, P in ward_profiles().items():
        W = ward_build(P)
        sc = toda_structure_count(W)
        pts = sample_points(W.chart, 50, seed)
        Psi = structure_values(W, sc.basis, pts) if sc.basis else np.zeros((50, 0, 4))
        orth = cy = 0.0
        for k in range(Psi.shape[1]):
            X, s = Psi[:, k, :3], Psi[:, k, 3]
            orth = max(orth, float(np.max(np.abs(obstruction_orth(W, X, pts)))))
            res, _ = obstruction_cy(W, X, s, pts)
            cy = max(cy, float(np.max(np.abs(res))))
        vals[name] = {"confirmed": sc.confirmed, "orth": _f(orth), "cotton_york": _f(cy)}
        ok &= orth < 1e-6 and cy < 1e-5
    o = max(v["orth"] for v in vals.values())
    c = max(v["cotton_york"] for v in vals.values())
    counts = ",".join(str(v["confirmed"]) for v in vals.values())
    return Criterion(4, "obstruction identities", bool(ok), f"counts [{counts}]; max orth {o:.1e} < 1e-6; max CY {c:.1e} < 1e-5", vals)


EW_SPACES = (
    ("flat", {}),
    ("hyperbolic", {}),
    ("round-sphere", {}),
    ("berger", {"a": 0.7}),
    ("ward-logrho", {}),
    ("taubnut", {}),
    ("eguchi-hanson-1", {}),
    ("eguchi-hanson-2", {}),
    ("s2h2-quotient", {}),
)


def criterion_5(seed):
    vals = {}
    for label, prm in EW_SPACES:
        W = cat.catalog(label, prm).structure
        pts = sample_points(W.chart, 100, seed)
        vals[label] = _f(np.max(ewcurv_check(W, pts)))
    worst = max(vals, key=vals.get)
    ok = vals[worst] < 1e-6
    return Criterion(5, "EWcurv decomposition", ok, f"max residual {vals[worst]:.1e} ({worst}) < 1e-6 on {len(vals)} spaces", vals)


def criterion_6(seed):
    vals = {}
    for label in ("taubnut", "eguchi-hanson-1", "eguchi-hanson-2"):
        e = cat.catalog(label)
        pts = sample_points(e.closed_form.chart, 50, seed)
        vals[label] = _f(np.max(cat.closed_form_crosscheck(e, pts)))
    Wq = cat.s2h2_quotient(1.0, 1.0)
    conf, om = cat.s2h2_quotient_check(1.0, 1.0, sample_points(Wq.chart, 50, seed))
    q = max(float(np.max(conf)), float(np.max(om)))
    vals["s2h2-quotient"] = _f(q)
    cf = max(vals[k] for k in ("taubnut", "eguchi-hanson-1", "eguchi-hanson-2"))
    ok = cf < 1e-8 and q < 1e-7
    return Criterion(6, "closed-form crosschecks", ok, f"LW closed forms {cf:.1e} < 1e-8; quotient {q:.1e} < 1e-7", vals)


def criterion_7(seed, n=12):
    W = cat.catalog("taubnut").structure
    sc = toda_structure_count(W)
    if sc.confirmed != 2:
        return Criterion(7, "Wronskian symmetry", False, f"needs two structures, found {sc.confirmed}")
    K = wronskian(W, *sc.basis)
    pts = sample_points(W.chart, n, seed)
    ax = axial_symmetry_checks(W, K, pts)
    k = K.jet(pts, 0).value
    off = float(np.max(np.abs(k[:, :2]) / np.abs(k[:, 2:3])))
    positive = bool(np.all(k[:, 2] > 0))
    ds, _ = dstar_flatness(W, K, pts[:4])
    vals = {
        "divergence": _f(ax.divergence),
        "twist": _f(ax.twist),
        "conformal": _f(ax.conformal),
        "lie_D": _f(ax.lie_D),
        "off_axis_ratio": _f(off),
        "K_psi_min": _f(np.min(k[:, 2])),
        "dstar": _f(np.max(ds)),
    }
    worst = max(vals["divergence"], vals["twist"], vals["conformal"], vals["lie_D"])
    ok = worst < 1e-5 and positive and off < 1e-6 and vals["dstar"] < 1e-6
    detail = f"axial residuals <= {worst:.1e} < 1e-5; K = {vals['K_psi_min']:.3f} d_psi (off-axis {off:.0e}); D* {vals['dstar']:.1e} < 1e-6"
    return Criterion(7, "Wronskian symmetry", bool(ok), detail, vals)


def criterion_8(seed):
    profiles = dict(ward_profiles())
    for label in cat.LABELS:
        e = cat.catalog(label)
        if e.profile is not None:
            profiles[f"catalog:{label}"] = e.profile
    vals = {}
    for name, P in profiles.items():
        pts = sample_points(P.chart, 100, seed)
        vals[name] = _f(np.max(np.abs(eigenfunction_residual(P, pts))))
    worst = max(vals, key=vals.get)
    return Criterion(8, "hyperbolic eigenfunction", vals[worst] < 1e-8, f"max {vals[worst]:.1e} ({worst}) < 1e-8 over {len(vals)} profiles", vals)


_UNIT = Chart("probe", ("x", "y", "z"), ((-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)))

TRANSCENDENTAL = {
    "exp(x)": (lambda X: X[0].exp(), (0.5, 0.0, 0.0)),
    "exp(x)*sin(y)": (lambda X: X[0].exp() * X[1].sin(), (0.3, 0.7, 0.0)),
    "log(2+z)*cos(x)": (lambda X: (X[2] + 2).log() * X[0].cos(), (0.2, -0.1, 0.4)),
    "atan(x*y)+sinh(z)": (lambda X: (X[0] * X[1]).arctan() + X[2].sinh(), (0.4, 0.3, -0.2)),
}


def _agreement(F, pts, order, step):
    A = F.jet(pts, order)
    N = fd_jet(lambda q: F.jet(q, 0).value, pts, order, step)
    return [float(np.max(np.abs(A.parts[k] - N.parts[k]))) for k in range(order + 1)]


def fd_agreement(entry, pts, step=1e-3):
    """Per-order max |analytic - FD| over the entry's fields.

    Fields: metric and Weyl form (to order 2), and the scalar potentials
    ``u`` or ``V`` when present (to order 3).  Returns ``(orders 0-2, order 3)``.
    """
    W = entry.structure
    low, third = 0.0, 0.0
    for F in (W.g, W.omega):
        low = max(low, *_agreement(F, pts, 2, step))
    scalars = [(entry.toda_u, pts)] if entry.toda_u is not None else []
    if entry.profile is not None:
        scalars.append((entry.profile.field("V"), sample_points(entry.profile.chart, len(pts), 0)))
    for f, q in scalars:
        errs = _agreement(f, q, 3, step)
        low = max(low, *errs[:3])
        third = max(third, errs[3])
    return low, third


def criterion_9(seed):
    vals = {"order": {}, "agreement": {}, "third_order_info": {}}
    ok = True
    for name, (fn, p) in TRANSCENDENTAL.items():
        est = convergence_order(builtin_field(name, _UNIT.coords, fn), _UNIT, p)
        vals["order"][name] = _f(est.order)
        ok &= est.status == "ok" and abs(est.order - 4) <= 0.5
    for label in cat.LABELS:
        e = cat.catalog(label)
        low, third = fd_agreement(e, sample_points(e.structure.chart, 20, seed))
        vals["agreement"][label] = _f(low)
        if third:
            vals["third_order_info"][label] = _f(third)
    worst = max(vals["agreement"], key=vals["agreement"].get)
    agree = vals["agreement"][worst]
    ok &= agree < 1e-6
    orders = list(vals["order"].values())
    detail = f"FD order {min(orders):.2f}..{max(orders):.2f} (4 +- 0.5); analytic-vs-FD {agree:.1e} ({worst}) vs 1e-6"
    return Criterion(9, "engine health", bool(ok), detail, vals)


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8, criterion_9)


def run_suite(seed=0, echo=None):
    out = []
    for fn in CRITERIA:
        t0 = time.perf_counter()
        c = fn(seed)
        c.seconds = time.perf_counter() - t0
        out.append(c)
        if echo:
            echo(c)
    return out


def suite_json(criteria, seed=0):
    payload = {
        "seed": seed,
        "criteria": [{"number": c.number, "title": c.title, "passed": c.passed, "values": c.values} for c in criteria],
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def criterion_10(first, seed=0):
    """Rerun criteria 1-9 in a fresh interpreter and compare the JSON bytes with ``first``."""
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "second.json")
        proc = subprocess.run(
            [sys.executable, "-m", "ewlab.acceptance", "--seed", str(seed), "--quiet", "--no-rerun", "--json", path],
            capture_output=True,
            text=True,
        )
        if not os.path.exists(path):
            return Criterion(10, "determinism", False, f"second run failed (exit {proc.returncode}): {proc.stderr[-300:]}")
        with open(path, encoding="utf-8") as fh:
            second = fh.read()
    a = (first + "\n").encode()
    b = second.encode()
    same = a == b
    detail = f"two suite runs, seed {seed}: JSON {'byte-identical' if same else 'differs'} ({len(a)} vs {len(b)} bytes)"
    return Criterion(10, "determinism", same, detail, {"bytes": len(a), "identical": same})


def main(argv=None):
    ap = argparse.ArgumentParser(prog="python -m ewlab.acceptance")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="write the value record of criteria 1-9 to this path")
    ap.add_argument("--quiet", action="store_true")
    ap.add_argument("--no-rerun", action="store_true", help="skip criterion 10 (the second run)")
    args = ap.parse_args(argv)
    echo = None if args.quiet else (lambda c: print(c.line(), flush=True))
    crits = run_suite(args.seed, echo)
    text = suite_json(crits, args.seed)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    if not args.no_rerun:
        c10 = criterion_10(text, args.seed)
        crits.append(c10)
        if echo:
            echo(c10)
    return 0 if all(c.passed for c in crits) else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
