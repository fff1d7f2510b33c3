"""Command-line front end: configs in, run directories out.

JSON for configs and reports, CSV for series data, raw binary plus sidecar
for field snapshots.  A fixed seed and config produce byte-identical series
output; wall-clock only ever reaches the manifest.  Exit codes: 0 ok,
2 config trouble, 3 elliptic solver gave up, 4 blow-up during a classify
or evolve run, 5 identity-suite violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import subprocess
import sys
import warnings
from datetime import datetime, timezone
from importlib import metadata as _meta
from pathlib import Path

import numpy as np

from . import dichotomy as dc
from . import evolve as ev
from . import grid as gr
from . import groundstate as gstate
from . import morawetz as mz
from . import nonlin as nl

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_BLOWUP = 4
EXIT_IDENTITY = 5

_STRUCTURAL = ("H1", "H2", "H3", "H4", "H5")


class SchemaError(ValueError):
    """Config document does not match the documented schema."""


class HypothesisError(RuntimeError):
    """A hypothesis check failed; carries the name and the evidence."""

    def __init__(self, hypothesis, witness):
        super().__init__(f"{hypothesis} failed: {witness}")
        self.hypothesis = hypothesis
        self.witness = witness


# ---------------------------------------------------------------------------
# canonical serialization
# ---------------------------------------------------------------------------


def canonical_spec_dict(spec):
    """Key-sorted plain dict capturing everything that defines the system."""
    return {
        "F": sorted(str(t) for t in _term_strings(spec.F)),
        "alpha": list(spec.alpha),
        "beta": list(spec.beta),
        "gamma": list(spec.gamma),
        "l": spec.l,
        "sigma": list(spec.sigma) if spec.sigma is not None else None,
    }


def _term_strings(poly):
    # one monomial per string so the hash ignores term order
    for m in poly.terms:
        yield f"{m.coeff.real!r}{m.coeff.imag!r:+}j*z{m.zexp}*c{m.cexp}"


def spec_hash(spec):
    blob = json.dumps(canonical_spec_dict(spec), sort_keys=True,
                      separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _tool_version():
    try:
        version = _meta.version("qnls")
    except _meta.PackageNotFoundError:
        version = "unknown"
    try:
        out = subprocess.run(
            ["git", "-C", str(Path(__file__).resolve().parent), "describe",
             "--always", "--dirty"],
            capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{version}+{out.stdout.strip()}"
    except OSError:
        pass
    return version


def _jsonable(obj):
    """Plain-JSON view: numpy scalars unwrapped, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def _fmt17(x):
    return "%.17g" % float(x)


# ---------------------------------------------------------------------------
# config ingestion
# ---------------------------------------------------------------------------


@dataclasses.dataclass
class LoadedConfig:
    spec: nl.SystemSpec
    grid: object
    integrator: ev.IntegratorConfig
    params: dict
    report: object
    raw: dict


def _require(cond, msg):
    if not cond:
        raise SchemaError(msg)


def _floats(raw, name):
    _require(isinstance(raw, (list, tuple)) and raw, f"{name} must be a "
             "non-empty array of numbers")
    try:
        return tuple(float(v) for v in raw)
    except (TypeError, ValueError):
        raise SchemaError(f"{name} holds a non-numeric entry") from None


_INTEGRATOR_KEYS = {
    "dt": "dt", "scheme": "scheme", "nonlinearSubsteps": "nonlinear_substeps",
    "boundaryMassWarn": "boundary_mass_warn", "blowupFactor": "blowup_factor",
    "stride": "stride", "snapshotStride": "snapshot_stride",
}


def parse_config(path):
    """Read and validate a config document; no hypothesis gating here."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise SchemaError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"config is not valid JSON: {exc}") from None
    _require(isinstance(raw, dict) and "system" in raw,
             "config must be an object with a 'system' section")
    sysd = raw["system"]
    _require(isinstance(sysd, dict), "'system' must be an object")
    _require(isinstance(sysd.get("F"), str), "system.F must be a potential "
             "string")
    alpha = _floats(sysd.get("alpha"), "system.alpha")
    gamma = _floats(sysd.get("gamma"), "system.gamma")
    beta = _floats(sysd["beta"], "system.beta") if "beta" in sysd else None
    sigma = _floats(sysd["sigma"], "system.sigma") if "sigma" in sysd \
        else None
    if "l" in sysd:
        _require(int(sysd["l"]) == len(alpha),
                 "system.l disagrees with the coefficient count")
    try:
        spec = nl.make_system(sysd["F"], alpha, gamma, beta=beta, sigma=sigma)
    except ValueError as exc:
        raise SchemaError(f"system rejected: {exc}") from None

    grid = None
    if "grid" in raw:
        _require(isinstance(raw["grid"], dict), "'grid' must be an object")
        try:
            grid = gr.grid_from_dict(raw["grid"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"grid rejected: {exc}") from None

    rund = raw.get("run", {})
    _require(isinstance(rund, dict), "'run' must be an object")
    kwargs = {}
    params = {}
    for key, val in rund.items():
        if key in _INTEGRATOR_KEYS:
            kwargs[_INTEGRATOR_KEYS[key]] = val
        else:
            params[key] = val
    try:
        integrator = ev.IntegratorConfig(dt=float(kwargs.pop("dt", 1e-3)),
                                         **kwargs)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"run section rejected: {exc}") from None
    return spec, grid, integrator, params, raw


def gate_hypotheses(spec, force=False, seed=0):
    """Hypothesis certificates; refuses on failures (sampled ones are
    forceable down to a warning)."""
    report = nl.hypothesis_report(spec, seed=seed)
    for name, (status, evidence) in sorted(report.statuses.items()):
        if status != nl.STATUS_FAILED:
            continue
        if name in _STRUCTURAL or not force:
            raise HypothesisError(name, evidence)
        warnings.warn(f"{name} failed ({evidence}); proceeding under --force")
    return report


def load_config(path, force=False, seed=0):
    spec, grid, integrator, params, raw = parse_config(path)
    report = gate_hypotheses(spec, force=force, seed=seed)
    return LoadedConfig(spec=spec, grid=grid, integrator=integrator,
                        params=params, report=report, raw=raw)


# ---------------------------------------------------------------------------
# run directories
# ---------------------------------------------------------------------------


class RunDir:
    """One output directory: manifest, canonical config echo, artifacts."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)

    def write_json(self, name, obj):
        text = json.dumps(_jsonable(obj), indent=2, sort_keys=True)
        (self.path / name).write_text(text + "\n")

    def write_manifest(self, spec, grid, integrator, T, seed, parent=None,
                       extra=None):
        manifest = {
            "specHash": spec_hash(spec),
            "grid": gr.grid_to_dict(grid) if grid is not None else None,
            "scheme": integrator.scheme if integrator else None,
            "dt": integrator.dt if integrator else None,
            "T": T,
            "seed": seed,
            "toolVersion": _tool_version(),
            "createdAt": datetime.now(timezone.utc).isoformat(),
            "parentRun": str(parent) if parent is not None else None,
        }
        if extra:
            manifest.update(extra)
        self.write_json("manifest.json", manifest)

    def write_config_echo(self, raw):
        self.write_json("config.json", raw)

    def write_series(self, series):
        lines = [",".join(ev.COLUMNS)]
        for row in series.rows:
            lines.append(",".join(_fmt17(getattr(row, c))
                                  for c in ev.COLUMNS))
        (self.path / "series.csv").write_text("\n".join(lines) + "\n")

    def write_snapshots(self, snapshots):
        snapdir = self.path / "snapshots"
        snapdir.mkdir(exist_ok=True)
        for i, st in enumerate(snapshots):
            gr.save_field(snapdir / f"snap_{i:06d}", st)


def _load_run_snapshots(path):
    snapdir = Path(path) / "snapshots"
    stems = sorted(p.with_suffix("") for p in snapdir.glob("snap_*.json"))
    if not stems:
        raise SchemaError(f"no snapshots under {snapdir}")
    return ev.TimeSeries(rows=[], snapshots=[gr.load_field(s) for s in stems])


# ---------------------------------------------------------------------------
# initial data and ground-state plumbing
# ---------------------------------------------------------------------------


def _beta_zeroed(spec):
    return dataclasses.replace(spec, beta=(0.0,) * spec.l)


def _compute_ground_state(spec, grid, omega=1.0):
    _require(isinstance(grid, gr.RadialGrid),
             "ground states need a radial grid in the config")
    return gstate.petviashvili(_beta_zeroed(spec), float(omega), grid)


def _load_ground_state(spec, path):
    """Rebuild the profile bundle of a ground-state run directory."""
    base = Path(path)
    rep = json.loads((base / "report.json").read_text())
    profiles = gr.load_field(base / "profiles")
    spec0 = _beta_zeroed(spec)
    cs = gstate.linear_coefficients(spec0, rep["omega"])
    return gstate.GroundState(
        spec=spec0, omega=float(rep["omega"]), cs=cs, profiles=profiles,
        residual=float(rep["residual"]), iterations=int(rep["iterations"]),
        I=float(rep["I"]), Qcal=float(rep["Qcal"]), K=float(rep["K"]),
        P=float(rep["P"]), C5opt=float(rep["C5opt"]),
        stabilizer=float(rep["stabilizer"]))


def _resolve_initial(directive, grid, get_gs, base_dir):
    """Initial data from a `cW <c>` scaling directive or a snapshot stem."""
    _require(isinstance(directive, str) and directive.strip(),
             "run.initial (or --initial) is required: a snapshot path or "
             "'cW <c>'")
    parts = directive.split()
    if parts[0] == "cW":
        _require(len(parts) == 2, "scaling directive is 'cW <c>'")
        try:
            c = float(parts[1])
        except ValueError:
            raise SchemaError("scaling directive is 'cW <c>'") from None
        gs = get_gs()
        return gr.field_from(gs.profiles.grid,
                             [c * comp for comp in gs.profiles.comps])
    stem = Path(directive)
    if not stem.is_absolute():
        stem = Path(base_dir) / stem
    if stem.suffix in (".json", ".bin"):
        stem = stem.with_suffix("")
    if not stem.with_suffix(".json").exists():
        raise SchemaError(f"snapshot not found: {stem}")
    field = gr.load_field(stem)
    if grid is not None and gr.grid_to_dict(field.grid) != \
            gr.grid_to_dict(grid):
        raise SchemaError("snapshot grid disagrees with the config grid")
    return field


def _job_width(requested):
    width = max(1, int(requested or 1))
    cap = int(os.environ.get("QNLS_THREADS", "0") or 0)
    if cap > 0:
        width = min(width, cap)
    return width


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_check(args):
    spec, grid, integrator, params, raw = parse_config(args.config)
    report = nl.hypothesis_report(spec, seed=args.seed)
    if args.out:
        rd = RunDir(args.out)
        rd.write_config_echo(raw)
        rd.write_manifest(spec, grid, integrator, params.get("T"), args.seed)
        (rd.path / "report.json").write_text(report.to_json() + "\n")
    for name, (status, evidence) in sorted(report.statuses.items()):
        print(f"{name}: {status} ({evidence})")
    print(f"mass resonant: {report.mass_resonant}  sigma: {report.sigma}")
    try:
        gate_hypotheses(spec, force=args.force, seed=args.seed)
    except HypothesisError as exc:
        print(f"refusing: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def cmd_ground_state(args):
    cfg = load_config(args.config, force=args.force, seed=args.seed)
    omega = float(cfg.params.get("omega", 1.0))
    gs = _compute_ground_state(cfg.spec, cfg.grid, omega)
    vals = gstate.functionals(gs.spec, gs.profiles)
    rd = RunDir(args.out)
    rd.write_config_echo(cfg.raw)
    rd.write_manifest(cfg.spec, cfg.grid, cfg.integrator, None, args.seed)
    gr.save_field(rd.path / "profiles", gs.profiles)
    rd.write_json("report.json", {
        "omega": gs.omega, "I": gs.I, "Q": vals.Q, "K": gs.K, "P": gs.P,
        "C5opt": gs.C5opt, "pohozaev": list(gstate.pohozaev_check(gs)),
        "residual": gs.residual, "iterations": gs.iterations,
        # bundle internals consumed by --gs loaders
        "Qcal": gs.Qcal, "stabilizer": gs.stabilizer,
    })
    print(f"converged in {gs.iterations} iterations, residual "
          f"{gs.residual:.3e}")
    return EXIT_OK


def cmd_evolve(args):
    cfg = load_config(args.config, force=args.force, seed=args.seed)
    _require(cfg.grid is not None, "evolve needs a grid section")
    integrator = cfg.integrator
    if args.dt is not None:
        integrator = dataclasses.replace(integrator, dt=float(args.dt))
    T = float(args.T if args.T is not None else cfg.params.get("T", 0.0))
    _require(T > 0.0, "evolve needs --T or run.T")
    omega = float(cfg.params.get("omega", 1.0))
    u0 = _resolve_initial(
        args.initial or cfg.params.get("initial"), cfg.grid,
        lambda: _compute_ground_state(cfg.spec, cfg.grid, omega),
        Path(args.config).parent)
    rd = RunDir(args.out)
    rd.write_config_echo(cfg.raw)
    rd.write_manifest(cfg.spec, cfg.grid, integrator, T, args.seed)
    blown = None
    try:
        series, final = ev.evolve_to(cfg.spec, u0, T, integrator)
    except ev.BlowUpSuspected as exc:
        series, blown = exc.series, exc
    rd.write_series(series)
    rd.write_snapshots(series.snapshots)
    Q = series.column("Q")
    E = series.column("Ebeta")
    rd.write_json("report.json", {
        "finalT": float(series.rows[-1].t),
        "rows": len(series.rows),
        "blowUp": blown is not None,
        "blowUpDetail": str(blown) if blown else None,
        "QDrift": float(np.max(np.abs(Q - Q[0])) / max(abs(Q[0]), 1e-300)),
        "EbetaDrift": float(np.max(np.abs(E - E[0]))
                            / max(abs(E[0]), 1e-300)),
    })
    if blown is not None:
        print(f"blow-up suspected: {blown}", file=sys.stderr)
        return EXIT_BLOWUP
    print(f"evolved to t = {series.rows[-1].t:g} ({len(series.rows)} rows)")
    return EXIT_OK


_GATE_KEYS = ("windowLen", "decaySlack", "halvingRatio", "kineticSlack",
              "cauchyTol", "freeStep")


def cmd_classify(args):
    cfg = load_config(args.config, force=args.force, seed=args.seed)
    T = float(args.T if args.T is not None else cfg.params.get("T", 0.0))
    _require(T > 0.0, "classify needs --T or run.T")
    omega = float(cfg.params.get("omega", 1.0))
    if args.gs:
        gs = _load_ground_state(cfg.spec, args.gs)
    else:
        gs = _compute_ground_state(cfg.spec, cfg.grid, omega)
    u0 = _resolve_initial(args.initial or cfg.params.get("initial"),
                          cfg.grid, lambda: gs, Path(args.config).parent)
    window = cfg.params.get("windowLen")
    verdict = dc.assess(cfg.spec, u0, gs, T, config=cfg.integrator,
                        window_len=float(window) if window else None)
    rd = RunDir(args.out)
    rd.write_config_echo(cfg.raw)
    rd.write_manifest(
        cfg.spec, cfg.grid, cfg.integrator, T, args.seed,
        parent=args.gs,
        extra={"gateThresholds": {k: verdict.evidence[k]
                                  for k in _GATE_KEYS
                                  if k in verdict.evidence}})
    rd.write_json("report.json", {"verdict": verdict.kind,
                                  "evidence": verdict.evidence})
    print(f"verdict: {verdict.kind}")
    return EXIT_BLOWUP if verdict.kind == dc.BLOW_UP_DETECTED else EXIT_OK


def cmd_sweep(args):
    cfg = load_config(args.config, force=args.force, seed=args.seed)
    if args.kappa_list:
        try:
            kappas = [float(v) for v in args.kappa_list.split(",") if v]
        except ValueError:
            raise SchemaError("--kappa-list must be comma-separated "
                              "numbers") from None
    else:
        kappas = [float(v) for v in cfg.params.get("kappas", ())]
    _require(bool(kappas), "sweep needs --kappa-list or run.kappas")
    amplitude = float(args.amplitude if args.amplitude is not None
                      else cfg.params.get("amplitude", 0.5))
    T = float(args.T if args.T is not None else cfg.params.get("T", 0.0))
    _require(T > 0.0, "sweep needs --T or run.T")
    window = cfg.params.get("windowLen")
    rows = dc.resonance_sweep(
        cfg.spec, kappas, amplitude, T, grid=cfg.grid,
        config=cfg.integrator if "dt" in cfg.raw.get("run", {}) else None,
        window_len=float(window) if window else None,
        jobs=_job_width(args.jobs))
    rd = RunDir(args.out)
    rd.write_config_echo(cfg.raw)
    rd.write_manifest(cfg.spec, cfg.grid, cfg.integrator, T, args.seed)
    header = "kappa,deficit,QE,QEstar,QK,QKstar,verdict,minMargin"
    lines = [header]
    for r in rows:
        lines.append(",".join([
            _fmt17(r.kappa), _fmt17(r.deficit), _fmt17(r.QE),
            _fmt17(r.QEstar), _fmt17(r.QK), _fmt17(r.QKstar), r.verdict,
            _fmt17(r.minMargin)]))
    (rd.path / "sweep.csv").write_text("\n".join(lines) + "\n")
    rd.write_json("report.json", [
        {"kappa": r.kappa, "verdict": r.verdict, "evidence": r.evidence}
        for r in rows])
    for r in rows:
        print(f"kappa={r.kappa:g}: {r.verdict} (deficit {r.deficit:.6g})")
    return EXIT_OK


def _identity_suite(spec, seed, eps, R):
    """Every localization identity on deterministic trial data.

    Items report (residual, tolerance, passed); grid choices are fixed
    internally because these are algebra checks, not experiments.
    """
    items = {}

    def add(name, residual, tol, ok):
        items[name] = {"residual": float(residual), "tolerance": tol,
                       "passed": bool(ok)}

    cp = mz.build_cutoffs(eps, R, 5)
    try:
        rep = mz.cutoff_property_suite(cp, seed=seed)
        gap = rep["gap_nonnegative"]["min"]
        add("cutoff_gap_nonnegative", gap, -1e-10, gap >= -1e-10)
        tr = rep["trace_identity"]["residual"]
        add("cutoff_trace_identity", tr, 1e-6, tr <= 1e-6)
        fd = rep["fd_decomposition"]["max_deviation"]
        add("cutoff_fd_decomposition", fd, 1e-5, fd <= 1e-5)
        ratio = max(v["ratio"] for v in rep["constant_stability"].values())
        add("cutoff_constant_stability", ratio, 2.0, ratio <= 2.0)
    except mz.AssertionFailure as exc:
        add(f"cutoff_{exc.item}", math.nan, None, False)

    ang = mz.angular_identity_check(samples=10000, seed=seed)
    add("angular_identity", ang, 1e-12, ang <= 1e-12)
    surplus = mz.claim1_sign_check(samples=100000, seed=seed)
    add("pair_surplus_sign", surplus, -1e-12, surplus >= -1e-12)

    g = gr.Cartesian1Grid(1024, 32.0)
    x = g.x
    rng = np.random.default_rng(seed)
    u = gr.field_from(g, [
        np.exp(-x ** 2 / 8) * np.exp(0.4j * x + 0.01j * x ** 2),
        (0.7 + 0.2 * rng.standard_normal())
        * np.exp(-(x - 2.0) ** 2 / 6) * np.exp(-0.3j * x)])
    d0 = mz.densities(spec, u)
    mscale = float(np.max(d0.Mdens))
    kscale = float(np.max(d0.Kdens))
    worst_m = worst_k = worst_t = 0.0
    for xi in rng.uniform(-2.0, 2.0, 20):
        d = mz.densities(spec, mz.gauge_transform(spec, u, xi))
        worst_m = max(worst_m,
                      float(np.max(np.abs(d.Mdens - d0.Mdens))) / mscale)
        worst_k = max(worst_k, float(np.max(np.abs(
            d.Kdens - (xi * xi * d0.Mdens + xi * d0.Tdens + d0.Kdens))))
            / kscale)
        worst_t = max(worst_t, float(np.max(np.abs(
            d.Tdens - (d0.Tdens + 2.0 * xi * d0.Mdens)))) / kscale)
    add("boost_mass_invariance", worst_m, 1e-13, worst_m <= 1e-13)
    add("boost_kinetic_shift", worst_k, 1e-10, worst_k <= 1e-10)
    add("boost_momentum_shift", worst_t, 1e-10, worst_t <= 1e-10)

    inv = mz.claim2_invariance_check(spec, u, cp, seed=seed)
    add("windowed_form_boost_invariance", inv, 1e-10, inv <= 1e-10)

    x0 = mz.xi0(spec, u, 0.0, R, cp)
    fixed = mz.densities(spec, mz.gauge_transform(spec, u, x0))
    w = cp.chi(np.abs(x) / R) ** 2
    res = abs(gr.integrate(g, w * fixed.Tdens)) \
        / max(gr.integrate(g, w * fixed.Mdens), 1e-300)
    add("boost_zeroes_windowed_momentum", res, 1e-10, res <= 1e-10)

    # windowed integration-by-parts identity on a radial trial state
    gradial = gr.RadialGrid(5, 768, 24.0)
    ur = gr.field_from(gradial, [
        np.exp(-gradial.r ** 2 / 4) * np.exp(0.2j * gradial.r ** 2 / 8),
        0.8 * np.exp(-gradial.r ** 2 / 6)])
    lhs, kwin, corr, _ = mz._windowed_integrals(spec, ur, eps, R)
    scale = max(abs(lhs), abs(kwin), abs(corr))
    mismatch = abs(lhs - kwin - corr) / scale
    add("windowed_kinetic_identity", mismatch, 1e-8, mismatch <= 1e-8)
    return items


def cmd_identities(args):
    cfg = load_config(args.config, force=args.force, seed=args.seed)
    eps = float(cfg.params.get("eps", 0.1))
    R = float(cfg.params.get("R", 8.0))
    items = _identity_suite(cfg.spec, args.seed, eps, R)
    rd = RunDir(args.out)
    rd.write_config_echo(cfg.raw)
    rd.write_manifest(cfg.spec, cfg.grid, cfg.integrator, None, args.seed,
                      extra={"eps": eps, "R": R})
    ok = all(v["passed"] for v in items.values())
    rd.write_json("report.json", {"items": items, "allPassed": ok})
    for name, v in sorted(items.items()):
        print(f"{name}: {'pass' if v['passed'] else 'FAIL'} "
              f"(residual {v['residual']:.3e})")
    return EXIT_OK if ok else EXIT_IDENTITY


def cmd_morawetz(args):
    cfg = load_config(args.config, force=args.force, seed=args.seed)
    run = _load_run_snapshots(args.run)
    eps = float(cfg.params.get("eps", 0.4))
    schedd = cfg.params.get("schedule")
    if schedd:
        sched = mz.Schedule(J=float(schedd["J"]), R0=float(schedd["R0"]),
                            T0=float(schedd["T0"]))
    else:
        sched = mz.default_schedule(eps)
    nR = int(cfg.params.get("nR", 9))
    rows = mz.morawetz_rows(cfg.spec, run, eps, sched, nR)
    average = mz.morawetz_average(cfg.spec, run, eps, sched, nR)
    rd = RunDir(args.out)
    rd.write_config_echo(cfg.raw)
    rd.write_manifest(cfg.spec, run.snapshots[0].grid, cfg.integrator,
                      sched.T0, args.seed, parent=args.run)
    header = ("t,R,windowedMass,windowedKinetic,windowedMomentum,xi0,"
              "integrand")
    lines = [header]
    for r in rows:
        lines.append(",".join(_fmt17(v) for v in (
            r.t, r.R, r.windowedMass, r.windowedKinetic, r.windowedMomentum,
            r.xi0, r.integrand)))
    (rd.path / "morawetz.csv").write_text("\n".join(lines) + "\n")
    rd.write_json("report.json", {
        "average": average, "eps": eps,
        "schedule": {"J": sched.J, "R0": sched.R0, "T0": sched.T0},
        "scheduleDeviation": mz.schedule_deviation(eps, sched),
    })
    print(f"windowed average over T0 = {sched.T0:g}: {average:.6e}")
    return EXIT_OK


def cmd_decay(args):
    cfg = load_config(args.config, force=args.force, seed=args.seed)
    _require(cfg.grid is not None, "decay needs a grid section")
    times = [float(v) for v in cfg.params.get("times", (2.0, 4.0, 8.0))]
    initial = args.initial or cfg.params.get("initial")
    if initial:
        omega = float(cfg.params.get("omega", 1.0))
        u0 = _resolve_initial(
            initial, cfg.grid,
            lambda: _compute_ground_state(cfg.spec, cfg.grid, omega),
            Path(args.config).parent)
    else:
        coords = cfg.grid.r if isinstance(cfg.grid, gr.RadialGrid) \
            else cfg.grid.x
        prof = np.exp(-coords ** 2).astype(complex)
        u0 = gr.field_from(cfg.grid, [prof.copy()
                                      for _ in range(cfg.spec.l)])
    slope = ev.dispersive_decay_check(cfg.spec, u0, times,
                                      dt=cfg.integrator.dt)
    rd = RunDir(args.out)
    rd.write_config_echo(cfg.raw)
    rd.write_manifest(cfg.spec, cfg.grid, cfg.integrator, times[-1],
                      args.seed)
    rd.write_json("report.json", {"slope": slope, "times": times})
    print(f"sup-norm decay slope: {slope:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True,
                        help="JSON config document")
    common.add_argument("--out", help="output run directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--force", action="store_true",
                        help="downgrade sampled hypothesis failures to "
                        "warnings")
    p = argparse.ArgumentParser(
        prog="qnls",
        description="coupled Schrodinger laboratory: hypothesis checks, "
        "ground states, evolution, thresholds, identity suites")
    sub = p.add_subparsers(dest="cmd", required=True)

    sub.add_parser("check", parents=[common])
    sub.add_parser("ground-state", parents=[common])
    pe = sub.add_parser("evolve", parents=[common])
    pe.add_argument("--T", type=float)
    pe.add_argument("--dt", type=float)
    pe.add_argument("--initial")
    pc = sub.add_parser("classify", parents=[common])
    pc.add_argument("--T", type=float)
    pc.add_argument("--initial",
                    help="snapshot stem or 'cW <c>' scaling directive")
    pc.add_argument("--gs", help="ground-state run directory")
    ps = sub.add_parser("sweep", parents=[common])
    ps.add_argument("--kappa-list")
    ps.add_argument("--amplitude", type=float)
    ps.add_argument("--T", type=float)
    sub.add_parser("identities", parents=[common])
    pm = sub.add_parser("morawetz", parents=[common])
    pm.add_argument("--run", required=True,
                    help="evolve run directory to average over")
    pd = sub.add_parser("decay", parents=[common])
    pd.add_argument("--initial")
    return p


_HANDLERS = {
    "check": cmd_check,
    "ground-state": cmd_ground_state,
    "evolve": cmd_evolve,
    "classify": cmd_classify,
    "sweep": cmd_sweep,
    "identities": cmd_identities,
    "morawetz": cmd_morawetz,
    "decay": cmd_decay,
}

_NEEDS_OUT = {"ground-state", "evolve", "classify", "sweep", "identities",
              "morawetz", "decay"}

_SOLVER_ERRORS = (gstate.NonConvergence, gstate.CollapseToZero,
                  gstate.NegativeDenominator, gstate.BisectionFailure)


def main(argv=None):
    args = _build_parser().parse_args(argv)
    if args.cmd in _NEEDS_OUT and not args.out:
        print("error: --out is required for this subcommand",
              file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _HANDLERS[args.cmd](args)
    except (SchemaError, HypothesisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, mz.ScheduleOverflow,
            mz.UnsupportedGeometry) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _SOLVER_ERRORS as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ev.BlowUpSuspected as exc:
        print(f"blow-up suspected: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except mz.AssertionFailure as exc:
        print(f"identity violated: {exc}", file=sys.stderr)
        return EXIT_IDENTITY


if __name__ == "__main__":
    sys.exit(main())
