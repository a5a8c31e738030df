"""Command-line front end.

Examples
--------
    delaygeom f1 --criterion sir --gamma-db 0 --tau 10
    delaygeom local-delay --criterion sir --sweep gamma-db=-10:5:0.5
    delaygeom validate f1 --criterion sir --sweep tau=0:20:1 --out report.json --format json
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from dataclasses import dataclass, field, replace

import numpy as np
import scipy

from . import __version__
from .analytic import (DelayQuery, f1_curve, f2_gilpelaez, f3_gilpelaez, local_delay,
                       packet_loss)
from .approx import beta_shape, f1_riemann, f2_beta, f2_euler, f3_beta, f3_euler
from .errors import DomainError, NumericalError
from .mcsim import (ActivityMode, FadingMode, SimConfig, estimate_f1, estimate_f2, estimate_f3,
                    estimate_local_delay, estimate_ploss, simulate, write_realizations_csv)
from .model import (DEFAULT_BANDWIDTH_HZ, DEFAULT_FC_HZ, DEFAULT_MT_RADIUS_M, DEFAULT_N0_DBM_HZ,
                    DEFAULT_POWER_DBM, DEFAULT_THETA_DB, DEFAULT_BS_TO_MT_RATIO, NetworkParams,
                    criterion_from_name, db_to_linear, dbm_to_watt, noise_power,
                    pathloss_constant)

COMMANDS = ("local-delay", "f1", "f2", "f3", "ploss", "simulate", "validate")
METRICS = ("local-delay", "f1", "f2", "f3", "ploss")
METHODS = {
    "local-delay": ("exact", "mc"),
    "f1": ("exact", "riemann", "beta", "mc"),
    "f2": ("exact", "euler", "beta", "mc"),
    "f3": ("exact", "euler", "beta", "mc"),
    "ploss": ("exact", "mc"),
}
# allowed |analytic - MC| beyond the CI half width, per analytic method
METHOD_TOL = {"exact": 1e-6, "euler": 1e-4, "riemann": 1e-4, "beta": 0.03}

# sweepable settings: CLI name -> Settings attribute
SWEEP_VARS = {
    "tau": "tau", "t": "T", "x": "x", "gamma-db": "gamma_db", "theta-db": "theta_db",
    "lambda-bs": "lambda_bs", "lambda-mt": "lambda_mt", "alpha": "alpha",
    "power-dbm": "power_dbm", "noise-dbm-hz": "noise_dbm_hz", "bandwidth-hz": "bandwidth_hz",
    "fc-hz": "fc_hz",
}
NATURAL_VAR = {"local-delay": "gamma-db", "f1": "tau", "f2": "t", "f3": "x", "ploss": "gamma-db"}


@dataclass(frozen=True)
class Settings:
    """Scalar inputs of one evaluation point, in CLI units."""

    criterion: str = "sir"
    gamma_db: float = 0.0
    theta_db: float = DEFAULT_THETA_DB
    lambda_mt: float = 1.0 / (math.pi * DEFAULT_MT_RADIUS_M ** 2)
    lambda_bs: float | None = None
    alpha: float = 4.0
    power_dbm: float = DEFAULT_POWER_DBM
    noise_dbm_hz: float = DEFAULT_N0_DBM_HZ
    bandwidth_hz: float = DEFAULT_BANDWIDTH_HZ
    fc_hz: float = DEFAULT_FC_HZ
    tau: int = 10
    T: float = 2.0
    x: float = 0.5

    def params(self):
        lam_bs = (DEFAULT_BS_TO_MT_RATIO * self.lambda_mt if self.lambda_bs is None
                  else self.lambda_bs)
        return NetworkParams(lambda_bs=lam_bs, lambda_mt=self.lambda_mt, alpha=self.alpha,
                             K=pathloss_constant(self.fc_hz), P=dbm_to_watt(self.power_dbm),
                             W=noise_power(self.noise_dbm_hz, self.bandwidth_hz))

    def coverage(self):
        return criterion_from_name(self.criterion, db_to_linear(self.gamma_db),
                                   db_to_linear(self.theta_db))

    def at(self, var, value):
        attr = SWEEP_VARS[var]
        if attr == "tau":
            value = int(round(value))
        return replace(self, **{attr: value})


@dataclass(frozen=True)
class RunSpec:
    command: str
    settings: Settings
    params: NetworkParams
    criterion: object
    method: str
    sweep_var: str
    grid: tuple
    out: str | None
    fmt: str
    sim: SimConfig
    metric: str | None = None
    tolerance: float | None = None
    riemann_n: int = 4096
    swept: bool = False


@dataclass
class ValidationRow:
    point: float
    analytic: float
    mc: float
    half_width_95: float
    difference: float
    passed: bool


@dataclass
class ValidationReport:
    metric: str
    method: str
    variable: str
    tolerance: float
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def pass_rate(self):
        return sum(r.passed for r in self.rows) / len(self.rows) if self.rows else 1.0

    @property
    def passed(self):
        return all(r.passed for r in self.rows)

    def add(self, point, analytic, est):
        diff = abs(analytic - est.value)
        ok = bool(diff <= est.half_width_95 + self.tolerance) if math.isfinite(analytic) \
            else bool(est.heavy_tail or math.isinf(est.value))
        self.rows.append(ValidationRow(point, analytic, est.value, est.half_width_95,
                                       diff, ok))


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

def parse_grid(text):
    """``VAR=a:b:step`` into ``(var, values)``; both endpoints included."""
    if "=" not in text:
        raise ValueError("expected VAR=a:b:step")
    var, rng = text.split("=", 1)
    var = var.strip().lower()
    if var not in SWEEP_VARS:
        raise ValueError(f"unknown sweep variable {var!r}")
    cast = int if var == "tau" else float
    parts = rng.split(":")
    if len(parts) == 1:
        return var, (cast(float(parts[0])),)
    if len(parts) != 3:
        raise ValueError("expected VAR=a:b:step")
    a, b, step = (float(p) for p in parts)
    if step <= 0 or b < a:
        raise ValueError("need a <= b and step > 0")
    n = int(math.floor((b - a) / step + 1e-9)) + 1
    vals = a + step * np.arange(n)
    # snap accumulated rounding so printed grids look like the request
    vals = np.round(vals, 12)
    if var == "tau" and np.any(vals != np.round(vals)):
        raise ValueError("tau grid must consist of integers")
    return var, tuple(cast(v) for v in vals)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model")
    g.add_argument("--criterion", choices=("sir", "sinr", "sir-asnr"), default="sir")
    g.add_argument("--gamma-db", type=float, default=0.0, help="SIR/SINR threshold (dB)")
    g.add_argument("--theta-db", type=float, default=DEFAULT_THETA_DB,
                   help="ASNR detection threshold (dB)")
    g.add_argument("--lambda-bs", type=float, default=None,
                   help="BS density per m^2 (default: a tenth of the MT density)")
    g.add_argument("--lambda-mt", type=float, default=1.0 / (math.pi * DEFAULT_MT_RADIUS_M ** 2))
    g.add_argument("--alpha", type=float, default=4.0)
    g.add_argument("--power-dbm", type=float, default=DEFAULT_POWER_DBM)
    g.add_argument("--noise-dbm-hz", type=float, default=DEFAULT_N0_DBM_HZ)
    g.add_argument("--bandwidth-hz", type=float, default=DEFAULT_BANDWIDTH_HZ)
    g.add_argument("--fc-hz", type=float, default=DEFAULT_FC_HZ,
                   help="carrier frequency; sets K = (4 pi fc / c)^2")
    e = common.add_argument_group("evaluation")
    e.add_argument("--tau", type=int, default=10)
    e.add_argument("--t", type=float, default=2.0, help="mean-delay threshold T of F2")
    e.add_argument("--x", type=float, default=0.5, help="probability level x of F3")
    e.add_argument("--method", default=None,
                   help="exact | euler | beta | riemann | mc (default exact)")
    e.add_argument("--riemann-n", type=int, default=4096)
    e.add_argument("--sweep", default=None, metavar="VAR=a:b:step")
    e.add_argument("--tolerance", type=float, default=None,
                   help="validate: allowance on top of the MC half width")
    s = common.add_argument_group("simulation")
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--realizations", type=int, default=5000)
    s.add_argument("--slots", type=int, default=5000)
    s.add_argument("--window-radius", type=float, default=None)
    s.add_argument("--activity", choices=[m.value for m in ActivityMode],
                   default=ActivityMode.THINNING.value)
    s.add_argument("--fading", choices=[m.value for m in FadingMode],
                   default=FadingMode.SEMI_ANALYTIC.value)
    o = common.add_argument_group("output")
    o.add_argument("--out", default=None, help="output path (default stdout)")
    o.add_argument("--format", choices=("csv", "json"), default="csv")

    parser = argparse.ArgumentParser(
        prog="delaygeom",
        description="Local delay and delay distributions of Poisson cellular networks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "validate":
            p.add_argument("metric", choices=METRICS)
    return parser


def _flag_checks(args):
    finite = math.isfinite
    return [
        ("--alpha", args.alpha > 2 and finite(args.alpha)),
        ("--lambda-mt", args.lambda_mt > 0 and finite(args.lambda_mt)),
        ("--lambda-bs", args.lambda_bs is None or (args.lambda_bs > 0 and finite(args.lambda_bs))),
        ("--bandwidth-hz", args.bandwidth_hz > 0),
        ("--fc-hz", args.fc_hz > 0),
        ("--tau", args.tau >= 0),
        ("--t", args.t >= 1),
        ("--x", 0 <= args.x <= 1),
        ("--realizations", args.realizations >= 1),
        ("--slots", args.slots >= 1),
        ("--window-radius", args.window_radius is None or args.window_radius > 0),
        ("--tolerance", args.tolerance is None or args.tolerance >= 0),
    ]


def parse_run_spec(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = Settings(
        criterion=args.criterion, gamma_db=args.gamma_db, theta_db=args.theta_db,
        lambda_mt=args.lambda_mt, lambda_bs=args.lambda_bs, alpha=args.alpha,
        power_dbm=args.power_dbm, noise_dbm_hz=args.noise_dbm_hz,
        bandwidth_hz=args.bandwidth_hz, fc_hz=args.fc_hz, tau=args.tau, T=args.t, x=args.x)
    metric = args.metric if args.command == "validate" else None
    target = metric or args.command
    method = args.method or ("mc" if args.command == "simulate" else "exact")
    if args.command == "simulate":
        if method != "mc":
            parser.error("--method: simulate only supports mc")
    else:
        allowed = METHODS[target]
        if method not in allowed:
            parser.error(f"--method: {method!r} is not available for {target} "
                         f"(choose from {', '.join(allowed)})")
        if args.command == "validate" and method == "mc":
            parser.error("--method: validate compares an analytic method against mc")
    if method == "beta" and args.criterion == "sir-asnr":
        parser.error("--method: the Beta approximation does not apply to sir-asnr")
    for flag, ok in _flag_checks(args):
        if not ok:
            parser.error(f"{flag}: value out of range")
    if args.sweep:
        try:
            var, grid = parse_grid(args.sweep)
        except ValueError as exc:
            parser.error(f"--sweep: {exc}")
        dest = var.replace("-", "_")
        for v in grid:
            for flag, ok in _flag_checks(argparse.Namespace(**{**vars(args), dest: v})):
                if not ok:
                    parser.error(f"--sweep: {var}={v} out of range for {flag}")
    else:
        var = NATURAL_VAR.get(target, "gamma-db")
        grid = (getattr(settings, SWEEP_VARS[var]),)
    try:
        params = settings.params()
        crit = settings.coverage()
        for v in grid:
            pt = settings.at(var, v)
            pt.params()
            pt.coverage()
        sim = SimConfig(n_realizations=args.realizations, n_slots=args.slots,
                        master_seed=args.seed, window_radius=args.window_radius,
                        activity_mode=args.activity, fading_mode=args.fading)
    except DomainError as exc:
        parser.error(str(exc))
    if args.riemann_n < 1:
        parser.error("--riemann-n: must be at least 1")
    return RunSpec(command=args.command, settings=settings, params=params, criterion=crit,
                   method=method, sweep_var=var, grid=grid, out=args.out, fmt=args.format,
                   sim=sim, metric=metric, tolerance=args.tolerance,
                   riemann_n=args.riemann_n, swept=bool(args.sweep))


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

def analytic_value(metric, method, s: Settings, riemann_n=4096):
    q = DelayQuery(s.params(), s.coverage())
    if metric == "local-delay":
        return local_delay(q)
    if metric == "ploss":
        return packet_loss(q)
    if metric == "f1":
        if method == "exact":
            return float(f1_curve([s.tau], q)[0])
        impl = "beta" if method == "beta" else "euler"
        return f1_riemann(s.tau, q, n=riemann_n, f3_impl=impl)
    if metric == "f2":
        if method == "exact":
            return f2_gilpelaez(s.T, q)
        if method == "euler":
            return f2_euler(s.T, q)
        return float(f2_beta(s.T, beta_shape(q)))
    if metric == "f3":
        if method == "exact":
            return f3_gilpelaez(s.x, s.tau, q)
        if method == "euler":
            return f3_euler(s.x, s.tau, q)
        return float(f3_beta(s.x, s.tau, beta_shape(q)))
    raise DomainError(f"unknown metric {metric!r}")


def mc_value(metric, s: Settings, sim: SimConfig):
    params, crit = s.params(), s.coverage()
    if metric == "local-delay":
        return estimate_local_delay(params, crit, sim)
    if metric == "ploss":
        return estimate_ploss(params, crit, sim)
    if metric == "f1":
        return estimate_f1(s.tau, params, crit, sim)
    if metric == "f2":
        return estimate_f2(s.T, params, crit, sim)
    if metric == "f3":
        return estimate_f3(s.x, s.tau, params, crit, sim)
    raise DomainError(f"unknown metric {metric!r}")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _json_num(v):
    v = float(v)
    return None if not math.isfinite(v) else v


def _metadata(spec: RunSpec):
    sim = spec.sim
    return {
        "package": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
        "seed": sim.master_seed, "realizations": sim.n_realizations, "slots": sim.n_slots,
        "window_radius_m": sim.radius(spec.params), "window_policy":
            "disc holding at least 500 BSs on average unless set explicitly",
        "censor_cap": sim.censor_cap, "activity_mode": sim.activity_mode.value,
        "fading_mode": sim.fading_mode.value,
        "theta_note": "default ASNR threshold 12.5 dB is an interpretation of the reference setup",
    }


def _spec_dict(spec: RunSpec):
    d = dataclasses.asdict(spec.settings)
    d.update(command=spec.command, method=spec.method, metric=spec.metric,
             sweep=spec.sweep_var if spec.swept else None)
    return d


def _write(spec: RunSpec, text):
    if spec.out is None:
        sys.stdout.write(text)
    else:
        with open(spec.out, "w", newline="") as fh:
            fh.write(text)


def _emit_table(spec: RunSpec, header, rows, extra_json=None):
    if spec.fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        _write(spec, buf.getvalue())
        return
    cols = {h: [r[i] for r in rows] for i, h in enumerate(header)}
    values = {h: [_json_num(v) for v in col] for h, col in cols.items() if h != spec.sweep_var}
    flags = {h: [not math.isfinite(float(v)) for v in col] for h, col in cols.items()
             if h != spec.sweep_var and any(not math.isfinite(float(v)) for v in col)}
    doc = {"spec": _spec_dict(spec),
           "grid": {"variable": spec.sweep_var, "values": list(spec.grid)},
           "values": values, "metadata": _metadata(spec)}
    if flags:
        doc["infinite"] = flags
    if extra_json:
        doc.update(extra_json)
    _write(spec, json.dumps(doc, indent=2, allow_nan=False) + "\n")


def run(spec: RunSpec):
    """Execute a parsed spec; returns the process exit status."""
    if spec.command == "simulate":
        return _run_simulate(spec)
    if spec.command == "validate":
        return _run_validate(spec)
    rows = []
    for v in spec.grid:
        s = spec.settings.at(spec.sweep_var, v)
        if spec.method == "mc":
            est = mc_value(spec.command, s, spec.sim)
            rows.append([v, est.value, est.half_width_95, est.n])
        else:
            rows.append([v, analytic_value(spec.command, spec.method, s, spec.riemann_n)])
    header = [spec.sweep_var, "value"]
    if spec.method == "mc":
        header += ["half_width_95", "n"]
    _emit_table(spec, header, rows)
    return 0


def _run_simulate(spec: RunSpec):
    samples = simulate(spec.params, spec.criterion, spec.sim)
    if spec.fmt == "csv":
        if spec.out is None:
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["index", "r0", "n_interferers", "pcov"])
            for i, (r0, n, p) in enumerate(zip(samples.r0, samples.n_interferers,
                                               samples.pcov)):
                w.writerow([i, repr(float(r0)), int(n), repr(float(p))])
            sys.stdout.write(buf.getvalue())
        else:
            write_realizations_csv(spec.out, samples)
        return 0
    doc = {"spec": _spec_dict(spec),
           "grid": {"variable": "index", "values": list(range(samples.r0.size))},
           "values": {"r0": samples.r0.tolist(), "n_interferers": samples.n_interferers.tolist(),
                      "pcov": samples.pcov.tolist()},
           "metadata": dict(_metadata(spec), resampled_empty_windows=samples.resampled)}
    _write(spec, json.dumps(doc, indent=2) + "\n")
    return 0


def _run_validate(spec: RunSpec):
    tol = spec.tolerance if spec.tolerance is not None else METHOD_TOL[spec.method]
    report = ValidationReport(spec.metric, spec.method, spec.sweep_var, tol,
                              metadata=_metadata(spec))
    for v in spec.grid:
        s = spec.settings.at(spec.sweep_var, v)
        a = analytic_value(spec.metric, spec.method, s, spec.riemann_n)
        report.add(v, a, mc_value(spec.metric, s, spec.sim))
    header = [spec.sweep_var, "analytic", "mc", "half_width_95", "difference", "pass"]
    rows = [[r.point, r.analytic, r.mc, r.half_width_95, r.difference, r.passed]
            for r in report.rows]
    if spec.fmt == "csv":
        _emit_table(spec, header, rows)
    else:
        doc = {"spec": _spec_dict(spec),
               "grid": {"variable": spec.sweep_var, "values": list(spec.grid)},
               "values": [{"analytic": _json_num(r.analytic),
                           "analytic_infinite": not math.isfinite(r.analytic),
                           "mc": _json_num(r.mc), "half_width_95": _json_num(r.half_width_95),
                           "difference": _json_num(r.difference), "pass": r.passed}
                          for r in report.rows],
               "summary": {"pass_rate": report.pass_rate, "tolerance": tol,
                           "passed": report.passed},
               "metadata": report.metadata}
        _write(spec, json.dumps(doc, indent=2) + "\n")
    print(f"validate {spec.metric}: pass rate {100 * report.pass_rate:.1f}% "
          f"({sum(r.passed for r in report.rows)}/{len(report.rows)})", file=sys.stderr)
    return 0 if report.passed else 2


def main(argv=None):
    spec = parse_run_spec(sys.argv[1:] if argv is None else argv)
    try:
        return run(spec)
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 1
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
