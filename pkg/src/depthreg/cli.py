"""Command-line front end: fitting, contour export, simulation
reproduction, and rate experiments.

Exit codes: 0 success, 2 configuration error, 3 computation error,
4 I/O error.  Failures are reported as single-line JSON on stderr with
fields {code, module, message, context}.
"""

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__, contours, estimators, geometry, kernels, qr_solver, simlab
from .errors import ConfigError, DepthregError

EXIT_CONFIG = 2
EXIT_COMPUTE = 3
EXIT_IO = 4


@dataclass
class RunConfig:
    command: str
    argv: list
    model: str = None
    n: int = None
    seed: int = 0
    csv: str = None
    covariate: str = None
    responses: list = None
    taus: list = field(default_factory=list)
    w0s: list = None
    w0_quantiles: list = None
    method: str = "bilinear"
    kernel: str = "gaussian"
    bandwidth: float = None
    bandwidth_rule: str = None
    tau_adjust: bool = False
    directions: int = 360
    bound: float = geometry.DEFAULT_BOUND
    repair_nesting: bool = True
    ns: list = None
    reps: int = None
    out: str = "."
    threads: int = 1
    dump_lp: str = None

    def to_dict(self):
        d = dict(self.__dict__)
        d["argv"] = list(self.argv)
        return d


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}")


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _onoff(text):
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def build_parser():
    parser = argparse.ArgumentParser(
        prog="depthreg",
        description="Local constant and local bilinear multiple-output "
        "quantile/depth regression contours",
    )
    parser.add_argument("--version", action="version", version=f"depthreg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_source(p, need_model_only=False):
        p.add_argument("--model", choices=simlab.MODELS)
        p.add_argument("--n", type=int, default=999)
        p.add_argument("--seed", type=int, default=0)
        if not need_model_only:
            p.add_argument("--csv")
            p.add_argument("--covariate")
            p.add_argument("--responses")

    def add_fit_opts(p):
        p.add_argument("--tau", type=_floats, required=True)
        p.add_argument("--w0", type=_floats)
        p.add_argument("--w0-quantiles", type=_floats, dest="w0_quantiles")
        p.add_argument("--method", choices=("constant", "bilinear", "global"), default="bilinear")
        p.add_argument("--kernel", choices=kernels.FAMILIES, default="gaussian")
        p.add_argument("--bandwidth", type=float)
        p.add_argument("--bandwidth-rule", dest="bandwidth_rule")
        p.add_argument("--tau-adjust", type=_onoff, dest="tau_adjust", default=False)
        p.add_argument("--directions", type=int, default=360)
        p.add_argument("--bound", type=float, default=geometry.DEFAULT_BOUND)
        p.add_argument("--dump-lp", dest="dump_lp")

    def add_common(p):
        p.add_argument("--out", default=".")
        p.add_argument("--threads", type=int, default=None)

    p_cut = sub.add_parser("cut", help="conditional quantile/depth cut contours")
    add_source(p_cut)
    add_fit_opts(p_cut)
    add_common(p_cut)

    p_family = sub.add_parser("family", help="nested contour family per w0")
    add_source(p_family)
    add_fit_opts(p_family)
    p_family.add_argument("--repair-nesting", type=_onoff, dest="repair_nesting", default=True)
    add_common(p_family)

    p_fit = sub.add_parser("fit", help="global directional hyperplane fits")
    add_source(p_fit)
    add_fit_opts(p_fit)
    add_common(p_fit)

    p_sim = sub.add_parser("simulate", help="write a simulated dataset as CSV")
    add_source(p_sim, need_model_only=True)
    add_common(p_sim)

    p_rate = sub.add_parser("rate", help="Monte Carlo convergence-rate experiment")
    add_source(p_rate, need_model_only=True)
    p_rate.add_argument("--ns", type=_ints, required=True)
    p_rate.add_argument("--reps", type=int, default=20)
    p_rate.add_argument("--tau", type=_floats, required=True)
    p_rate.add_argument("--w0", type=_floats, required=True)
    p_rate.add_argument("--method", choices=("constant", "bilinear"), default="bilinear")
    p_rate.add_argument("--bandwidth", type=float, required=True)
    p_rate.add_argument("--bandwidth-ref-n", type=int, default=None,
                        help="scale the bandwidth as h (n/ref_n)^{-1/5}")
    p_rate.add_argument("--directions", type=int, default=360)
    add_common(p_rate)

    p_info = sub.add_parser("ingest-info", help="inspect a CSV dataset")
    p_info.add_argument("--csv", required=True)
    p_info.add_argument("--covariate", required=True)
    p_info.add_argument("--responses", required=True)
    add_common(p_info)
    return parser


def _resolve_threads(value):
    if value is not None:
        return max(1, value)
    env = os.environ.get("DEPTHREG_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("DEPTHREG_THREADS must be an integer", value=env) from None
    return 1


def make_config(args, argv):
    cfg = RunConfig(command=args.command, argv=list(argv))
    for name in vars(args):
        if hasattr(cfg, name) and getattr(args, name) is not None:
            setattr(cfg, name, getattr(args, name))
    if hasattr(args, "tau") and args.tau is not None:
        cfg.taus = args.tau
    if hasattr(args, "w0") and args.w0 is not None:
        cfg.w0s = args.w0
    cfg.threads = _resolve_threads(getattr(args, "threads", None))
    _validate_config(cfg)
    return cfg


def _validate_config(cfg):
    if cfg.command in ("cut", "family", "fit"):
        if (cfg.model is None) == (cfg.csv is None):
            raise ConfigError("provide exactly one of --model or --csv")
        if cfg.csv is not None and (cfg.covariate is None or cfg.responses is None):
            raise ConfigError("--csv requires --covariate and --responses")
        if any(not 0.0 < t < 1.0 for t in cfg.taus):
            raise ConfigError("tau values must lie strictly in (0, 1)", taus=str(cfg.taus))
        if cfg.command != "fit" and cfg.w0s is None and cfg.w0_quantiles is None:
            raise ConfigError("provide --w0 or --w0-quantiles")
        if cfg.method != "global" and cfg.bandwidth is None and cfg.bandwidth_rule is None:
            raise ConfigError("local methods need --bandwidth or --bandwidth-rule")
    if cfg.command == "rate" and cfg.model is None:
        raise ConfigError("rate experiments require --model")
    if cfg.command == "simulate" and cfg.model is None:
        raise ConfigError("simulate requires --model")
    if isinstance(cfg.responses, str):
        cfg.responses = [c.strip() for c in cfg.responses.split(",")]


def _load_dataset(cfg):
    if cfg.model is not None:
        spec = simlab.ModelSpec(name=cfg.model, n=cfg.n, seed=cfg.seed)
        return simlab.generate(spec)
    return simlab.ingest_csv(cfg.csv, cfg.covariate, cfg.responses)


def _bandwidth_plan(cfg, data):
    if cfg.method == "global":
        return None
    if cfg.bandwidth is not None:
        return kernels.BandwidthPlan(
            base_h=cfg.bandwidth, rule="manual", tau_adjust=cfg.tau_adjust
        )
    rule = cfg.bandwidth_rule
    if rule == "thumb":
        return kernels.plan_from_rule_of_thumb(data.covariates[:, 0], tau_adjust=cfg.tau_adjust)
    if rule and rule.startswith("fz:"):
        try:
            base = float(rule[3:])
        except ValueError:
            raise ConfigError(f"bad bandwidth rule {rule!r}") from None
        return kernels.BandwidthPlan(
            base_h=base, rule="fan_zhang_supplied", tau_adjust=cfg.tau_adjust
        )
    raise ConfigError(f"unknown bandwidth rule {rule!r}")


def _w0_list(cfg, data):
    if cfg.w0s is not None:
        return [float(v) for v in cfg.w0s]
    qs = cfg.w0_quantiles
    if any(not 0.0 < q < 1.0 for q in qs):
        raise ConfigError("w0 quantiles must lie strictly in (0, 1)")
    return [float(np.quantile(data.covariates[:, 0], q)) for q in qs]


def _tag(value):
    return f"{value:.4f}"


def _write_manifest(cfg, out_dir, started):
    manifest = {
        "command": cfg.command,
        "config": cfg.to_dict(),
        "version": __version__,
        "wall_time_s": time.time() - started,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _run_cut_like(cfg, repair):
    started = time.time()
    data = _load_dataset(cfg)
    plan = _bandwidth_plan(cfg, data)
    kern = kernels.kernel_spec(cfg.kernel, data.p - 1) if cfg.method != "global" else None
    grid = geometry.direction_grid(2, cfg.directions)
    w0s = _w0_list(cfg, data)
    os.makedirs(cfg.out, exist_ok=True)
    if cfg.dump_lp:
        qr_solver.request_dump(cfg.dump_lp)
    rings = []
    for w0 in w0s:
        workers = 1 if cfg.dump_lp else cfg.threads
        if cfg.command == "family" or repair:
            family = contours.build_family(
                data, cfg.taus, w0, grid, kern, plan,
                method=cfg.method, repair_nesting=repair,
                bound=cfg.bound, workers=workers,
            )
            cuts = family.contours
        else:
            cuts = [
                contours.build_cut(
                    data, tau, w0, grid, kernel=kern,
                    h=plan.bandwidth_for(tau) if plan else None,
                    method=cfg.method, bound=cfg.bound, workers=workers,
                )
                for tau in cfg.taus
            ]
        for cut in cuts:
            stem = f"{cfg.command}_{_tag(cut.tau)}_{_tag(w0)}"
            contours.write_contour_csv(cut, os.path.join(cfg.out, stem + ".csv"))
            with open(os.path.join(cfg.out, stem + ".json"), "w") as fh:
                json.dump(contours.contour_to_json(cut), fh, indent=2)
            rings.append((w0, cut.tau, cut.polygon))
    contours.write_svg(
        os.path.join(cfg.out, f"{cfg.command}_overview.svg"), data.responses, rings
    )
    _write_manifest(cfg, cfg.out, started)
    return 0


def _run_fit(cfg):
    started = time.time()
    data = _load_dataset(cfg)
    grid = geometry.direction_grid(2, cfg.directions)
    os.makedirs(cfg.out, exist_ok=True)
    if cfg.dump_lp:
        qr_solver.request_dump(cfg.dump_lp)
    weights = np.ones(data.n)
    for tau in cfg.taus:
        records = [
            estimators.fit_record(estimators.fit_global(data, tau, frame, weights), "global")
            for frame in grid
        ]
        with open(os.path.join(cfg.out, f"fit_{_tag(tau)}.json"), "w") as fh:
            json.dump(records, fh, indent=2)
    _write_manifest(cfg, cfg.out, started)
    return 0


def _run_simulate(cfg):
    started = time.time()
    spec = simlab.ModelSpec(name=cfg.model, n=cfg.n, seed=cfg.seed)
    data = simlab.generate(spec)
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, f"simulate_{cfg.model}.csv")
    with open(path, "w") as fh:
        fh.write("w,y1,y2\n")
        for w, (y1, y2) in zip(data.covariates[:, 0], data.responses):
            fh.write(f"{w:.17g},{y1:.17g},{y2:.17g}\n")
    _write_manifest(cfg, cfg.out, started)
    return 0


def _run_rate(cfg):
    started = time.time()
    spec = simlab.ModelSpec(name=cfg.model, n=max(cfg.ns), seed=cfg.seed)
    ref_n = cfg.__dict__.get("bandwidth_ref_n") or None
    base = cfg.bandwidth
    if ref_n:
        bandwidth_for = lambda n: base * (n / ref_n) ** (-0.2)
    else:
        bandwidth_for = lambda n: base
    method = contours.resolve_method(cfg.method)
    records, medians = simlab.rate_experiment(
        spec, cfg.w0s[0], cfg.taus[0], method, cfg.ns, cfg.reps, bandwidth_for,
        num_directions=cfg.directions, workers=cfg.threads,
    )
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "rate_records.csv"), "w") as fh:
        fh.write("n,rep,error\n")
        for n, rep, err in records:
            fh.write(f"{n},{rep},{err:.12g}\n")
    with open(os.path.join(cfg.out, "rate_summary.json"), "w") as fh:
        json.dump(
            {"ns": cfg.ns, "medians": [[n, m] for n, m in medians]}, fh, indent=2
        )
    _write_manifest(cfg, cfg.out, started)
    return 0


def _run_ingest_info(cfg):
    import warnings as _warnings

    with _warnings.catch_warnings(record=True) as caught:
        _warnings.simplefilter("always")
        data = simlab.ingest_csv(cfg.csv, cfg.covariate, cfg.responses)
    info = {
        "n": data.n,
        "dropped_rows": getattr(data, "dropped_rows", 0),
        "covariate": cfg.covariate,
        "responses": cfg.responses,
        "warnings": [str(w.message) for w in caught],
    }
    print(json.dumps(info, indent=2))
    return 0


def run(cfg):
    if cfg.command == "cut":
        return _run_cut_like(cfg, repair=False)
    if cfg.command == "family":
        return _run_cut_like(cfg, repair=cfg.repair_nesting)
    if cfg.command == "fit":
        return _run_fit(cfg)
    if cfg.command == "simulate":
        return _run_simulate(cfg)
    if cfg.command == "rate":
        return _run_rate(cfg)
    if cfg.command == "ingest-info":
        return _run_ingest_info(cfg)
    raise ConfigError(f"unknown command {cfg.command!r}")


def _emit_error(exc, code):
    if isinstance(exc, DepthregError):
        payload = exc.to_json_dict(code)
    else:
        payload = {"code": code, "module": "cli", "message": str(exc), "context": {}}
    sys.stderr.write(json.dumps(payload) + "\n")
    return code


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = make_config(args, argv)
    except ConfigError as exc:
        return _emit_error(exc, EXIT_CONFIG)
    try:
        return run(cfg)
    except ConfigError as exc:
        return _emit_error(exc, EXIT_CONFIG)
    except DepthregError as exc:
        return _emit_error(exc, EXIT_COMPUTE)
    except OSError as exc:
        return _emit_error(exc, EXIT_IO)


if __name__ == "__main__":
    sys.exit(main())
