"""Command-line entry point: ``ksobs <command> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
Options may also come from ``--config FILE`` (flat ``key = value`` lines,
keys named like the long options); flags on the command line win.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .adjoint import decode_matrix, derivatives, encode_array
from .chaos import attractor_samples, lyapunov_spectrum, random_initial_state, stats_from_samples
from .errors import BlowUpError, GuardError
from .harness import (
    CampaignFilter,
    CaseSet,
    SensorLayout,
    case_observations,
    curvature_statistics,
    estimate_epsilon_star,
    generate_case_set,
    metric_cs,
    metric_e_u,
    normalized_measurement_count,
    optimize,
    read_results,
    run_campaign,
    summarize,
    trial_id,
    TrialResult,
    write_results,
)
from .optim import NcnConfig
from .presets import PRESETS, DomainPreset, custom_preset, get_preset
from .solver import integrate, read_trajectory, write_trajectory

OPTIMIZERS = ("gd", "newton-mod", "bfgs", "ncn")
PRESET_CHOICES = ("L22", "L44", "L66", "custom", "linear-test")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# -- run configuration --------------------------------------------------------

@dataclass
class RunConfig:
    """Canonical view of a command's options; ``to_text`` re-parses to the same object."""

    command: str
    preset: str
    seed: int
    out: str
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        flat = {"command": self.command, "preset": self.preset, "seed": self.seed, "out": self.out, **self.options}
        return "".join(f"{k} = {json.dumps(flat[k])}\n" for k in sorted(flat))

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        flat = parse_config_text(text)
        opts = {k: v for k, v in flat.items() if k not in ("command", "preset", "seed", "out")}
        return cls(flat["command"], flat["preset"], int(flat["seed"]), flat["out"], opts)


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise UsageError(f"config line {lineno}: empty key")
        out[key.replace("-", "_")] = _config_value(value)
    return out


def _config_value(text: str):
    # JSON first so quoted strings may contain '#'; otherwise drop a trailing comment
    for candidate in (text, text.split("#", 1)[0].strip()):
        try:
            return json.loads(candidate)
        except json.JSONDecodeError:
            pass
    return text.split("#", 1)[0].strip()


# -- helpers ------------------------------------------------------------------

def _domain(args) -> DomainPreset:
    if args.preset in ("custom",):
        missing = [k for k in ("L", "n", "dt", "p") if getattr(args, k) is None]
        if missing:
            raise UsageError(f"--preset custom needs {', '.join('--' + m for m in missing)}")
        try:
            return custom_preset(args.L, args.n, args.dt, args.p)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if args.preset == "linear-test":
        return get_preset("L22")
    return get_preset(args.preset)


def _outdir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def _run_config(args) -> RunConfig:
    skip = {"command", "preset", "seed", "out", "config", "func"}
    opts = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    return RunConfig(args.command, args.preset, args.seed, str(args.out), opts)


def _sidecar(path: Path, args, extra=None) -> None:
    meta = {"version": __version__, "config": _run_config(args).to_dict()}
    if extra:
        meta.update(extra)
    path.with_name(path.name + ".json").write_text(json.dumps(meta, indent=1, sort_keys=True))


def _finite(obj):
    """NaN and inf become null so the output stays strict JSON."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    return obj


def _write_json(path: Path, payload, args) -> None:
    payload = dict(payload)
    payload["config"] = _run_config(args).to_dict()
    path.write_text(json.dumps(_finite(payload), indent=1, sort_keys=True, default=_json_default))


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _parse_list(text, kind=int):
    if text is None or text == "":
        return []
    if isinstance(text, (list, tuple)):
        return [kind(v) for v in text]
    try:
        return [kind(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse list {text!r}") from None


# -- commands -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    domain = _domain(args)
    cfg = domain.config
    steps = args.steps if args.steps is not None else int(round(args.time / cfg.dt))
    if steps < 0:
        raise UsageError("steps must be non-negative")
    if args.u0 == "zero" or args.preset == "linear-test":
        u0 = np.zeros(cfg.grid.n)
    elif args.u0 == "random":
        u0 = integrate(random_initial_state(cfg, args.seed), int(round(args.burn_in / cfg.dt)), cfg, store=False)
    else:
        path = Path(args.u0)
        if not path.exists():
            raise UsageError(f"initial-state file {path} not found")
        states, _, _ = read_trajectory(path)
        if states.shape[1] != cfg.grid.n:
            raise UsageError(f"initial state has {states.shape[1]} nodes, preset needs {cfg.grid.n}")
        u0 = states[-1]
    out = _outdir(args)
    states = integrate(u0, steps, cfg)
    path = out / "trajectory.kstraj"
    write_trajectory(path, states, cfg.grid.L, cfg.dt)
    _sidecar(path, args, {"L": cfg.grid.L, "n": cfg.grid.n, "dt": cfg.dt, "steps": steps})
    print(f"wrote {path} ({steps + 1} states)")
    return 0


def cmd_lyapunov(args) -> int:
    domain = _domain(args)
    cfg = domain.config
    out = _outdir(args)
    if args.preset == "linear-test":
        spec = lyapunov_spectrum(cfg, args.num_exponents, args.horizon, args.reorth_interval,
                                 u0=np.zeros(cfg.grid.n), burn_in=0.0, transient=0.0)
    else:
        spec = lyapunov_spectrum(cfg, args.num_exponents, args.horizon, args.reorth_interval, seed=args.seed)
    record = spec.to_record(cfg)
    _write_json(out / "lyapunov.json", record, args)
    print(f"l1 = {spec.exponents[0]:.5f}  d_ky = {spec.d_ky:.4f}  t_lyap = {spec.t_lyap:.3f}")
    return 0


def cmd_attractor(args) -> int:
    cfg = _domain(args).config
    out = _outdir(args)
    samples = attractor_samples(cfg, args.total_time, args.burn_in, args.interval, seed=args.seed)
    stats = stats_from_samples(samples, cfg.grid, args.burn_in)
    _write_json(out / "attractor.json", {
        "L": cfg.grid.L, "radius": stats.radius, "sample_count": stats.sample_count,
        "burn_in": stats.burn_in, "center": stats.center.values,
    }, args)
    print(f"R_A = {stats.radius:.5f} from {stats.sample_count} samples")
    return 0


def cmd_gen_cases(args) -> int:
    if args.preset not in PRESETS:
        raise UsageError("gen-cases needs one of the named presets L22, L44, L66")
    out = _outdir(args)
    cases = generate_case_set(args.preset, args.seed, args.refs, args.guesses, args.total_time, args.burn_in)
    traj, js = cases.save(out / f"cases_{args.preset}")
    _sidecar(traj, args)
    print(f"wrote {js} ({args.refs} references x {args.guesses} guesses, R_A = {cases.radius:.4f})")
    return 0


def _load_cases(path) -> CaseSet:
    p = Path(path)
    js = p if p.suffix == ".json" else p.with_suffix(".json")
    if not js.exists():
        raise UsageError(f"case file {js} not found")
    return CaseSet.load(js)


def cmd_reconstruct(args) -> int:
    cases = _load_cases(args.cases)
    cfg = cases.config
    K = cases.domain.horizon_steps
    try:
        layout = SensorLayout(args.mx, args.mt, K, cfg.grid)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not 0 <= args.ref < cases.reference_indices.size:
        raise UsageError(f"--ref must lie in [0, {cases.reference_indices.size})")
    truth, obs = case_observations(cases, args.ref, layout)
    if args.truth_as_guess:
        guess = truth.states[0]
        dist = 0.0
    else:
        if not 0 <= args.guess < cases.guess_indices.shape[1]:
            raise UsageError(f"--guess must lie in [0, {cases.guess_indices.shape[1]})")
        guess = cases.guess_state(args.ref, args.guess)
        dist = float(cases.distances[args.ref, args.guess] / cases.radius)
    out = _outdir(args)
    ncn = NcnConfig()
    if args.iters is not None:
        if args.iters < 1:
            raise UsageError("--iters must be positive")
        sched = tuple(i for i in ncn.pp_schedule if i < args.iters)
        ncn = NcnConfig(max_iters=args.iters, pp_schedule=sched)
    res = optimize(args.optimizer, encode_array(guess, cfg.modes_control), obs, cfg, args.pp, ncn,
                   iters=args.iters)
    u_est = decode_matrix(cfg) @ res.theta
    est = integrate(u_est, K, cfg)
    e_u = metric_e_u(truth.states[0], u_est, cases.radius)
    cs_full = metric_cs(truth.states, est)
    cs_tail = metric_cs(truth.states, est, 0.75)
    _, g, H, _, _, _ = derivatives(res.theta, obs, cfg)
    tid = trial_id(cfg.grid.L, args.mx, args.mt, args.pp, args.ref, max(args.guess, 0), args.optimizer)
    if args.truth_as_guess:
        tid = tid.rsplit("-g", 1)[0] + "-gtruth"
    row = TrialResult(tid, cfg.grid.L, args.ref, -1 if args.truth_as_guess else args.guess, args.mx, args.mt,
                      args.optimizer, args.pp, dist, res.loss, e_u, cs_full, cs_tail,
                      float(np.linalg.norm(g)), float(np.linalg.eigvalsh(0.5 * (H + H.T))[0]),
                      len(res.trace), res.trace.count("kappa"), res.trace.count("pp"), res.aborted, res.message)
    write_results(out / "result.csv", [row])
    res.trace.write_csv(out / "trace.csv")
    _sidecar(out / "result.csv", args, {"seed": cases.seed})
    print(f"final loss = {res.loss:.6e}")
    print(f"e_u = {e_u:.6f}")
    print(f"CS_U = {cs_full:.6f}")
    if res.aborted:
        print(f"aborted: {res.message}", file=sys.stderr)
        return 2
    return 0


def _figure_data(results, domain, out: Path) -> None:
    summary = summarize(results, domain)
    cells = summary["cells"].values()
    with open(out / "fig_probability_grid.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["L", "d_M", "m_x", "m_t", "m", "pp", "p_success_given_low_loss", "p_low_loss", "p_success"])
        for c in cells:
            w.writerow([c["L"], c.get("d_M"), c["m_x"], c["m_t"], c["m"], c["pp"],
                        c["p_success_given_low_loss"], c["p_low_loss"], c["p_success"]])
    with open(out / "fig_epsilon_star.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["L", "m", "m_tilde", "epsilon_star"])
        for c in cells:
            w.writerow([c["L"], c["m"], c.get("m_tilde"), c["epsilon_star"]])
    with open(out / "fig_embedding_offset.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["L", "m_minus_embedding", "d_lo", "d_hi", "p_success", "p_low_loss"])
        for c in cells:
            off = c["m"] - (2 * c["d_M"] + 1) if c.get("d_M") else None
            for b in c["d_bands"]:
                w.writerow([c["L"], off, b["d_lo"], b["d_hi"], b["p_success"], b["p_low_loss"]])
    with open(out / "fig_curvature.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["loss_lo", "loss_hi", "count", "p_negative"])
        for b in curvature_statistics(results):
            w.writerow([b["loss_lo"], b["loss_hi"], b["count"], "empty" if b["empty"] else b["p_negative"]])
    with open(out / "fig_gradient_vs_loss.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial_id", "m", "final_loss", "grad_norm"])
        for r in results:
            w.writerow([r.trial_id, r.m, r.final_loss, r.grad_norm])
    (out / "summary.json").write_text(json.dumps(_finite(summary), indent=1, default=_json_default))


def cmd_campaign(args) -> int:
    mx, mt = _parse_list(args.mx), _parse_list(args.mt)
    band = _parse_list(args.d_band, float) or [0.0, 1.0]
    if len(band) != 2 or band[0] > band[1]:
        raise UsageError("--d-band takes lo,hi")
    cases = _load_cases(args.cases)
    out = _outdir(args)
    layouts = [(a, b) for a in mx for b in mt]
    journal = out / "trials.jsonl"
    if not args.resume and journal.exists():
        journal.unlink()
    filt = CampaignFilter(args.refs, args.guesses, tuple(band), (args.pp,), args.optimizer)
    stem = Path(args.cases)
    stem = stem if stem.suffix == ".json" else stem.with_suffix(".json")
    results = run_campaign(cases, layouts, filt=filt, out_dir=out, jobs=args.jobs, case_stem=stem)
    _figure_data(results, cases.domain, out)
    _sidecar(out / "results.csv", args, {"case_seed": cases.seed})
    print(f"{len(results)} trials -> {out / 'results.csv'}")
    return 0


def cmd_epsilon_star(args) -> int:
    path = Path(args.results)
    if not path.exists():
        raise UsageError(f"results file {path} not found")
    results = read_results(path)
    out = _outdir(args)
    try:
        est = estimate_epsilon_star(results, args.tau, args.delta)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    payload = {"tau": est.tau, "delta": est.delta, "epsilon_star": est.epsilon_star,
               "search_range": list(est.search_range), "trial_count": est.trial_count}
    if args.d_m:
        ms = sorted({r.m for r in results})
        payload["m_tilde"] = {str(m): normalized_measurement_count(m, args.d_m) for m in ms}
    _write_json(out / "epsilon_star.json", payload, args)
    print(f"epsilon* = {est.epsilon_star}")
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--preset", default="L22", metavar="{L22,L44,L66,custom}")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=".")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    common.add_argument("--config", default=None, help="flat key = value file; flags win")
    common.add_argument("--L", type=float, default=None, help="custom preset: domain length")
    common.add_argument("--n", type=int, default=None, help="custom preset: grid size")
    common.add_argument("--dt", type=float, default=None, help="custom preset: time step")
    common.add_argument("--p", type=int, default=None, help="custom preset: control modes")

    parser = _Parser(prog="ksobs", description="KS trajectory reconstruction from sparse measurements")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="integrate and write a KSTRAJ01 file")
    p.add_argument("--u0", default="random", help="zero | random | path to a KSTRAJ01 file (last state)")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--time", type=float, default=100.0)
    p.add_argument("--burn-in", type=float, default=1000.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("lyapunov", parents=[common], help="Benettin QR Lyapunov spectrum")
    p.add_argument("--num-exponents", type=int, default=12)
    p.add_argument("--horizon", type=float, default=1e5)
    p.add_argument("--reorth-interval", type=float, default=2.0)
    p.set_defaults(func=cmd_lyapunov)

    p = sub.add_parser("attractor", parents=[common], help="attractor center and radius")
    p.add_argument("--total-time", type=float, default=10000.0)
    p.add_argument("--burn-in", type=float, default=1000.0)
    p.add_argument("--interval", type=float, default=1.0)
    p.set_defaults(func=cmd_attractor)

    p = sub.add_parser("gen-cases", parents=[common], help="reference states and initial guesses")
    p.add_argument("--refs", type=int, default=20)
    p.add_argument("--guesses", type=int, default=400)
    p.add_argument("--total-time", type=float, default=10000.0)
    p.add_argument("--burn-in", type=float, default=1000.0)
    p.set_defaults(func=cmd_gen_cases)

    p = sub.add_parser("reconstruct", parents=[common], help="one reconstruction with trace")
    p.add_argument("--cases", required=True)
    p.add_argument("--ref", type=int, default=0)
    p.add_argument("--guess", type=int, default=0)
    p.add_argument("--truth-as-guess", action="store_true")
    p.add_argument("--mx", type=int, default=4)
    p.add_argument("--mt", type=int, default=4)
    p.add_argument("--optimizer", choices=OPTIMIZERS, default="ncn")
    p.add_argument("--pp", dest="pp", action="store_true", default=True)
    p.add_argument("--no-pp", dest="pp", action="store_false")
    p.add_argument("--iters", type=int, default=None)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("campaign", parents=[common], help="ensemble of reconstructions with summaries")
    p.add_argument("--cases", required=True)
    p.add_argument("--mx", default="", help="comma-separated m_x values")
    p.add_argument("--mt", default="", help="comma-separated m_t values")
    p.add_argument("--d-band", default="0,1")
    p.add_argument("--refs", type=int, default=5)
    p.add_argument("--guesses", type=int, default=40)
    p.add_argument("--optimizer", choices=OPTIMIZERS, default="ncn")
    p.add_argument("--pp", dest="pp", action="store_true", default=True)
    p.add_argument("--no-pp", dest="pp", action="store_false")
    p.add_argument("--resume", dest="resume", action="store_true", default=True)
    p.add_argument("--fresh", dest="resume", action="store_false")
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("epsilon-star", parents=[common], help="epsilon* from a results CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--tau", type=float, default=0.95)
    p.add_argument("--delta", type=float, default=0.001)
    p.add_argument("--d-m", type=int, default=None)
    p.set_defaults(func=cmd_epsilon_star)
    return parser


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(parser.format_usage() + "ksobs: error: a command is required")
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file {path} not found")
        values = parse_config_text(path.read_text())
        known = set(vars(args))
        unknown = sorted(set(values) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**values)
        args = parser.parse_args(argv)
    if args.preset not in PRESET_CHOICES:
        raise UsageError(f"unknown preset {args.preset!r}; choose from L22, L44, L66, custom")
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _parse(argv)
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (GuardError, KeyError) as exc:
        print(f"ksobs: configuration error: {exc}", file=sys.stderr)
        return 1
    except BlowUpError as exc:
        print(f"ksobs: numerical failure: blow-up at step {exc.step}: {exc}", file=sys.stderr)
        return 2
    except FloatingPointError as exc:
        print(f"ksobs: numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
