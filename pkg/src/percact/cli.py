"""Command-line experiment runner.

Verbs: ``run`` (one configuration), ``grid`` (learning-rate grid) and
``reproduce`` (the predator-prey comparison plus the three mug regimes).

Every run writes into its own output directory:

    config.txt            key=value echo of the resolved configuration
    trace.csv             gradient trace (iteration,J,EU,I_omega_x_bits,I_x_a_bits)
    behavior.csv          trained p(a|w)
    analytic_trace.csv    analytic sweeps (sweep,J,I_omega_x,I_x_a,max_change)
    analytic_behavior.csv analytic p(a|w)
    grid.csv              ranked grid cells (grid mode)
    summary.txt           key=value results

Exit codes: 0 ok, 2 configuration error, 3 solver non-convergence,
4 numerical failure.
"""

import argparse
import csv
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import analytic, env, trainer
from .infotheory import to_unit

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_NUMERIC = 0, 2, 3, 4

MODES = ("analytic", "gradient", "compare", "grid")
UNITS = ("bits", "nats")
# (n_hidden, n_percepts) used when the config leaves them unset
NETWORK_DEFAULTS = {"predator_prey": (20, 13), "mug": (4, 4)}

REFERENCE_RUNS = (
    ("predator_prey", "predator_prey", 8.0, 10.0, 0.006, 0.014),
    ("mug_high", "mug", 2.0, 3.0, 0.035, 0.7),
    ("mug_low_action", "mug", 2.0, 0.5, 0.001, 0.34),
    ("mug_low_both", "mug", 0.5, 0.5, 0.004, 0.028),
)


class ConfigError(ValueError):
    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _fmt_list(values):
    return ",".join(repr(float(v)) for v in values)


@dataclass
class RunSpec:
    task: str = "predator_prey"
    mode: str = "compare"
    beta1: float = 8.0
    beta2: float = 10.0
    alpha_vw: float = 0.006
    alpha_eta: float = 0.014
    iters: int = 100_000
    seed: int = 0
    out: str = "runs/default"
    noise: float = 0.0
    unit: str = "bits"
    n_hidden: int = 0  # 0 = task default
    n_percepts: int = 0
    stride: int = 500
    restarts: int = 5
    max_sweeps: int = 10_000
    alpha_vw_grid: list = field(default_factory=list)
    alpha_eta_grid: list = field(default_factory=list)
    jobs: int = 1

    def validate(self):
        if not (self.task in ("predator_prey", "mug") or self.task.startswith("file:")):
            raise ConfigError("task", f"unknown task {self.task!r} (predator_prey | mug | file:<path>)")
        if self.task.startswith("file:") and not Path(self.task[5:]).is_dir():
            raise ConfigError("task", f"no task directory at {self.task[5:]!r}")
        if self.mode not in MODES:
            raise ConfigError("mode", f"unknown mode {self.mode!r} ({' | '.join(MODES)})")
        if self.unit not in UNITS:
            raise ConfigError("unit", f"unknown unit {self.unit!r} (bits | nats)")
        for name in ("beta1", "beta2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ConfigError(name, "must be a positive finite number")
        for name in ("alpha_vw", "alpha_eta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ConfigError(name, "must be a nonnegative finite number")
        if self.iters < 0:
            raise ConfigError("iters", "must be nonnegative")
        if not 0.0 <= self.noise <= 1.0:
            raise ConfigError("noise", "flip probability must lie in [0, 1]")
        if self.noise > 0 and self.task == "predator_prey":
            raise ConfigError("noise", "the predator-prey encoder has no noise model")
        if self.n_hidden < 0 or self.n_percepts < 0:
            raise ConfigError("n_hidden" if self.n_hidden < 0 else "n_percepts", "must be nonnegative")
        if self.stride < 1:
            raise ConfigError("stride", "must be at least 1")
        if self.restarts < 1:
            raise ConfigError("restarts", "must be at least 1")
        if self.max_sweeps < 1:
            raise ConfigError("max_sweeps", "must be at least 1")
        if self.jobs == 0:
            raise ConfigError("jobs", "must be nonzero")
        if self.mode == "grid":
            if not self.alpha_vw_grid:
                raise ConfigError("alpha_vw_grid", "grid mode needs at least one value")
            if not self.alpha_eta_grid:
                raise ConfigError("alpha_eta_grid", "grid mode needs at least one value")
        return self

    def resolved(self):
        """Copy with task-dependent network sizes filled in."""
        hidden, percepts = NETWORK_DEFAULTS.get(self.task, (20, 0))
        spec = RunSpec(**{f.name: getattr(self, f.name) for f in fields(self)})
        if spec.n_hidden == 0:
            spec.n_hidden = hidden
        if spec.n_percepts == 0:
            spec.n_percepts = percepts or build_model(spec).n_actions
        return spec

    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                v = _fmt_list(v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or key not in types:
                raise ConfigError(key or f"line {n}", "unknown key" if sep else "expected key=value")
            kw[key] = _coerce(key, types[key], value)
        return cls(**kw)


def _coerce(key, kind, value):
    try:
        if kind in (float, "float"):
            return float(value)
        if kind in (int, "int"):
            return int(value)
        if kind in (list, "list"):
            return _floats(value)
        return value
    except ValueError:
        raise ConfigError(key, f"cannot parse {value!r}") from None


def build_model(spec):
    if spec.task == "predator_prey":
        return env.predator_prey_task()
    if spec.task == "mug":
        return env.mug_task(flip_prob=spec.noise)
    return env.load_task(spec.task[5:], flip_prob=spec.noise)


def training_config(spec):
    return trainer.TrainingConfig(
        beta1=spec.beta1,
        beta2=spec.beta2,
        alpha_vw=spec.alpha_vw,
        alpha_eta=spec.alpha_eta,
        n_iter=spec.iters,
        stride=spec.stride,
        seed=spec.seed,
        n_hidden=spec.n_hidden,
        n_percepts=spec.n_percepts,
    )


def action_names(model):
    if model.name == "mug":
        return list(env.MUG_ACTIONS)
    return [f"a{k}" for k in range(model.n_actions)]


def write_summary(path, items):
    with open(path, "w") as fh:
        for key, value in items:
            fh.write(f"{key}={value}\n")


def read_summary(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        key, _, value = line.partition("=")
        out[key] = value
    return out


def _run_analytic(spec, model, out, summary):
    sol, sols = analytic.solve_serial_restarts(
        model, spec.beta1, spec.beta2, spec.n_percepts, n_restarts=spec.restarts,
        cfg=analytic.SolverConfig(max_iter=spec.max_sweeps), seed=spec.seed,
    )
    analytic.write_trace_csv(out / "analytic_trace.csv", sol, spec.unit)
    trainer.write_behavior_csv(out / "analytic_behavior.csv", sol.behavior, action_names(model))
    objectives = [s.objective for s in sols]
    spread = max(objectives) - min(objectives)
    _, i_wx, i_xa = sol.trace[-1][1:4]
    summary += [
        ("analytic_J", repr(sol.objective)),
        (f"analytic_I_omega_x_{spec.unit}", repr(to_unit(i_wx, spec.unit))),
        (f"analytic_I_x_a_{spec.unit}", repr(to_unit(i_xa, spec.unit))),
        ("analytic_sweeps", sol.n_iter),
        ("analytic_converged", sol.converged),
        ("analytic_best_restart", sol.restart),
        ("analytic_restart_spread", repr(spread)),
        ("analytic_restarts_agree", spread < 1e-6),
    ]
    return sol


def _run_gradient(spec, model, out, summary):
    tr = trainer.train(model, training_config(spec))
    (out / "trace.csv").write_text(tr.to_csv(spec.unit))
    trainer.write_behavior_csv(out / "behavior.csv", tr.behavior, action_names(model))
    f = tr.final
    summary += [
        ("gradient_J", repr(f.J)),
        ("gradient_EU", repr(f.expected_utility)),
        (f"gradient_I_omega_x_{spec.unit}", repr(to_unit(f.info_world_percept, spec.unit))),
        (f"gradient_I_x_a_{spec.unit}", repr(to_unit(f.info_percept_action, spec.unit))),
        ("gradient_iterations", f.iteration),
    ]
    return tr


def _run_grid(spec, model, out, summary):
    ranked, failed = trainer.grid_search(
        model, training_config(spec), spec.alpha_vw_grid, spec.alpha_eta_grid, n_jobs=spec.jobs
    )
    with open(out / "grid.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "alpha_vw", "alpha_eta", "final_J", "error"])
        for k, c in enumerate(ranked, 1):
            w.writerow([k, repr(c.alpha_vw), repr(c.alpha_eta), repr(c.final_J), ""])
        for c in failed:
            w.writerow(["", repr(c.alpha_vw), repr(c.alpha_eta), "", c.error])
    summary += [("grid_cells", len(ranked) + len(failed)), ("grid_failed", len(failed))]
    if ranked:
        best = ranked[0]
        summary += [("grid_best_alpha_vw", repr(best.alpha_vw)), ("grid_best_alpha_eta", repr(best.alpha_eta)),
                    ("grid_best_J", repr(best.final_J))]
    return ranked


def run(spec, log=None):
    """Execute one configuration; returns an exit code.  Artifacts land in ``spec.out``."""
    log = log or sys.stderr
    try:
        spec.validate()
        spec = spec.resolved()
        model = build_model(spec)
    except ConfigError as exc:
        print(f"config error: {exc}", file=log)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"config error: task: {exc}", file=log)
        return EXIT_CONFIG
    out = Path(spec.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(spec.to_text())
    except OSError as exc:
        print(f"config error: out: {exc}", file=log)
        return EXIT_CONFIG

    summary = [("task", spec.task), ("mode", spec.mode)]
    code = EXIT_OK
    start = time.perf_counter()
    try:
        if spec.mode in ("analytic", "compare"):
            sol = _run_analytic(spec, model, out, summary)
            if not sol.converged:
                code = EXIT_NONCONVERGED
        if spec.mode in ("gradient", "compare"):
            tr = _run_gradient(spec, model, out, summary)
            if spec.mode == "compare":
                gap = abs(tr.final.J - sol.objective) / abs(sol.objective)
                summary.append(("relative_gap", repr(gap)))
        if spec.mode == "grid":
            _run_grid(spec, model, out, summary)
    except (trainer.NumericalError, analytic.SolverDivergenceError, FloatingPointError) as exc:
        summary.append(("error", str(exc).replace("\n", " ")))
        code = EXIT_NUMERIC
    summary.append(("status", {0: "ok", 3: "not_converged", 4: "numeric_failure"}[code]))
    summary.append(("wall_clock_s", f"{time.perf_counter() - start:.3f}"))
    write_summary(out / "summary.txt", summary)
    print(f"{spec.task} {spec.mode}: {summary[-2][1]} -> {out}", file=log)
    return code


REPORT_COLUMNS = ("run", "task", "beta1", "beta2", "alpha_vw", "alpha_eta", "status", "gradient_J", "analytic_J",
                  "relative_gap", "I_omega_x", "I_x_a")


def reproduce(out, iters=100_000, seed=0, unit="bits", runs=REFERENCE_RUNS, log=None):
    """Run the four reference configurations in compare mode and write ``report.csv``.

    A failing run is recorded in the report and does not stop the others.
    Returns (exit code, report rows).
    """
    log = log or sys.stderr
    out = Path(out)
    rows, codes = [], []
    for name, task, b1, b2, avw, aeta in runs:
        spec = RunSpec(task=task, mode="compare", beta1=b1, beta2=b2, alpha_vw=avw, alpha_eta=aeta, iters=iters,
                       seed=seed, out=str(out / name), unit=unit)
        try:
            code = run(spec, log)
        except Exception as exc:  # isolate unexpected failures per run
            print(f"{name}: {type(exc).__name__}: {exc}", file=log)
            code = EXIT_NUMERIC
        codes.append(code)
        s = read_summary(out / name / "summary.txt") if (out / name / "summary.txt").exists() else {}
        rows.append({
            "run": name, "task": task, "beta1": b1, "beta2": b2, "alpha_vw": avw, "alpha_eta": aeta,
            "status": s.get("status", "failed"),
            "gradient_J": s.get("gradient_J", ""), "analytic_J": s.get("analytic_J", ""),
            "relative_gap": s.get("relative_gap", ""),
            "I_omega_x": s.get(f"gradient_I_omega_x_{unit}", ""), "I_x_a": s.get(f"gradient_I_x_a_{unit}", ""),
        })
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        w.writeheader()
        w.writerows(rows)
    mug = [r for r in rows if r["task"] == "mug"]
    if all(r["I_omega_x"] and r["I_x_a"] for r in mug) and mug:
        ordered = all(
            float(a[k]) >= float(b[k]) for a, b in zip(mug, mug[1:]) for k in ("I_omega_x", "I_x_a")
        )
        print(f"mug information ordering high >= low-action >= low-both: {'yes' if ordered else 'no'}", file=log)
    return max(codes), rows


def _add_run_flags(p, grid=False):
    p.add_argument("--config", help="key=value file; flags given explicitly override it")
    p.add_argument("--task")
    if not grid:
        p.add_argument("--mode", choices=MODES)
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--alpha-vw", type=float)
    p.add_argument("--alpha-eta", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--noise", type=float)
    p.add_argument("--unit", choices=UNITS)
    p.add_argument("--stride", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-sweeps", type=int)
    p.add_argument("--hidden", dest="n_hidden", type=int)
    p.add_argument("--percepts", dest="n_percepts", type=int)
    if grid:
        p.add_argument("--grid-vw", dest="alpha_vw_grid", type=_floats, required=True,
                       help="comma-separated alpha_vw values")
        p.add_argument("--grid-eta", dest="alpha_eta_grid", type=_floats, required=True,
                       help="comma-separated alpha_eta values")
        p.add_argument("--jobs", type=int)


def make_parser():
    parser = argparse.ArgumentParser(prog="percact", description="Bounded-rational perception-action experiments.")
    sub = parser.add_subparsers(dest="verb", required=True)
    _add_run_flags(sub.add_parser("run", help="run one configuration"))
    _add_run_flags(sub.add_parser("grid", help="grid-search the two learning rates"), grid=True)
    rep = sub.add_parser("reproduce", help="predator-prey comparison and the three mug regimes")
    rep.add_argument("--out", default="runs/reproduce")
    rep.add_argument("--iters", type=int, default=100_000)
    rep.add_argument("--seed", type=int, default=0)
    rep.add_argument("--unit", choices=UNITS, default="bits")
    return parser


def spec_from_args(args):
    spec = RunSpec()
    if args.config:
        spec = RunSpec.from_text(Path(args.config).read_text())
    for f in fields(RunSpec):
        v = getattr(args, f.name, None)
        if v is not None:
            setattr(spec, f.name, v)
    if args.verb == "grid":
        spec.mode = "grid"
    return spec


def main(argv=None):
    args = make_parser().parse_args(argv)
    if args.verb == "reproduce":
        if args.iters < 0:
            print("config error: iters: must be nonnegative", file=sys.stderr)
            return EXIT_CONFIG
        code, rows = reproduce(args.out, args.iters, args.seed, args.unit)
        for r in rows:
            print(" ".join(f"{k}={r[k]}" for k in REPORT_COLUMNS))
        return code
    try:
        spec = spec_from_args(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(spec)


if __name__ == "__main__":
    sys.exit(main())
