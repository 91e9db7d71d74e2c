"""Command-line front end.

    sdosprobe analytic  --t 0.2 --g 1/3 --f 0.23 --d 1 --N 10 --K 1..10 --Th 1..K
    sdosprobe simulate  [--config sweep.cfg] [--strategy shrewd] --seed 42 --out results/
    sdosprobe crossover --t 0.2 --g 1/3 --f 0.23 --d 1 --K 10
    sdosprobe params    --t 0.2 --g 2/3

Exit codes: 0 success, 1 usage/config error, 2 runtime error.

Config files (``--config``) hold one ``key = value`` per line; ``#`` starts a
comment. Keys are the long flag names (``t``, ``g``, ``d``, ``trials``,
``randomize_middle`` ...). Grid axes take a comma list (``g = 0, 1/3, 2/3, 1``)
or an inclusive ``start:stop:step`` range (``d = 0:1:0.1``). Flags given on
the command line override the file.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import math
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

from . import __version__
from . import analytic as an
from .adversary import StrategyKind
from .circuit import Mode
from .montecarlo import METRICS, EstimateSeries, ExperimentConfig, compare_strategies, run_experiment
from .rng import fresh_seed

log = logging.getLogger("sdosprobe")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    """Bad flag or config value; maps to exit code 1."""


# --------------------------------------------------------------------------
# value parsing


def parse_number(text: str):
    """``0.2`` -> float, ``1/3`` -> Fraction, ``3`` -> float."""
    text = text.strip()
    try:
        if "/" in text:
            return Fraction(text)
        return float(text)
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"not a number: {text!r}") from None


def parse_grid(text: str) -> tuple:
    """Comma list or inclusive ``start:stop:step`` range of numbers."""
    text = text.strip()
    if not text:
        raise UsageError("empty value list")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"range must be start:stop:step, got {text!r}")
        try:
            start, stop, step = (Fraction(p.strip()) for p in parts)
        except (ValueError, ZeroDivisionError):
            raise UsageError(f"bad range {text!r}") from None
        if step <= 0 or stop < start:
            raise UsageError(f"bad range {text!r}: need step > 0 and start <= stop")
        n = int((stop - start) / step)
        return tuple(float(start + i * step) for i in range(n + 1))
    return tuple(parse_number(p) for p in text.split(","))


def parse_int_grid(text: str) -> tuple[int, ...]:
    """Comma list of ints or an inclusive ``a..b`` range."""
    text = text.strip()
    try:
        if ".." in text:
            a, b = text.split("..")
            lo, hi = int(a), int(b)
            if hi < lo:
                raise UsageError(f"empty range {text!r}")
            return tuple(range(lo, hi + 1))
        if ":" in text:
            return tuple(int(v) for v in parse_grid(text))
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise UsageError(f"not an integer list: {text!r}") from None


def _parse_bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def _parse_choice(choices):
    def parse(text: str) -> str:
        v = text.strip().lower()
        if v not in choices:
            raise UsageError(f"expected one of {', '.join(choices)}, got {text!r}")
        return v

    return parse


def _parse_int(text: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise UsageError(f"not an integer: {text!r}") from None


# config keys -> parser for the raw string value
CONFIG_KEYS = {
    "t": parse_grid,
    "g": parse_grid,
    "f": parse_grid,
    "d": parse_grid,
    "N": str.strip,  # int list or "auto", resolved later
    "K": parse_int_grid,
    "Th": parse_int_grid,
    "trials": _parse_int,
    "seed": _parse_int,
    "strategy": _parse_choice([s.value for s in StrategyKind]),
    "mode": _parse_choice([m.value for m in Mode]),
    "randomize_middle": _parse_bool,
    "attrition": _parse_bool,
    "guards_per_user": _parse_int,
    "dir": str.strip,
    "workers": _parse_int,
}


def read_config(path) -> dict:
    """Parse a ``key = value`` config file; errors name the offending line."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e.strerror}") from None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        if key in out:
            raise UsageError(f"{path}:{lineno}: duplicate key {key!r}")
        try:
            out[key] = CONFIG_KEYS[key](value)
        except UsageError as e:
            raise UsageError(f"{path}:{lineno}: {key}: {e}") from None
    return out


# --------------------------------------------------------------------------
# output helpers


def fmt(x) -> str:
    if x is None:
        return "NA"
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "NA"
    return f"{x:.6g}"


def _canonical(v):
    if isinstance(v, (list, tuple)):
        return [_canonical(x) for x in v]
    if isinstance(v, Fraction):
        return str(v)
    return v


def config_hash(settings: dict) -> str:
    blob = json.dumps({k: _canonical(v) for k, v in settings.items()}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def render_csv(command: str, settings: dict, seed: int, header, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# sdosprobe {__version__} {command}\n")
    buf.write(f"# config_hash={config_hash(settings)}\n")
    buf.write(f"# seed={seed}\n")
    for k in sorted(settings):
        buf.write(f"# {k}={json.dumps(_canonical(settings[k]))}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


class Output:
    """Collects CSV outputs; writes them plus a manifest to ``--out`` or prints them."""

    def __init__(self, command: str, settings: dict, seed: int, out_dir: str | None):
        self.command = command
        self.settings = settings
        self.seed = seed
        self.out_dir = Path(out_dir) if out_dir else None
        self.written: list[str] = []

    def emit(self, name: str, header, rows):
        text = render_csv(self.command, self.settings, self.seed, header, rows)
        if self.out_dir is None:
            sys.stdout.write(text)
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / f"{name}.csv"
        path.write_text(text)
        self.written.append(str(path))

    def finish(self):
        if self.out_dir is None:
            return
        manifest = {
            "command": self.command,
            "config_hash": config_hash(self.settings),
            "seed": self.seed,
            "version": __version__,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "settings": {k: _canonical(v) for k, v in self.settings.items()},
            "outputs": self.written,
        }
        (self.out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        print(f"wrote {len(self.written)} file(s) to {self.out_dir}", file=sys.stderr)


def _seed(args) -> int:
    if args.seed is None:
        args.seed = fresh_seed()
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


def _single(values, name):
    if len(values) != 1:
        raise UsageError(f"--{name} takes a single value for this command")
    return values[0]


def _resolve_N(text, t, g) -> int:
    if text.strip().lower() == "auto":
        try:
            return an.compute_N(t, g)
        except an.DegenerateModelError as e:
            raise UsageError(f"--N auto: {e}") from None
    return _parse_int(text)


def _model(args, K=1, Th=1, N=None) -> an.ModelParams:
    t = _single(parse_grid(args.t), "t")
    g = _single(parse_grid(args.g), "g")
    f = _single(parse_grid(args.f), "f")
    d = _single(parse_grid(args.d), "d")
    if N is None:
        N = _resolve_N(args.N, t, g)
    try:
        return an.ModelParams(t, g, f, d, N, K, Th)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _th_values(spec: str, K: int) -> tuple[int, ...]:
    spec = spec.strip()
    if spec.upper().endswith("..K"):
        lo = _parse_int(spec[:-3])
        return tuple(range(lo, K + 1))
    return tuple(th for th in parse_int_grid(spec) if th <= K)


# --------------------------------------------------------------------------
# commands


def cmd_analytic(args) -> int:
    seed = _seed(args)
    base = _model(args)
    if base.d != 1:
        raise UsageError("closed-form FN/FP are only defined for d = 1")
    Ks = parse_int_grid(args.K)
    if min(Ks) < 1:
        raise UsageError("K must be at least 1")
    skipped = [K for K in Ks if K >= base.N]
    Ks = tuple(K for K in Ks if K < base.N)
    if skipped:
        print(f"sdosprobe: skipping K={','.join(map(str, skipped))}: probes need K < N={base.N}", file=sys.stderr)
    if not Ks:
        raise UsageError(f"no K below N={base.N}")
    weights = an.survivor_weights(base.t, base.g, base.f, base.N)
    rows = []
    for K in Ks:
        ths = _th_values(args.Th, K)
        if not ths or min(ths) < 1:
            raise UsageError(f"no valid Th for K={K} (need 1 <= Th <= K)")
        for Th in ths:
            p = replace(base, K=K, Th=Th)
            rates = an._failure_rates(p, weights)
            row = [K, Th, rates.fn, rates.fp]
            for metric in (an.psi, an.eta):
                try:
                    row.append(metric(p, rates))
                except an.DegenerateModelError:
                    row.append("ERR")
            rows.append(row)
    settings = {"t": base.t, "g": base.g, "f": base.f, "d": base.d, "N": base.N, "K": Ks, "Th": args.Th}
    out = Output("analytic", settings, seed, args.out)
    out.emit("analytic", ["K", "Th", "fn", "fp", "psi", "eta"], rows)
    out.finish()
    return EXIT_OK


def cmd_crossover(args) -> int:
    seed = _seed(args)
    Ks = parse_int_grid(args.K)
    if len(Ks) == 1:
        Ks = tuple(range(1, Ks[0] + 1))
    kmax = max(Ks)
    if min(Ks) < 1:
        raise UsageError("K must be at least 1")
    # without --N, use the smallest pool that admits every requested K
    base = _model(args, N=None if args.N else kmax + 1)
    N = base.N
    if kmax >= N:
        raise UsageError(f"K={kmax} needs N > K (got N={N})")
    if base.d != 1:
        raise UsageError("closed-form FN/FP are only defined for d = 1")
    table = an.crossover_tuning(base.t, base.g, base.f, base.d, N, kmax)
    rows = [[c.K, c.th_low, c.th_high, c.boundary] for c in table if c.K in Ks]
    settings = {"t": base.t, "g": base.g, "f": base.f, "d": base.d, "N": N, "K": Ks}
    out = Output("crossover", settings, seed, args.out)
    out.emit("crossover", ["K", "th_low", "th_high", "boundary"], rows)
    out.finish()
    return EXIT_OK


def cmd_params(args) -> int:
    seed = _seed(args)
    t = _single(parse_grid(args.t), "t")
    g = _single(parse_grid(args.g), "g")
    try:
        N = an.compute_N(t, g) if args.N.strip().lower() == "auto" else _parse_int(args.N)
        ranges = an.param_ranges(t, g, N)
    except (an.DegenerateModelError, ValueError) as e:
        raise UsageError(str(e)) from None
    settings = {"t": t, "g": g, "N": N, "n_cxc": ranges.n_cxc, "K_low": ranges.K_low, "K_high": ranges.K_high}
    if ranges.empty:
        print("sdosprobe: no admissible (K, Th) pair for these parameters", file=sys.stderr)
    out = Output("params", settings, seed, args.out)
    out.emit("params", ["N", "K", "Th"], [[N, K, Th] for K, Th in ranges.pairs])
    out.finish()
    return EXIT_OK


SIM_DEFAULTS = {
    "t": (0.2,),
    "g": (0.0, Fraction(1, 3), Fraction(2, 3), 1.0),
    "f": (0.23,),
    "d": tuple(i / 10 for i in range(11)),
    "N": "10",
    "K": (3,),
    "Th": (2,),
    "trials": 100,
    "strategy": "simple",
    "mode": "realistic",
    "randomize_middle": False,
    "attrition": True,
    "guards_per_user": 3,
    "dir": None,
    "workers": 1,
    "seed": None,
}

# flag attribute -> (config key, parser)
_SIM_FLAGS = {
    "t": ("t", parse_grid),
    "g": ("g", parse_grid),
    "f": ("f", parse_grid),
    "d": ("d", parse_grid),
    "N": ("N", str.strip),
    "K": ("K", parse_int_grid),
    "Th": ("Th", parse_int_grid),
    "trials": ("trials", None),
    "seed": ("seed", None),
    "strategy": ("strategy", None),
    "mode": ("mode", None),
    "randomize_middle": ("randomize_middle", None),
    "dir": ("dir", None),
    "workers": ("workers", None),
}


def simulation_settings(args) -> dict:
    settings = dict(SIM_DEFAULTS)
    if args.config:
        settings.update(read_config(args.config))
    for attr, (key, parse) in _SIM_FLAGS.items():
        v = getattr(args, attr, None)
        if v is None or (attr == "randomize_middle" and not v):
            continue
        settings[key] = parse(v) if parse else v
    n_text = settings["N"]
    if isinstance(n_text, str):
        if n_text.lower() == "auto":
            if len(settings["t"]) != 1 or len(settings["g"]) != 1:
                raise UsageError("N = auto needs a single t and g")
            settings["N"] = (_resolve_N("auto", settings["t"][0], settings["g"][0]),)
        else:
            settings["N"] = parse_int_grid(n_text)
    return settings


def _series_rows(series: EstimateSeries, metric: str, multi_axes):
    rows = []
    for p in sorted(series.points, key=lambda p: (*(getattr(p.point, a) for a in multi_axes), p.point.d, p.point.g)):
        e = p.estimates[metric]
        rows.append([*(getattr(p.point, a) for a in multi_axes), p.point.d, p.point.g, e.mean, e.half_width, e.n])
    return rows


def cmd_simulate(args) -> int:
    settings = simulation_settings(args)
    if settings["seed"] is None:
        settings["seed"] = fresh_seed()
        print(f"seed: {settings['seed']}", file=sys.stderr)
    seed = settings["seed"]
    for name in ("trials", "workers", "guards_per_user"):
        if settings[name] < 1:
            raise UsageError(f"{name} must be positive")
    try:
        cfg = ExperimentConfig(
            t=settings["t"],
            g=settings["g"],
            f=settings["f"],
            d=settings["d"],
            N=settings["N"],
            K=settings["K"],
            Th=settings["Th"],
            trials=settings["trials"],
            mode=Mode(settings["mode"]),
            randomize_middle=settings["randomize_middle"],
            strategy=StrategyKind(settings["strategy"]),
            seed=seed,
            guards_per_user=settings["guards_per_user"],
            attrition=settings["attrition"],
            workers=settings["workers"],
            **({"directory": settings["dir"]} if settings["dir"] else {}),
        )
        for pt in cfg.grid():
            an.ModelParams(pt.t, pt.g, pt.f, pt.d, pt.N, pt.K, pt.Th)
    except ValueError as e:
        raise UsageError(str(e)) from None

    # workers does not change results, so it stays out of the hash and header
    recorded = {k: v for k, v in settings.items() if k not in ("workers", "seed")}
    out = Output("simulate", recorded, seed, args.out or "results")
    multi = [a for a in ("t", "f", "N", "K", "Th") if len(set(settings[a])) > 1]
    header = [*multi, "d", "g", "mean", "ci95", "n"]

    if cfg.strategy is StrategyKind.SHREWD:
        simple, series = compare_strategies(cfg)
    else:
        series, simple = run_experiment(cfg), None
    for metric in METRICS:
        out.emit(metric, header, _series_rows(series, metric, multi))
    if simple is not None:
        rows = []
        for a, b in zip(simple.points, series.points):
            ea, eb = a.estimates["psi"], b.estimates["psi"]
            diff = abs(ea.mean - eb.mean)
            rows.append([*(getattr(a.point, x) for x in multi), a.point.d, a.point.g, ea.mean, ea.half_width, eb.mean, eb.half_width, diff])
        rows.sort(key=lambda r: tuple(r[: len(multi) + 2]))
        out.emit(
            "compare_psi",
            [*multi, "d", "g", "psi_simple", "ci95_simple", "psi_shrewd", "ci95_shrewd", "abs_diff"],
            rows,
        )
    out.finish()
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sdosprobe", description="Selective-DoS circuit probing: analytic model and simulator.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def model_flags(sp, multi=False):
        sp.add_argument("--t", default=None if multi else "0.2", help="compromised bandwidth fraction")
        sp.add_argument("--g", default=None if multi else "1/3", help="compromised guard fraction, e.g. 1/3")
        sp.add_argument("--f", default=None if multi else "0.23", help="network failure rate")
        sp.add_argument("--d", default=None if multi else "1", help="adversary drop rate")
        sp.add_argument("--N", default=None if multi else "10", help="phase-1 size, or 'auto'")
        sp.add_argument("--seed", type=int, default=None, help="master seed (random if omitted)")
        sp.add_argument("--out", default=None, help="output directory")

    a = sub.add_parser("analytic", help="closed-form FN, FP, psi, eta over a (K, Th) grid")
    model_flags(a)
    a.add_argument("--K", default="3", help="K values: list or range like 1..10")
    a.add_argument("--Th", default="1..K", help="Th values: list, or 'a..K' for a up to each K")
    a.set_defaults(func=cmd_analytic)

    c = sub.add_parser("crossover", help="threshold where FN falls below FP, per K")
    model_flags(c)
    c.add_argument("--K", default="10", help="largest K, or a K range like 1..10")
    c.set_defaults(N=None, func=cmd_crossover)

    pr = sub.add_parser("params", help="N for six honest circuits per hour, and admissible (K, Th)")
    model_flags(pr)
    pr.set_defaults(N="auto")
    pr.set_defaults(func=cmd_params)

    s = sub.add_parser("simulate", help="Monte-Carlo sweep; one CSV per metric")
    model_flags(s, multi=True)
    s.add_argument("--K", default=None, help="K values")
    s.add_argument("--Th", default=None, help="Th values")
    s.add_argument("--trials", type=int, default=None, help="trials per grid point (default 100)")
    s.add_argument("--strategy", choices=[k.value for k in StrategyKind], default=None)
    s.add_argument("--mode", choices=[m.value for m in Mode], default=None)
    s.add_argument("--randomize-middle", dest="randomize_middle", action="store_true")
    s.add_argument("--dir", default=None, help="relay directory CSV (default: synthetic)")
    s.add_argument("--config", default=None, help="key = value sweep definition")
    s.add_argument("--workers", type=int, default=None, help="worker processes (results do not depend on it)")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"sdosprobe: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (an.DegenerateModelError, OSError, RuntimeError, ValueError) as e:
        print(f"sdosprobe: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
