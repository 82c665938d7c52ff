"""Command line entry point: ``trawlkit simulate|simulate-field|estimate-slices|experiment``."""

from __future__ import annotations

import ast
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import click
import numpy as np

from . import __version__
from . import geometry, kernel as kern, levy
from .inversion import InversionError

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
MAX_GRID_CELLS = 10**8

METHODS = ("grid", "cpp", "slice", "kw", "vm", "field", "field-unbounded")


class ConfigError(click.ClickException):
    exit_code = EXIT_CONFIG


class NumericError(click.ClickException):
    exit_code = EXIT_NUMERIC


# -- spec strings ------------------------------------------------------------


def parse_call(text: str) -> tuple[str, list, dict]:
    """``name(arg, ..., key=value)`` with literal arguments."""
    text = text.replace("lambda=", "lam=")  # reserved word in Python syntax
    try:
        node = ast.parse(text.strip(), mode="eval").body
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse {text!r}") from exc
    if isinstance(node, ast.Name):
        return node.id.lower(), [], {}
    if not isinstance(node, ast.Call) or not isinstance(node.func, ast.Name):
        raise ConfigError(f"expected name(args) in {text!r}")
    try:
        args = [ast.literal_eval(a) for a in node.args]
        kw = {k.arg: ast.literal_eval(k.value) for k in node.keywords}
    except ValueError as exc:
        raise ConfigError(f"arguments must be literals in {text!r}") from exc
    return node.func.id.lower(), args, kw


TRAWLS = {
    "exponential": geometry.exponential,
    "exp": geometry.exponential,
    "long_memory": geometry.long_memory,
    "triangle": geometry.triangle,
    "rectangle": geometry.rectangle,
    "tabulated": geometry.read_tabulated,
}

SEEDS = {
    "gaussian": levy.Gaussian,
    "normal": levy.Gaussian,
    "poisson": levy.Poisson,
    "skellam": levy.Skellam,
    "gamma": levy.Gamma,
    "inverse_gaussian": levy.InverseGaussian,
    "ig": levy.InverseGaussian,
    "cauchy": levy.Cauchy,
    "stable": levy.Stable,
}

KERNELS = {
    "constant": kern.TimeShifted.constant,
    "exponential": kern.TimeShifted.exponential,
    "cosine": kern.TimeShifted.cosine,
    "sine": kern.TimeShifted.sine,
    "exp_ou": lambda lam=1.0, coef=1.0: kern.TimeShifted.exponential(lam, coef),
}


def _build(table: dict, text: str, what: str):
    name, args, kw = parse_call(text)
    if name not in table:
        raise ConfigError(f"unknown {what} {name!r}; choose from {', '.join(sorted(table))}")
    try:
        return table[name](*args, **kw)
    except (TypeError, ValueError, OSError) as exc:
        raise ConfigError(f"bad {what} {text!r}: {exc}") from exc


def parse_trawl(text: str) -> geometry.TrawlFunction:
    return _build(TRAWLS, text, "trawl")


def parse_seed(text: str) -> levy.LevySeed:
    return _build(SEEDS, text, "seed distribution")


def parse_kernel(text: str) -> kern.Kernel:
    return _build(KERNELS, text, "kernel")


# -- configuration -----------------------------------------------------------


@dataclass
class RunConfig:
    method: str
    trawl: str | None = None
    seed_dist: str | None = None
    kernel: str | None = None
    vol_trawl: str | None = None
    vol_seed: str | None = None
    vol_step: float = 0.05
    k: int | None = None
    tau: float | None = None
    k_t: int | None = None
    k_s: int | None = None
    dx: float | None = None
    delta: float | None = None
    nt: int | None = None
    nx: int | None = None
    dt: float | None = None
    T: float | None = None
    eps: float = 0.0
    n_trunc: int | None = None
    N: int | None = None
    table: str | None = None
    rng: int = 0
    out: str | None = None
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        need = {
            "grid": ("trawl", "seed_dist", "k", "tau"),
            "cpp": ("trawl", "seed_dist", "k", "tau"),
            "slice": ("trawl", "seed_dist", "k", "tau"),
            "kw": ("trawl", "seed_dist", "kernel", "k", "tau"),
            "vm": ("trawl", "seed_dist", "kernel", "vol_trawl", "vol_seed", "k", "tau"),
            "field": ("table", "seed_dist", "k_t", "k_s"),
            "field-unbounded": ("trawl", "seed_dist", "k_t", "k_s", "tau", "dx"),
        }
        if self.method not in need:
            raise ConfigError(f"unknown method {self.method!r}")
        missing = [f for f in need[self.method] if getattr(self, f) is None]
        if self.method == "grid" and self.delta is None and (self.nt is None or self.nx is None):
            missing.append("delta (or nt and nx)")
        if missing:
            raise ConfigError(f"method {self.method!r} needs: {', '.join(missing)}")
        for name in ("k", "k_t", "k_s", "N", "nt", "nx"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("tau", "dx", "delta", "dt"):
            v = getattr(self, name)
            if v is not None and not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be positive")
        if not 0 <= self.rng < 2**64:
            raise ConfigError("rng seed must fit in 64 unsigned bits")

    def echo(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "extra" and v is not None}
        d.update(self.extra)
        return d


_FIELDS = set(RunConfig.__dataclass_fields__) - {"extra"}
_INTS = {"k", "k_t", "k_s", "n_trunc", "N", "rng", "nt", "nx"}
_FLOATS = {"vol_step", "tau", "dx", "delta", "dt", "T", "eps"}


def _coerce(key: str, value):
    try:
        if key in _INTS:
            f = float(value)
            if f != int(f):
                raise ValueError
            return int(f)
        if key in _FLOATS:
            return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return value


def read_config_file(path: str) -> dict:
    """JSON (a run manifest works too) or ``key = value`` lines with # comments."""
    try:
        text = open(path).read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    s = text.lstrip()
    if s.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad JSON in {path}: {exc}") from exc
        return data.get("config", data)
    data = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        data[key.replace("-", "_")] = value
    return data


def make_config(file_values: dict, flags: dict) -> RunConfig:
    merged = {k.replace("-", "_"): v for k, v in file_values.items()}
    merged.update({k: v for k, v in flags.items() if v is not None})
    if "seed" in merged and "seed_dist" not in merged:
        merged["seed_dist"] = merged.pop("seed")
    extra = {k: v for k, v in merged.items() if k not in _FIELDS}
    if extra:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(extra))}")
    if "method" not in merged:
        raise ConfigError("method is required")
    cfg = RunConfig(**{k: _coerce(k, v) for k, v in merged.items()})
    cfg.validate()
    return cfg


# -- output ------------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def _atomic_write(path: str, text: str) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def series_csv(tau: float, X, sigma2=None) -> str:
    lines = ["time,value" + (",sigma2" if sigma2 is not None else "")]
    for l, x in enumerate(X, 1):
        row = [_fmt(l * tau), _fmt(x)]
        if sigma2 is not None:
            row.append(_fmt(sigma2[l - 1]))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def field_csv(F, tau: float, dx: float) -> str:
    ks, kt = F.shape
    lines = ["# ks,kt,tau,dx", f"# {ks},{kt},{_fmt(tau)},{_fmt(dx)}"]
    lines += [",".join(_fmt(v) for v in row) for row in F]
    return "\n".join(lines) + "\n"


def write_manifest(path: str, cfg: dict, wall: float, reports: dict) -> None:
    data = {"config": cfg, "version": __version__, "wall_time": wall, "errors": reports}
    _atomic_write(path, json.dumps(data, indent=2, sort_keys=True, default=repr) + "\n")


# -- runners -----------------------------------------------------------------


def _run_series(cfg: RunConfig, atoms_path: str | None):
    from .cpp import sample_atoms_bounded, sample_atoms_unbounded, simulate_trawl_full, trawl_sums
    from .grid import GridConfig, default_horizon, simulate_grid
    from .rng import RngStream
    from .slices import simulate_slice_bounded, simulate_slice_unbounded

    trawl = parse_trawl(cfg.trawl)
    seed = parse_seed(cfg.seed_dist)
    kernel = parse_kernel(cfg.kernel) if cfg.kernel else None
    stream = RngStream(cfg.rng)
    reports: dict = {}
    sigma2 = None
    if cfg.method == "grid":
        dx = cfg.delta if cfg.delta is not None else trawl.height / cfg.nx
        T = cfg.T if cfg.T is not None else default_horizon(trawl, 1e-4, dx)
        if cfg.delta is not None:
            g = GridConfig.from_delta(trawl, cfg.tau, cfg.k, T, cfg.delta, cfg.dt)
        else:
            g = GridConfig(cfg.nt, cfg.nx, cfg.tau, cfg.k, T)
        if g.n_cols() * g.n_x > MAX_GRID_CELLS:
            raise ConfigError(f"grid window has {g.n_cols()} x {g.n_x} cells; pass a later --T or a coarser grid")
        X = simulate_grid(trawl, seed, g, stream)
    elif cfg.method == "slice":
        if trawl.bounded:
            X = simulate_slice_bounded(trawl, seed, cfg.k, cfg.tau, stream)
        else:
            X, rep = simulate_slice_unbounded(trawl, seed, cfg.k, cfg.tau, cfg.n_trunc, stream)
            reports["truncation"] = rep
    elif cfg.method == "cpp":
        X = simulate_trawl_full(trawl, seed, cfg.k, cfg.tau, stream, eps=cfg.eps)
        if atoms_path:
            _, j = levy.levy_ito_split(seed)
            sampler = sample_atoms_bounded if trawl.bounded else sample_atoms_unbounded
            sampler(trawl, j.measure, cfg.k, cfg.tau, stream.child("jumps"), cfg.eps).to_csv(atoms_path)
    else:
        vol = None
        if cfg.method == "vm":
            vol = kern.VolTrawlSpec(parse_trawl(cfg.vol_trawl), parse_seed(cfg.vol_seed), cfg.vol_step)
        X, path = kern.simulate_vm_trawl(trawl, kernel, vol, seed, cfg.k, cfg.tau, stream, eps=cfg.eps, vol_trunc=cfg.n_trunc)
        if path is not None:
            sigma2 = path.sigma(cfg.tau * np.arange(1, cfg.k + 1)) ** 2
    if not np.all(np.isfinite(X)) and not isinstance(seed, (levy.Cauchy, levy.Stable)):
        raise NumericError("simulation produced non-finite values")
    return series_csv(cfg.tau, X, sigma2), reports


def _summarise(rep: dict) -> dict:
    """Largest per-trawl error moments from a truncation report."""
    out = {}
    for key, vals in rep.items():
        nums = [abs(v) for v in vals if levy.is_defined(v)]
        out[f"max_abs_{key}"] = max(nums) if nums else "undefined"
    return out


def _guard(fn):
    """Map library failures onto the config / numeric exit codes."""
    try:
        return fn()
    except click.ClickException:
        raise
    except (InversionError, ArithmeticError, FloatingPointError, np.linalg.LinAlgError) as exc:
        raise NumericError(str(exc)) from exc
    except (ValueError, TypeError, NotImplementedError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def _manifest_path(out: str) -> str:
    return out + ".manifest.json"


# -- commands ----------------------------------------------------------------

_common = [
    click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON or key = value file."),
    click.option("--rng", type=int, default=None, help="Master 64-bit seed."),
    click.option("--out", type=click.Path(dir_okay=False), default=None, help="Output file."),
]


def _apply(opts):
    def deco(f):
        for o in reversed(opts):
            f = o(f)
        return f

    return deco


@click.group()
@click.version_option(__version__, prog_name="trawlkit")
def main():
    """Simulate trawl processes and simple ambit fields."""


@main.command()
@_apply(_common)
@click.option("--method", type=click.Choice(["grid", "cpp", "slice", "kw", "vm"]))
@click.option("--trawl")
@click.option("--seed-dist")
@click.option("--kernel")
@click.option("--vol-trawl")
@click.option("--vol-seed")
@click.option("--vol-step", type=float)
@click.option("--k", type=int)
@click.option("--tau", type=float)
@click.option("--delta", type=float)
@click.option("--dt", type=float)
@click.option("--nt", type=int, help="Grid cells per tau.")
@click.option("--nx", type=int, help="Grid rows below phi(0).")
@click.option("--T", "--horizon", "T", type=float, help="Grid truncation time (negative).")
@click.option("--eps", type=float)
@click.option("--n-trunc", "--trunc-rows", "n_trunc", type=int, help="Keep staircase rows 1..n only.")
@click.option("--dump-atoms", type=click.Path(dir_okay=False), help="Write the compound Poisson atoms as CSV.")
def simulate(config_path, dump_atoms, **flags):
    """Simulate a trawl path at tau, 2 tau, ..., k tau."""
    t0 = time.perf_counter()
    cfg = make_config(read_config_file(config_path) if config_path else {}, flags)
    if cfg.method not in ("grid", "cpp", "slice", "kw", "vm"):
        raise ConfigError("use simulate-field for field methods")
    text, reports = _guard(lambda: _run_series(cfg, dump_atoms))
    _emit(cfg, text, reports, t0)


def _emit(cfg: RunConfig, text: str, reports: dict, t0: float) -> None:
    if cfg.out:
        _atomic_write(cfg.out, text)
        if "truncation" in reports:
            rep = reports["truncation"]
            _atomic_write(cfg.out + ".errors.json", json.dumps(rep, default=repr) + "\n")
            reports = dict(reports, truncation=_summarise(rep))
        write_manifest(_manifest_path(cfg.out), cfg.echo(), time.perf_counter() - t0, reports)
    else:
        click.echo(text, nl=False)


@main.command("simulate-field")
@_apply(_common)
@click.option("--table", type=click.Path(dir_okay=False), help="Minimal-slice table from estimate-slices.")
@click.option("--trawl", help="Trawl for the unbounded method.")
@click.option("--seed-dist")
@click.option("--kt", "k_t", type=int)
@click.option("--ks", "k_s", type=int)
@click.option("--tau", type=float)
@click.option("--dx", type=float)
@click.option("--n", "N", type=float, help="Slice-table sample count for --trawl (default 1e6).")
def simulate_field(config_path, **flags):
    """Simulate a k_s x k_t simple ambit field."""
    from .ambit import MinimalSliceTable, slice_partition_field, slice_partition_field_unbounded
    from .rng import RngStream

    t0 = time.perf_counter()
    fv = read_config_file(config_path) if config_path else {}
    method = fv.get("method") or ("field" if (flags.get("table") or fv.get("table")) else "field-unbounded")
    fv = dict(fv, method=method)
    cfg = make_config(fv, flags)

    def run():
        seed = parse_seed(cfg.seed_dist)
        stream = RngStream(cfg.rng)
        if cfg.method == "field":
            try:
                table = MinimalSliceTable.load(cfg.table)
            except (OSError, KeyError) as exc:
                raise ConfigError(f"cannot read table {cfg.table}: {exc}") from exc
            return field_csv(slice_partition_field(table, seed, cfg.k_t, cfg.k_s, stream), table.tau, table.dx)
        trawl = parse_trawl(cfg.trawl)
        N = int(cfg.N) if cfg.N is not None else 10**6  # same default as estimate-slices
        F = slice_partition_field_unbounded(trawl, seed, cfg.k_t, cfg.k_s, cfg.tau, cfg.dx, N, stream)
        return field_csv(F, cfg.tau, cfg.dx)

    _emit(cfg, _guard(run), {}, t0)


@main.command("estimate-slices")
@click.option("--trawl", required=True)
@click.option("--tau", type=float, required=True)
@click.option("--dx", type=float, required=True)
@click.option("--n", "N", type=float, default=1e6, show_default=True)
@click.option("--rng", type=int, default=0)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def estimate_slices(trawl, tau, dx, N, rng, out):
    """Estimate minimal-slice areas; writes OUT and OUT.csv."""
    from .ambit import slice_estimation

    if tau <= 0 or dx <= 0 or N < 1 or N != int(N):
        raise ConfigError("tau and dx must be positive and n a positive integer")

    def run():
        tw = parse_trawl(trawl)
        if not tw.bounded:
            raise ConfigError("estimate-slices needs a bounded trawl; use simulate-field --trawl for unbounded ones")
        slice_estimation(tw, tau, dx, int(N), rng).save(out)

    _guard(run)


@main.command()
@click.argument("kind", type=click.Choice(["acf", "gmm", "mse"]))
@click.option("--config", "config_path", type=click.Path(dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--rng", type=int, default=0)
def experiment(kind, config_path, out, rng):
    """Validation experiments; writes a CSV report.

    acf: trawl, seed_dist, runs, k, tau, max_lag. gmm: deltas, reps, k, tau.
    mse: trawl, seed_dist (with jumps), eps list, reps.
    """
    from . import stats

    conf = read_config_file(config_path) if config_path else {}

    def get(key, default=None, cast=float):
        v = conf.get(key, default)
        if v is None:
            raise ConfigError(f"experiment {kind} needs {key}")
        try:
            return cast(v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {v!r}") from exc

    def floats(key, default):
        v = conf.get(key, default)
        if isinstance(v, str):
            v = [float(p) for p in v.replace(",", " ").split()]
        return [float(p) for p in v]

    def run():
        if kind == "acf":
            trawl = parse_trawl(get("trawl", "exponential(1)", str))
            seed = parse_seed(get("seed_dist", "gaussian(0,1)", str))
            tau, max_lag = get("tau", 0.5), get("max_lag", 5, int)
            emp, theo = stats.acf_experiment(trawl, seed, get("runs", 100, int), get("k", 1000, int), tau, max_lag, rng)
            rows = ["lag,empirical,theoretical"] + [
                f"{h},{_fmt(e)},{_fmt(t)}" for h, (e, t) in enumerate(zip(emp, theo), 1)
            ]
        elif kind == "gmm":
            res = stats.gmm_experiment(
                floats("deltas", [0.1, 0.075, 0.05, 0.025]), get("reps", 100, int), get("k", 1000, int), get("tau", 0.15), rng=rng
            )
            rows = ["method,k,theta,lambda"] + [f"{m},{','.join(_fmt(v) for v in e)}" for m, e in res.items()]
        else:
            trawl = parse_trawl(get("trawl", "exponential(1)", str))
            seed = parse_seed(get("seed_dist", "gamma(2,0.3333333333333333)", str))
            _, j = levy.levy_ito_split(seed)
            rep = stats.convergence_experiment(
                "cpp", trawl, seed, floats("eps", [0.02, 0.01, 0.005]), get("reps", 1000, int), rng,
                measure=j.measure, k=get("k", 1, int), tau=get("tau", 1.0),
            )
            rows = ["eps,empirical,bound"] + [",".join(_fmt(v) for v in r) for r in rep.rows]
            rows.append(f"# slope,{_fmt(rep.slope)}")
        rows.append(f"# config_hash,{stats.config_hash(dict(conf, kind=kind, rng=rng))}")
        return "\n".join(rows) + "\n"

    _atomic_write(out, _guard(run))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
