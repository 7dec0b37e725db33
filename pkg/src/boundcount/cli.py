"""Config-driven command line driver.

Every run writes one table (``<command>.csv`` or ``.json``) and a
``manifest.json`` into ``--out``.  Invalid configurations fail before any
computation and leave no files behind.  Errors are reported on stderr as a
single JSON record.

Exit codes: 0 success, 2 configuration error, 3 module error, 4 validation
violations found.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import os
import platform
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

import numpy as np
import scipy
import yaml

from boundcount import __version__
from boundcount.errors import BoundcountError, ConfigError
from boundcount.kernel import ContinuumBox, KineticSymbol, LatticeWindow, PotentialField, SymbolKind, make_potential

SCHEMA_VERSION = 1
COMMANDS = ("gfun", "bound", "classify", "oracle", "existence", "bcs", "validate", "sweep")
EXIT_CONFIG, EXIT_MODULE, EXIT_VIOLATION = 2, 3, 4

log = logging.getLogger("boundcount")


# ---------------------------------------------------------------------------
# config parsing


_SYMBOL_FACTORIES: dict[str, tuple[Callable, tuple[str, ...]]] = {
    SymbolKind.POWER.value: (KineticSymbol.power, ("gamma",)),
    SymbolKind.SHIFTED_POWER.value: (KineticSymbol.shifted_power, ("gamma", "beta")),
    SymbolKind.MASSIVE_RELATIVISTIC.value: (KineticSymbol.massive_relativistic, ("m",)),
    SymbolKind.RELATIVISTIC_PAIR.value: (KineticSymbol.relativistic_pair, ("P", "M", "mu_plus")),
    SymbolKind.ULTRA_RELATIVISTIC_PAIR.value: (KineticSymbol.ultra_relativistic_pair, ("P", "mu_plus")),
    SymbolKind.HEAVY_MASSLESS_PAIR.value: (KineticSymbol.heavy_massless_pair, ("P", "m")),
    SymbolKind.BCS.value: (KineticSymbol.bcs, ("beta", "mu")),
    SymbolKind.DISCRETE_LAPLACIAN.value: (KineticSymbol.discrete_laplacian, ()),
}


def parse_symbol(spec: dict) -> KineticSymbol:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("symbol spec needs a 'kind'")
    kind = spec["kind"]
    if kind not in _SYMBOL_FACTORIES:
        raise ConfigError(f"symbol kind {kind!r} is not available from a config file")
    factory, names = _SYMBOL_FACTORIES[kind]
    d = spec.get("d", spec.get("dim"))
    if d is None:
        raise ConfigError("symbol spec needs 'd'")
    extra = set(spec) - {"kind", "d", "dim", *names}
    if extra:
        raise ConfigError(f"unknown symbol fields {sorted(extra)}")
    kwargs = {k: spec[k] for k in names if k in spec}
    try:
        return factory(int(d), **kwargs)
    except (TypeError, BoundcountError) as exc:
        raise ConfigError(f"invalid symbol spec: {exc}") from exc


def parse_domain(spec: dict):
    kind = spec.get("type")
    try:
        if kind == "box":
            d = int(spec["d"])
            L = np.broadcast_to(np.asarray(spec["L"], dtype=float), (d,))
            n = np.broadcast_to(np.asarray(spec["n"], dtype=int), (d,))
            return ContinuumBox(tuple(L), tuple(n))
        if kind == "lattice":
            return LatticeWindow.cube(int(spec["d"]), int(spec["radius"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid domain spec: {exc}") from exc
    raise ConfigError("domain type must be 'box' or 'lattice'")


def parse_potential(spec: dict) -> PotentialField:
    if not isinstance(spec, dict) or "family" not in spec or "domain" not in spec:
        raise ConfigError("potential spec needs 'family' and 'domain'")
    params = {k: v for k, v in spec.items() if k not in ("family", "domain")}
    try:
        return make_potential(spec["family"], parse_domain(spec["domain"]), **params)
    except BoundcountError as exc:
        raise ConfigError(f"invalid potential spec: {exc}") from exc


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        data = json.loads(text) if path.endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    return data


@dataclass
class CampaignConfig:
    command: str
    symbol: dict | None = None
    potential: dict | None = None
    settings: dict = field(default_factory=dict)
    seed: int = 0
    workers: int = 1

    def echo(self) -> dict:
        return {
            "command": self.command,
            "symbol": self.symbol,
            "potential": self.potential,
            "settings": self.settings,
            "seed": self.seed,
            "workers": self.workers,
        }


def _needs(cfg: CampaignConfig, *keys: str) -> None:
    for key in keys:
        if getattr(cfg, key) is None:
            raise ConfigError(f"command {cfg.command!r} needs a '{key}' section")


# ---------------------------------------------------------------------------
# commands; each returns a job list so parsing completes before any work


Job = Callable[[], list[dict]]


def _options(cls, spec, name: str):
    """Build a config dataclass from a settings mapping, rejecting unknown keys."""
    if not isinstance(spec, dict):
        raise ConfigError(f"settings.{name} must be a mapping")
    try:
        return cls(**spec)
    except TypeError as exc:
        raise ConfigError(f"invalid settings.{name}: {exc}") from exc


def _plan_gfun(cfg: CampaignConfig) -> Job:
    from boundcount.gfunction import g_closed_values, g_numeric_values, has_catalog

    _needs(cfg, "symbol")
    symbol = parse_symbol(cfg.symbol)
    u = np.atleast_1d(np.asarray(cfg.settings.get("u", [0.5, 1.0, 2.0]), dtype=float))
    path = cfg.settings.get("path", "auto")
    if path not in ("auto", "closed", "numeric"):
        raise ConfigError("gfun path must be auto, closed or numeric")
    if path == "closed" and not has_catalog(symbol):
        raise ConfigError("no closed form for this symbol")

    def run():
        if path == "closed" or (path == "auto" and has_catalog(symbol)):
            vals, errs, method = g_closed_values(symbol, u), np.zeros_like(u), "closed"
        else:
            vals, errs, m = g_numeric_values(symbol, u)
            method = m.value
        return [{"kind": symbol.kind.value, "d": symbol.dim, "u": float(a), "G": float(g), "err": float(e), "method": method} for a, g, e in zip(u, vals, errs)]

    return run


def _plan_bound(cfg: CampaignConfig) -> Job:
    from boundcount.bounds import AlphaGridConfig, clr_bound, discrete_bound, optimize_alpha, optimize_discrete_alpha

    _needs(cfg, "symbol", "potential")
    symbol, potential = parse_symbol(cfg.symbol), parse_potential(cfg.potential)
    alpha = cfg.settings.get("alpha")
    grid = _options(AlphaGridConfig, cfg.settings.get("alpha_grid", {}), "alpha_grid")
    side = cfg.settings.get("side", "Below0")
    discrete = symbol.is_discrete

    def run():
        if discrete:
            rep = discrete_bound(symbol, potential, alpha, side) if alpha is not None else optimize_discrete_alpha(symbol, potential, side, grid)
        else:
            rep = clr_bound(symbol, potential, alpha) if alpha is not None else optimize_alpha(symbol, potential, grid)
        return [rep.row()]

    return run


def _plan_classify(cfg: CampaignConfig) -> Job:
    from boundcount.gfunction import thickness_classify

    _needs(cfg, "symbol")
    symbol = parse_symbol(cfg.symbol)

    def run():
        v = thickness_classify(symbol)
        return [{"kind": symbol.kind.value, "d": symbol.dim, "params_hash": symbol.params_hash(), "regime": v.regime.value, "growth_exponent": v.growth_exponent}]

    return run


def _plan_oracle(cfg: CampaignConfig) -> Job:
    from boundcount.oracle import SpectrumConfig, continuum_spectrum, lattice_eigencount

    _needs(cfg, "potential")
    potential = parse_potential(cfg.potential)
    s = cfg.settings
    if potential.is_lattice:
        window = s.get("window")
        k = int(s.get("k", 4))
        return lambda: [lattice_eigencount(potential, window, k=k).row(s.get("instance_id", ""))]
    _needs(cfg, "symbol")
    symbol = parse_symbol(cfg.symbol)
    spec = _options(SpectrumConfig, s.get("spectrum", {}), "spectrum")
    return lambda: [continuum_spectrum(symbol, potential, spec).row(s.get("instance_id", ""))]


def _plan_existence(cfg: CampaignConfig) -> Job:
    from boundcount.existence import corrected_trial_scan

    _needs(cfg, "symbol", "potential")
    symbol, potential = parse_symbol(cfg.symbol), parse_potential(cfg.potential)
    ns = [int(n) for n in np.atleast_1d(cfg.settings.get("n", [4]))]
    center = cfg.settings.get("omega")
    return lambda: [corrected_trial_scan(symbol, potential, center, n).row() for n in ns]


def _plan_bcs(cfg: CampaignConfig) -> Job:
    from boundcount.bcs import BracketConfig, critical_beta

    _needs(cfg, "potential")
    s = cfg.settings
    mu = float(s.get("mu", 1.0))
    bracket = _options(BracketConfig, s.get("bracket", {}), "bracket")
    base = dict(cfg.potential)
    depths = np.atleast_1d(s.get("depths", [base.get("depth", 1.0)]))
    potentials = [(float(dp), parse_potential({**base, "depth": float(dp)})) for dp in depths]

    def run():
        return [critical_beta(mu, V, bracket).row(depth) for depth, V in potentials]

    return run


def _validate_instance(args) -> dict:
    from boundcount.bounds import AlphaGridConfig, discrete_bound
    from boundcount.oracle import lattice_eigencount

    i, d, window, s = args
    dom = LatticeWindow.cube(d, window)
    V = make_potential(
        "RandomSites",
        dom,
        depth_max=s["depth_max"],
        support_radius=s["support_radius"],
        seed=s["seed"],
        stream=i,
        fill=s["fill"],
    )
    symbol = KineticSymbol.discrete_laplacian(d)
    alphas = AlphaGridConfig(points=s["alpha_points"]).grid()
    bounds = np.array([discrete_bound(symbol, V, a).bound for a in alphas])
    count = lattice_eigencount(V, window, k=0).count_below
    bmin = float(bounds.min())
    violated = bool(np.any(bounds < count))
    return {"instance_id": i, "bound_min_over_alpha": bmin, "oracle_count": count, "violated": violated}


def _plan_validate(cfg: CampaignConfig) -> Job:
    s = cfg.settings
    try:
        N = int(s.get("N", 50))
        d = int(s.get("d", 3))
        window = int(s.get("window", 24))
        opts = {
            "depth_max": float(s.get("depth_max", 8.0)),
            "support_radius": int(s.get("support_radius", 2)),
            "fill": float(s.get("fill", 0.5)),
            "alpha_points": int(s.get("alpha_points", 200)),
            "seed": int(cfg.seed),
        }
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid validate settings: {exc}") from exc
    if N < 0 or d < 1 or window <= opts["support_radius"]:
        raise ConfigError("validate needs N >= 0, d >= 1 and window > support_radius")
    jobs = [(i, d, window, opts) for i in range(N)]

    def run():
        return _map(_validate_instance, jobs, cfg.workers)

    return run


def _set_path(cfg: dict, path: str, value) -> dict:
    out = json.loads(json.dumps(cfg))
    node = out
    keys = path.split(".")
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value
    return out


def _plan_sweep(cfg: CampaignConfig) -> Job:
    s = cfg.settings
    base = s.get("base")
    grid = s.get("grid")
    if not isinstance(base, str) or base not in COMMANDS or base == "sweep":
        raise ConfigError("sweep needs settings.base naming another command")
    if not isinstance(grid, dict) or not grid:
        raise ConfigError("sweep needs settings.grid mapping dotted paths to value lists")
    keys = sorted(grid)
    plans = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        sub = {"symbol": cfg.symbol, "potential": cfg.potential, "settings": {k: v for k, v in s.items() if k not in ("base", "grid")}}
        for k, v in zip(keys, combo):
            sub = _set_path(sub, k, v)
        child = CampaignConfig(base, sub["symbol"], sub["potential"], sub["settings"], cfg.seed, 1)
        plans.append((dict(zip(keys, combo)), PLANNERS[base](child)))

    def run():
        rows = []
        for values, job in plans:
            for row in job():
                rows.append({**values, **row})
        return rows

    return run


PLANNERS: dict[str, Callable[[CampaignConfig], Job]] = {
    "gfun": _plan_gfun,
    "bound": _plan_bound,
    "classify": _plan_classify,
    "oracle": _plan_oracle,
    "existence": _plan_existence,
    "bcs": _plan_bcs,
    "validate": _plan_validate,
    "sweep": _plan_sweep,
}


def _map(func, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


# ---------------------------------------------------------------------------
# output


def _cell(v: Any) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


EMPTY_COLUMNS = {
    "validate": ["instance_id", "bound_min_over_alpha", "oracle_count", "violated"],
    "bcs": ["mu", "depth", "beta_lo", "beta_hi", "beta_cr", "iterations"],
}


def render(rows: list[dict], fmt: str, columns: list[str] | None = None) -> str:
    if fmt == "json":
        return json.dumps({"schema_version": SCHEMA_VERSION, "rows": rows}, indent=2, default=_cell) + "\n"
    buf = io.StringIO()
    buf.write(f"# schema_version={SCHEMA_VERSION}\n")
    columns = list(columns or [])
    for row in rows:
        columns.extend(k for k in row if k not in columns)
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _cell(v) for k, v in row.items()})
    return buf.getvalue()


def atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _error_record(exc: BaseException, code: int) -> str:
    return json.dumps({"error": type(exc).__name__, "origin": getattr(exc, "origin", "python"), "message": str(exc), "exit_code": code})


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="boundcount", description="Eigenvalue counting bounds, oracles and certificates.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="YAML or JSON campaign file")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--workers", type=int, help="worker processes (overrides the config)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    return p


def make_config(args: argparse.Namespace) -> CampaignConfig:
    data = load_config(args.config)
    known = {"command", "symbol", "potential", "settings", "seed", "workers"}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown config sections {sorted(extra)}")
    if data.get("command", args.command) != args.command:
        raise ConfigError(f"config is for {data['command']!r}, not {args.command!r}")
    settings = data.get("settings") or {}
    if not isinstance(settings, dict):
        raise ConfigError("settings must be a mapping")
    seed = args.seed if args.seed is not None else data.get("seed", 0)
    workers = args.workers if args.workers is not None else data.get("workers", 1)
    try:
        seed, workers = int(seed), int(workers)
    except (TypeError, ValueError) as exc:
        raise ConfigError("seed and workers must be integers") from exc
    if seed < 0 or workers < 1:
        raise ConfigError("seed must be >= 0 and workers >= 1")
    return CampaignConfig(args.command, data.get("symbol"), data.get("potential"), settings, seed, workers)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("BOUNDCOUNT_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args)
        job = PLANNERS[cfg.command](cfg)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    except ConfigError as exc:
        print(_error_record(exc, EXIT_CONFIG), file=sys.stderr)
        return EXIT_CONFIG
    except (BoundcountError, OSError) as exc:
        print(_error_record(exc, EXIT_CONFIG), file=sys.stderr)
        return EXIT_CONFIG

    start = time.perf_counter()
    try:
        rows = job()
    except BoundcountError as exc:
        print(_error_record(exc, EXIT_MODULE), file=sys.stderr)
        return EXIT_MODULE
    wall = time.perf_counter() - start

    status = EXIT_VIOLATION if cfg.command == "validate" and any(r["violated"] for r in rows) else 0
    table = out / f"{cfg.command}.{args.format}"
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": cfg.command,
        "config": cfg.echo(),
        "seed": cfg.seed,
        "versions": {"boundcount": __version__, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_time_s": wall,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "rows": len(rows),
        "table": table.name,
        "exit_code": status,
    }
    if cfg.command == "validate":
        manifest["summary"] = {
            "instances": len(rows),
            "violations": sum(bool(r["violated"]) for r in rows),
            "max_count": max((r["oracle_count"] for r in rows), default=0),
        }
    atomic_write(table, render(rows, args.format, EMPTY_COLUMNS.get(cfg.command)))
    atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, default=_cell) + "\n")
    if status:
        print(_error_record(RuntimeError(f"{manifest['summary']['violations']} bound violations"), status), file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
