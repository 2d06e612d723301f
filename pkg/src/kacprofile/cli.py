"""Command-line interface: ``kacprofile {profiles,kernel,simulate,classify,scan,rerun}``.

Every output embeds the fully resolved configuration, so ``kacprofile rerun
FILE`` reproduces it byte for byte. Contract violations exit with status 1
and a JSON error report on stderr; non-convergence exits with status 2.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .errors import ConfigurationError, KacProfileError, NonConvergenceError
from .expr import parse_expression
from .kernels import classify_gibbs, homogeneous_class_weight, limiting_kernel
from .meanfield import homogeneous_potts_minimizers, potts_beta_c
from .simulator import (
    FuzzyPartition,
    McOptions,
    SpinConfiguration,
    estimate_kernel,
    fuzzy_configuration,
    perforated_class_densities,
    torus_point_to_site,
)
from .torus import (
    GridField,
    TorusGrid,
    fields_from_csv,
    fields_to_csv,
    make_kernel,
    normalize_density,
    sample,
)
from .variational import (
    comparison_profiles,
    find_minimizers,
    rate_functional,
    stationarity_residual,
)

EXIT_CONTRACT = 1
EXIT_NONCONVERGENCE = 2


@dataclass
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"command": self.command, "version": __version__, **self.params}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        data.pop("version", None)
        command = data.pop("command")
        return cls(command, data)


# --- input helpers -----------------------------------------------------------------


def _field_source(text: str, d: int, N: int) -> tuple[TorusGrid, np.ndarray, str]:
    """Sample an expression, or read the first data column of a CSV file."""
    path = Path(text)
    if path.suffix == ".csv" and path.is_file():
        grid, fields = fields_from_csv(path.read_text(encoding="utf-8"), d=d)
        name, values = next(iter(fields.items()))
        return grid, values.values, f"file:{path}:{name}"
    grid = TorusGrid(d, N)
    return grid, sample(grid, parse_expression(text)), f"expr:{text}"


def _density(text: str, d: int, N: int):
    grid, values, _ = _field_source(text, d, N)
    return normalize_density(GridField(values, grid))


def _kernel(text: str, grid: TorusGrid):
    if Path(text).suffix == ".csv" and Path(text).is_file():
        kgrid, values, _ = _field_source(text, grid.d, grid.N)
        if kgrid != grid:
            raise ConfigurationError(f"kernel file grid {kgrid} differs from {grid}")
        return make_kernel(grid, values)
    return make_kernel(grid, parse_expression(text))


def _site_point(site, d: int):
    values = [float(v) for v in str(site).split(",")]
    if len(values) != d:
        raise ConfigurationError(f"site {site!r} is not a {d}-dimensional torus point")
    return values[0] if d == 1 else values


def _class_densities(text: str, d: int, N: int, s: int) -> tuple[TorusGrid, np.ndarray]:
    """``--nu``: a CSV file with one column per class or ``;``-separated expressions."""
    path = Path(text)
    if path.is_file():
        grid, fields = fields_from_csv(path.read_text(encoding="utf-8"), d=d)
        layers = np.stack([f.values for f in fields.values()])
    else:
        grid = TorusGrid(d, N)
        layers = np.stack([sample(grid, parse_expression(part)) for part in text.split(";")])
    if layers.shape[0] != s:
        raise ConfigurationError(f"--nu gives {layers.shape[0]} class densities, partition has {s} classes")
    return grid, layers


def _fuzzy_config(text: str, n: int, d: int, s: int, seed: int) -> SpinConfiguration:
    path = Path(text)
    if path.is_file():
        raw = path.read_text(encoding="utf-8").replace(",", " ").split()
        return SpinConfiguration(np.array([int(v) for v in raw]), n, d, s)
    return fuzzy_configuration(text, n, d, s, np.random.default_rng(seed))


def _dumps(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"


# --- commands --------------------------------------------------------------------


def cmd_profiles(p: dict) -> str:
    rho = _density(p["rho"], p["d"], p["grid"])
    J = _kernel(p["kernel"], rho.grid)
    profiles = comparison_profiles(rho, p["beta"], J, tol=p["tol"], max_iter=p["max_iter"])
    rates = {name: rate_functional(rho, p["beta"], J, profiles[name]) for name in ("m_loc", "m_flat", "m_stat")}
    rates["zero"] = rate_functional(rho, p["beta"], J, 0.0)
    residuals = {name: stationarity_residual(rho, p["beta"], J, profiles[name]) for name in ("m_loc", "m_flat", "m_stat")}
    mins = find_minimizers(rho, p["beta"], J, tol=p["tol"], max_iter=p["max_iter"])
    results = {
        "N_rho": rho.mass,
        "rates": rates,
        "residuals": residuals,
        "minimizer_kind": mins.kind,
        "near_critical": mins.near_critical,
        "m_flat_level": float(profiles["m_flat"].values.flat[0]),
    }
    config = RunConfig("profiles", p).to_dict()
    if p["format"] == "json":
        fields = {k: v.values.tolist() for k, v in profiles.items()}
        return _dumps({"config": config, "results": {**results, "grid": rho.grid.header(), "fields": fields}})
    return fields_to_csv(profiles, {"config": config, "results": results})


def cmd_kernel(p: dict) -> str:
    partition = FuzzyPartition.parse(p["partition"], p.get("q"))
    grid, layers = _class_densities(p["nu"], p["d"], p["grid"], partition.s)
    J = _kernel(p["kernel"], grid)
    kv = limiting_kernel(layers, _site_point(p["site"], p["d"]), p["beta"], partition, J)
    results = {
        "kernel": kv.probabilities.tolist(),
        "log_weights": kv.log_weights.tolist(),
        "non_gibbs": kv.non_gibbs,
        **kv.details,
    }
    return _dumps({"config": RunConfig("kernel", p).to_dict(), "results": results})


def cmd_simulate(p: dict) -> str:
    partition = FuzzyPartition.parse(p["partition"], p["q"])
    n, d = p["n"], p["d"]
    grid = TorusGrid(d, n)
    J = _kernel(p["kernel"], grid)
    nu = _fuzzy_config(p["fuzzy_config"], n, d, partition.s, p["seed"])
    site = torus_point_to_site(_site_point(p["site"], d), n, d)
    opts = McOptions(seed=p["seed"], burn_in=p["sweeps"], samples=p["samples"], thin=p["thin"], chains=p["chains"])
    est = estimate_kernel(nu, site, p["beta"], partition, opts, J)
    reference = limiting_kernel(perforated_class_densities(nu, site), grid.points[site], p["beta"], partition, J)
    results = {
        "kernel": est.kernel.tolist(),
        "stderr": est.stderr.tolist(),
        "weights": est.weights.tolist(),
        "weight_stderr": est.weight_stderr.tolist(),
        "limiting_kernel": reference.probabilities.tolist(),
        "diagnostics": est.diagnostics,
    }
    return _dumps({"config": RunConfig("simulate", p).to_dict(), "results": results})


def cmd_classify(p: dict) -> str:
    partition = FuzzyPartition.parse(p["partition"], p["q"])
    verdict = classify_gibbs(p["beta"], partition)
    results = {**verdict.to_dict(), "sizes": list(partition.sizes)}
    return _dumps({"config": RunConfig("classify", p).to_dict(), "results": results})


def cmd_scan(p: dict) -> str:
    r = p["r"]
    betas = np.linspace(p["beta_min"], p["beta_max"], p["points"])
    buf = io.StringIO()
    meta = {"config": RunConfig("scan", p).to_dict(), "results": {"beta_c": potts_beta_c(r)}}
    buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["b", "m_star", "g_min", "n_minimizers", "class_weight"])
    for b in betas:
        res = homogeneous_potts_minimizers(r, float(b))
        weight = homogeneous_class_weight(res.minimizers[-1], float(b))
        writer.writerow([repr(float(b)), repr(res.order_parameter()), repr(res.value), res.n_minimizers, repr(weight)])
    return buf.getvalue()


COMMANDS: dict[str, Callable[[dict], str]] = {
    "profiles": cmd_profiles,
    "kernel": cmd_kernel,
    "simulate": cmd_simulate,
    "classify": cmd_classify,
    "scan": cmd_scan,
}


def run(config: RunConfig) -> str:
    """Execute a resolved configuration and return the output text."""
    if config.command not in COMMANDS:
        raise ConfigurationError(f"unknown command {config.command!r}")
    return COMMANDS[config.command](config.params)


def load_config(path: str) -> RunConfig:
    """Recover the embedded configuration from a JSON or CSV output file."""
    text = Path(path).read_text(encoding="utf-8")
    if text.startswith("#"):
        data = json.loads(text.splitlines()[0][1:])
    else:
        data = json.loads(text)
    return RunConfig.from_dict(data["config"])


# --- argument parsing ------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kacprofile", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_help="output file (default: stdout)"):
        sp.add_argument("--out", default=None, help=out_help)

    sp = sub.add_parser("profiles", help="b, m_loc, m_flat and m_stat on a grid")
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--rho", default="1", help="density expression in u, or a CSV file")
    sp.add_argument("--kernel", default="1+cos(2*pi*u)", help="interaction expression or CSV file")
    sp.add_argument("--grid", type=int, default=512)
    sp.add_argument("--d", type=int, default=1)
    sp.add_argument("--tol", type=float, default=1e-12)
    sp.add_argument("--max-iter", dest="max_iter", type=int, default=100_000)
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    common(sp)

    sp = sub.add_parser("kernel", help="limiting single-site kernel")
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--partition", required=True, help='colours per class, e.g. "1,2|3,4"')
    sp.add_argument("--q", type=int, default=None)
    sp.add_argument("--nu", required=True, help='CSV of class densities or expressions "1;0"')
    sp.add_argument("--site", default="0")
    sp.add_argument("--kernel", default="1+cos(2*pi*u)")
    sp.add_argument("--grid", type=int, default=256)
    sp.add_argument("--d", type=int, default=1)
    common(sp)

    sp = sub.add_parser("simulate", help="Monte-Carlo single-site kernel")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--d", type=int, default=1)
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--partition", required=True)
    sp.add_argument("--fuzzy-config", dest="fuzzy_config", default="homogeneous:1")
    sp.add_argument("--site", default="0")
    sp.add_argument("--kernel", default="1+cos(2*pi*u)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sweeps", type=int, default=500, help="burn-in sweeps per chain")
    sp.add_argument("--samples", type=int, default=2000, help="recorded samples per chain")
    sp.add_argument("--thin", type=int, default=1)
    sp.add_argument("--chains", type=int, default=4)
    common(sp)

    sp = sub.add_parser("classify", help="Gibbs or non-Gibbs verdict")
    sp.add_argument("--q", type=int, required=True)
    sp.add_argument("--partition", required=True)
    sp.add_argument("--beta", type=float, required=True)
    common(sp)

    sp = sub.add_parser("scan", help="homogeneous r-state minimisers over a beta grid")
    sp.add_argument("--r", type=int, default=3)
    sp.add_argument("--beta-min", dest="beta_min", type=float, default=0.5)
    sp.add_argument("--beta-max", dest="beta_max", type=float, default=2.5)
    sp.add_argument("--points", type=int, default=41)
    common(sp)

    sp = sub.add_parser("rerun", help="re-execute the configuration embedded in an output file")
    sp.add_argument("file")
    common(sp)
    return parser


def resolve(args: argparse.Namespace) -> RunConfig:
    if args.command == "rerun":
        return load_config(args.file)
    params = {k: v for k, v in vars(args).items() if k not in ("command", "out")}
    return RunConfig(args.command, params)


def _error_report(exc: BaseException) -> dict:
    """The first library frame below the CLI names the module and operation."""
    module, operation = "cli", "main"
    for frame in traceback.extract_tb(exc.__traceback__):
        path = Path(frame.filename)
        if "kacprofile" in path.parts and path.stem != "cli":
            module, operation = path.stem, frame.name
            break
    report = {"module": module, "operation": operation, "type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, NonConvergenceError):
        report.update(residual=exc.residual, iterations=exc.iterations)
    return {"error": report}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        text = run(resolve(args))
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return 0
    except NonConvergenceError as exc:
        sys.stderr.write(_dumps(_error_report(exc)))
        return EXIT_NONCONVERGENCE
    except (KacProfileError, OSError, ValueError, KeyError) as exc:
        sys.stderr.write(_dumps(_error_report(exc)))
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
