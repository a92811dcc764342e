"""Command-line front end: plain-text configs in, deterministic CSVs out.

Subcommands (each takes one positional config-file path):

* ``run``      -- evolve a benchmark case; writes ``solution.csv``,
  ``entropy.csv`` and one ``snapshot_NNN.csv`` per requested time.
* ``steady``   -- solve for the scheme's discrete steady state; writes
  ``solution.csv``.
* ``converge`` -- error table over a (p, nx) matrix; writes
  ``convergence.csv``.  May run cells in parallel (BALANCE_DG_THREADS).
* ``perturb``  -- evolve a depth bump together with an unperturbed twin;
  writes ``solution.csv``, ``baseline.csv``, snapshots, and prints the
  twin's spurious-noise level.
* ``entropy``  -- record the entropy budget of a run; writes
  ``entropy.csv`` only.  1D cases are closed periodically so the series
  measures production rather than boundary exchange.

Config files are UTF-8 ``key=value`` lines ('#' starts a comment).  Unknown
keys are rejected.  Exit codes: 0 success, 2 config error (the diagnostic
names the offending key), 3 solver abort.

Floats in CSVs carry 17 significant digits, so reading them back
reproduces the binary values exactly; rows are element-major, node-minor,
and repeated runs of one config produce bit-identical files.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .equilibria import discrete_global_flux_solution
from .harness import (
    CaseSpec,
    case_names,
    convergence_study,
    entropy_timeseries,
    get_case,
    perturbation_experiment,
    run_case,
)
from .solver_core import SchemeConfig, SolverAbort
from .solver_2d import Mesh2D

__all__ = [
    "ConfigError",
    "CONFIG_KEYS",
    "parse_config",
    "serialize_config",
    "main",
]


class ConfigError(Exception):
    """A config file could not be read, parsed, or resolved."""


#: Recognized config keys, in canonical serialization order.
CONFIG_KEYS: Tuple[str, ...] = (
    "case", "p", "nx", "ny", "cfl", "t_final",
    "quadrature", "source_variant", "entropy_correction",
    "perturbation_amplitude", "perturbation_center",
    "output_dir", "snapshot_times",
)

_QUADRATURES = ("standard", "global_flux")
_SOURCE_VARIANTS = ("basic", "modified")
#: config-file spelling -> SchemeConfig spelling
_EC_NAMES = {"off": "off", "analytical": "analytical_flux",
             "global": "global_flux_flux"}


# ---------------------------------------------------------------------------
# config parsing / serialization
# ---------------------------------------------------------------------------


def parse_config(text: str) -> Dict[str, str]:
    """Parse ``key=value`` lines into a dict of raw strings.

    Raises :class:`ConfigError` (naming the line and key) for anything that
    is not a comment, a blank line, or a unique known key with a value.
    """
    pairs: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(
                f"line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for key {key!r}")
        pairs[key] = value
    return pairs


def serialize_config(pairs: Dict[str, str]) -> str:
    """Canonical text form: known-key order, one pair per line.

    ``parse_config(serialize_config(pairs)) == pairs`` for any parseable
    ``pairs``, and serializing again reproduces the same bytes.
    """
    lines = [f"{key}={pairs[key]}" for key in CONFIG_KEYS if key in pairs]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# typed settings
# ---------------------------------------------------------------------------


def _require(pairs: Dict[str, str], key: str) -> str:
    if key not in pairs:
        raise ConfigError(f"missing required key '{key}'")
    return pairs[key]


def _as_int(value: str, key: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"key '{key}': expected an integer, "
                          f"got {value!r}") from None


def _as_float(value: str, key: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"key '{key}': expected a number, "
                          f"got {value!r}") from None


def _as_int_list(value: str, key: str) -> List[int]:
    return [_as_int(part.strip(), key) for part in value.split(",")]


def _as_float_list(value: str, key: str) -> List[float]:
    return [_as_float(part.strip(), key) for part in value.split(",")]


@dataclass
class Settings:
    """A config file resolved against a case and the scheme defaults."""

    case: CaseSpec
    scheme: SchemeConfig
    ps: List[int]
    ns: List[int]
    ny: Optional[int]
    t_final: Optional[float]
    xi: float
    center: Optional[Tuple[float, ...]]
    output_dir: str
    snapshot_times: Tuple[float, ...] = field(default_factory=tuple)

    @property
    def grid(self):
        """Element counts for a single run (int in 1D, pair in 2D)."""
        if self.case.dim == 1:
            return self.ns[0]
        return (self.ns[0], self.ny if self.ny is not None else self.ns[0])


def resolve_settings(pairs: Dict[str, str], *,
                     lists: bool = False) -> Settings:
    """Validate raw pairs and build typed settings.

    ``lists`` permits comma lists for ``p`` and ``nx`` (the converge
    command); other commands require scalars.
    """
    try:
        case = get_case(_require(pairs, "case"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    ps = _as_int_list(_require(pairs, "p"), "p")
    ns = _as_int_list(_require(pairs, "nx"), "nx")
    if not lists:
        for key, values in (("p", ps), ("nx", ns)):
            if len(values) != 1:
                raise ConfigError(f"key '{key}': a comma list is only valid "
                                  "for the converge command")
    for key, values, low in (("p", ps, 1), ("nx", ns, 1)):
        for v in values:
            if v < low:
                raise ConfigError(f"key '{key}': must be >= {low}, got {v}")

    ny = None
    if "ny" in pairs:
        if case.dim != 2:
            raise ConfigError(f"key 'ny' is only valid for 2D cases "
                              f"(case {case.name!r} is 1D)")
        ny = _as_int(pairs["ny"], "ny")
        if ny < 1:
            raise ConfigError(f"key 'ny': must be >= 1, got {ny}")

    cfl = _as_float(pairs["cfl"], "cfl") if "cfl" in pairs else None
    if cfl is not None and cfl <= 0.0:
        raise ConfigError(f"key 'cfl': must be positive, got {cfl}")
    t_final = _as_float(pairs["t_final"], "t_final") \
        if "t_final" in pairs else None
    if t_final is not None and t_final < 0.0:
        raise ConfigError(f"key 't_final': must be >= 0, got {t_final}")

    quadrature = pairs.get("quadrature", "global_flux")
    if quadrature not in _QUADRATURES:
        raise ConfigError(f"key 'quadrature': expected one of "
                          f"{'|'.join(_QUADRATURES)}, got {quadrature!r}")
    source_variant = pairs.get("source_variant", "modified")
    if source_variant not in _SOURCE_VARIANTS:
        raise ConfigError(f"key 'source_variant': expected one of "
                          f"{'|'.join(_SOURCE_VARIANTS)}, "
                          f"got {source_variant!r}")
    ec_raw = pairs.get("entropy_correction", "off")
    if ec_raw not in _EC_NAMES:
        raise ConfigError(f"key 'entropy_correction': expected one of "
                          f"{'|'.join(_EC_NAMES)}, got {ec_raw!r}")
    if ec_raw == "global" and quadrature != "global_flux":
        raise ConfigError("key 'entropy_correction': the global flavor "
                          "requires quadrature=global_flux")

    scheme = SchemeConfig(p=ps[0], cfl=cfl, quadrature_mode=quadrature,
                          source_variant=source_variant,
                          entropy_correction=_EC_NAMES[ec_raw])
    try:
        scheme.validate()
    except ValueError as exc:
        raise ConfigError(f"scheme keys (quadrature, source_variant, "
                          f"entropy_correction, cfl, p): {exc}") from None

    xi = _as_float(pairs["perturbation_amplitude"], "perturbation_amplitude")\
        if "perturbation_amplitude" in pairs else 0.0
    center = None
    if "perturbation_center" in pairs:
        values = _as_float_list(pairs["perturbation_center"],
                                "perturbation_center")
        if len(values) != case.dim:
            raise ConfigError(f"key 'perturbation_center': case "
                              f"{case.name!r} is {case.dim}D, needs "
                              f"{case.dim} coordinate(s), got {len(values)}")
        center = tuple(values)

    if "snapshot_times" in pairs:
        snaps = tuple(_as_float_list(pairs["snapshot_times"],
                                     "snapshot_times"))
    else:
        snaps = tuple(case.snapshot_times)

    return Settings(case=case, scheme=scheme, ps=ps, ns=ns, ny=ny,
                    t_final=t_final, xi=xi, center=center,
                    output_dir=pairs.get("output_dir", "."),
                    snapshot_times=snaps)


# ---------------------------------------------------------------------------
# CSV writers
# ---------------------------------------------------------------------------


def _fnum(x) -> str:
    return format(float(x), ".17g")


def _write_csv(path: str, header: Sequence[str],
               rows: Sequence[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _bathymetry_nodal(case: CaseSpec, mesh) -> np.ndarray:
    if case.params.b is None:
        return np.zeros(mesh.X.shape if case.dim == 2 else mesh.nodes.shape)
    if case.dim == 2:
        return np.asarray(case.params.b(mesh.X, mesh.Y), dtype=float)
    return np.asarray(case.params.b(mesh.nodes), dtype=float)


def write_solution_csv(path: str, case: CaseSpec, mesh, U) -> None:
    """State table, element-major and node-minor.

    1D columns: element,node,x,h,hu,hv,b.  2D adds y and flattens the
    (i, j) node grid as node = i * (p + 1) + j with the element index
    ex * ny + ey.
    """
    U = np.asarray(U, dtype=float)
    b = _bathymetry_nodal(case, mesh)
    rows = []
    if isinstance(mesh, Mesh2D):
        header = ["element", "node", "x", "y", "h", "hu", "hv", "b"]
        npts = mesh.basis.n_nodes
        for ex in range(mesh.nx):
            for ey in range(mesh.ny):
                for i in range(npts):
                    for j in range(npts):
                        rows.append([
                            str(ex * mesh.ny + ey), str(i * npts + j),
                            _fnum(mesh.X[ex, ey, i, j]),
                            _fnum(mesh.Y[ex, ey, i, j]),
                            _fnum(U[ex, ey, i, j, 0]),
                            _fnum(U[ex, ey, i, j, 1]),
                            _fnum(U[ex, ey, i, j, 2]),
                            _fnum(b[ex, ey, i, j]),
                        ])
    else:
        header = ["element", "node", "x", "h", "hu", "hv", "b"]
        for e in range(mesh.n_elements):
            for j in range(mesh.nodes.shape[1]):
                rows.append([
                    str(e), str(j), _fnum(mesh.nodes[e, j]),
                    _fnum(U[e, j, 0]), _fnum(U[e, j, 1]), _fnum(U[e, j, 2]),
                    _fnum(b[e, j]),
                ])
    _write_csv(path, header, rows)


def write_entropy_csv(path: str, series) -> None:
    header = ["t", "total_entropy", "n_tot"]
    rows = [[_fnum(t), _fnum(s), _fnum(n)]
            for t, s, n in zip(series.t, series.total_entropy, series.n_tot)]
    _write_csv(path, header, rows)


def write_convergence_csv(path: str, report) -> None:
    """One row per (p, N) cell; slope columns repeat the per-degree fit
    of the depth error (NaN for failed cells or inconclusive fits)."""
    header = ["p", "N", "err_all_h", "err_end_h", "err_all_hu", "err_end_hu",
              "err_all_hv", "err_end_hv", "slope_all", "slope_end"]

    def fit_str(fit) -> str:
        return "nan" if fit.order is None else _fnum(fit.order)

    rows = []
    for cell in report.cells:
        if cell.failure is not None:
            errs = ["nan"] * 6
        else:
            errs = [_fnum(v) for pair in zip(cell.err_all, cell.err_end)
                    for v in pair]
        fits = report.slopes[cell.p]
        rows.append([str(cell.p), str(cell.n)] + errs +
                    [fit_str(fits["all_nodes"]), fit_str(fits["end_nodes"])])
    _write_csv(path, header, rows)


def _out_path(settings: Settings, name: str) -> str:
    os.makedirs(settings.output_dir, exist_ok=True)
    return os.path.join(settings.output_dir, name)


def _write_snapshots(settings: Settings, case: CaseSpec, mesh,
                     snapshots) -> None:
    for idx, (t, U) in enumerate(snapshots):
        path = _out_path(settings, f"snapshot_{idx:03d}.csv")
        write_solution_csv(path, case, mesh, U)
        print(f"wrote {path} (t={_fnum(t)})")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_run(pairs: Dict[str, str]) -> int:
    s = resolve_settings(pairs)
    run = run_case(s.case, s.scheme, n=s.grid, xi=s.xi, center=s.center,
                   t_final=s.t_final, baseline="analytic",
                   snapshot_times=s.snapshot_times)
    sol = _out_path(s, "solution.csv")
    write_solution_csv(sol, s.case, run.mesh, run.result.U)
    ent = _out_path(s, "entropy.csv")
    write_entropy_csv(ent, entropy_timeseries(run.result))
    print(f"wrote {sol}")
    print(f"wrote {ent}")
    _write_snapshots(s, s.case, run.mesh, run.result.snapshots)
    print(f"case={s.case.name} t={_fnum(run.result.t)} "
          f"steps={run.result.n_steps}")
    return 0


def cmd_steady(pairs: Dict[str, str]) -> int:
    from .harness import build_mesh
    from .quadrature import build_basis
    from .solver_2d import directional_steady_solution

    s = resolve_settings(pairs)
    if s.case.steady is None:
        raise ConfigError(f"case {s.case.name!r} has no steady family to "
                          "solve for")
    basis = build_basis(s.scheme.p)
    mesh = build_mesh(s.case, basis, s.grid)
    try:
        if s.case.dim == 1:
            U = discrete_global_flux_solution(
                mesh, basis, s.case.steady, s.case.params,
                source_variant=s.scheme.source_variant).U
        else:
            U = directional_steady_solution(
                mesh, basis, s.case.steady, s.case.params,
                s.case.steady_direction,
                source_variant=s.scheme.source_variant)
    except ValueError as exc:   # Newton breakdown on a valid config
        print(f"steady solve failed: {exc}", file=sys.stderr)
        return 3
    sol = _out_path(s, "solution.csv")
    write_solution_csv(sol, s.case, mesh, U)
    print(f"wrote {sol}")
    return 0


def cmd_converge(pairs: Dict[str, str]) -> int:
    s = resolve_settings(pairs, lists=True)
    if s.case.steady is not None:
        target = "steady_solution"
    elif s.case.has_exact_solution:
        target = "finite_time"
    else:
        raise ConfigError(f"case {s.case.name!r} has no reference solution "
                          "for a convergence study")
    env = os.environ.get("BALANCE_DG_THREADS")
    if env is None:
        workers = os.cpu_count() or 1
    else:
        try:
            workers = int(env)
        except ValueError:
            raise ConfigError(f"BALANCE_DG_THREADS must be an integer, "
                              f"got {env!r}") from None
        if workers < 1:
            raise ConfigError(f"BALANCE_DG_THREADS must be >= 1, "
                              f"got {workers}")
    report = convergence_study(s.case, s.ps, s.ns, target=target,
                               config=s.scheme, t_final=s.t_final,
                               n_workers=min(workers, len(s.ps) * len(s.ns)))
    path = _out_path(s, "convergence.csv")
    write_convergence_csv(path, report)
    print(f"wrote {path}")
    for p, fits in report.slopes.items():
        print(f"p={p} slope_all={fit_or_nan(fits['all_nodes'])} "
              f"slope_end={fit_or_nan(fits['end_nodes'])}")
    return 0


def fit_or_nan(fit) -> str:
    return "nan" if fit.order is None else format(fit.order, ".3f")


def cmd_perturb(pairs: Dict[str, str]) -> int:
    s = resolve_settings(pairs)
    result = perturbation_experiment(
        s.case, s.xi, schemes={"scheme": s.scheme}, n=s.grid,
        center=s.center, t_final=s.t_final, baseline="analytic",
        snapshot_times=s.snapshot_times or None)
    outcome = result.outcomes["scheme"]
    if outcome.failure is not None:
        print(f"solver abort: {outcome.failure}", file=sys.stderr)
        return 3
    base = _out_path(s, "baseline.csv")
    write_solution_csv(base, s.case, result.mesh, result.baseline)
    sol = _out_path(s, "solution.csv")
    write_solution_csv(sol, s.case, result.mesh, outcome.run.result.U)
    print(f"wrote {base}")
    print(f"wrote {sol}")
    _write_snapshots(s, s.case, result.mesh, outcome.run.result.snapshots)
    print(f"spurious_noise={_fnum(outcome.spurious_noise)}")
    return 0


def cmd_entropy(pairs: Dict[str, str]) -> int:
    s = resolve_settings(pairs)
    boundary = "periodic" if s.case.dim == 1 else None
    run = run_case(s.case, s.scheme, n=s.grid, xi=s.xi, center=s.center,
                   t_final=s.t_final, baseline="analytic", boundary=boundary)
    path = _out_path(s, "entropy.csv")
    write_entropy_csv(path, entropy_timeseries(run.result))
    print(f"wrote {path}")
    series = entropy_timeseries(run.result)
    drift = series.total_entropy[-1] - series.total_entropy[0]
    print(f"entropy_drift={_fnum(drift)}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    epilog = (
        "cases:\n  " + "\n  ".join(case_names()) + "\n\n"
        "config keys (key=value lines, '#' comments):\n"
        "  case                    benchmark name (required)\n"
        "  p                       polynomial degree (required)\n"
        "  nx                      elements in x (required); ny for 2D\n"
        "  cfl                     Courant number (default: 0.5/(2p+1))\n"
        "  t_final                 end time (default: the case's horizon)\n"
        "  quadrature              standard | global_flux (default)\n"
        "  source_variant          basic | modified (default)\n"
        "  entropy_correction      off (default) | analytical | global\n"
        "  perturbation_amplitude  depth-bump height (default 0)\n"
        "  perturbation_center     bump center coordinates\n"
        "  output_dir              directory for CSVs (default '.')\n"
        "  snapshot_times          comma list of capture times\n"
        "\n"
        "converge accepts comma lists for p and nx; BALANCE_DG_THREADS caps\n"
        "its worker count (default: all cores; other commands run serial).\n"
        "entropy closes 1D domains periodically to isolate the budget."
    )
    parser = argparse.ArgumentParser(
        prog="balance-dg",
        description="Well-balanced DG shallow-water solver",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, help_text in (
            ("run", cmd_run, "evolve a case; solution + entropy CSVs"),
            ("steady", cmd_steady, "discrete steady state CSV"),
            ("converge", cmd_converge, "error/slope table CSV"),
            ("perturb", cmd_perturb, "perturbed run with baseline CSV"),
            ("entropy", cmd_entropy, "entropy time-series CSV")):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("config", help="path to a key=value config file")
        sp.set_defaults(func=func)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file "
                              f"{args.config!r}: {exc}") from None
        pairs = parse_config(text)
        return args.func(pairs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverAbort as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
