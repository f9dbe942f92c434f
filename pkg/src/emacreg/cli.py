"""Command line interface, configuration parsing and file output.

Subcommands::

    emacreg list
    emacreg run --benchmark gresho --scheme emacreg --out results/
    emacreg converge --axis spatial
    emacreg probe

Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional
from xml.sax.saxutils import quoteattr

import numpy as np

from . import __version__
from .benchmarks import BENCHMARKS, convergence_study, get_benchmark
from .diagnostics import DiagnosticsRecord, designed_probe_fields, momentum_probe
from .errors import FactorizationError, NewtonConvergenceError, StateError
from .femspace import build_space
from .mesh import build_rectangle_mesh
from .schemes import Integrator, Scheme, Stepper

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config",
    "write_diagnostics_csv",
    "read_diagnostics_csv",
    "write_vtu",
    "run_experiment",
    "main",
    "CSV_COLUMNS",
]

CSV_COLUMNS = (
    "t",
    "energy_model",
    "energy_kinetic",
    "momentum_x",
    "momentum_y",
    "ang_momentum",
    "enstrophy",
    "div_u",
    "div_w",
    "err_l2_u",
    "err_l2_w",
    "err_h1_w",
)


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending key."""


@dataclass
class RunConfig:
    benchmark: str = "gresho"
    scheme: Scheme = Scheme.EMACREG
    h: Optional[float] = None
    dt: Optional[float] = None
    T: Optional[float] = None
    nu: Optional[float] = None
    alpha: Optional[float] = None
    integrator: Optional[Integrator] = None
    newton_tol: float = 1e-10
    newton_max: int = 20
    out: str = "results"
    every: int = 1
    formats: tuple = ("csv",)
    variant: Optional[str] = None
    warnings: list = field(default_factory=list)

    def validate(self) -> RunConfig:
        if self.benchmark not in BENCHMARKS:
            raise ConfigError(f"benchmark: unknown benchmark {self.benchmark!r}; choose from {sorted(BENCHMARKS)}")
        for key in ("h", "dt", "T", "newton_tol"):
            v = getattr(self, key)
            if v is not None and not v > 0:
                raise ConfigError(f"{key}: must be positive, got {v}")
        for key in ("nu", "alpha"):
            v = getattr(self, key)
            if v is not None and v < 0:
                raise ConfigError(f"{key}: must be non-negative, got {v}")
        if self.every < 1:
            raise ConfigError(f"every: must be at least 1, got {self.every}")
        if self.newton_max < 1:
            raise ConfigError(f"newton_max: must be at least 1, got {self.newton_max}")
        bad = [f for f in self.formats if f not in ("csv", "vtu")]
        if bad:
            raise ConfigError(f"formats: unknown format {bad[0]!r}")
        if self.alpha is not None and not self.scheme.filtered:
            msg = f"alpha is ignored for scheme {self.scheme.value}"
            self.warnings.append(msg)
            log.warning(msg)
            self.alpha = None
        if self.variant is not None and self.benchmark != "kh":
            raise ConfigError("variant: only the kh benchmark has variants")
        return self

    def benchmark_spec(self):
        kwargs = {k: getattr(self, k) for k in ("h", "dt", "T", "nu", "alpha") if getattr(self, k) is not None}
        if self.variant is not None:
            kwargs["variant"] = self.variant
        spec = get_benchmark(self.benchmark, **kwargs)
        if self.integrator is not None:
            spec = spec.with_(integrator=self.integrator)
        return spec

    def stepper_config(self, spec=None):
        spec = spec or self.benchmark_spec()
        return spec.config(self.scheme, newton_tol=self.newton_tol, newton_max=self.newton_max)

    def echo(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (Scheme, Integrator)):
                v = v.value
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d


def _as_formats(text):
    return tuple(s.strip() for s in str(text).split(",") if s.strip())


_CONVERTERS = {
    "benchmark": str,
    "scheme": Scheme,
    "h": float,
    "dt": float,
    "T": float,
    "nu": float,
    "alpha": float,
    "integrator": Integrator,
    "newton_tol": float,
    "newton_max": int,
    "out": str,
    "every": int,
    "formats": _as_formats,
    "variant": str,
}


def _convert(key, value, where):
    try:
        conv = _CONVERTERS[key]
    except KeyError:
        raise ConfigError(f"{where}{key}: unknown key") from None
    try:
        if conv is float:
            return _parse_float(value)
        return conv(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}{key}: cannot interpret {value!r} ({exc})") from None


def _parse_float(value):
    text = str(value).strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def parse_config(text: str, overrides: Optional[dict] = None) -> RunConfig:
    """Parse a flat ``key = value`` document; ``#`` starts a comment.

    Keys mirror the command line flags.  ``overrides`` (already typed or
    strings) are applied after the document.  Values such as ``1/48`` are
    accepted for floats.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = _convert(key, value, f"line {lineno}: ")
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = _convert(key, value, "")
    return RunConfig(**values).validate()


# output -------------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    return format(float(v), ".17g")


def write_diagnostics_csv(records, path) -> None:
    """One row per record with 17 significant digits; missing errors are empty cells."""
    records = list(records)
    if not records:
        raise ValueError("no diagnostics records to write")
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            row = rec.as_row()
            writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])


def read_diagnostics_csv(path) -> list:
    out = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        for row in reader:
            vals = {k: (float(v) if v != "" else None) for k, v in row.items()}
            vals["momentum"] = (vals.pop("momentum_x"), vals.pop("momentum_y"))
            out.append(DiagnosticsRecord(**vals))
    return out


def _point_vorticity(field_u, point_node, parent, sub, npts):
    """Vorticity averaged over the sub-triangles sharing each visualization point."""
    space = field_u.space
    mesh = space.mesh
    tri = mesh.triangles
    p = mesh.vertices[tri]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    jinv = np.linalg.inv(jac)
    loc = field_u.nodal[space.cell_nodes]  # (ne, 6, 2)
    # barycentric coordinates of the six P2 nodes in their element
    bary = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1], [0.5, 0.5, 0], [0, 0.5, 0.5], [0.5, 0, 0.5]], dtype=float)
    from .femspace import basis_ref_gradients

    ref = basis_ref_gradients(2, bary)  # (6 pts, 6 basis, 2)
    dphi = np.einsum("qkr,erd->eqkd", ref, jinv)
    grad = np.einsum("eqkd,eki->eqid", dphi, loc)
    curl_nodes = grad[..., 1, 0] - grad[..., 0, 1]  # (ne, 6) at local nodes
    # visualization points of each element, ordered like the local nodes
    total = np.zeros(npts)
    count = np.zeros(npts)
    sub_e = sub.reshape(-1, 4, 3)
    local_pts = np.stack(
        [sub_e[:, 0, 0], sub_e[:, 1, 1], sub_e[:, 2, 2], sub_e[:, 0, 1], sub_e[:, 1, 2], sub_e[:, 0, 2]], axis=1
    )
    np.add.at(total, local_pts.ravel(), curl_nodes.ravel())
    np.add.at(count, local_pts.ravel(), 1.0)
    return total / np.maximum(count, 1.0)


def _data_array(name, values, ncomp=1) -> str:
    flat = np.asarray(values, dtype=float).ravel()
    body = " ".join(format(v, ".10g") for v in flat)
    return f'        <DataArray type="Float64" Name={quoteattr(name)} NumberOfComponents="{ncomp}" format="ascii">{body}</DataArray>\n'


def write_vtu(state, path) -> None:
    """ASCII VTK unstructured grid on the once-refined P1 mesh of the P2 space.

    Point data: ``u``, ``w`` (3 components, zero z), ``speed`` and
    ``vorticity``; cell data: ``pressure`` evaluated at sub-cell centroids.
    """
    space = state.u.space
    points, sub, point_node, parent = space.refined_p1()
    npts, ncells = len(points), len(sub)
    u = state.u.nodal[point_node]
    w = state.w.nodal[point_node]
    speed = np.hypot(u[:, 0], u[:, 1])
    vort = _point_vorticity(state.u, point_node, parent, sub, npts)
    # P1 pressure at sub-cell centroids
    Q = state.P.space
    mesh = space.mesh
    cent = points[sub].mean(axis=1)
    tri = mesh.vertices[mesh.triangles[parent]]
    d1, d2 = tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]
    r = cent - tri[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    l1 = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
    l2 = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
    pn = state.P.nodal[Q.cell_nodes[parent]]
    pressure = (1 - l1 - l2) * pn[:, 0] + l1 * pn[:, 1] + l2 * pn[:, 2]

    pts3 = np.column_stack([points, np.zeros(npts)])
    pad = lambda a: np.column_stack([a, np.zeros(len(a))])
    parts = [
        '<?xml version="1.0"?>\n',
        '<VTKFile type="UnstructuredGrid" version="0.1" byte_order="LittleEndian">\n',
        "  <UnstructuredGrid>\n",
        f'    <Piece NumberOfPoints="{npts}" NumberOfCells="{ncells}">\n',
        '      <PointData Scalars="speed" Vectors="u">\n',
        _data_array("u", pad(u), 3),
        _data_array("w", pad(w), 3),
        _data_array("speed", speed),
        _data_array("vorticity", vort),
        "      </PointData>\n",
        '      <CellData Scalars="pressure">\n',
        _data_array("pressure", pressure),
        "      </CellData>\n",
        "      <Points>\n",
        _data_array("Points", pts3, 3),
        "      </Points>\n",
        "      <Cells>\n",
        '        <DataArray type="Int64" Name="connectivity" format="ascii">'
        + " ".join(map(str, sub.ravel()))
        + "</DataArray>\n",
        '        <DataArray type="Int64" Name="offsets" format="ascii">'
        + " ".join(map(str, 3 * np.arange(1, ncells + 1)))
        + "</DataArray>\n",
        '        <DataArray type="UInt8" Name="types" format="ascii">' + " ".join(["5"] * ncells) + "</DataArray>\n",
        "      </Cells>\n",
        "    </Piece>\n",
        "  </UnstructuredGrid>\n",
        "</VTKFile>\n",
    ]
    Path(path).write_text("".join(parts))


# orchestration ------------------------------------------------------------------------


def run_experiment(cfg: RunConfig):
    """Run one configuration, writing CSV, VTU snapshots and a manifest to ``cfg.out``."""
    from .schemes import run

    spec = cfg.benchmark_spec()
    scfg = cfg.stepper_config(spec)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{spec.name}_{scfg.scheme.value}"
    manifest = {
        "version": __version__,
        "config": cfg.echo(),
        "resolved": {"h": spec.h, "dt": scfg.dt, "T": spec.T, "nu": scfg.nu, "alpha": scfg.alpha, "integrator": scfg.integrator.value},
        "outputs": [],
    }
    step = {"k": 0}

    def snapshot(stepper, state, record):
        if "vtu" in cfg.formats and step["k"] % cfg.every == 0:
            name = f"{stem}_{step['k']:06d}.vtu"
            write_vtu(state, out / name)
            manifest["outputs"].append(name)
        step["k"] += 1

    records = run(scfg, spec, observers=[snapshot])
    kept = records[:: cfg.every]
    if records[-1] is not kept[-1]:
        kept.append(records[-1])
    if "csv" in cfg.formats:
        write_diagnostics_csv(kept, out / f"{stem}.csv")
        manifest["outputs"].append(f"{stem}.csv")
    (out / f"{stem}_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return records


def _rate(r):
    return "-" if r is None else f"{r:.5f}"


def format_convergence(rows, which="max") -> str:
    label = "L_inf(0,T)" if which == "max" else "t=T"
    head = f"{'h':>8} {'dt':>9}  {'|w-wh| L2':>12} {'rate':>8}  {'|w-wh| H1':>12} {'rate':>8}  {'|u-uh| L2':>12} {'rate':>8}"
    lines = [f"errors {label}", head]
    for r in rows:
        lines.append(
            f"{_frac(r.h):>8} {_frac(r.dt):>9}  "
            f"{getattr(r, which + '_l2_w'):12.5e} {_rate(r.rates[which + '_l2_w']):>8}  "
            f"{getattr(r, which + '_h1_w'):12.5e} {_rate(r.rates[which + '_h1_w']):>8}  "
            f"{getattr(r, which + '_l2_u'):12.5e} {_rate(r.rates[which + '_l2_u']):>8}"
        )
    return "\n".join(lines)


def _frac(x):
    inv = 1.0 / x
    if abs(inv - round(inv)) < 1e-9 and round(inv) > 1:
        return f"1/{int(round(inv))}"
    return f"{x:g}"


def probe_table(n: int = 16) -> list:
    """Probe values for the designed construction on an ``n x n`` unit square mesh."""
    space = build_space(build_rectangle_mesh(n, n), 2, 2)
    w, u = designed_probe_fields(space)
    rows = []
    for kind in ("emac", "rot", "leray"):
        rows.append((kind, *(momentum_probe(kind, w, u, t) for t in ("e1", "e2", "phi"))))
    return rows


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="emacreg", description="EMAC-Reg and related Navier-Stokes schemes")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one benchmark")
    r.add_argument("--config", type=Path, help="flat key = value file mirroring the flags")
    r.add_argument("--benchmark", choices=sorted(BENCHMARKS))
    r.add_argument("--scheme", choices=[s.value for s in Scheme])
    r.add_argument("--h")
    r.add_argument("--dt")
    r.add_argument("--T")
    r.add_argument("--nu")
    r.add_argument("--alpha")
    r.add_argument("--integrator", choices=[i.value for i in Integrator])
    r.add_argument("--newton-tol", dest="newton_tol")
    r.add_argument("--out")
    r.add_argument("--every")
    r.add_argument("--formats", help="comma separated subset of csv,vtu")
    r.add_argument("--variant", choices=["desk", "paper"])

    c = sub.add_parser("converge", help="convergence study on the decaying vortex array")
    c.add_argument("--axis", choices=["spatial", "temporal", "hybrid"], default="spatial")
    c.add_argument("--levels", help="refinement exponents, e.g. 1-5 or 1,2,3")
    c.add_argument("--T", type=float, default=1.0)
    c.add_argument("--scheme", choices=[s.value for s in Scheme], default="emacreg")
    c.add_argument("--workers", type=int, default=1)

    sub.add_parser("probe", help="momentum probes of the convective forms")
    sub.add_parser("list", help="list benchmarks")
    return p


def _levels(text):
    if text is None:
        return None
    if "-" in text:
        a, b = text.split("-", 1)
        return list(range(int(a), int(b) + 1))
    return [int(s) for s in text.split(",")]


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")

    if args.command == "list":
        for name, factory in BENCHMARKS.items():
            print(f"{name:8s} {factory().description}")
        return 0

    try:
        if args.command == "run":
            text = args.config.read_text() if args.config else ""
            keys = ("benchmark", "scheme", "h", "dt", "T", "nu", "alpha", "integrator", "newton_tol", "out", "every", "formats", "variant")
            cfg = parse_config(text, {k: getattr(args, k) for k in keys})
        elif args.command == "converge":
            levels = _levels(args.levels)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        if args.command == "run":
            records = run_experiment(cfg)
            last = records[-1]
            print(f"t={last.t:g} energy={last.energy_model:.12g} momentum=({last.momentum[0]:.3e}, {last.momentum[1]:.3e}) ang_momentum={last.ang_momentum:.12g}")
        elif args.command == "converge":
            rows = convergence_study(args.axis, levels, T=args.T, scheme=Scheme(args.scheme), workers=args.workers)
            print(format_convergence(rows, "max"))
            print()
            print(format_convergence(rows, "final"))
        elif args.command == "probe":
            print(f"{'form':6s} {'e1':>14} {'e2':>14} {'phi':>14}")
            for kind, *vals in probe_table():
                print(f"{kind:6s} " + " ".join(f"{v:14.6e}" for v in vals))
    except (NewtonConvergenceError, FactorizationError, StateError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
