"""Batch command-line front end.

One invocation runs one operation on one catalogue model and writes a
JSON report (plus a CSV file for curve traces).  ``--op report --model
all`` runs the whole catalogue and acts as the acceptance harness.

Exit codes: 0 success (expected-failure verdicts are data), 1 config
error, 2 numerical failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np

from . import geometry, models, structure, transport
from .core import (
    DataSet,
    GaussianData,
    MomentData,
    RegressionData,
    as_coords,
)
from .errors import (
    Condition4Violated,
    DomainError,
    DsmGeomError,
    HessianStructureViolated,
    MetricNotPD,
    MissingStatistic,
    NoConvergence,
    Unsupported,
)
from .fit import fit

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

OPS = (
    "fit",
    "metric",
    "connection",
    "curvature",
    "classify",
    "affine",
    "massieu",
    "geodesic",
    "transport",
    "field",
    "pythagoras",
    "report",
)

_CONFIG_FIELDS = {
    "model",
    "op",
    "levels",
    "kappa",
    "lam",
    "mu0",
    "sigma0",
    "at",
    "start",
    "end",
    "velocity",
    "vector",
    "targets",
    "other",
    "t_end",
    "step",
    "grid",
    "data",
    "field_source",
    "fibre_k",
    "trials",
    "tolerances",
    "seed",
    "out",
}

_REPORT_FIELDS = {
    "schema_version",
    "model",
    "op",
    "inputs",
    "results",
    "residuals",
    "verdicts",
    "tolerances",
    "runtime_ms",
}


class ConfigError(DsmGeomError):
    pass


@dataclasses.dataclass
class RunConfig:
    """Validated description of one batch run."""

    model: str
    op: str
    levels: Optional[list] = None
    kappa: Optional[float] = None
    lam: Optional[float] = None
    mu0: Optional[float] = None
    sigma0: Optional[float] = None
    at: Optional[list] = None
    start: Optional[list] = None
    end: Optional[list] = None
    velocity: Optional[list] = None
    vector: Optional[list] = None
    targets: Optional[list] = None
    other: Optional[list] = None
    t_end: Optional[float] = None
    step: Optional[float] = None
    grid: str = "default"
    data: Optional[dict] = None
    field_source: str = "fibre"
    fibre_k: int = 3
    trials: int = 1000
    tolerances: dict = dataclasses.field(default_factory=dict)
    seed: int = 42
    out: str = "report.json"

    @classmethod
    def from_dict(cls, payload: dict) -> "RunConfig":
        unknown = set(payload) - _CONFIG_FIELDS
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "model" not in payload or "op" not in payload:
            raise ConfigError("config needs 'model' and 'op'")
        config = cls(**payload)
        config.validate()
        return config

    def validate(self):
        if self.op not in OPS:
            raise ConfigError(f"unknown op '{self.op}'; choose from {OPS}")
        if self.model != "all" and self.model not in models.MODEL_NAMES:
            raise ConfigError(
                f"unknown model '{self.model}'; choose from {models.MODEL_NAMES}"
            )
        if self.model == "all" and self.op != "report":
            raise ConfigError("--model all is only valid with --op report")
        needs_point = {"metric", "connection", "curvature", "pythagoras"}
        if self.op in needs_point and self.at is None:
            raise ConfigError(f"op '{self.op}' needs --at")
        if self.op in {"affine", "massieu"} and (self.start is None or not self.targets):
            raise ConfigError(f"op '{self.op}' needs --start and --targets")
        if self.op == "geodesic" and (
            self.start is None or self.velocity is None or self.t_end is None
        ):
            raise ConfigError("op 'geodesic' needs --start, --velocity and --t")
        if self.op == "transport" and (
            self.start is None or self.end is None or self.vector is None
        ):
            raise ConfigError("op 'transport' needs --start, --end and --vector")
        if self.op == "field" and (self.start is None or self.vector is None):
            raise ConfigError("op 'field' needs --start and --vector")
        if self.op == "pythagoras" and self.other is None:
            raise ConfigError("op 'pythagoras' needs --other")
        if self.op == "fit" and (self.data is None or self.start is None):
            raise ConfigError("op 'fit' needs --data and --start")
        unknown_tols = set(self.tolerances) - {
            "cond4",
            "hessian",
            "flat",
            "torsion",
            "codazzi",
            "path",
        }
        if unknown_tols:
            raise ConfigError(f"unknown tolerance keys: {sorted(unknown_tols)}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def build_model(self):
        kwargs = {}
        if self.model == "gce" and self.levels is not None:
            kwargs["levels"] = self.levels
        if self.model in ("vmf-sphere", "vmf-cylinder") and self.kappa is not None:
            kwargs["kappa"] = self.kappa
        if self.model == "regression-dlambda" and self.lam is not None:
            kwargs["lam"] = self.lam
        if self.model == "gaussian-sumsq":
            if self.mu0 is not None:
                kwargs["mu0"] = self.mu0
            if self.sigma0 is not None:
                kwargs["sigma0"] = self.sigma0
        return models.build(self.model, **kwargs)


def parse_data_spec(spec: dict) -> DataSet:
    """Build a data set from a JSON payload.

    kinds: gaussian {mean, std}; moments {statistic: value, ...};
    regression {couples: [[x, y], ...]}.
    """
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("data spec must be an object with a 'kind'")
    kind = spec["kind"]
    body = {key: value for key, value in spec.items() if key != "kind"}
    if kind == "gaussian":
        return GaussianData(body["mean"], body["std"])
    if kind == "moments":
        return MomentData(body)
    if kind == "regression":
        return RegressionData(body["couples"])
    raise ConfigError(f"unknown data kind '{kind}'")


# ---------------------------------------------------------------------------
# Serialisation
# ---------------------------------------------------------------------------


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {str(key): _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, float) and value != value:  # NaN
        return None
    return value


def make_document(config, results, residuals=None, verdicts=None, runtime_ms=None):
    doc = {
        "schema_version": SCHEMA_VERSION,
        "model": config.model,
        "op": config.op,
        "inputs": _jsonable(config.to_dict()),
        "results": _jsonable(results),
        "residuals": _jsonable(residuals or {}),
        "verdicts": _jsonable(verdicts or {}),
        "tolerances": _jsonable(config.tolerances),
    }
    if runtime_ms is not None:
        doc["runtime_ms"] = runtime_ms
    return doc


def load_document(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        doc = json.load(handle)
    unknown = set(doc) - _REPORT_FIELDS
    if unknown:
        raise ConfigError(f"report document carries unknown fields: {sorted(unknown)}")
    missing = (_REPORT_FIELDS - {"runtime_ms"}) - set(doc)
    if missing:
        raise ConfigError(f"report document misses fields: {sorted(missing)}")
    return doc


def write_json(path: str, document: dict):
    text = json.dumps(document, indent=2, sort_keys=True) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(text)


def write_trace_csv(path: str, trace: transport.Trace, coord_names):
    columns = ["t"] + list(coord_names)
    has_vectors = trace.vectors is not None
    if has_vectors:
        columns += [f"v_{name}" for name in coord_names]
    rows = []
    for index in range(len(trace.times)):
        row = [trace.times[index], *trace.points[index]]
        if has_vectors:
            row.extend(trace.vectors[index])
        rows.append(",".join(f"{value:.17g}" for value in row))
    text = ",".join(columns) + "\n" + "\n".join(rows) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(text)


def _out_paths(out: str):
    base, ext = os.path.splitext(out)
    if ext.lower() == ".csv":
        return base + ".json", out
    return out, base + ".csv"


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def _tol(config, key, default):
    return float(config.tolerances.get(key, default))


def _grid_for(config, model):
    if config.grid == "default":
        return structure.default_grid(model)
    if ";" in config.grid or "," in config.grid:
        points = [
            [float(value) for value in chunk.split(",")]
            for chunk in config.grid.split(";")
            if chunk.strip()
        ]
        return [np.array(point) for point in points]
    per_axis = int(config.grid)
    return structure.default_grid(model, per_axis)


def _op_fit(config, model):
    data = parse_data_spec(config.data)
    result = fit(model, data, config.start)
    return make_document(
        config,
        results={
            "theta_star": result.theta_star,
            "divergence_value": result.divergence_value,
            "gradient_norm": result.gradient_norm,
            "iterations": result.iterations,
            "converged": result.converged,
        },
    ), None


def _op_metric(config, model):
    try:
        evaluation = geometry.metric_at(
            model,
            config.at,
            fibre_k=config.fibre_k,
            cond4_tol=_tol(config, "cond4", geometry.COND4_TOL),
        )
    except Condition4Violated as err:
        verdicts = {"condition4": "fail"}
        evidence = {
            "deviation": err.deviation,
            "members": list(err.member_labels),
            "member_hessians": [h.tolist() for h in err.member_hessians],
        }
        if model.condition4_evidence_fn is not None:
            evidence.update(
                model.condition4_evidence_fn(
                    as_coords(config.at), err.member_hessians, err.member_labels
                )
            )
        return make_document(
            config, results={"evidence": evidence}, verdicts=verdicts
        ), None
    return make_document(
        config,
        results={"metric": evaluation.matrix, "members": list(evaluation.member_labels)},
        residuals={"fibre_deviation": evaluation.fibre_deviation},
        verdicts={"condition4": "pass"},
    ), None


def _op_connection(config, model):
    try:
        evaluation = geometry.connection_at(
            model, config.at, hess_tol=_tol(config, "hessian", geometry.HESS_TOL)
        )
    except HessianStructureViolated as err:
        return make_document(
            config,
            results={"family_estimates": [est.tolist() for est in err.family_estimates]},
            residuals={"probe_consistency": err.deviation},
            verdicts={"hessian_structure": "fail"},
        ), None
    return make_document(
        config,
        results={"connection": evaluation.omega},
        residuals={"probe_consistency": evaluation.probe_consistency},
        verdicts={"hessian_structure": "pass"},
    ), None


def _op_curvature(config, model):
    tensor = geometry.curvature_at(model, config.at)
    flat_tol = _tol(config, "flat", structure.FLAT_TOL)
    return make_document(
        config,
        results={"curvature": tensor.components},
        residuals={"max_abs": tensor.max_abs},
        verdicts={"flat": "pass" if tensor.max_abs <= flat_tol else "fail"},
    ), None


def _op_classify(config, model):
    report = structure.classify(
        model,
        theta_grid=_grid_for(config, model),
        fibre_k=config.fibre_k,
        cond4_tol=_tol(config, "cond4", geometry.COND4_TOL),
        hess_tol=_tol(config, "hessian", geometry.HESS_TOL),
        flat_tol=_tol(config, "flat", structure.FLAT_TOL),
        torsion_tol=_tol(config, "torsion", structure.TORSION_TOL),
        codazzi_tol=_tol(config, "codazzi", structure.CODAZZI_TOL),
    )
    payload = report.to_dict()
    return make_document(
        config,
        results=payload,
        verdicts={
            "condition4": payload["condition4"]["status"],
            "hessian_structure": payload["hessian_structure"],
            "exponential_family": payload["exponential_family"],
        },
    ), None


def _op_affine(config, model):
    amap = structure.affine_coordinates(
        model,
        config.start,
        config.targets,
        path_tol=_tol(config, "path", structure.PATH_TOL),
    )
    return make_document(
        config,
        results={
            "reference": amap.reference,
            "targets": amap.targets,
            "values": amap.values,
            "gradients": amap.gradients,
        },
        residuals={"path_independence": max(amap.path_residuals)},
    ), None


def _op_massieu(config, model):
    sample = structure.massieu(
        model,
        config.start,
        config.targets,
        path_tol=_tol(config, "path", structure.PATH_TOL),
    )
    return make_document(
        config,
        results={
            "reference": sample.reference,
            "targets": sample.targets,
            "potentials": sample.potentials,
            "covectors": sample.covectors,
        },
        residuals={
            "path_independence": max(sample.path_residuals),
            "hessian_vs_metric": max(sample.hessian_residuals),
            "curl": max(sample.curl_residuals),
        },
    ), None


def _op_geodesic(config, model):
    trace = transport.geodesic(
        model,
        config.start,
        config.velocity,
        config.t_end,
        step=config.step,
        source=config.field_source,
    )
    doc = make_document(
        config,
        results={
            "end_point": trace.end_point,
            "end_velocity": trace.end_vector,
            "samples": len(trace.times),
            "flags": list(trace.flags),
        },
    )
    return doc, trace


def _op_transport(config, model):
    trace = transport.parallel_transport(
        model,
        [np.array(config.start, dtype=float), np.array(config.end, dtype=float)],
        config.vector,
        source=config.field_source,
    )
    doc = make_document(
        config,
        results={
            "end_point": trace.end_point,
            "end_vector": trace.end_vector,
            "flags": list(trace.flags),
        },
    )
    return doc, trace


def _op_field(config, model):
    grid = _grid_for(config, model)
    trace = transport.covariant_constant_field(
        model, config.start, config.vector, grid, source=config.field_source
    )
    doc = make_document(
        config,
        results={"points": trace.points, "vectors": trace.vectors},
        residuals={"path_residual": trace.metadata.get("path_residual")},
    )
    return doc, trace


def _op_pythagoras(config, model):
    report = structure.pythagorean_check(
        model, config.at, config.other, fibre_k=config.fibre_k
    )
    return make_document(
        config,
        results={
            "induced_value": report.induced_value,
            "members": list(report.member_labels),
        },
        residuals={"fibre_deviation": report.max_deviation},
    ), None


_OP_HANDLERS = {
    "fit": _op_fit,
    "metric": _op_metric,
    "connection": _op_connection,
    "curvature": _op_curvature,
    "classify": _op_classify,
    "affine": _op_affine,
    "massieu": _op_massieu,
    "geodesic": _op_geodesic,
    "transport": _op_transport,
    "field": _op_field,
    "pythagoras": _op_pythagoras,
}


def run(config: RunConfig) -> int:
    """Execute one operation and write its output files."""
    if config.op == "report":
        if config.model == "all":
            return report_all(config.out, seed=config.seed, tolerances=config.tolerances)
        return _single_report(config)
    model = config.build_model()
    started = time.perf_counter()
    try:
        document, trace = _OP_HANDLERS[config.op](config, model)
    except (ConfigError, DomainError, Unsupported, MissingStatistic) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DsmGeomError, np.linalg.LinAlgError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    document["runtime_ms"] = int((time.perf_counter() - started) * 1000)
    json_path, csv_path = _out_paths(config.out)
    try:
        write_json(json_path, document)
        if trace is not None:
            write_trace_csv(csv_path, trace, model.chart.names)
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def _single_report(config: RunConfig) -> int:
    model = config.build_model()
    document = model_report(model, config.tolerances, seed=config.seed)
    try:
        write_json(config.out, document)
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def model_report(model, tolerances: dict, seed: int = 42) -> dict:
    """classify + oracle comparison for one model (deterministic)."""
    config = RunConfig(model=model.name, op="report", tolerances=tolerances, seed=seed)
    report = structure.classify(
        model,
        cond4_tol=float(tolerances.get("cond4", geometry.COND4_TOL)),
        hess_tol=float(tolerances.get("hessian", geometry.HESS_TOL)),
        flat_tol=float(tolerances.get("flat", structure.FLAT_TOL)),
        torsion_tol=float(tolerances.get("torsion", structure.TORSION_TOL)),
        codazzi_tol=float(tolerances.get("codazzi", structure.CODAZZI_TOL)),
    ).to_dict()
    oracle_gaps = {}
    if model.oracle is not None and model.oracle.metric is not None:
        rng = np.random.default_rng(seed)
        points = model.chart.random_points(rng, 5)
        metric_gap = 0.0
        connection_gap = 0.0
        for point in points:
            g = geometry.metric_at(model, point).matrix
            reference = model.oracle.metric(point)
            scale = max(float(np.max(np.abs(reference))), 1e-12)
            metric_gap = max(
                metric_gap, float(np.max(np.abs(g - reference))) / scale
            )
            if model.oracle.connection is not None and model.has_probes:
                omega = geometry.connection_at(model, point).omega
                ref = model.oracle.connection(point)
                cscale = max(float(np.max(np.abs(ref))), 1.0)
                connection_gap = max(
                    connection_gap, float(np.max(np.abs(omega - ref))) / cscale
                )
        oracle_gaps = {"metric": metric_gap, "connection": connection_gap}
    return make_document(
        config,
        results={"classification": report, "oracle_comparison": oracle_gaps},
        verdicts={
            "condition4": report["condition4"]["status"],
            "hessian_structure": report["hessian_structure"],
            "exponential_family": report["exponential_family"],
        },
    )


def report_all(out_dir: str, seed: int = 42, tolerances: Optional[dict] = None) -> int:
    """Classify the whole catalogue; one JSON per model plus a summary.

    Documents omit wall-clock timing so reruns with the same seed are
    byte-identical.
    """
    tolerances = tolerances or {}
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO
    names = list(models.MODEL_NAMES)
    workers = int(os.environ.get("DSM_GEOM_THREADS", "0")) or None

    def one(name):
        return name, model_report(models.build(name), tolerances, seed=seed)

    try:
        if workers == 1:
            produced = [one(name) for name in names]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                produced = list(pool.map(one, names))
    except DsmGeomError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    produced.sort(key=lambda pair: pair[0])
    summary_rows = []
    try:
        for name, document in produced:
            write_json(os.path.join(out_dir, f"{name}.json"), document)
            verdicts = document["verdicts"]
            summary_rows.append(
                {
                    "model": name,
                    "condition4": verdicts["condition4"],
                    "hessian_structure": verdicts["hessian_structure"],
                    "exponential_family": verdicts["exponential_family"],
                }
            )
        write_json(
            os.path.join(out_dir, "summary.json"),
            {"schema_version": SCHEMA_VERSION, "seed": seed, "models": summary_rows},
        )
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO
    width = max(len(row["model"]) for row in summary_rows)
    for row in summary_rows:
        print(
            f"{row['model']:<{width}}  condition4={row['condition4']:<14}"
            f"hessian={row['hessian_structure']:<14}"
            f"exponential_family={row['exponential_family']}"
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _vector(text):
    return [float(chunk) for chunk in text.split(",") if chunk.strip()]


def _point_list(text):
    return [_vector(chunk) for chunk in text.split(";") if chunk.strip()]


def build_parser() -> _Parser:
    parser = _Parser(prog="dsm-geom", description=__doc__)
    parser.add_argument("--model", required=True)
    parser.add_argument("--op", required=True, choices=OPS)
    parser.add_argument("--levels", type=_vector)
    parser.add_argument("--kappa", type=float)
    parser.add_argument("--lambda", dest="lam", type=float)
    parser.add_argument("--mu0", type=float)
    parser.add_argument("--sigma0", type=float)
    parser.add_argument("--at", type=_vector)
    parser.add_argument("--start", type=_vector)
    parser.add_argument("--end", type=_vector)
    parser.add_argument("--velocity", type=_vector)
    parser.add_argument("--vector", type=_vector)
    parser.add_argument("--targets", type=_point_list)
    parser.add_argument("--other", type=_vector)
    parser.add_argument("--t", dest="t_end", type=float)
    parser.add_argument("--step", type=float)
    parser.add_argument("--grid", default="default")
    parser.add_argument("--data", type=str, help="JSON data-set spec")
    parser.add_argument("--field", dest="field_source", choices=("fibre", "oracle"), default="fibre")
    parser.add_argument("--fibre-k", dest="fibre_k", type=int, default=3)
    parser.add_argument("--trials", type=int, default=1000)
    parser.add_argument("--tol", action="append", default=[], metavar="KEY=VAL")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--out", default="report.json")
    return parser


def config_from_args(argv) -> RunConfig:
    parser = build_parser()
    namespace = parser.parse_args(argv)
    tolerances = {}
    for item in namespace.tol:
        if "=" not in item:
            raise ConfigError(f"--tol expects KEY=VAL, got '{item}'")
        key, value = item.split("=", 1)
        tolerances[key.strip()] = float(value)
    data = json.loads(namespace.data) if namespace.data else None
    payload = {
        "model": namespace.model,
        "op": namespace.op,
        "levels": namespace.levels,
        "kappa": namespace.kappa,
        "lam": namespace.lam,
        "mu0": namespace.mu0,
        "sigma0": namespace.sigma0,
        "at": namespace.at,
        "start": namespace.start,
        "end": namespace.end,
        "velocity": namespace.velocity,
        "vector": namespace.vector,
        "targets": namespace.targets,
        "other": namespace.other,
        "t_end": namespace.t_end,
        "step": namespace.step,
        "grid": namespace.grid,
        "data": data,
        "field_source": namespace.field_source,
        "fibre_k": namespace.fibre_k,
        "trials": namespace.trials,
        "tolerances": tolerances,
        "seed": namespace.seed,
        "out": namespace.out,
    }
    payload = {key: value for key, value in payload.items() if value is not None}
    return RunConfig.from_dict(payload)


def main(argv=None) -> int:
    argv = argv if argv is not None else sys.argv[1:]
    try:
        config = config_from_args(argv)
    except (ConfigError, ValueError, json.JSONDecodeError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
