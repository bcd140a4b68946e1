"""Config parsing, trajectory serialization (CSV / JSONL) and JSON reports."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

import jsonschema
import numpy as np

from .diagnostics import Check
from .engine import OMEGA0_KINDS, RecordFlags, RunConfig, TrajectoryRecord
from .noise import FAMILIES, ConfidenceFunction

SCHEMA_VERSION = "1.0"
SEED_ENV = "CONSENSUS_LAB_SEED"
CSV_COLUMNS = ("run_id", "t", "W", "gamma_t", "mean_X", "stop_reason")

_num = {"type": "number"}
_unit = {"type": "number", "minimum": 0, "maximum": 1}
_count = {"type": "integer", "minimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["n", "kernel"],
    "additionalProperties": False,
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "kernel": {
            "type": "object",
            "required": ["family"],
            "additionalProperties": False,
            "properties": {
                "family": {"enum": sorted(FAMILIES)},
                "params": {"type": "object", "additionalProperties": _num},
            },
        },
        "X0": {
            "oneOf": [
                {"type": "array", "items": _unit},
                {
                    "type": "object",
                    "required": ["kind"],
                    "additionalProperties": False,
                    "properties": {"kind": {"enum": ["uniform", "equispaced", "two_cluster"]}, "spread": _unit},
                },
            ]
        },
        "weights": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["uniform", "sparse", "random_sparse"]},
                "edges": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "prefixItems": [{"type": "integer", "minimum": 1}, {"type": "integer", "minimum": 1}, _num],
                        "minItems": 3,
                        "maxItems": 3,
                    },
                },
                "density": _unit,
                "low": _unit,
                "high": _unit,
            },
            "additionalProperties": False,
        },
        "omega0": {
            "oneOf": [
                {"enum": list(OMEGA0_KINDS)},
                {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
                },
            ]
        },
        "seed": _count,
        "max_steps": _count,
        "consensus_tol": _num,
        "record": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "boolean"} for k in ("beliefs", "omegas", "gamma_per_step")},
        },
        "mode": {"enum": ["auto", "dense", "sparse"]},
        "truncation_window": {"type": ["integer", "null"], "minimum": 1},
        "n_observed": {"type": ["integer", "null"], "minimum": 1},
        "fixed_horizon": {"type": "boolean"},
    },
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _field(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path)
    if err.validator == "required":
        return path  # the message already names the missing property
    return path or "<root>"


def default_seed() -> int:
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def load_config_document(source) -> dict:
    """Read a config from a dict, a JSON file path or inline JSON text."""
    if isinstance(source, dict):
        return dict(source)
    text = str(source)
    if not text.lstrip().startswith("{"):
        path = Path(text)
        if not path.exists():
            raise ConfigError(f"config file {text!r} not found")
        text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def parse_config(source, seed: int | None = None) -> RunConfig:
    """Validated RunConfig from a path, inline JSON or dict; ``seed`` overrides the document."""
    doc = load_config_document(source)
    errors = sorted(jsonschema.Draft202012Validator(CONFIG_SCHEMA).iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = _field(e)
        raise ConfigError(f"{where}: {e.message}" if where else e.message)
    try:
        kernel = ConfidenceFunction(doc["kernel"]["family"], dict(doc["kernel"].get("params", {})))
    except ValueError as e:
        raise ConfigError(f"kernel: {e}") from None
    if seed is None:
        seed = doc["seed"] if "seed" in doc else default_seed()
    omega0 = doc.get("omega0", "all_open")
    if not isinstance(omega0, str):
        omega0 = [tuple(p) for p in omega0]
    try:
        cfg = RunConfig(
            n=doc["n"],
            kernel=kernel,
            X0=doc.get("X0", {"kind": "equispaced"}),
            weights=doc.get("weights", {"kind": "uniform"}),
            omega0=omega0,
            seed=int(seed),
            max_steps=doc.get("max_steps", 10_000),
            consensus_tol=doc.get("consensus_tol", 1e-10),
            record=RecordFlags(**doc.get("record", {})),
            mode=doc.get("mode", "auto"),
            truncation_window=doc.get("truncation_window"),
            n_observed=doc.get("n_observed"),
            fixed_horizon=doc.get("fixed_horizon", False),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from None
    w = cfg.weights
    if w.get("kind") == "sparse" and "edges" not in w:
        raise ConfigError("weights.edges: required for kind 'sparse'")
    if w.get("kind") == "random_sparse" and "density" not in w:
        raise ConfigError("weights.density: required for kind 'random_sparse'")
    if w.get("kind") == "sparse":
        bad = [e for e in w["edges"] if max(e[0], e[1]) > cfg.n or not 0 < e[2] <= 1]
        if bad:
            raise ConfigError(f"weights.edges: entry {bad[0]} outside 1..n or weight outside (0, 1]")
    if isinstance(cfg.X0, list) and len(cfg.X0) != cfg.n:
        raise ConfigError(f"X0: {len(cfg.X0)} entries for n={cfg.n}")
    return cfg


def config_echo(cfg: RunConfig) -> dict:
    """JSON-ready view of a config with every default filled in."""
    X0 = cfg.X0
    if isinstance(X0, np.ndarray):
        X0 = X0.tolist()
    weights = cfg.weights if isinstance(cfg.weights, dict) else {"kind": "explicit", "m": cfg.weight_matrix().m}
    omega0 = cfg.omega0 if isinstance(cfg.omega0, str) else [list(p) for p in cfg.omega0]
    return {
        "n": cfg.n,
        "kernel": cfg.kernel.to_dict(),
        "X0": X0,
        "weights": weights,
        "omega0": omega0,
        "seed": cfg.seed,
        "max_steps": cfg.max_steps,
        "consensus_tol": cfg.consensus_tol,
        "record": {
            "beliefs": cfg.record.beliefs,
            "omegas": cfg.record.omegas,
            "gamma_per_step": cfg.record.gamma_per_step,
        },
        "mode": cfg.resolved_mode(),
        "truncation_window": cfg.truncation_window,
        "n_observed": cfg.n_observed,
        "fixed_horizon": cfg.fixed_horizon,
    }


# ---------------------------------------------------------------- trajectories


def _num_out(x: float) -> float | None:
    x = float(x)
    return None if math.isnan(x) else x


def _csv_float(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def emit_trajectory(record: TrajectoryRecord, sink: IO[str], format: str = "csv", header: bool = True) -> None:
    """Write one trajectory; CSV gets a header row only when ``header`` is true."""
    if format == "csv":
        w = csv.writer(sink, lineterminator="\n")
        if header:
            w.writerow(CSV_COLUMNS)
        T = record.steps
        for t in range(T + 1):
            g = "" if record.gamma is None or t == T else _csv_float(record.gamma[t])
            w.writerow(
                [
                    record.run_id,
                    t,
                    _csv_float(record.W[t]),
                    g,
                    _csv_float(record.mean_X[t]),
                    record.stop_reason if t == T else "",
                ]
            )
    elif format == "jsonl":
        for line in trajectory_objects(record):
            sink.write(json.dumps(line, allow_nan=False) + "\n")
    else:
        raise ValueError(f"unknown format {format!r}; use csv or jsonl")


def trajectory_objects(record: TrajectoryRecord) -> list[dict]:
    T = record.steps
    out = []
    for t in range(T + 1):
        obj = {
            "run_id": record.run_id,
            "t": t,
            "W": float(record.W[t]),
            "gamma_t": None if record.gamma is None else _num_out(record.gamma[t]),
            "mean_X": float(record.mean_X[t]),
            "edge_distance": float(record.edge_distance[t]),
        }
        if record.X is not None:
            obj["X"] = [float(x) for x in record.X[t]]
        if record.omegas is not None:
            obj["omega"] = [int(b) for b in record.omegas[t]]
        if t == T:
            obj["stop_reason"] = record.stop_reason
            obj["n"] = record.n
            obj["final_X"] = [float(x) for x in record.final_X]
            obj["gamma_recorded"] = record.gamma is not None
            obj["support"] = [[int(u) + 1, int(v) + 1] for u, v in zip(record.src, record.dst)]
        out.append(obj)
    return out


def emit_trajectories(records: Iterable[TrajectoryRecord], sink: IO[str], format: str = "csv") -> None:
    for i, rec in enumerate(records):
        emit_trajectory(rec, sink, format, header=(i == 0))


def read_trajectories_jsonl(lines: Iterable[str]) -> list[TrajectoryRecord]:
    """Inverse of the JSONL emitter: one record per run, in file order."""
    runs: list[list[dict]] = []
    for line in lines:
        if not line.strip():
            continue
        obj = json.loads(line)
        if not runs or "stop_reason" in runs[-1][-1]:
            runs.append([])
        runs[-1].append(obj)
    out = []
    for rows in runs:
        last = rows[-1]
        if "stop_reason" not in last:
            raise ValueError("truncated trajectory: missing final line")
        support = np.array(last["support"], dtype=np.int64).reshape(-1, 2) - 1
        gam = None
        if last["gamma_recorded"]:
            gam = np.array([np.nan if r["gamma_t"] is None else r["gamma_t"] for r in rows])
        out.append(
            TrajectoryRecord(
                n=last["n"],
                W=np.array([r["W"] for r in rows]),
                mean_X=np.array([r["mean_X"] for r in rows]),
                edge_distance=np.array([r["edge_distance"] for r in rows]),
                stop_reason=last["stop_reason"],
                final_X=np.array(last["final_X"]),
                X=np.array([r["X"] for r in rows]) if "X" in last else None,
                omegas=np.array([r["omega"] for r in rows], dtype=bool).reshape(len(rows), -1)
                if "omega" in last
                else None,
                gamma=gam,
                src=support[:, 0],
                dst=support[:, 1],
                run_id=last["run_id"],
            )
        )
    return out


@dataclass
class CsvTrajectory:
    run_id: int
    W: np.ndarray
    gamma: np.ndarray  # NaN where empty
    mean_X: np.ndarray
    stop_reason: str


def read_trajectories_csv(lines: Iterable[str]) -> list[CsvTrajectory]:
    reader = csv.reader(lines)
    header = next(reader)
    if tuple(header) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header {header}")
    runs: dict[int, list] = {}
    for row in reader:
        if row:
            runs.setdefault(int(row[0]), []).append(row)
    out = []
    for rid, rows in runs.items():
        if [int(r[1]) for r in rows] != list(range(len(rows))):
            raise ValueError(f"run {rid}: steps are not contiguous")
        if not rows[-1][5]:
            raise ValueError(f"run {rid}: final row lacks stop_reason")
        out.append(
            CsvTrajectory(
                rid,
                np.array([float(r[2]) for r in rows]),
                np.array([float(r[3]) if r[3] else np.nan for r in rows]),
                np.array([float(r[4]) for r in rows]),
                rows[-1][5],
            )
        )
    return out


# ---------------------------------------------------------------- reports


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return None if math.isnan(x) else (x if math.isfinite(x) else str(x))
    if isinstance(x, (frozenset, set)):
        return sorted(_jsonable(v) for v in x)
    return x


@dataclass
class ReportDocument:
    config: dict
    checks: list[Check] = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    schema_version: str = SCHEMA_VERSION

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "config": _jsonable(self.config),
            "checks": [
                {"name": c.name, "status": c.status, "margin": _jsonable(c.margin), "details": _jsonable(c.details)}
                for c in self.checks
            ],
            "tables": _jsonable(self.tables),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "ReportDocument":
        d = json.loads(text)
        if "schema_version" not in d:
            raise ValueError("report lacks schema_version")
        checks = []
        for c in d["checks"]:
            if c.get("status") not in ("pass", "fail", "skipped"):
                raise ValueError(f"check {c.get('name')!r} has no valid status")
            checks.append(Check(c["name"], c["status"], c["margin"], c.get("details", {})))
        return cls(d["config"], checks, d.get("tables", {}), d["schema_version"])
