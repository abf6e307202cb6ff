"""Result persistence: manifests, JSON/CSV result files, plot data.

A result file is a single JSON document holding the run manifest followed
by the payload; CSV is a flat view of the same payload.  Serialization is
deterministic (fixed key order, exact float round-trip in JSON, 17
significant digits in CSV), so re-running a subcommand with the manifest's
seed and configuration reproduces the file byte for byte.
"""

from __future__ import annotations

import csv
import io as _io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .analytics import BoundReport
from .engine import CountDistribution, TrialOutcome
from .experiments import Estimate, SweepResult, SweepRow, SymmetryBreakStats
from .model import OpinionCounts

__all__ = [
    "RunManifest",
    "ResultFile",
    "write_results",
    "read_result_file",
    "emit_plot_data",
    "format_float",
]

CSV_SWEEP_COLUMNS = (
    "n", "delta", "q", "rounds", "event",
    "p_hat", "ci_low", "ci_high", "trials", "bound_name", "bound_value",
)


def format_float(x: float) -> str:
    """Render a float with 17 significant digits (exact double round-trip)."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to reproduce a run exactly."""

    tool_version: str
    master_seed: int
    config: dict[str, Any]
    command_line: str
    workers: int = 1
    started: str | None = None
    finished: str | None = None

    @classmethod
    def create(
        cls,
        master_seed: int,
        config: dict[str, Any],
        command_line: str,
        workers: int = 1,
        started: str | None = None,
        finished: str | None = None,
    ) -> "RunManifest":
        return cls(
            tool_version=__version__,
            master_seed=master_seed,
            config=config,
            command_line=command_line,
            workers=workers,
            started=started,
            finished=finished,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "tool_version": self.tool_version,
            "master_seed": self.master_seed,
            "config": self.config,
            "command_line": self.command_line,
            "workers": self.workers,
            "started": self.started,
            "finished": self.finished,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunManifest":
        return cls(**d)


@dataclass(frozen=True)
class ResultFile:
    manifest: RunManifest
    payload: Any

    @property
    def payload_kind(self) -> str:
        return _payload_kind(self.payload)


# --------------------------------------------------------------------------
# Payload serialization
# --------------------------------------------------------------------------


def _payload_kind(payload: Any) -> str:
    if isinstance(payload, Estimate):
        return "estimate"
    if isinstance(payload, BoundReport):
        return "bound_report"
    if isinstance(payload, SweepResult):
        return "sweep"
    if isinstance(payload, CountDistribution):
        return "count_distribution"
    if isinstance(payload, TrialOutcome):
        return "trial_outcome"
    if isinstance(payload, SymmetryBreakStats):
        return "symmetry_break_stats"
    if isinstance(payload, dict):
        return "table"
    raise TypeError(f"unsupported payload type {type(payload).__name__}")


def _estimate_to_dict(e: Estimate) -> dict[str, Any]:
    return {
        "successes": e.successes,
        "trials": e.trials,
        "p_hat": e.p_hat,
        "ci_low": e.ci_low,
        "ci_high": e.ci_high,
        "confidence": e.confidence,
        "method": e.method,
    }


def _estimate_from_dict(d: dict[str, Any]) -> Estimate:
    return Estimate(**d)


def _bound_to_dict(b: BoundReport) -> dict[str, Any]:
    return {
        "bound_name": b.bound_name,
        "parameters": b.parameters,
        "bound_value": b.bound_value,
        "empirical_value": b.empirical_value,
        "satisfied": b.satisfied,
    }


def _bound_from_dict(d: dict[str, Any]) -> BoundReport:
    return BoundReport(**d)


def _row_to_dict(r: SweepRow) -> dict[str, Any]:
    return {
        "n": r.n,
        "delta": r.delta,
        "q": r.q,
        "rounds": r.rounds,
        "event": r.event,
        "estimate": None if r.estimate is None else _estimate_to_dict(r.estimate),
        "exact": r.exact,
        "bound": None if r.bound is None else _bound_to_dict(r.bound),
        "extra": r.extra,
    }


def _row_from_dict(d: dict[str, Any]) -> SweepRow:
    return SweepRow(
        n=d["n"],
        delta=d["delta"],
        q=d["q"],
        rounds=d["rounds"],
        event=d["event"],
        estimate=None if d["estimate"] is None else _estimate_from_dict(d["estimate"]),
        exact=d["exact"],
        bound=None if d["bound"] is None else _bound_from_dict(d["bound"]),
        extra=d["extra"],
    )


def _sweep_to_dict(s: SweepResult) -> dict[str, Any]:
    return {
        "kind": s.kind,
        "rows": [_row_to_dict(r) for r in s.rows],
        "metadata": s.metadata,
    }


def _sweep_from_dict(d: dict[str, Any]) -> SweepResult:
    return SweepResult(
        kind=d["kind"],
        rows=tuple(_row_from_dict(r) for r in d["rows"]),
        metadata=d["metadata"],
    )


def _distribution_to_dict(c: CountDistribution) -> dict[str, Any]:
    return {"probabilities": [float(p) for p in c.probabilities]}


def _distribution_from_dict(d: dict[str, Any]) -> CountDistribution:
    return CountDistribution(probabilities=np.array(d["probabilities"]))


def _trial_to_dict(t: TrialOutcome) -> dict[str, Any]:
    return {
        "trajectory": [[c.zeros, c.ones] for c in t.trajectory],
        "consensus": t.consensus,
        "majority_consensus": t.majority_consensus,
        "final_value": t.final_value,
    }


def _trial_from_dict(d: dict[str, Any]) -> TrialOutcome:
    return TrialOutcome(
        trajectory=tuple(OpinionCounts(zeros=z, ones=o) for z, o in d["trajectory"]),
        consensus=d["consensus"],
        majority_consensus=d["majority_consensus"],
        final_value=d["final_value"],
    )


def _stats_to_dict(s: SymmetryBreakStats) -> dict[str, Any]:
    return {
        "n": s.n,
        "q": s.q,
        "trials": s.trials,
        "mean": s.mean,
        "variance": s.variance,
        "outside_counts": [[d, c] for d, c in sorted(s.outside_counts.items())],
    }


def _stats_from_dict(d: dict[str, Any]) -> SymmetryBreakStats:
    return SymmetryBreakStats(
        n=d["n"],
        q=d["q"],
        trials=d["trials"],
        mean=d["mean"],
        variance=d["variance"],
        outside_counts={float(k): int(v) for k, v in d["outside_counts"]},
    )


_TO_DICT = {
    "estimate": _estimate_to_dict,
    "bound_report": _bound_to_dict,
    "sweep": _sweep_to_dict,
    "count_distribution": _distribution_to_dict,
    "trial_outcome": _trial_to_dict,
    "symmetry_break_stats": _stats_to_dict,
    "table": lambda d: d,
}

_FROM_DICT = {
    "estimate": _estimate_from_dict,
    "bound_report": _bound_from_dict,
    "sweep": _sweep_from_dict,
    "count_distribution": _distribution_from_dict,
    "trial_outcome": _trial_from_dict,
    "symmetry_break_stats": _stats_from_dict,
    "table": lambda d: d,
}


def result_to_jsonable(result: ResultFile) -> dict[str, Any]:
    kind = result.payload_kind
    return {
        "manifest": result.manifest.to_dict(),
        "payload_kind": kind,
        "payload": _TO_DICT[kind](result.payload),
    }


def result_from_jsonable(doc: dict[str, Any]) -> ResultFile:
    kind = doc["payload_kind"]
    return ResultFile(
        manifest=RunManifest.from_dict(doc["manifest"]),
        payload=_FROM_DICT[kind](doc["payload"]),
    )


# --------------------------------------------------------------------------
# Writers
# --------------------------------------------------------------------------


def _dump_json(result: ResultFile) -> str:
    return json.dumps(result_to_jsonable(result), indent=2, sort_keys=True) + "\n"


def _sweep_csv_rows(rows) -> list[list[str]]:
    out = []
    for r in rows:
        if r.estimate is not None:
            p_hat = format_float(r.estimate.p_hat)
            ci_low = format_float(r.estimate.ci_low)
            ci_high = format_float(r.estimate.ci_high)
            trials = str(r.estimate.trials)
        elif r.exact is not None:
            p_hat = format_float(r.exact)
            ci_low = ci_high = p_hat
            trials = "0"
        else:
            p_hat = ci_low = ci_high = ""
            trials = "0"
        out.append(
            [
                str(r.n),
                "" if r.delta is None else str(r.delta),
                format_float(r.q),
                "" if r.rounds is None else str(r.rounds),
                r.event,
                p_hat,
                ci_low,
                ci_high,
                trials,
                "" if r.bound is None else r.bound.bound_name,
                "" if r.bound is None else format_float(r.bound.bound_value),
            ]
        )
    return out


def _estimate_as_sweep_row(manifest: RunManifest, est: Estimate) -> SweepRow:
    cfg = manifest.config
    return SweepRow(
        n=int(cfg.get("n", 0)),
        delta=cfg.get("delta"),
        q=float(cfg.get("q", float("nan"))),
        rounds=cfg.get("rounds"),
        event=str(cfg.get("event", "")),
        estimate=est,
    )


def _bound_as_sweep_row(b: BoundReport) -> SweepRow:
    params = b.parameters
    return SweepRow(
        n=int(params.get("n", params.get("m", 0))),
        delta=params.get("A", params.get("B", params.get("C", params.get("k")))),
        q=float(params.get("q", params.get("p", float("nan")))),
        rounds=None,
        event=b.bound_name,
        bound=b,
        exact=b.empirical_value,
    )


def _dump_csv(result: ResultFile) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    payload = result.payload
    kind = result.payload_kind
    if kind == "sweep":
        writer.writerow(CSV_SWEEP_COLUMNS)
        writer.writerows(_sweep_csv_rows(payload.rows))
    elif kind == "estimate":
        writer.writerow(CSV_SWEEP_COLUMNS)
        writer.writerows(_sweep_csv_rows([_estimate_as_sweep_row(result.manifest, payload)]))
    elif kind == "bound_report":
        writer.writerow(CSV_SWEEP_COLUMNS)
        writer.writerows(_sweep_csv_rows([_bound_as_sweep_row(payload)]))
    elif kind == "count_distribution":
        writer.writerow(["k", "probability"])
        for k, p in enumerate(payload.probabilities):
            writer.writerow([str(k), format_float(p)])
    elif kind == "trial_outcome":
        writer.writerow(["round", "zeros", "ones"])
        for i, c in enumerate(payload.trajectory):
            writer.writerow([str(i), str(c.zeros), str(c.ones)])
    elif kind == "symmetry_break_stats":
        writer.writerow(["n", "q", "trials", "mean", "variance", "delta", "fraction_outside"])
        for d in sorted(payload.outside_counts):
            writer.writerow(
                [
                    str(payload.n),
                    format_float(payload.q),
                    str(payload.trials),
                    format_float(payload.mean),
                    format_float(payload.variance),
                    format_float(d),
                    format_float(payload.fraction_outside(d)),
                ]
            )
    elif kind == "table":
        writer.writerow(["key", "value"])
        for key in sorted(payload):
            value = payload[key]
            writer.writerow([str(key), format_float(value) if isinstance(value, float) else str(value)])
    else:
        raise ValueError(f"no CSV rendering for payload kind {kind!r}")
    return buf.getvalue()


def write_results(result: ResultFile, format: str, path: str | Path) -> None:
    """Write a result file as JSON or CSV (UTF-8, LF line endings)."""
    if format == "json":
        text = _dump_json(result)
    elif format == "csv":
        text = _dump_csv(result)
    else:
        raise ValueError(f"unknown format {format!r}, expected 'json' or 'csv'")
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OSError(f"failed to write results to {path}: {exc}") from exc


def read_result_file(path: str | Path) -> ResultFile:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise OSError(f"failed to read results from {path}: {exc}") from exc
    return result_from_jsonable(doc)


def emit_plot_data(sweep: SweepResult, path: str | Path) -> None:
    """Write gnuplot-style blocks (x, y, y_err), blank-line separated.

    One block per regime label (or one for the whole sweep), plus one
    overlay block per bound name appearing in the rows.  An empty sweep
    produces an empty file.
    """
    blocks: list[tuple[str, list[tuple[float, float, float]]]] = []
    by_label: dict[str, list[tuple[float, float, float]]] = {}
    for r in sweep.rows:
        label = str(r.extra.get("regime", sweep.kind))
        if r.estimate is not None:
            y, err = r.estimate.p_hat, r.estimate.half_width
        elif r.exact is not None:
            y, err = r.exact, 0.0
        else:
            continue
        by_label.setdefault(label, []).append((float(r.n), float(y), float(err)))
    blocks.extend(sorted(by_label.items()))

    by_bound: dict[str, list[tuple[float, float, float]]] = {}
    for r in sweep.rows:
        if r.bound is not None:
            by_bound.setdefault(r.bound.bound_name, []).append(
                (float(r.n), float(r.bound.bound_value), 0.0)
            )
    blocks.extend((f"bound:{name}", pts) for name, pts in sorted(by_bound.items()))

    lines: list[str] = []
    for label, points in blocks:
        if lines:
            lines.append("")
            lines.append("")
        lines.append(f"# {label}")
        lines.append("# n value y_err")
        for x, y, err in points:
            lines.append(f"{format_float(x)} {format_float(y)} {format_float(err)}")
    text = "\n".join(lines) + ("\n" if lines else "")
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OSError(f"failed to write plot data to {path}: {exc}") from exc
