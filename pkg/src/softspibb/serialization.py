"""File formats: JSON for MDPs and tables, CSV for datasets and run records.

Floats are written with ``repr`` (shortest round-trip form), so a save/load
cycle reproduces every value bit for bit. Writes go through a temporary
file in the target directory followed by an atomic rename.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .benchmark import RESULT_COLUMNS, RunRecord, cvar_column, CVAR_LEVELS
from .error_bounds import ErrorTable
from .mdp import POLICY_SUM_TOL, Dataset, Mdp

log = logging.getLogger(__name__)

DATASET_COLUMNS = ("trajectory", "step", "state", "action", "reward", "next_state")


class FormatError(ValueError):
    """A file does not follow the expected layout."""


def atomic_write(path, text: str) -> None:
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(obj) -> str:
    return json.dumps(obj, indent=None, separators=(",", ":"), allow_nan=False) + "\n"


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: expected a JSON object")
    return doc


def _field(doc: dict, name: str, path):
    if name not in doc:
        raise FormatError(f"{path}: missing field {name!r}")
    return doc[name]


# -- MDP ---------------------------------------------------------------------

def mdp_to_dict(mdp: Mdp) -> dict:
    doc = {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.gamma,
        "r_max": mdp.r_max,
        "initial_state": mdp.initial_state,
        "terminal": [bool(t) for t in mdp.terminal],
        "reward": mdp.reward.tolist(),
        "transition": mdp.transition.tolist(),
    }
    if mdp.entry_reward is not None:
        doc["entry_reward"] = mdp.entry_reward.tolist()
    return doc


def mdp_from_dict(doc: dict, path="<mdp>") -> Mdp:
    S, A = int(_field(doc, "n_states", path)), int(_field(doc, "n_actions", path))
    P = np.asarray(_field(doc, "transition", path), dtype=float)
    R = np.asarray(_field(doc, "reward", path), dtype=float)
    if P.shape != (S, A, S):
        raise FormatError(f"{path}: field 'transition' has shape {P.shape}, expected {(S, A, S)}")
    if R.shape != (S, A):
        raise FormatError(f"{path}: field 'reward' has shape {R.shape}, expected {(S, A)}")
    try:
        return Mdp(P, R, float(_field(doc, "gamma", path)), float(_field(doc, "r_max", path)),
                   _field(doc, "terminal", path), int(_field(doc, "initial_state", path)),
                   doc.get("entry_reward"))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def save_mdp(mdp: Mdp, path) -> None:
    atomic_write(path, _dump(mdp_to_dict(mdp)))


def load_mdp(path) -> Mdp:
    return mdp_from_dict(_load_json(path), path)


# -- tables --------------------------------------------------------------------

def save_policy(policy, path) -> None:
    pi = np.asarray(policy, dtype=float)
    atomic_write(path, _dump({"n_states": pi.shape[0], "n_actions": pi.shape[1],
                              "probs": pi.tolist()}))


def load_policy(path) -> np.ndarray:
    """Load a policy table; rows off by at most 1e-9 are accepted, renormalized with a
    warning when the deviation exceeds float round-off."""
    doc = _load_json(path)
    S, A = int(_field(doc, "n_states", path)), int(_field(doc, "n_actions", path))
    pi = np.asarray(_field(doc, "probs", path), dtype=float)
    if pi.shape != (S, A):
        raise FormatError(f"{path}: field 'probs' has shape {pi.shape}, expected {(S, A)}")
    if not np.all(np.isfinite(pi)) or np.any(pi < 0) or np.any(pi > 1):
        raise FormatError(f"{path}: field 'probs' has entries outside [0, 1]")
    sums = pi.sum(axis=1)
    bad = np.nonzero(np.abs(sums - 1.0) > POLICY_SUM_TOL)[0]
    if bad.size:
        raise FormatError(f"{path}: field 'probs' row {bad[0]} sums to {sums[bad[0]]!r}")
    # deviations at the level of summation round-off are left alone so that
    # save/load round trips stay bit-exact
    if np.any(np.abs(sums - 1.0) > A * np.finfo(float).eps):
        log.warning("%s: renormalizing policy rows whose sums deviate from 1", path)
        pi = pi / sums[:, None]
    return pi


def save_q(q, path) -> None:
    q = np.asarray(q, dtype=float)
    atomic_write(path, _dump({"n_states": q.shape[0], "n_actions": q.shape[1],
                              "values": q.tolist()}))


def save_errors(errors: ErrorTable, path) -> None:
    vals = [[None if math.isinf(v) else float(v) for v in row] for row in errors.values]
    atomic_write(path, _dump({"n_states": errors.values.shape[0],
                              "n_actions": errors.values.shape[1],
                              "kind": errors.kind, "values": vals}))


def load_errors(path) -> ErrorTable:
    """Error table JSON; ``null`` entries stand for the infinite sentinel."""
    doc = _load_json(path)
    S, A = int(_field(doc, "n_states", path)), int(_field(doc, "n_actions", path))
    raw = _field(doc, "values", path)
    vals = np.array([[math.inf if v is None else v for v in row] for row in raw], dtype=float)
    if vals.shape != (S, A):
        raise FormatError(f"{path}: field 'values' has shape {vals.shape}, expected {(S, A)}")
    try:
        return ErrorTable(vals, _field(doc, "kind", path))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# -- CSV streams -------------------------------------------------------------

def _read_csv(path, columns) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != tuple(columns):
            raise FormatError(f"{path}: line 1: expected header {','.join(columns)}, "
                              f"got {','.join(reader.fieldnames or [])}")
        return list(reader)


def _parse(row: dict, name: str, kind, path, line: int):
    try:
        return kind(row[name])
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: line {line}: field {name!r}: cannot parse {row[name]!r}") from exc


def dataset_to_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    buf.write(",".join(DATASET_COLUMNS) + "\n")
    for t in dataset.transitions:
        buf.write(f"{t.trajectory},{t.step},{t.state},{t.action},{t.reward!r},{t.next_state}\n")
    return buf.getvalue()


def save_dataset(dataset: Dataset, path) -> None:
    atomic_write(path, dataset_to_csv(dataset))


def load_dataset(path, n_states: int, n_actions: int) -> Dataset:
    rows = _read_csv(path, DATASET_COLUMNS)
    kinds = (int, int, int, int, float, int)
    cols = [[] for _ in DATASET_COLUMNS]
    for line, row in enumerate(rows, start=2):
        for col, name, kind in zip(cols, DATASET_COLUMNS, kinds):
            col.append(_parse(row, name, kind, path, line))
    try:
        return Dataset(*cols, n_states=n_states, n_actions=n_actions)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def _hp_text(hp) -> str:
    return "" if hp is None else repr(float(hp))


def _hp_value(text: str):
    return None if text == "" else float(text)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    buf.write(",".join(RESULT_COLUMNS) + "\n")
    for r in records:
        buf.write(f"{r.seed},{r.eta!r},{r.dataset_size},{r.algorithm},{_hp_text(r.hyperparameter)},"
                  f"{r.raw_perf!r},{r.normalized_perf!r}\n")
    return buf.getvalue()


def save_records(records, path) -> None:
    atomic_write(path, records_to_csv(records))


def load_records(path) -> list[RunRecord]:
    out = []
    for line, row in enumerate(_read_csv(path, RESULT_COLUMNS), start=2):
        out.append(RunRecord(
            _parse(row, "seed", int, path, line), _parse(row, "eta", float, path, line),
            _parse(row, "n_trajectories", int, path, line), row["algorithm"],
            _parse(row, "hyperparameter", _hp_value, path, line),
            _parse(row, "raw_perf", float, path, line),
            _parse(row, "normalized_perf", float, path, line)))
    return out


def aggregate_to_csv(rows, levels=CVAR_LEVELS) -> str:
    cvar_cols = [cvar_column(level) for level in levels]
    columns = ["eta", "n_trajectories", "algorithm", "hyperparameter", "mean", *cvar_cols, "n_runs"]
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for row in rows:
        cells = [repr(row["eta"]), str(row["n_trajectories"]), row["algorithm"],
                 _hp_text(row["hyperparameter"]), repr(row["mean"]),
                 *(repr(row[c]) for c in cvar_cols), str(row["n_runs"])]
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()
