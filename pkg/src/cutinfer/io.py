"""Reading inputs and writing traces, manifests and tables."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import re
from pathlib import Path

import numpy as np

from .engine import PosteriorSamples

__all__ = [
    "InputError",
    "read_matrix",
    "write_matrix",
    "read_rollcall",
    "write_rollcall",
    "read_vote_types",
    "write_vote_types",
    "read_covariates",
    "write_covariates",
    "write_traces",
    "read_traces",
    "write_json",
    "git_blob_hash",
    "write_table",
]

MISSING = {"NA", "na", "NaN", "nan", ""}


class InputError(ValueError):
    """A user-supplied file is malformed or inconsistent."""


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "NA"
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)  # shortest string that round-trips


def _rows(path):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: no such file")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{path}: file is empty")
    return [[c.strip() for c in r] for r in rows]


def read_matrix(path):
    """Numeric CSV without header."""
    rows = _rows(path)
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise InputError(f"{path}: ragged rows")
    try:
        return np.array([[float(c) for c in r] for r in rows])
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


def write_matrix(path, A):
    A = np.atleast_2d(np.asarray(A))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in A:
            w.writerow([_fmt(v) for v in row])


def read_rollcall(path):
    """Roll-call CSV: header row, first column legislator id, cells 0/1/NA.

    Returns ``(legislator_ids, vote_ids, Y)`` with NaN for missing votes.
    """
    rows = _rows(path)
    header, body = rows[0], rows[1:]
    if len(header) < 2 or not body:
        raise InputError(f"{path}: need a header and at least one legislator row")
    J = len(header) - 1
    ids, Y = [], np.empty((len(body), J))
    for i, r in enumerate(body):
        if len(r) != J + 1:
            raise InputError(f"{path}: row {i + 2} has {len(r) - 1} votes, expected {J}")
        ids.append(r[0])
        for j, c in enumerate(r[1:]):
            if c in MISSING:
                Y[i, j] = np.nan
            elif c in ("0", "1"):
                Y[i, j] = float(c)
            else:
                raise InputError(f"{path}: row {i + 2}, column {j + 2}: invalid vote {c!r}")
    if len(set(ids)) != len(ids):
        raise InputError(f"{path}: duplicate legislator ids")
    return tuple(ids), tuple(header[1:]), Y


def write_rollcall(path, Y, legislator_ids=None, vote_ids=None):
    N, J = Y.shape
    lids = legislator_ids or [f"L{i + 1}" for i in range(N)]
    vids = vote_ids or [f"v{j + 1}" for j in range(J)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["legislator_id", *vids])
        for i in range(N):
            w.writerow([lids[i], *("NA" if np.isnan(v) else str(int(v)) for v in Y[i])])


def read_vote_types(path, vote_ids=None):
    """Vote-type CSV with columns ``vote_id`` and ``is_final_passage``.

    When ``vote_ids`` is given the flags are returned in that order.
    """
    rows = _rows(path)
    header = [h.lower() for h in rows[0]]
    try:
        iv, iw = header.index("vote_id"), header.index("is_final_passage")
    except ValueError:
        raise InputError(f"{path}: header must contain vote_id and is_final_passage") from None
    flags = {}
    for k, r in enumerate(rows[1:]):
        if r[iw] not in ("0", "1"):
            raise InputError(f"{path}: row {k + 2}: is_final_passage must be 0 or 1")
        if r[iv] in flags:
            raise InputError(f"{path}: duplicate vote id {r[iv]!r}")
        flags[r[iv]] = int(r[iw])
    if vote_ids is None:
        return tuple(flags), np.array(list(flags.values()), dtype=np.int64)
    if len(vote_ids) != len(flags):
        raise InputError(f"{path}: {len(flags)} vote types for {len(vote_ids)} votes")
    missing = [v for v in vote_ids if v not in flags]
    if missing:
        raise InputError(f"{path}: no type for votes {missing[:5]}")
    return tuple(vote_ids), np.array([flags[v] for v in vote_ids], dtype=np.int64)


def write_vote_types(path, w, vote_ids=None):
    vids = vote_ids or [f"v{j + 1}" for j in range(len(w))]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["vote_id", "is_final_passage"])
        for v, f in zip(vids, w):
            wr.writerow([v, int(f)])


def read_covariates(path, legislator_ids=None):
    """Covariate CSV: header of covariate names, one row per legislator.

    An optional leading ``legislator_id`` column is used to align rows with
    ``legislator_ids``; otherwise rows are taken in file order.
    """
    rows = _rows(path)
    header, body = rows[0], rows[1:]
    has_id = header[0].lower() == "legislator_id"
    names = header[1:] if has_id else header
    if any(len(r) != len(header) for r in body):
        raise InputError(f"{path}: ragged rows")
    try:
        vals = np.array([[float(c) for c in (r[1:] if has_id else r)] for r in body])
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    vals = vals.reshape(len(body), len(names))
    if legislator_ids is not None:
        if len(body) != len(legislator_ids):
            raise InputError(f"{path}: {len(body)} rows for {len(legislator_ids)} legislators")
        if has_id:
            pos = {r[0]: k for k, r in enumerate(body)}
            try:
                vals = vals[[pos[i] for i in legislator_ids]]
            except KeyError as exc:
                raise InputError(f"{path}: no covariates for legislator {exc.args[0]!r}") from None
    return tuple(names), vals


def write_covariates(path, X, names=None, legislator_ids=None):
    N, K = X.shape
    names = names or [f"x{k + 1}" for k in range(K)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow((["legislator_id"] if legislator_ids else []) + list(names))
        for i in range(N):
            w.writerow(([legislator_ids[i]] if legislator_ids else []) + [_fmt(v) for v in X[i]])


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in r])


def read_table(path):
    rows = _rows(path)
    return rows[0], rows[1:]


_TRACE_RE = re.compile(r"chain(\d+)_(\w+)\.csv$")


def write_traces(directory, samples: PosteriorSamples):
    """One CSV per chain and block: ``chain{c}_{block}.csv``, one row per draw."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for name, arr in sorted(samples.traces.items()):
        arr = np.asarray(arr)
        if arr[0].size == 0 and arr.shape[1] > 0:
            continue  # zero-width block, restored from its recorded shape
        for c in range(arr.shape[0]):
            flat = arr[c].reshape(arr.shape[1], -1)
            p = d / f"chain{c}_{name}.csv"
            write_table(p, [f"{name}[{j}]" for j in range(flat.shape[1])], flat)
            files.append(p.name)
    return files


def read_traces(directory, regime=None, shapes=None):
    """Inverse of :func:`write_traces`; ``shapes`` maps block to trailing shape."""
    d = Path(directory)
    found = {}
    for p in sorted(d.glob("chain*_*.csv")):
        m = _TRACE_RE.search(p.name)
        if not m:
            continue
        c, name = int(m.group(1)), m.group(2)
        header, body = read_table(p)
        vals = np.array([[np.nan if v == "NA" else float(v) for v in r] for r in body])
        vals = vals.reshape(len(body), len(header))
        found.setdefault(name, {})[c] = vals
    if not found:
        raise InputError(f"{d}: no trace files")
    traces = {}
    lead = None
    for name, per in found.items():
        chains = [per[c] for c in sorted(per)]
        if sorted(per) != list(range(len(per))):
            raise InputError(f"{d}: chains of {name} are not numbered 0..{len(per) - 1}")
        arr = np.stack(chains)
        if shapes and name in shapes:
            arr = arr.reshape(arr.shape[:2] + tuple(shapes[name]))
        traces[name] = arr
        lead = arr.shape[:2]
    for name, shape in (shapes or {}).items():
        if name not in traces and int(np.prod(shape)) == 0:
            traces[name] = np.zeros(lead + tuple(shape))
    return PosteriorSamples(regime or "unknown", traces, {})


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
        return x if math.isfinite(x) else str(x)
    return x


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_json(path):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{p}: no such file")
    with open(p) as fh:
        return json.load(fh)


def git_blob_hash(path):
    """SHA-1 of ``b"blob <size>\\0" + content``, as computed by ``git hash-object``."""
    data = Path(path).read_bytes()
    h = hashlib.sha1(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()
