"""Versioned on-disk container: one JSON manifest line + raw little-endian arrays.

Used for body-model files, training checkpoints and dataset files. The
manifest is a single JSON object terminated by a newline; the binary section
that follows holds each array's bytes at the recorded offset. Round-trips are
bit exact.
"""

from __future__ import annotations

import json

import numpy as np

FORMAT_NAME = "hmrk-container"
FORMAT_VERSION = 1

_DTYPES = {"<f8": np.dtype("<f8"), "<i8": np.dtype("<i8"), "|u1": np.dtype("|u1")}


class ContainerError(Exception):
    pass


def _canonical_dtype(arr):
    if arr.dtype == np.float64:
        return "<f8", arr.astype("<f8", copy=False)
    if arr.dtype.kind in "iu" and arr.dtype.itemsize <= 8 and arr.dtype != np.uint8:
        return "<i8", arr.astype("<i8")
    if arr.dtype == np.uint8 or arr.dtype == np.bool_:
        return "|u1", arr.astype("|u1")
    raise ContainerError("unsupported dtype %s" % arr.dtype)


def save(path, arrays, meta=None, kind="generic"):
    """Write `arrays` (dict name -> ndarray) plus a JSON-able `meta` dict."""
    entries = []
    blobs = []
    offset = 0
    for name in arrays:
        arr = np.ascontiguousarray(arrays[name])
        code, arr = _canonical_dtype(arr)
        raw = arr.tobytes()
        entries.append(
            {
                "name": name,
                "dtype": code,
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        blobs.append(raw)
        offset += len(raw)
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "kind": kind,
        "meta": meta if meta is not None else {},
        "arrays": entries,
    }
    line = json.dumps(header, sort_keys=True, separators=(",", ":"))
    if "\n" in line:
        raise ContainerError("manifest must not contain newlines")
    with open(path, "wb") as fh:
        fh.write(line.encode("utf-8"))
        fh.write(b"\n")
        for raw in blobs:
            fh.write(raw)


def load(path, expect_kind=None):
    """Read a container; returns (arrays dict, meta dict, kind)."""
    with open(path, "rb") as fh:
        line = fh.readline()
        if not line.endswith(b"\n"):
            raise ContainerError("%s: truncated or missing manifest" % path)
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ContainerError("%s: bad manifest (%s)" % (path, exc))
        if header.get("format") != FORMAT_NAME:
            raise ContainerError("%s: not a %s file" % (path, FORMAT_NAME))
        if header.get("version") != FORMAT_VERSION:
            raise ContainerError(
                "%s: container version %r, expected %d"
                % (path, header.get("version"), FORMAT_VERSION)
            )
        kind = header.get("kind", "generic")
        if expect_kind is not None and kind != expect_kind:
            raise ContainerError("%s: kind %r, expected %r" % (path, kind, expect_kind))
        body = fh.read()

    arrays = {}
    for entry in header["arrays"]:
        code = entry["dtype"]
        if code not in _DTYPES:
            raise ContainerError("%s: unknown dtype %r" % (path, code))
        lo, hi = entry["offset"], entry["offset"] + entry["nbytes"]
        if hi > len(body):
            raise ContainerError(
                "%s: array %r extends past end of file (corrupt or truncated)"
                % (path, entry["name"])
            )
        arr = np.frombuffer(body[lo:hi], dtype=_DTYPES[code]).reshape(entry["shape"])
        arrays[entry["name"]] = arr.copy()
    return arrays, header.get("meta", {}), kind
