"""Binary snapshots of a trained network.

Layout: one JSON header line, then a pickle payload. The header records a
format version, the payload byte count, and its sha256, so a reader can
refuse snapshots from a different format version and detect truncated or
corrupted files before unpickling anything.
"""
from __future__ import annotations

import hashlib
import io
import json
import pickle
from typing import Any

MAGIC = "expertnet-snapshot"
VERSION = 1


class SnapshotError(Exception):
    pass


def save_snapshot(path: str, network, extra: dict | None = None) -> None:
    payload = pickle.dumps({"network": network, "extra": extra or {}}, protocol=4)
    header = {
        "magic": MAGIC,
        "version": VERSION,
        "sha256": hashlib.sha256(payload).hexdigest(),
        "nbytes": len(payload),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("ascii") + b"\n")
        fh.write(payload)


def load_snapshot(path: str) -> tuple[Any, dict]:
    """Return ``(network, extra)`` or raise :class:`SnapshotError`."""
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line)
        except ValueError:
            raise SnapshotError(f"{path}: not a snapshot (bad header line)") from None
        if not isinstance(header, dict) or header.get("magic") != MAGIC:
            raise SnapshotError(f"{path}: not a snapshot (magic mismatch)")
        if header.get("version") != VERSION:
            raise SnapshotError(
                f"{path}: snapshot version {header.get('version')} "
                f"not supported (reader expects {VERSION})"
            )
        payload = fh.read()
    if len(payload) != header.get("nbytes"):
        raise SnapshotError(
            f"{path}: truncated payload, {len(payload)} bytes of "
            f"{header.get('nbytes')} expected"
        )
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header.get("sha256"):
        raise SnapshotError(f"{path}: payload checksum mismatch")
    blob = pickle.load(io.BytesIO(payload))
    return blob["network"], blob["extra"]
