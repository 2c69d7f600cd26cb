"""Checkpoint container: text manifest followed by float32 blobs.

Layout (single file):

    rahp-checkpoint
    version 1
    config {...json...}
    tensor <name> <d0xd1|d0|scalar> <byte offset> <element count>
    ...
    end
    <little-endian float32 payload, tensors in manifest order>

The version field is mandatory and checked on load. Loading reads and
validates the whole file before any caller-visible state changes.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

MAGIC = "rahp-checkpoint"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


def _shape_str(shape):
    if not shape:
        return "scalar"
    return "x".join(str(d) for d in shape)


def _parse_shape(text):
    if text == "scalar":
        return ()
    return tuple(int(d) for d in text.split("x"))


def save_checkpoint(path, tensors, config):
    """Write named arrays plus a config dict; atomic via rename."""
    lines = [MAGIC, f"version {FORMAT_VERSION}"]
    lines.append("config " + json.dumps(config, sort_keys=True))
    offset = 0
    blobs = []
    for name, value in tensors.items():
        arr = np.ascontiguousarray(getattr(value, "data", value), dtype="<f4")
        lines.append(f"tensor {name} {_shape_str(arr.shape)} {offset} {arr.size}")
        blobs.append(arr.tobytes())
        offset += arr.size * 4
    header = ("\n".join(lines) + "\nend\n").encode("utf-8")

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            for blob in blobs:
                fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_checkpoint(path):
    """Return (config dict, name -> float32 ndarray) after full validation."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc

    marker = b"\nend\n"
    cut = raw.find(marker)
    if cut < 0:
        raise CheckpointError(f"{path}: missing manifest terminator")
    header = raw[:cut].decode("utf-8").splitlines()
    payload = raw[cut + len(marker):]

    if not header or header[0] != MAGIC:
        raise CheckpointError(f"{path}: not a {MAGIC} file")
    if len(header) < 2 or not header[1].startswith("version "):
        raise CheckpointError(f"{path}: missing format version")
    version = int(header[1].split()[1])
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format version {version} (expected {FORMAT_VERSION})"
        )

    config = {}
    tensors = {}
    for line in header[2:]:
        if line.startswith("config "):
            config = json.loads(line[len("config "):])
        elif line.startswith("tensor "):
            _, name, shape_text, offset_text, count_text = line.split(" ")
            shape = _parse_shape(shape_text)
            offset, count = int(offset_text), int(count_text)
            if int(np.prod(shape, dtype=np.int64)) != count:
                raise CheckpointError(f"{path}: inconsistent manifest entry for {name}")
            end = offset + count * 4
            if end > len(payload):
                raise CheckpointError(
                    f"{path}: truncated payload for tensor {name}"
                    f" (need {end} bytes, have {len(payload)})"
                )
            arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
            tensors[name] = arr.reshape(shape).copy()
        elif line.strip():
            raise CheckpointError(f"{path}: unrecognized manifest line: {line!r}")
    return config, tensors
