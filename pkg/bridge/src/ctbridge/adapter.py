"""Bundle IO and the two reference behaviors (identity / seeded Gaussian).

A bundle directory holds ``manifest.json`` and ``payload.f64``. The manifest
carries schema_version (=1), model_id, mode ("generate" or "reconstruct"),
tau, n, length, seed and the ordered asset_ids; the payload is n*length
float64 values, little-endian, row-major.

Reconstruction responses copy the request payload bytes verbatim, so the
round trip is bit-exact by construction. Generation responses draw from
``random.Random(seed)`` row by row (row-major order), with each row's mean
and population standard deviation taken from the request payload, which for
a generate request is the training window.
"""

from __future__ import annotations

import json
import math
import random
import sys
from array import array
from dataclasses import dataclass
from pathlib import Path

SCHEMA_VERSION = 1
MODES = ("generate", "reconstruct")


class BridgeError(Exception):
    """Base error; the CLI maps these to a nonzero exit."""


class BadManifest(BridgeError):
    pass


class MissingPayload(BridgeError):
    pass


@dataclass(frozen=True)
class Bundle:
    model_id: str
    mode: str
    tau: int
    seed: int
    asset_ids: tuple[str, ...]
    values: list[list[float]]

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def length(self) -> int:
        return len(self.values[0]) if self.values else 0


def _pack(flat: list[float]) -> bytes:
    data = array("d", flat)
    if sys.byteorder == "big":
        data.byteswap()
    return data.tobytes()


def _unpack(blob: bytes) -> array:
    data = array("d")
    data.frombytes(blob)
    if sys.byteorder == "big":
        data.byteswap()
    return data


def read_bundle(directory: str | Path) -> Bundle:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise BadManifest(f"{directory}: manifest.json not found")
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise BadManifest(f"{manifest_path}: {exc}") from exc

    try:
        version = int(manifest["schema_version"])
        mode = manifest["mode"]
        tau = int(manifest["tau"])
        n = int(manifest["n"])
        length = int(manifest["length"])
        seed = int(manifest["seed"])
        asset_ids = tuple(str(a) for a in manifest["asset_ids"])
        model_id = str(manifest["model_id"])
    except (KeyError, TypeError, ValueError) as exc:
        raise BadManifest(f"{manifest_path}: {exc}") from exc
    if version != SCHEMA_VERSION:
        raise BadManifest(f"unsupported schema_version {version}")
    if mode not in MODES:
        raise BadManifest(f"mode must be one of {MODES}, got {mode!r}")
    if len(asset_ids) != n:
        raise BadManifest(f"{len(asset_ids)} asset_ids for n={n}")

    payload_path = directory / "payload.f64"
    if not payload_path.is_file():
        raise MissingPayload(f"{directory}: payload.f64 not found")
    flat = _unpack(payload_path.read_bytes())
    if len(flat) != n * length:
        raise BadManifest(
            f"{payload_path}: {len(flat)} float64 values, manifest says {n}x{length}"
        )
    values = [list(flat[i * length:(i + 1) * length]) for i in range(n)]
    return Bundle(model_id, mode, tau, seed, asset_ids, values)


def write_bundle(bundle: Bundle, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "model_id": bundle.model_id,
        "mode": bundle.mode,
        "tau": bundle.tau,
        "n": bundle.n,
        "length": bundle.length,
        "seed": bundle.seed,
        "asset_ids": list(bundle.asset_ids),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2))
    flat = [value for row in bundle.values for value in row]
    (directory / "payload.f64").write_bytes(_pack(flat))
    return directory


def _row_moments(row: list[float]) -> tuple[float, float]:
    mean = sum(row) / len(row)
    variance = sum((v - mean) ** 2 for v in row) / len(row)
    return mean, math.sqrt(variance)


def generate_payload(bundle: Bundle) -> list[list[float]]:
    """Per-row moment-matched Gaussian, reproducible for a fixed seed."""
    rng = random.Random(bundle.seed)
    out = []
    for row in bundle.values:
        mean, std = _row_moments(row)
        out.append([mean + std * rng.gauss(0.0, 1.0) for _ in range(len(row))])
    return out


def serve_request(request_dir: str | Path, response_dir: str | Path) -> Path:
    """Serve one request directory into one response directory."""
    request = read_bundle(request_dir)
    if request.mode == "reconstruct":
        response_values = request.values
    else:
        response_values = generate_payload(request)
    response = Bundle(
        model_id=request.model_id,
        mode=request.mode,
        tau=request.tau,
        seed=request.seed,
        asset_ids=request.asset_ids,
        values=response_values,
    )
    write_bundle(response, response_dir)
    if request.mode == "reconstruct":
        # byte-for-byte identity, immune to any float round trip
        payload = Path(request_dir) / "payload.f64"
        (Path(response_dir) / "payload.f64").write_bytes(payload.read_bytes())
    return Path(response_dir)
