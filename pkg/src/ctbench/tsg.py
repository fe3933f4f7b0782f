"""Generator contract, built-in baselines, and the file-exchange protocol.

A generator is fitted per walk-forward split and used in one or both modes:
``generate`` samples a synthetic return matrix, ``reconstruct`` passes a real
return matrix through the model. Built-in baselines:

* ``passthrough``   - generate returns the training window itself (the
  real-data reference); reconstruct is the identity.
* ``gaussian``      - iid per-asset Gaussian matched to training mean/std;
  reconstruct returns the per-asset training mean (residuals are demeaned
  returns, a tractable null model).
* ``block_bootstrap`` - 24h blocks of training columns sampled with
  replacement (generation only).
* ``pca``           - reconstruction through the top principal axes of the
  training cross-section covariance; component count is a fixed integer
  (``pca:3``) or an explained-variance target (``pca:ev90``, the default).

External models plug in through exchange bundles: a directory with
``manifest.json`` and ``payload.f64`` (raw little-endian float64, row-major,
n rows x length columns). Manifest keys: schema_version (=1), model_id, mode,
tau, n, length, seed, asset_ids.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadManifest,
    BridgeFailure,
    BundleMissing,
    FitFailed,
    InvalidValue,
    MissingPayload,
    ModeUnsupported,
    NotTrained,
    PayloadShapeMismatch,
    SchemaVersionUnsupported,
    ShapeMismatch,
)
from .market_data import HOUR, ReturnMatrix

SCHEMA_VERSION = 1
_MODES = ("generate", "reconstruct")


# -- exchange bundles ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExchangeBundle:
    """One protocol unit: manifest fields plus an (n, length) float64 payload."""

    model_id: str
    mode: str
    tau: int
    seed: int
    asset_ids: tuple[str, ...]
    payload: np.ndarray
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.mode not in _MODES:
            raise BadManifest(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.payload.ndim != 2 or self.payload.shape[0] != len(self.asset_ids):
            raise PayloadShapeMismatch(
                f"payload shape {self.payload.shape} inconsistent with "
                f"{len(self.asset_ids)} asset ids"
            )

    @property
    def n(self) -> int:
        return self.payload.shape[0]

    @property
    def length(self) -> int:
        return self.payload.shape[1]


def write_bundle(bundle: ExchangeBundle, directory: str | Path) -> Path:
    """Write manifest.json + payload.f64; returns the directory path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "schema_version": bundle.schema_version,
        "model_id": bundle.model_id,
        "mode": bundle.mode,
        "tau": bundle.tau,
        "n": bundle.n,
        "length": bundle.length,
        "seed": bundle.seed,
        "asset_ids": list(bundle.asset_ids),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2))
    np.ascontiguousarray(bundle.payload, dtype="<f8").tofile(directory / "payload.f64")
    return directory


def read_bundle(directory: str | Path) -> ExchangeBundle:
    """Read a bundle back; payload round-trips bit-exactly."""
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
        raise SchemaVersionUnsupported(f"schema_version {version} (supported: {SCHEMA_VERSION})")
    if mode not in _MODES:
        raise BadManifest(f"mode must be one of {_MODES}, got {mode!r}")
    if len(asset_ids) != n:
        raise BadManifest(f"{len(asset_ids)} asset_ids for n={n}")

    payload_path = directory / "payload.f64"
    if not payload_path.is_file():
        raise MissingPayload(f"{directory}: payload.f64 not found")
    raw = np.fromfile(payload_path, dtype="<f8")
    if raw.size != n * length:
        raise PayloadShapeMismatch(
            f"{payload_path}: {raw.size} float64 values, manifest says {n}x{length}"
        )
    return ExchangeBundle(model_id, mode, tau, seed, asset_ids, raw.reshape(n, length))


# -- model contract -----------------------------------------------------------

class TsgModel:
    """Base generator: fit once per split, then generate and/or reconstruct.

    Fitted state is immutable in use (a refit simply replaces it); generate
    and reconstruct are pure given (state, seed, input).
    """

    model_id: str = "tsg"
    supports_generate: bool = True
    supports_reconstruct: bool = True

    def __init__(self):
        self._train: ReturnMatrix | None = None
        self._tau: int | None = None

    @property
    def trained(self) -> bool:
        return self._train is not None

    def fit(self, train: ReturnMatrix, tau: int | None = None) -> "TsgModel":
        if train.n_assets == 0 or train.n_hours == 0:
            raise FitFailed("empty training matrix")
        self._fit(train)
        self._train = train
        self._tau = tau
        return self

    def _fit(self, train: ReturnMatrix) -> None:  # pragma: no cover - overridden
        pass

    def _require(self, mode: str) -> ReturnMatrix:
        if self._train is None:
            raise NotTrained(f"{self.model_id}: fit before {mode}")
        if mode == "generate" and not self.supports_generate:
            raise ModeUnsupported(f"{self.model_id} does not support generation")
        if mode == "reconstruct" and not self.supports_reconstruct:
            raise ModeUnsupported(f"{self.model_id} does not support reconstruction")
        return self._train

    def _gen_timestamps(self, length: int) -> np.ndarray:
        train = self._train
        if length == train.n_hours:
            return train.timestamps
        step = HOUR.astype("timedelta64[ns]")
        return train.timestamps[0] + step * np.arange(length)

    def generate(self, n: int, length: int, seed: int) -> ReturnMatrix:
        train = self._require("generate")
        if n != train.n_assets:
            raise ShapeMismatch(f"generate n={n} != fitted n={train.n_assets}")
        values = self._generate(length, seed)
        return ReturnMatrix(train.assets, self._gen_timestamps(length), values)

    def _generate(self, length: int, seed: int) -> np.ndarray:
        raise ModeUnsupported(self.model_id)

    def reconstruct(self, matrix: ReturnMatrix) -> ReturnMatrix:
        train = self._require("reconstruct")
        if matrix.n_assets != train.n_assets:
            raise ShapeMismatch(
                f"reconstruct n={matrix.n_assets} != fitted n={train.n_assets}"
            )
        values = self._reconstruct(matrix)
        return ReturnMatrix(matrix.assets, matrix.timestamps, values)

    def _reconstruct(self, matrix: ReturnMatrix) -> np.ndarray:
        raise ModeUnsupported(self.model_id)


class PassthroughModel(TsgModel):
    """Real data itself: generation replays the training window, reconstruction
    is the identity."""

    model_id = "passthrough"

    def _generate(self, length: int, seed: int) -> np.ndarray:
        train = self._train
        if length > train.n_hours:
            raise ShapeMismatch(
                f"passthrough cannot generate {length} hours from a "
                f"{train.n_hours}-hour window"
            )
        return train.values[:, train.n_hours - length:].copy()

    def _reconstruct(self, matrix: ReturnMatrix) -> np.ndarray:
        return matrix.values


class GaussianModel(TsgModel):
    """Per-asset iid Gaussian with moments matched on the training window."""

    model_id = "gaussian"

    def _fit(self, train: ReturnMatrix) -> None:
        self._mean = train.values.mean(axis=1)
        self._std = train.values.std(axis=1)

    def _generate(self, length: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal((len(self._mean), length))
        return self._mean[:, None] + self._std[:, None] * noise

    def _reconstruct(self, matrix: ReturnMatrix) -> np.ndarray:
        return np.broadcast_to(self._mean[:, None], matrix.values.shape).copy()


class BlockBootstrapModel(TsgModel):
    """Cross-sectionally joint 24h block bootstrap of training columns."""

    model_id = "block_bootstrap"
    supports_reconstruct = False

    def __init__(self, block_hours: int = 24):
        super().__init__()
        self.block_hours = block_hours

    def _fit(self, train: ReturnMatrix) -> None:
        if train.n_hours < self.block_hours:
            raise FitFailed(
                f"training window ({train.n_hours}h) shorter than block ({self.block_hours}h)"
            )

    def _generate(self, length: int, seed: int) -> np.ndarray:
        train = self._train.values
        rng = np.random.default_rng(seed)
        n_blocks = -(-length // self.block_hours)
        starts = rng.integers(0, train.shape[1] - self.block_hours + 1, size=n_blocks)
        blocks = [train[:, s:s + self.block_hours] for s in starts]
        return np.hstack(blocks)[:, :length].copy()


class PcaReconstructor(TsgModel):
    """Reconstruction through the top-p principal axes of the training
    covariance across assets (axes from train only, applied to any input).

    ``components`` is a fixed integer or ``"ev<q>"``: the smallest p whose
    leading eigenvalue mass reaches q percent. Zero-variance assets carry no
    weight in the leading axes, so they reconstruct to their mean rather than
    failing.
    """

    supports_generate = False

    def __init__(self, components: int | str = "ev90"):
        super().__init__()
        self.components = components
        if isinstance(components, str):
            self.model_id = f"pca_{components}"
        else:
            self.model_id = f"pca_{int(components)}"

    def _resolve_p(self, eigvals: np.ndarray) -> int:
        n = len(eigvals)
        if isinstance(self.components, int):
            if not 0 <= self.components <= n:
                raise FitFailed(f"component count {self.components} outside 0..{n}")
            return self.components
        spec = self.components
        if not spec.startswith("ev"):
            raise InvalidValue(f"bad PCA component spec {spec!r}")
        target = float(spec[2:]) / 100.0
        total = eigvals.sum()
        if total <= 0.0:
            return 0
        mass = np.cumsum(eigvals) / total
        # tolerance so an exactly-on-target eigenvalue split is not missed to fp noise
        return min(n, int(np.searchsorted(mass, target * (1.0 - 1e-12))) + 1)

    def _fit(self, train: ReturnMatrix) -> None:
        x = train.values
        self._mean = x.mean(axis=1)
        centered = x - self._mean[:, None]
        cov = centered @ centered.T / x.shape[1]
        try:
            eigvals, eigvecs = np.linalg.eigh(cov)
        except np.linalg.LinAlgError as exc:
            raise FitFailed(f"eigendecomposition failed: {exc}") from exc
        order = np.argsort(eigvals)[::-1]
        self._eigvals = eigvals[order]
        self._eigvecs = eigvecs[:, order]
        self._p = self._resolve_p(self._eigvals)

    @property
    def n_components(self) -> int:
        if self._train is None:
            raise NotTrained("pca: fit first")
        return self._p

    @property
    def explained_variance(self) -> np.ndarray:
        if self._train is None:
            raise NotTrained("pca: fit first")
        return self._eigvals.copy()

    def _reconstruct(self, matrix: ReturnMatrix) -> np.ndarray:
        centered = matrix.values - self._mean[:, None]
        basis = self._eigvecs[:, :self._p]
        return self._mean[:, None] + basis @ (basis.T @ centered)


def pca_fit_reconstruct(train: ReturnMatrix, components: int | str) -> PcaReconstructor:
    """Fit a PCA reconstructor on a training window."""
    model = PcaReconstructor(components)
    model.fit(train)
    return model


# -- external models ----------------------------------------------------------

class ExchangeDirModel(TsgModel):
    """External model whose per-split outputs were precomputed into bundles.

    For a model directory ``root``, the output for split offset tau, mode m
    and output length L is expected at ``root/tau{tau}_{m}_{L}``. Missing
    bundles raise :class:`BundleMissing`, which the runner records as a cell
    failure without touching other cells.
    """

    def __init__(self, root: str | Path, model_id: str | None = None):
        super().__init__()
        self.root = Path(root)
        self.model_id = model_id or self.root.name

    def fit(self, train: ReturnMatrix, tau: int | None = None) -> "ExchangeDirModel":
        if tau is None:
            raise InvalidValue("exchange-directory models need the split offset at fit time")
        return super().fit(train, tau)

    def _load(self, mode: str, length: int) -> ExchangeBundle:
        directory = self.root / f"tau{self._tau}_{mode}_{length}"
        if not directory.is_dir():
            raise BundleMissing(str(directory))
        bundle = read_bundle(directory)
        if bundle.mode != mode:
            raise BadManifest(f"{directory}: mode {bundle.mode!r}, expected {mode!r}")
        if bundle.asset_ids != self._train.assets:
            raise BadManifest(f"{directory}: asset ids differ from the loaded dataset")
        if bundle.length != length:
            raise PayloadShapeMismatch(f"{directory}: length {bundle.length}, expected {length}")
        return bundle

    def _generate(self, length: int, seed: int) -> np.ndarray:
        return self._load("generate", length).payload

    def _reconstruct(self, matrix: ReturnMatrix) -> np.ndarray:
        return self._load("reconstruct", matrix.n_hours).payload


class BridgeCommandModel(TsgModel):
    """External model served by a batch adapter process.

    Each call writes a request bundle, invokes
    ``<command> --request <dir> --response <dir>`` and reads the response
    bundle back. Generate requests carry the training matrix as payload (the
    adapter fits on it); the generated length equals the training length.
    Reconstruct requests carry the matrix to reconstruct.
    """

    def __init__(self, command: str | list[str], model_id: str | None = None,
                 workdir: str | Path | None = None):
        super().__init__()
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.model_id = model_id or Path(self.command[0]).stem
        self.workdir = Path(workdir) if workdir is not None else None

    def _round_trip(self, request: ExchangeBundle) -> ExchangeBundle:
        with tempfile.TemporaryDirectory(prefix="ctbench_bridge_", dir=self.workdir) as base:
            req_dir = Path(base) / "request"
            resp_dir = Path(base) / "response"
            write_bundle(request, req_dir)
            argv = self.command + ["--request", str(req_dir), "--response", str(resp_dir)]
            proc = subprocess.run(argv, capture_output=True, text=True)
            if proc.returncode != 0:
                raise BridgeFailure(
                    f"{argv[0]} exited {proc.returncode}: "
                    f"{proc.stderr.strip() or proc.stdout.strip()}"
                )
            response = read_bundle(resp_dir)
        if response.mode != request.mode:
            raise BridgeFailure(f"response mode {response.mode!r} != {request.mode!r}")
        if response.asset_ids != request.asset_ids:
            raise BridgeFailure("response asset ids differ from request")
        return response

    def _request(self, mode: str, payload: np.ndarray, seed: int) -> ExchangeBundle:
        return ExchangeBundle(
            model_id=self.model_id,
            mode=mode,
            tau=self._tau if self._tau is not None else -1,
            seed=seed,
            asset_ids=self._train.assets,
            payload=payload,
        )

    def _generate(self, length: int, seed: int) -> np.ndarray:
        train = self._train
        if length != train.n_hours:
            raise ShapeMismatch(
                "bridge models generate exactly the training length "
                f"({train.n_hours}), got {length}"
            )
        response = self._round_trip(self._request("generate", train.values, seed))
        if response.length != length:
            raise BridgeFailure(f"response length {response.length} != {length}")
        return response.payload

    def _reconstruct(self, matrix: ReturnMatrix) -> np.ndarray:
        response = self._round_trip(self._request("reconstruct", matrix.values, seed=0))
        if response.length != matrix.n_hours:
            raise BridgeFailure(f"response length {response.length} != {matrix.n_hours}")
        return response.payload


# -- model factory ------------------------------------------------------------

def make_model(spec: str) -> TsgModel:
    """Build a model from a config spec string.

    Built-ins: ``passthrough``, ``gaussian``, ``block_bootstrap``, ``pca``,
    ``pca:<int>``, ``pca:ev<q>``. ``bridge:<command>`` runs a batch adapter;
    any existing directory is treated as precomputed exchange bundles.
    """
    if spec == "passthrough":
        return PassthroughModel()
    if spec == "gaussian":
        return GaussianModel()
    if spec == "block_bootstrap":
        return BlockBootstrapModel()
    if spec == "pca":
        return PcaReconstructor()
    if spec.startswith("pca:"):
        arg = spec.split(":", 1)[1]
        if arg.startswith("ev"):
            return PcaReconstructor(arg)
        try:
            return PcaReconstructor(int(arg))
        except ValueError as exc:
            raise InvalidValue(f"bad PCA spec {spec!r}") from exc
    if spec.startswith("bridge:"):
        return BridgeCommandModel(spec.split(":", 1)[1])
    if Path(spec).is_dir():
        return ExchangeDirModel(spec)
    raise InvalidValue(f"unknown model spec {spec!r}")
