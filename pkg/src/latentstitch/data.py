"""Dataset containers and ingestion.

Covers the LSF binary latent format, CelebA-style attribute tables, pixel
tensors stored as flattened LSF files, id-based alignment between datasets,
deterministic head splits, and the id-seeded random-encoder baseline.

All cross-dataset pairing goes through sample ids, never row positions; the
only positional operation is `split`, which takes the leading rows in stored
order. Datasets are treated as immutable after construction.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Sequence, Union

import numpy as np

from .errors import (
    BadMagic,
    CountMismatch,
    DataError,
    DimensionMismatch,
    DuplicateId,
    EmptyIntersection,
    InsufficientRows,
    NonFiniteValue,
    RaggedRow,
    TruncatedFile,
    UnknownValue,
    VersionUnsupported,
)

LSF_MAGIC = b"LSF1"
LSF_VERSION = 1

#: model_id reserved for flattened pixel tensors inside LSF files.
PIXEL_MODEL_ID = "pixels"

#: Latent dimensions of the standard five-model roster.
DEFAULT_LATENT_DIMS = {
    "GAN": 512,
    "VAE": 512,
    "VQVAE": 768,
    "NF": 12288,
    "DM": 12288,
}


def _check_ids(ids: Sequence[str]) -> list[str]:
    out = [str(i) for i in ids]
    if len(set(out)) != len(out):
        raise DuplicateId("sample ids must be unique")
    return out


@dataclass
class LatentDataset:
    """Per-sample latent vectors for one model.

    Values are stored as float32 (source-model native precision); solvers
    upcast to float64 internally.
    """

    model_id: str
    ids: list[str]
    X: np.ndarray

    def __post_init__(self) -> None:
        self.ids = _check_ids(self.ids)
        self.X = np.ascontiguousarray(self.X, dtype=np.float32)
        if self.X.ndim != 2 or self.X.shape[1] < 1:
            raise DimensionMismatch(f"latents must be a non-degenerate 2-D array, got {self.X.shape}")
        if self.X.shape[0] != len(self.ids):
            raise CountMismatch(f"{len(self.ids)} ids but {self.X.shape[0]} latent rows")
        if not np.all(np.isfinite(self.X)):
            raise NonFiniteValue(f"latents for {self.model_id!r} contain NaN or Inf")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass
class AttributeTable:
    """Per-sample binary attribute annotations, values in {-1, +1}."""

    names: list[str]
    ids: list[str]
    values: np.ndarray

    def __post_init__(self) -> None:
        self.names = [str(n) for n in self.names]
        if len(set(self.names)) != len(self.names):
            raise DuplicateId("attribute names must be unique")
        self.ids = _check_ids(self.ids)
        self.values = np.ascontiguousarray(self.values, dtype=np.int8)
        if self.values.shape != (len(self.ids), len(self.names)):
            raise DimensionMismatch(
                f"values shape {self.values.shape} does not match "
                f"{len(self.ids)} ids x {len(self.names)} attributes"
            )
        if not np.all(np.abs(self.values) == 1):
            raise UnknownValue("attribute values must be exactly -1 or +1")

    @property
    def n(self) -> int:
        return len(self.ids)

    def column(self, name: str) -> np.ndarray:
        try:
            j = self.names.index(name)
        except ValueError:
            raise UnknownValue(f"no attribute named {name!r}") from None
        return self.values[:, j]


@dataclass
class ImageDataset:
    """Flattened pixel tensors, values in [0, 1], row layout H*W*C."""

    ids: list[str]
    pixels: np.ndarray
    height: int = 64
    width: int = 64
    channels: int = 3

    def __post_init__(self) -> None:
        self.ids = _check_ids(self.ids)
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.float32)
        d = self.height * self.width * self.channels
        if self.pixels.ndim != 2 or self.pixels.shape[1] != d:
            raise DimensionMismatch(
                f"pixels shape {self.pixels.shape} does not match "
                f"{self.height}x{self.width}x{self.channels}"
            )
        if self.pixels.shape[0] != len(self.ids):
            raise CountMismatch(f"{len(self.ids)} ids but {self.pixels.shape[0]} pixel rows")
        if not np.all(np.isfinite(self.pixels)):
            raise NonFiniteValue("pixels contain NaN or Inf")
        if self.pixels.size and (self.pixels.min() < 0.0 or self.pixels.max() > 1.0):
            raise UnknownValue("pixels must lie in [0, 1]")

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def d(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.channels)


@dataclass
class SplitSpec:
    """Head split: first n_train rows for fitting, next n_holdout for eval."""

    n_train: int = 9000
    n_holdout: int = 100

    def __post_init__(self) -> None:
        if self.n_train < 0 or self.n_holdout < 0:
            raise InsufficientRows("split sizes must be non-negative")


Dataset = Union[LatentDataset, AttributeTable, ImageDataset]


# --- LSF binary format ---------------------------------------------------


def _read_exact(f: BinaryIO, size: int) -> bytes:
    data = f.read(size)
    if len(data) != size:
        raise TruncatedFile(f"expected {size} bytes, got {len(data)}")
    return data


def _write_str(f: BinaryIO, s: str) -> None:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError(f"string too long for u16 length prefix: {len(raw)} bytes")
    f.write(struct.pack("<H", len(raw)))
    f.write(raw)


def _read_str(f: BinaryIO) -> str:
    (length,) = struct.unpack("<H", _read_exact(f, 2))
    return _read_exact(f, length).decode("utf-8")


def _write_lsf(
    path,
    model_id: str,
    ids: Sequence[str],
    values: np.ndarray,
    image_shape: tuple[int, int, int] | None = None,
) -> None:
    values = np.ascontiguousarray(values, dtype="<f4")
    n, d = values.shape
    with open(path, "wb") as f:
        f.write(LSF_MAGIC)
        f.write(struct.pack("<III", LSF_VERSION, n, d))
        _write_str(f, model_id)
        if model_id == PIXEL_MODEL_ID:
            if image_shape is None:
                raise ValueError("pixel LSF files need an (H, W, C) triple")
            f.write(struct.pack("<HHH", *image_shape))
        for sid in ids:
            _write_str(f, sid)
        f.write(values.tobytes())


def _read_lsf(path):
    with open(path, "rb") as f:
        magic = _read_exact(f, 4)
        if magic != LSF_MAGIC:
            raise BadMagic(f"{path}: bad magic {magic!r}")
        version, n, d = struct.unpack("<III", _read_exact(f, 12))
        if version != LSF_VERSION:
            raise VersionUnsupported(f"{path}: LSF version {version} not supported")
        model_id = _read_str(f)
        image_shape = None
        if model_id == PIXEL_MODEL_ID:
            image_shape = struct.unpack("<HHH", _read_exact(f, 6))
        ids = [_read_str(f) for _ in range(n)]
        raw = _read_exact(f, n * d * 4)
    values = np.frombuffer(raw, dtype="<f4").reshape(n, d)
    if not np.all(np.isfinite(values)):
        raise NonFiniteValue(f"{path}: data contains NaN or Inf")
    return model_id, ids, values, image_shape


def write_latents(ds: LatentDataset, path) -> None:
    if ds.model_id == PIXEL_MODEL_ID:
        raise ValueError("model_id 'pixels' is reserved for image files; use write_images")
    _write_lsf(path, ds.model_id, ds.ids, ds.X)


def read_latents(path) -> LatentDataset:
    """Read any LSF file as a latent dataset (pixel files come back flattened)."""
    model_id, ids, values, _ = _read_lsf(path)
    return LatentDataset(model_id=model_id, ids=ids, X=values)


def write_images(ds: ImageDataset, path) -> None:
    _write_lsf(path, PIXEL_MODEL_ID, ds.ids, ds.pixels, image_shape=ds.shape)


def read_images(path) -> ImageDataset:
    model_id, ids, values, image_shape = _read_lsf(path)
    if image_shape is None:
        raise DataError(f"{path}: not a pixel dataset (model_id={model_id!r})")
    h, w, c = image_shape
    return ImageDataset(ids=ids, pixels=values, height=h, width=w, channels=c)


# --- CelebA-style attribute text ------------------------------------------


def parse_attribute_table(text: str) -> AttributeTable:
    """Parse the CelebA list-attr layout.

    Line 1 is the sample count, line 2 the attribute names, then one row per
    sample: id followed by one -1/1 value per attribute.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise CountMismatch("empty attribute text")
    try:
        declared = int(lines[0].strip())
    except ValueError:
        raise CountMismatch(f"first line must be the sample count, got {lines[0]!r}") from None
    if len(lines) < 2:
        raise CountMismatch("missing attribute-name line")
    names = lines[1].split()
    rows = lines[2:]
    if len(rows) != declared:
        raise CountMismatch(f"declared {declared} samples but found {len(rows)} rows")
    k = len(names)
    ids: list[str] = []
    values = np.empty((declared, k), dtype=np.int8)
    for r, line in enumerate(rows):
        parts = line.split()
        if len(parts) != k + 1:
            raise RaggedRow(f"row {r}: expected id + {k} values, got {len(parts)} fields")
        ids.append(parts[0])
        for c, tok in enumerate(parts[1:]):
            if tok == "1":
                values[r, c] = 1
            elif tok == "-1":
                values[r, c] = -1
            else:
                raise UnknownValue(f"row {r}: value {tok!r} is not -1 or 1")
    return AttributeTable(names=names, ids=ids, values=values)


def format_attribute_table(table: AttributeTable) -> str:
    lines = [str(table.n), " ".join(table.names)]
    for sid, row in zip(table.ids, table.values):
        lines.append(sid + " " + " ".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"


def read_attribute_table(path) -> AttributeTable:
    return parse_attribute_table(Path(path).read_text(encoding="utf-8"))


def write_attribute_table(table: AttributeTable, path) -> None:
    Path(path).write_text(format_attribute_table(table), encoding="utf-8")


# --- alignment and splits --------------------------------------------------


def take(ds: Dataset, indices) -> Dataset:
    """Row-subset of a dataset, same type, rows in the given index order."""
    idx = np.asarray(indices, dtype=np.intp)
    ids = [ds.ids[i] for i in idx]
    if isinstance(ds, LatentDataset):
        return LatentDataset(model_id=ds.model_id, ids=ids, X=ds.X[idx])
    if isinstance(ds, AttributeTable):
        return AttributeTable(names=ds.names, ids=ids, values=ds.values[idx])
    if isinstance(ds, ImageDataset):
        return ImageDataset(
            ids=ids, pixels=ds.pixels[idx],
            height=ds.height, width=ds.width, channels=ds.channels,
        )
    raise TypeError(f"cannot take rows from {type(ds).__name__}")


def align(a: Dataset, b: Dataset) -> tuple[Dataset, Dataset]:
    """Row-align two datasets on their shared ids, ordered by a's id order."""
    b_pos = {sid: i for i, sid in enumerate(b.ids)}
    order = [sid for sid in a.ids if sid in b_pos]
    if not order:
        raise EmptyIntersection("datasets share no sample ids")
    a_pos = {sid: i for i, sid in enumerate(a.ids)}
    return take(a, [a_pos[s] for s in order]), take(b, [b_pos[s] for s in order])


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Deterministic head split in stored order: train rows then holdout rows."""
    n = len(ds.ids)
    if spec.n_train + spec.n_holdout > n:
        raise InsufficientRows(
            f"need {spec.n_train}+{spec.n_holdout} rows, dataset has {n}"
        )
    train = take(ds, range(spec.n_train))
    holdout = take(ds, range(spec.n_train, spec.n_train + spec.n_holdout))
    return train, holdout


# --- random-encoder baseline ------------------------------------------------


def stable_id_hash(sample_id: str) -> int:
    """Process-independent 64-bit hash of a sample id."""
    digest = hashlib.blake2b(sample_id.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def per_id_rng(seed: int, sample_id: str) -> np.random.Generator:
    """Generator whose stream depends only on (seed, sample_id)."""
    return np.random.default_rng([seed, stable_id_hash(sample_id)])


def random_encoder(
    ids: Sequence[str], d: int = 512, seed: int = 0, model_id: str = "random"
) -> LatentDataset:
    """Map each id to a deterministic standard-Gaussian vector.

    The vector depends only on (id, seed), never on the position of the id
    in the list, so permuting or subsetting the ids cannot change any
    sample's encoding.
    """
    ids = _check_ids(ids)
    out = np.empty((len(ids), d), dtype=np.float32)
    for row, sid in enumerate(ids):
        out[row] = per_id_rng(seed, sid).standard_normal(d)
    return LatentDataset(model_id=model_id, ids=ids, X=out)
