"""Vector storage, file formats, synthetic data and norm statistics."""

from __future__ import annotations

import hashlib
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Dataset",
    "DatasetFormatError",
    "NormGroupPartition",
    "load_dataset",
    "save_dataset",
    "synth_gaussian",
    "norm_percentile",
    "norm_mode",
    "tailing_factor",
    "scale_additive",
    "scale_about_mode",
    "uniform_sample",
    "partition_by_norm",
]

FORMATS = ("fvecs", "raw-f32")
_RAW_HEADER = struct.Struct("<QQ")


class DatasetFormatError(ValueError):
    """Malformed or truncated vector file; ``offset`` is the failing byte."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


def _row_norms(items: np.ndarray) -> np.ndarray:
    x = items.astype(np.float64)
    return np.sqrt(np.einsum("ij,ij->i", x, x))


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable n x d float32 matrix with cached float64 norms.

    ``source_ids`` maps dense ids back to the dataset this one was derived
    from (identity unless produced by :func:`uniform_sample`).
    """

    items: np.ndarray
    norms: np.ndarray = field(init=False)
    source_ids: np.ndarray = None

    def __post_init__(self):
        items = np.ascontiguousarray(self.items, dtype=np.float32)
        if items.ndim != 2 or items.shape[1] < 1:
            raise ValueError(f"items must be a 2-d array with d >= 1, got shape {items.shape}")
        if items.shape[0] < 1:
            raise ValueError("empty dataset")
        if items is self.items:
            items = items.copy()
        items.setflags(write=False)
        norms = _row_norms(items)
        norms.setflags(write=False)
        src = self.source_ids
        if src is None:
            src = np.arange(items.shape[0], dtype=np.int64)
        else:
            src = np.asarray(src, dtype=np.int64).copy()
            if src.shape != (items.shape[0],):
                raise ValueError("source_ids must have one entry per item")
        src.setflags(write=False)
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "norms", norms)
        object.__setattr__(self, "source_ids", src)

    @property
    def n(self) -> int:
        return self.items.shape[0]

    @property
    def d(self) -> int:
        return self.items.shape[1]

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.n, dtype=np.int64)

    def __len__(self):
        return self.n

    def checksum(self) -> str:
        """SHA-256 over shape and raw little-endian item bytes."""
        h = hashlib.sha256()
        h.update(_RAW_HEADER.pack(self.n, self.d))
        h.update(self.items.astype("<f4", copy=False).tobytes())
        return h.hexdigest()

    def with_norms(self, new_norms) -> "Dataset":
        """Rescale every item to ``new_norms`` keeping its direction."""
        new_norms = np.asarray(new_norms, dtype=np.float64)
        if np.any(self.norms <= 0):
            raise ValueError("zero-norm item present; cannot rescale direction")
        if np.any(new_norms <= 0):
            raise ValueError("transform would produce a nonpositive norm")
        factor = new_norms / self.norms
        items = self.items.astype(np.float64) * factor[:, None]
        return Dataset(items.astype(np.float32), source_ids=self.source_ids)


# -- file formats -----------------------------------------------------------

def _fvecs_decode(buf: bytes) -> np.ndarray:
    size = len(buf)
    if size == 0:
        raise DatasetFormatError("empty dataset", 0)
    if size < 4:
        raise DatasetFormatError("truncated fvecs header", 0)
    d = struct.unpack_from("<i", buf, 0)[0]
    if d < 1:
        raise DatasetFormatError(f"malformed fvecs header: dimension {d}", 0)
    rec = 4 * (d + 1)
    n, rem = divmod(size, rec)
    words = np.frombuffer(buf, dtype="<i4", count=n * (d + 1)).reshape(n, d + 1)
    bad = np.flatnonzero(words[:, 0] != d)
    if bad.size:
        i = int(bad[0])
        raise DatasetFormatError(
            f"inconsistent record dimension {int(words[i, 0])}, expected {d}", i * rec)
    if rem:
        raise DatasetFormatError("truncated fvecs record", n * rec)
    return words[:, 1:].view("<f4").astype(np.float32)


def _raw_decode(buf: bytes) -> np.ndarray:
    if len(buf) < _RAW_HEADER.size:
        raise DatasetFormatError("truncated raw-f32 header", 0)
    n, d = _RAW_HEADER.unpack_from(buf, 0)
    if n == 0:
        raise DatasetFormatError("empty dataset", 0)
    if d == 0:
        raise DatasetFormatError("malformed raw-f32 header: d = 0", 8)
    need = _RAW_HEADER.size + 4 * n * d
    if len(buf) < need:
        raise DatasetFormatError(
            f"truncated raw-f32 payload: expected {need} bytes, got {len(buf)}", len(buf))
    if len(buf) > need:
        raise DatasetFormatError("trailing bytes after raw-f32 payload", need)
    arr = np.frombuffer(buf, dtype="<f4", count=n * d, offset=_RAW_HEADER.size)
    return arr.reshape(n, d).astype(np.float32)


def read_vectors(path: str | os.PathLike, format: str = "fvecs") -> np.ndarray:
    with open(path, "rb") as f:
        buf = f.read()
    if format == "fvecs":
        return _fvecs_decode(buf)
    if format == "raw-f32":
        return _raw_decode(buf)
    raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")


def load_dataset(path: str | os.PathLike, format: str = "fvecs") -> Dataset:
    return Dataset(read_vectors(path, format))


def encode_vectors(items: np.ndarray, format: str = "fvecs") -> bytes:
    items = np.ascontiguousarray(items, dtype="<f4")
    n, d = items.shape
    if format == "fvecs":
        rec = np.empty((n, d + 1), dtype="<i4")
        rec[:, 0] = d
        rec[:, 1:] = items.view("<i4")
        return rec.tobytes()
    if format == "raw-f32":
        return _RAW_HEADER.pack(n, d) + items.tobytes()
    raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")


def save_dataset(dataset: Dataset | np.ndarray, path: str | os.PathLike,
                 format: str = "fvecs") -> None:
    items = dataset.items if isinstance(dataset, Dataset) else np.asarray(dataset)
    with open(path, "wb") as f:
        f.write(encode_vectors(items, format))


# -- synthetic data -----------------------------------------------------------

def parse_norm_model(spec: str) -> tuple:
    """Parse ``iid``, ``lognormal:SIGMA`` or ``scaled-top:FRACTION:FACTOR``."""
    parts = spec.strip().split(":")
    kind = parts[0]
    try:
        if kind == "iid" and len(parts) == 1:
            return ("iid",)
        if kind == "lognormal" and len(parts) == 2:
            return ("lognormal", float(parts[1]))
        if kind == "scaled-top" and len(parts) == 3:
            return ("scaled-top", float(parts[1]), float(parts[2]))
    except ValueError:
        pass
    raise ValueError(f"bad norm model {spec!r}")


def synth_gaussian(n: int, d: int, norm_model="iid", seed: int = 0) -> Dataset:
    """Gaussian synthetic data.

    ``norm_model`` is ``"iid"`` (standard normal entries), ``("lognormal",
    sigma)`` (Gaussian directions, lognormal(0, sigma) norms) or
    ``("scaled-top", fraction, factor)`` (iid entries, then a random
    ceil(fraction * n) items multiplied by ``factor``). Strings in the
    :func:`parse_norm_model` syntax are accepted too.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    model = parse_norm_model(norm_model) if isinstance(norm_model, str) else tuple(norm_model)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    kind = model[0]
    if kind == "iid":
        pass
    elif kind == "lognormal":
        sigma = model[1]
        if not sigma > 0:
            raise ValueError("lognormal sigma must be > 0")
        lengths = np.sqrt(np.einsum("ij,ij->i", x, x))
        x *= (rng.lognormal(0.0, sigma, size=n) / lengths)[:, None]
    elif kind == "scaled-top":
        fraction, factor = model[1], model[2]
        if not 0 < fraction <= 1:
            raise ValueError("fraction must be in (0, 1]")
        if not factor >= 1:
            raise ValueError("factor must be >= 1")
        picked = rng.choice(n, size=math.ceil(fraction * n), replace=False)
        x[picked] *= factor
    else:
        raise ValueError(f"unknown norm model {kind!r}")
    return Dataset(x.astype(np.float32))


# -- norm statistics ----------------------------------------------------------

def _rank_count(t: float, n: int) -> int:
    # round() guards against t*n/100 landing a hair above an integer
    return max(1, math.ceil(round(t * n / 100.0, 9)))


def norm_percentile(dataset: Dataset, t: float) -> float:
    """Smallest norm eta with at least ceil(t*n/100) items of norm <= eta."""
    if not 0 < t <= 100:
        raise ValueError(f"percentile t must be in (0, 100], got {t}")
    norms = np.sort(dataset.norms)
    return float(norms[_rank_count(t, dataset.n) - 1])


def tailing_factor(dataset: Dataset) -> float:
    """95th-percentile norm over median norm."""
    median = norm_percentile(dataset, 50)
    if median <= 0:
        raise ValueError("median norm is zero")
    return norm_percentile(dataset, 95) / median


def norm_mode(dataset: Dataset, bins: int | str = "fd") -> float:
    """Center of the most populated histogram bin of the norms."""
    counts, edges = np.histogram(dataset.norms, bins=bins)
    i = int(np.argmax(counts))
    return float(0.5 * (edges[i] + edges[i + 1]))


def scale_additive(dataset: Dataset, delta: float) -> Dataset:
    """Add ``delta`` to every item's norm, keeping directions."""
    if np.any(dataset.norms <= 0):
        raise ValueError("zero-norm item present")
    if delta <= -dataset.norms.min():
        raise ValueError("delta must exceed -min(norm)")
    return dataset.with_norms(dataset.norms + delta)


def scale_about_mode(dataset: Dataset, scale_beta: float, t_mode: float) -> Dataset:
    """Stretch every norm's distance from ``t_mode`` by ``scale_beta``.

    y -> t - beta (t - y) below the mode and t + beta (y - t) above, which
    is the single affine map t + beta (y - t).
    """
    if not scale_beta > 0:
        raise ValueError("scale_beta must be > 0")
    y = dataset.norms
    new = np.where(y <= t_mode, t_mode - scale_beta * (t_mode - y),
                   t_mode + scale_beta * (y - t_mode))
    if np.any(new <= 0):
        raise ValueError("transform would produce a nonpositive norm")
    return dataset.with_norms(new)


def uniform_sample(dataset: Dataset, rate: float, seed: int = 0) -> Dataset:
    """Keep exactly ceil(rate*n) items chosen uniformly without replacement."""
    if not 0 < rate <= 1:
        raise ValueError(f"rate must be in (0, 1], got {rate}")
    m = math.ceil(round(rate * dataset.n, 9))
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.permutation(dataset.n)[:m])
    return Dataset(dataset.items[keep], source_ids=dataset.source_ids[keep])


# -- norm groups --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NormGroupPartition:
    """Rank buckets of items by norm; group 0 holds the largest norms."""

    group_width: float
    assignment: np.ndarray

    @property
    def n_groups(self) -> int:
        return int(round(100 / self.group_width))

    def members(self, g: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == g)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_groups)

    def bounds(self, g: int) -> tuple[float, float]:
        """(low, high) percent of the rank range covered by group ``g``."""
        return g * self.group_width, (g + 1) * self.group_width


def partition_by_norm(dataset: Dataset, group_width: float = 5) -> NormGroupPartition:
    if not 0 < group_width <= 100:
        raise ValueError(f"invalid group width {group_width}")
    groups = 100 / group_width
    if abs(groups - round(groups)) > 1e-9:
        raise ValueError(f"100 is not divisible by group width {group_width}")
    groups = int(round(groups))
    n = dataset.n
    order = np.lexsort((np.arange(n), -dataset.norms))
    assignment = np.empty(n, dtype=np.int64)
    assignment[order] = np.arange(n) * groups // n
    assignment.setflags(write=False)
    return NormGroupPartition(group_width, assignment)
