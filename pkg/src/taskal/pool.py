"""Examples, labels and pool partitioning, plus the on-disk formats.

Embedding files come in two flavours:

* CSV with header ``id,f0,...,f{d-1}``.
* Binary: ``EMBD`` magic, uint32 version (=1), uint64 n, uint64 d, then
  n*d little-endian float32 values row-major, then n uint64 ids.

Label files are CSV: ``id,label`` for class labels, ``id,v0,...,v{m-1}``
for dense targets. Index lists hold one id per line.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import FormatError, PoolError

EMBD_MAGIC = b"EMBD"
EMBD_VERSION = 1
_EMBD_HEADER = struct.Struct("<4sIQQ")


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """n x d feature rows with explicit integer ids."""

    data: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        ids = np.asarray(self.ids, dtype=np.int64)
        if data.ndim != 2:
            raise FormatError(f"embedding data must be 2-D, got shape {data.shape}")
        if data.shape[1] < 1:
            raise FormatError("embedding dimension must be >= 1")
        if ids.shape != (data.shape[0],):
            raise FormatError(f"{ids.shape[0]} ids for {data.shape[0]} rows")
        if not np.all(np.isfinite(data)):
            bad = int(np.argwhere(~np.isfinite(data))[0, 0])
            raise FormatError("non-finite value", row=bad)
        if np.any(ids < 0):
            raise FormatError("ids must be non-negative")
        if len(np.unique(ids)) != len(ids):
            raise FormatError("duplicate id")
        data.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def positions(self, ids: Iterable[int]) -> np.ndarray:
        """Row positions for ``ids``; raises PoolError on unknown ids."""
        lookup = self._lookup
        try:
            return np.array([lookup[int(i)] for i in ids], dtype=np.int64)
        except KeyError as exc:
            raise PoolError(f"unknown id {exc.args[0]}") from None

    @property
    def _lookup(self) -> dict[int, int]:
        cached = self.__dict__.get("_lookup_cache")
        if cached is None:
            cached = {int(i): k for k, i in enumerate(self.ids)}
            object.__setattr__(self, "_lookup_cache", cached)
        return cached

    def rows(self, ids: Iterable[int]) -> np.ndarray:
        return self.data[self.positions(ids)]


@dataclass(frozen=True, eq=False)
class LabelStore:
    """Ground truth keyed by id; ``kind`` is ``"class"`` or ``"dense"``.

    Class values are a 1-D int array, dense values an (n, m) float array.
    """

    kind: str
    ids: np.ndarray
    values: np.ndarray
    num_classes: int | None = None

    def __post_init__(self):
        if self.kind not in ("class", "dense"):
            raise FormatError(f"unknown label kind {self.kind!r}")
        ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        if self.kind == "class":
            values = np.asarray(self.values, dtype=np.int64).reshape(-1)
            num_classes = self.num_classes
            if num_classes is None:
                num_classes = int(values.max()) + 1 if len(values) else 0
            if len(values) and (values.min() < 0 or values.max() >= num_classes):
                raise FormatError(f"class labels must lie in [0, {num_classes})")
            object.__setattr__(self, "num_classes", num_classes)
        else:
            values = np.asarray(self.values, dtype=np.float64)
            if values.ndim == 1:
                values = values.reshape(-1, 1)
            if not np.all(np.isfinite(values)):
                raise FormatError("non-finite dense label")
        if len(ids) != len(values):
            raise FormatError(f"{len(ids)} ids for {len(values)} labels")
        if len(np.unique(ids)) != len(ids):
            raise FormatError("duplicate id in labels")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_index", {int(i): k for k, i in enumerate(ids)})

    def __len__(self):
        return len(self.ids)

    def __contains__(self, item):
        return int(item) in self._index

    def subset(self, ids: Iterable[int]) -> "LabelStore":
        ids = [int(i) for i in ids]
        missing = [i for i in ids if i not in self._index]
        if missing:
            raise PoolError(f"no label for id {missing[0]}")
        pos = np.array([self._index[i] for i in ids], dtype=np.int64)
        return LabelStore(self.kind, np.array(ids, dtype=np.int64),
                          self.values[pos], self.num_classes)

    def merge(self, other: "LabelStore") -> "LabelStore":
        if other.kind != self.kind:
            raise PoolError("cannot merge class and dense labels")
        keep = [k for k, i in enumerate(self.ids) if int(i) not in other._index]
        ids = np.concatenate([self.ids[keep], other.ids])
        values = np.concatenate([self.values[keep], other.values])
        num_classes = None
        if self.kind == "class":
            num_classes = max(self.num_classes or 0, other.num_classes or 0)
        return LabelStore(self.kind, ids, values, num_classes)


@dataclass(frozen=True)
class PoolState:
    """Disjoint labelled / unlabelled / selected id sequences.

    The sequences keep insertion order, so selection order survives into
    reports. Instances are immutable; transitions return a new state.
    """

    labelled: tuple[int, ...] = ()
    unlabelled: tuple[int, ...] = ()
    selected: tuple[int, ...] = field(default=())

    def __post_init__(self):
        for name in ("labelled", "unlabelled", "selected"):
            object.__setattr__(self, name, tuple(int(i) for i in getattr(self, name)))
        seen: set[int] = set()
        for name in ("labelled", "unlabelled", "selected"):
            part = getattr(self, name)
            if len(set(part)) != len(part):
                raise PoolError(f"duplicate id in {name} set")
            overlap = seen.intersection(part)
            if overlap:
                raise PoolError(f"id {min(overlap)} appears in more than one set")
            seen.update(part)

    @classmethod
    def from_ids(cls, all_ids: Iterable[int], labelled: Iterable[int] = (),
                 selected: Iterable[int] = ()) -> "PoolState":
        all_ids = [int(i) for i in all_ids]
        known = set(all_ids)
        labelled = list(dict.fromkeys(int(i) for i in labelled))
        selected = list(dict.fromkeys(int(i) for i in selected))
        for i in labelled + selected:
            if i not in known:
                raise PoolError(f"id {i} is not in the pool")
        taken = set(labelled) | set(selected)
        return cls(tuple(labelled), tuple(i for i in all_ids if i not in taken),
                   tuple(selected))

    @property
    def all_ids(self) -> set[int]:
        return set(self.labelled) | set(self.unlabelled) | set(self.selected)

    def select(self, ids: Sequence[int]) -> "PoolState":
        """Move ``ids`` from unlabelled to selected."""
        ids = [int(i) for i in ids]
        pending = set(self.unlabelled)
        for i in ids:
            if i not in pending:
                raise PoolError(f"id {i} is not unlabelled")
        chosen = set(ids)
        return PoolState(self.labelled,
                         tuple(i for i in self.unlabelled if i not in chosen),
                         self.selected + tuple(ids))


def commit_selection(state: PoolState, labels: LabelStore) -> PoolState:
    """Fold the selected ids into the labelled set once their labels exist."""
    for i in state.selected:
        if i not in labels:
            raise PoolError(f"missing label for selected id {i}")
    return PoolState(state.labelled + state.selected, state.unlabelled, ())


# -- embedding files ---------------------------------------------------------

def _detect_format(path: Path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(4)
    return "binary" if head == EMBD_MAGIC else "csv"


def load_embeddings(path, format: str | None = None) -> EmbeddingMatrix:
    """Read an embedding file; ``format`` is ``csv``, ``binary`` or None to sniff."""
    path = Path(path)
    if format is None:
        format = _detect_format(path)
    if format == "csv":
        return _load_embeddings_csv(path)
    if format == "binary":
        return _load_embeddings_binary(path)
    raise FormatError(f"unknown embedding format {format!r}")


def _load_embeddings_csv(path: Path) -> EmbeddingMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FormatError("missing header", row=1)
        header = [h.strip() for h in header]
        d = len(header) - 1
        if d < 1 or header[0] != "id" or header[1:] != [f"f{k}" for k in range(d)]:
            raise FormatError("malformed header, expected id,f0,...,f{d-1}", row=1)
        ids, rows, seen = [], [], set()
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != d + 1:
                raise FormatError(f"expected {d + 1} fields, got {len(rec)}", row=lineno)
            try:
                ident = int(rec[0])
                vals = [float(c) for c in rec[1:]]
            except ValueError as exc:
                raise FormatError(str(exc), row=lineno) from None
            if ident < 0:
                raise FormatError("negative id", row=lineno)
            if ident in seen:
                raise FormatError(f"duplicate id {ident}", row=lineno)
            if not all(np.isfinite(vals)):
                raise FormatError("non-finite value", row=lineno)
            seen.add(ident)
            ids.append(ident)
            rows.append(vals)
    data = np.array(rows, dtype=np.float64).reshape(len(rows), d)
    return EmbeddingMatrix(data, np.array(ids, dtype=np.int64))


def _load_embeddings_binary(path: Path) -> EmbeddingMatrix:
    raw = path.read_bytes()
    if len(raw) < _EMBD_HEADER.size:
        raise FormatError("truncated header")
    magic, version, n, d = _EMBD_HEADER.unpack_from(raw)
    if magic != EMBD_MAGIC:
        raise FormatError("bad magic, expected EMBD")
    if version != EMBD_VERSION:
        raise FormatError(f"unsupported version {version}")
    if d < 1:
        raise FormatError("dimension must be >= 1")
    body = raw[_EMBD_HEADER.size:]
    need = 4 * n * d + 8 * n
    if len(body) < need:
        raise FormatError("truncated payload")
    if len(body) > need:
        raise FormatError("trailing bytes after id block")
    data = np.frombuffer(body, dtype="<f4", count=n * d).reshape(n, d)
    ids = np.frombuffer(body, dtype="<u8", count=n, offset=4 * n * d)
    bad = np.argwhere(~np.isfinite(data))
    if len(bad):
        raise FormatError("non-finite value", row=int(bad[0, 0]))
    uniq, first = np.unique(ids, return_index=True)
    if len(uniq) != n:
        dup = sorted(set(range(n)) - set(first.tolist()))[0]
        raise FormatError(f"duplicate id {int(ids[dup])}", row=dup)
    return EmbeddingMatrix(data.astype(np.float64), ids.astype(np.int64))


def save_embeddings(emb: EmbeddingMatrix, path, format: str = "csv") -> None:
    """Write ``emb``. The binary format stores float32, so values are rounded."""
    path = Path(path)
    if format == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["id"] + [f"f{k}" for k in range(emb.d)])
            for ident, row in zip(emb.ids, emb.data):
                writer.writerow([int(ident)] + [repr(float(v)) for v in row])
    elif format == "binary":
        with open(path, "wb") as fh:
            fh.write(_EMBD_HEADER.pack(EMBD_MAGIC, EMBD_VERSION, emb.n, emb.d))
            fh.write(np.ascontiguousarray(emb.data, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(emb.ids, dtype="<u8").tobytes())
    else:
        raise FormatError(f"unknown embedding format {format!r}")


# -- labels and index lists ----------------------------------------------------

def load_labels(path, num_classes: int | None = None) -> LabelStore:
    """Read a label CSV; the header decides between class and dense labels."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FormatError("missing header", row=1)
        header = [h.strip() for h in header]
        if header == ["id", "label"]:
            kind, width = "class", 1
        elif (len(header) >= 2 and header[0] == "id"
              and header[1:] == [f"v{k}" for k in range(len(header) - 1)]):
            kind, width = "dense", len(header) - 1
        else:
            raise FormatError("malformed header, expected id,label or id,v0,...", row=1)
        ids, values = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != width + 1:
                raise FormatError(f"expected {width + 1} fields, got {len(rec)}", row=lineno)
            try:
                ids.append(int(rec[0]))
                if kind == "class":
                    values.append(int(rec[1]))
                else:
                    values.append([float(c) for c in rec[1:]])
            except ValueError as exc:
                raise FormatError(str(exc), row=lineno) from None
    if kind == "class":
        arr = np.array(values, dtype=np.int64)
    else:
        arr = np.array(values, dtype=np.float64).reshape(len(values), width)
    return LabelStore(kind, np.array(ids, dtype=np.int64), arr, num_classes)


def save_labels(labels: LabelStore, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if labels.kind == "class":
            writer.writerow(["id", "label"])
            for i, v in zip(labels.ids, labels.values):
                writer.writerow([int(i), int(v)])
        else:
            m = labels.values.shape[1]
            writer.writerow(["id"] + [f"v{k}" for k in range(m)])
            for i, row in zip(labels.ids, labels.values):
                writer.writerow([int(i)] + [repr(float(v)) for v in row])


def load_index_list(path) -> list[int]:
    ids = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                ids.append(int(line))
            except ValueError:
                raise FormatError(f"not an integer id: {line!r}", row=lineno) from None
    return ids


def save_index_list(ids: Iterable[int], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i in ids:
            fh.write(f"{int(i)}\n")
