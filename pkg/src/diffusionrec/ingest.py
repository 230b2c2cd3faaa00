"""Rating-file parsing, unary coarse-graining and train/probe splitting."""

from __future__ import annotations

import gzip
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .graph import BipartiteGraph, build_graph


class ParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class InteractionRecord(NamedTuple):
    user_id: str
    item_id: str
    rating: int


@dataclass(frozen=True)
class RatingFormat:
    """Column layout of a delimiter-separated rating file.

    ``item_blocks`` selects the Netflix Prize layout, where a line ``"<item>:"``
    opens a block of ``user<delim>rating[<delim>date]`` lines for that item;
    ``user_col``/``rating_col`` then index into those block lines.
    """

    delimiter: str = "\t"
    user_col: int = 0
    item_col: int = 1
    rating_col: int = 2
    scale: tuple[int, int] = (1, 5)
    item_blocks: bool = False


FORMATS = {
    "movielens-100k": RatingFormat("\t", 0, 1, 2, (1, 5)),
    "movielens-1m": RatingFormat("::", 0, 1, 2, (1, 5)),
    "netflix-csv": RatingFormat(",", 0, 1, 2, (1, 5)),
    "netflix-prize": RatingFormat(",", 0, -1, 1, (1, 5), item_blocks=True),
    "rym": RatingFormat("\t", 0, 1, 2, (1, 10)),
}

# Coarse-graining thresholds used for each family of data.
DEFAULT_THRESHOLDS = {"movielens-100k": 3, "movielens-1m": 3, "netflix-csv": 3,
                      "netflix-prize": 3, "rym": 6}


def _rating(tok: str, lineno: int, fmt: RatingFormat) -> int:
    try:
        val = float(tok)
    except ValueError:
        raise ParseError(lineno, f"rating {tok!r} is not a number") from None
    if val != int(val):
        raise ParseError(lineno, f"rating {tok!r} is not an integer")
    lo, hi = fmt.scale
    if not lo <= val <= hi:
        raise ParseError(lineno, f"rating {tok!r} outside scale {lo}..{hi}")
    return int(val)


def parse_ratings(lines: Iterable[str], fmt: RatingFormat | str = "movielens-100k") -> list[InteractionRecord]:
    """One record per non-blank line, in file order.  Extra trailing fields
    (timestamps, dates) are ignored."""
    if isinstance(fmt, str):
        fmt = FORMATS[fmt]
    out = []
    item = None
    need = max(fmt.user_col, fmt.item_col, fmt.rating_col) + 1
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        if fmt.item_blocks and line.rstrip().endswith(":"):
            item = line.rstrip()[:-1].strip()
            if not item:
                raise ParseError(lineno, "empty item header")
            continue
        parts = line.split(fmt.delimiter)
        if fmt.item_blocks:
            if item is None:
                raise ParseError(lineno, "rating line before any item header")
            if len(parts) < max(fmt.user_col, fmt.rating_col) + 1:
                raise ParseError(lineno, f"expected user and rating fields, got {line!r}")
            user, it = parts[fmt.user_col].strip(), item
        else:
            if len(parts) < need:
                raise ParseError(lineno, f"expected at least {need} fields, got {len(parts)}")
            user, it = parts[fmt.user_col].strip(), parts[fmt.item_col].strip()
        if not user or not it:
            raise ParseError(lineno, "empty user or item id")
        out.append(InteractionRecord(user, it, _rating(parts[fmt.rating_col].strip(), lineno, fmt)))
    return out


def open_text(path) -> io.TextIOBase:
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


def read_ratings(path, fmt: RatingFormat | str = "movielens-100k") -> list[InteractionRecord]:
    with open_text(path) as fh:
        return parse_ratings(fh, fmt)


def coarse_grain(records: Iterable[InteractionRecord], threshold: int) -> list[tuple[str, str]]:
    """Unary links from ratings >= ``threshold``.

    Repeated (user, item) ratings are reduced to their maximum first, so a
    pair is kept if any of its ratings passes.  Output keeps first-seen order.
    """
    best: dict[tuple[str, str], int] = {}
    for r in records:
        key = (r.user_id, r.item_id)
        if key not in best or r.rating > best[key]:
            best[key] = r.rating
    return [key for key, v in best.items() if v >= threshold]


def _id_sort_key(ids):
    if all(s.lstrip("-").isdigit() for s in ids):
        return lambda s: (int(s), s)
    return lambda s: s


@dataclass
class IndexedLinks:
    """Links as dense 0-based indices plus the original ids for each index."""

    links: np.ndarray
    user_ids: list[str]
    item_ids: list[str]

    @property
    def m(self):
        return len(self.user_ids)

    @property
    def n(self):
        return len(self.item_ids)

    def graph(self) -> BipartiteGraph:
        return build_graph(self.links, self.m, self.n)


def index_links(pairs: Sequence[tuple[str, str]], user_universe: Iterable[str] | None = None,
                item_universe: Iterable[str] | None = None) -> IndexedLinks:
    """Assign dense indices; ids are ordered numerically when all are integers.

    The universes default to the ids present in ``pairs``.  Passing the ids
    of the raw ratings keeps users/items whose every rating fell below the
    coarse-graining threshold as zero-degree nodes.
    """
    users = set(user_universe) if user_universe is not None else set()
    items = set(item_universe) if item_universe is not None else set()
    users.update(u for u, _ in pairs)
    items.update(i for _, i in pairs)
    users = sorted(users, key=_id_sort_key(users))
    items = sorted(items, key=_id_sort_key(items))
    uix = {u: k for k, u in enumerate(users)}
    iix = {i: k for k, i in enumerate(items)}
    links = np.array([(uix[u], iix[i]) for u, i in pairs], dtype=np.int64).reshape(-1, 2)
    links = np.unique(links, axis=0)
    return IndexedLinks(links, users, items)


def remove_top_degree_items(links: np.ndarray, count: int, n: int | None = None) -> np.ndarray:
    """Drop every link of the ``count`` highest-degree items.

    Items are ranked by (degree desc, index asc), so at a tie on the cutoff
    the lower index goes first.
    """
    links = np.asarray(links, dtype=np.int64).reshape(-1, 2)
    if count < 0:
        raise ValueError("count must be >= 0")
    n = int(links[:, 1].max() + 1) if n is None and len(links) else (n or 0)
    if count >= n:
        raise ValueError(f"cannot remove {count} of {n} items")
    if count == 0:
        return links.copy()
    deg = np.bincount(links[:, 1], minlength=n)
    order = np.lexsort((np.arange(n), -deg))
    drop = np.zeros(n, dtype=bool)
    drop[order[:count]] = True
    return links[~drop[links[:, 1]]]


def compact(indexed: IndexedLinks) -> IndexedLinks:
    """Re-index after link removal, dropping users/items left without links."""
    u_keep = np.unique(indexed.links[:, 0])
    i_keep = np.unique(indexed.links[:, 1])
    u_map = np.full(indexed.m, -1)
    u_map[u_keep] = np.arange(u_keep.size)
    i_map = np.full(indexed.n, -1)
    i_map[i_keep] = np.arange(i_keep.size)
    links = np.column_stack([u_map[indexed.links[:, 0]], i_map[indexed.links[:, 1]]])
    return IndexedLinks(links, [indexed.user_ids[k] for k in u_keep],
                        [indexed.item_ids[k] for k in i_keep])


@dataclass
class SplitDataset:
    train: BipartiteGraph
    probe: np.ndarray
    seed: int
    test_fraction: float
    meta: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.train.m

    @property
    def n(self):
        return self.train.n


def probe_size(total: int, test_fraction: float) -> int:
    return int(math.floor(test_fraction * total + 0.5))


def split(links: np.ndarray, test_fraction: float, seed: int, m: int | None = None,
          n: int | None = None) -> SplitDataset:
    """Hold out a uniform random ``round(test_fraction * |links|)`` links.

    The user/item universe is that of the full link set; nodes seen only in
    the probe stay in the training graph with degree 0.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    links = np.unique(np.asarray(links, dtype=np.int64).reshape(-1, 2), axis=0)
    m = int(links[:, 0].max() + 1) if m is None else m
    n = int(links[:, 1].max() + 1) if n is None else n
    k = probe_size(len(links), test_fraction)
    if k < 1:
        raise ValueError(f"test_fraction {test_fraction} of {len(links)} links leaves an empty probe")
    rng = np.random.default_rng(seed)
    chosen = np.zeros(len(links), dtype=bool)
    chosen[rng.choice(len(links), size=k, replace=False)] = True
    train = build_graph(links[~chosen], m, n)
    return SplitDataset(train, links[chosen], seed, test_fraction)


def dataset_stats(g: BipartiteGraph) -> dict:
    return {"m": g.m, "n": g.n, "links": g.n_links,
            "sparsity": g.n_links / (g.m * g.n) if g.m and g.n else 0.0}


def write_links(path, links: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, i in np.asarray(links).reshape(-1, 2):
            fh.write(f"{u}\t{i}\n")


def read_links(path) -> np.ndarray:
    rows = []
    with open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(lineno, f"expected 'user<TAB>item', got {line.rstrip()!r}")
            rows.append((int(parts[0]), int(parts[1])))
    return np.array(rows, dtype=np.int64).reshape(-1, 2)


def write_split(directory, ds: SplitDataset, meta: dict | None = None) -> None:
    """``train.tsv`` + ``probe.tsv`` link files and a ``split.json`` sidecar."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_links(d / "train.tsv", ds.train.links())
    write_links(d / "probe.tsv", ds.probe)
    sidecar = {"m": ds.m, "n": ds.n, "seed": ds.seed, "test_fraction": ds.test_fraction,
               "train_links": ds.train.n_links, "probe_links": int(len(ds.probe))}
    sidecar.update(meta or ds.meta)
    (d / "split.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def read_split(directory) -> SplitDataset:
    d = Path(directory)
    meta = json.loads((d / "split.json").read_text())
    train = build_graph(read_links(d / "train.tsv"), meta["m"], meta["n"])
    return SplitDataset(train, read_links(d / "probe.tsv"), meta["seed"], meta["test_fraction"], meta)
