"""Paired knowledge graphs: storage, disk layout, anchor splits, synthetic pairs and transforms.

On disk a pair follows the DBP2.0 layout: ``triples_1`` / ``triples_2`` hold
``head<TAB>relation<TAB>tail`` lines, ``ent_links`` holds ``src<TAB>tgt`` anchor lines and the
optional ``dangling_1`` / ``dangling_2`` files list ground-truth dangling ids. ``save_kg_pair``
additionally writes ``ent_ids_*`` / ``rel_ids_*`` vocabularies and ``meta.json`` so that
isolated entities and the relation-sharing flag survive a round trip.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from lambdaea.exceptions import DataFormatError, ValidationError
from lambdaea.logging import get_logger

type IdArray = NDArray[np.int64]

logger = get_logger("kgdata")

TRIPLE_FILES = ("triples_1", "triples_2")
LINK_FILE = "ent_links"
DANGLING_FILES = ("dangling_1", "dangling_2")
ENTITY_FILES = ("ent_ids_1", "ent_ids_2")
RELATION_FILES = ("rel_ids_1", "rel_ids_2")
META_FILE = "meta.json"


def _as_id_array(rows: Iterable[Sequence[int]] | NDArray, width: int) -> IdArray:
    if isinstance(rows, np.ndarray):
        arr = rows.astype(np.int64, copy=False)
    else:
        arr = np.asarray(list(rows), dtype=np.int64)
    return arr.reshape(-1, width)


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def _check_fraction(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True, eq=False)
class TripleStore:
    """Triples of one knowledge graph over dense entity and relation ids.

    Triples are kept as an ``(m, 3)`` int64 array of ``(head, relation, tail)`` rows.
    Use :meth:`from_triples` to build a store from unsorted input with duplicates.
    """

    triples: IdArray
    n_entities: int
    n_relations: int

    def __post_init__(self) -> None:
        triples = _as_id_array(self.triples, 3)
        object.__setattr__(self, "triples", triples)
        if self.n_entities < 0 or self.n_relations < 0:
            raise ValidationError("entity and relation counts must be non-negative")
        if len(triples) == 0:
            return
        if triples.min() < 0:
            raise ValidationError("triple ids must be non-negative")
        if triples[:, [0, 2]].max() >= self.n_entities:
            raise ValidationError(
                f"triple references entity {int(triples[:, [0, 2]].max())} "
                f"but the store has {self.n_entities} entities"
            )
        if triples[:, 1].max() >= self.n_relations:
            raise ValidationError(
                f"triple references relation {int(triples[:, 1].max())} "
                f"but the store has {self.n_relations} relations"
            )
        if len(np.unique(triples, axis=0)) != len(triples):
            raise ValidationError("duplicate triples in store")

    @classmethod
    def from_triples(
        cls,
        triples: Iterable[Sequence[int]] | NDArray,
        n_entities: int,
        n_relations: int,
    ) -> TripleStore:
        """Build a store in canonical form: rows sorted lexicographically, duplicates dropped."""
        arr = _as_id_array(triples, 3)
        canonical = np.unique(arr, axis=0) if len(arr) else arr
        if len(canonical) != len(arr):
            logger.debug("Dropped %d duplicate triples", len(arr) - len(canonical))
        return cls(canonical, n_entities, n_relations)

    def __len__(self) -> int:
        return len(self.triples)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TripleStore):
            return NotImplemented
        return (
            self.n_entities == other.n_entities
            and self.n_relations == other.n_relations
            and np.array_equal(self.triples, other.triples)
        )

    __hash__ = None  # type: ignore[assignment]

    def degree(self) -> IdArray:
        """Number of triples incident to each entity (self-loops count once)."""
        deg = np.bincount(self.triples[:, 0], minlength=self.n_entities)
        loops = self.triples[:, 0] == self.triples[:, 2]
        deg += np.bincount(self.triples[~loops, 2], minlength=self.n_entities)
        return deg.astype(np.int64)


@dataclass(frozen=True, eq=False)
class KGPair:
    """A source and a target knowledge graph with anchor links between them.

    ``truth_dangling_*`` are evaluation-only labels; when absent, every entity without an
    anchor is taken as dangling (the DBP2.0 convention where ``ent_links`` lists all
    matchable pairs). ``shared_relations`` places both graphs' relations in one id space for
    the encoder; otherwise target relation ids are offset past the source ones.
    """

    source: TripleStore
    target: TripleStore
    anchors: IdArray
    truth_dangling_src: frozenset[int] | None = None
    truth_dangling_tgt: frozenset[int] | None = None
    shared_relations: bool = False

    def __post_init__(self) -> None:
        anchors = _as_id_array(self.anchors, 2)
        object.__setattr__(self, "anchors", anchors)
        if len(anchors):
            if anchors.min() < 0:
                raise ValidationError("anchor ids must be non-negative")
            if anchors[:, 0].max() >= self.source.n_entities:
                raise ValidationError("anchor source id out of range")
            if anchors[:, 1].max() >= self.target.n_entities:
                raise ValidationError("anchor target id out of range")
            if len(np.unique(anchors[:, 0])) != len(anchors):
                raise ValidationError("a source entity appears in more than one anchor pair")
            if len(np.unique(anchors[:, 1])) != len(anchors):
                raise ValidationError("a target entity appears in more than one anchor pair")
        for side, truth, store, column in (
            ("source", self.truth_dangling_src, self.source, 0),
            ("target", self.truth_dangling_tgt, self.target, 1),
        ):
            if truth is None:
                continue
            if any(not 0 <= e < store.n_entities for e in truth):
                raise ValidationError(f"{side} dangling id out of range")
            overlap = truth.intersection(anchors[:, column].tolist())
            if overlap:
                raise ValidationError(
                    f"{side} dangling ids overlap anchors: {sorted(overlap)[:5]}"
                )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KGPair):
            return NotImplemented
        return (
            self.source == other.source
            and self.target == other.target
            and np.array_equal(self.anchors, other.anchors)
            and self.truth_dangling_src == other.truth_dangling_src
            and self.truth_dangling_tgt == other.truth_dangling_tgt
            and self.shared_relations == other.shared_relations
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def n_entities(self) -> int:
        """Size of the union entity vocabulary (source ids first, then target ids)."""
        return self.source.n_entities + self.target.n_entities

    @property
    def n_relations(self) -> int:
        """Size of the union relation vocabulary."""
        if self.shared_relations:
            return max(self.source.n_relations, self.target.n_relations)
        return self.source.n_relations + self.target.n_relations

    @property
    def target_offset(self) -> int:
        return self.source.n_entities

    @property
    def matchable_ratio(self) -> float:
        """True pi_p: the fraction of all entities that have a counterpart."""
        total = self.n_entities
        return 2 * len(self.anchors) / total if total else 0.0

    def dangling_src(self) -> IdArray:
        return self._dangling(self.truth_dangling_src, self.source, 0)

    def dangling_tgt(self) -> IdArray:
        return self._dangling(self.truth_dangling_tgt, self.target, 1)

    def _dangling(self, truth: frozenset[int] | None, store: TripleStore, column: int) -> IdArray:
        if truth is not None:
            return np.array(sorted(truth), dtype=np.int64)
        return np.setdiff1d(np.arange(store.n_entities), self.anchors[:, column])

    def to_global(self, anchors: IdArray) -> IdArray:
        """Map local ``(src, tgt)`` rows into the union entity id space."""
        arr = _as_id_array(anchors, 2).copy()
        arr[:, 1] += self.target_offset
        return arr

    def union_triples(self) -> IdArray:
        """All triples over union entity and relation ids."""
        tgt = self.target.triples.copy()
        tgt[:, [0, 2]] += self.target_offset
        if not self.shared_relations:
            tgt[:, 1] += self.source.n_relations
        return np.concatenate([self.source.triples, tgt])

    def reversed(self) -> KGPair:
        """The same pair with source and target swapped."""
        return KGPair(
            source=self.target,
            target=self.source,
            anchors=self.anchors[:, ::-1].copy(),
            truth_dangling_src=self.truth_dangling_tgt,
            truth_dangling_tgt=self.truth_dangling_src,
            shared_relations=self.shared_relations,
        )


@dataclass(frozen=True, eq=False)
class AnchorSplit:
    """Labeled (train) and held-out (test) anchors, both as local ``(src, tgt)`` rows."""

    train: IdArray
    test: IdArray
    seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "train", _as_id_array(self.train, 2))
        object.__setattr__(self, "test", _as_id_array(self.test, 2))
        seen = {tuple(row) for row in self.train.tolist()}
        if any(tuple(row) in seen for row in self.test.tolist()):
            raise ValidationError("train and test anchors overlap")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AnchorSplit):
            return NotImplemented
        return (
            self.seed == other.seed
            and np.array_equal(self.train, other.train)
            and np.array_equal(self.test, other.test)
        )

    __hash__ = None  # type: ignore[assignment]

    def validate_against(self, pair: KGPair) -> None:
        union = np.concatenate([self.train, self.test])
        if len(union) != len(pair.anchors) or not np.array_equal(
            np.unique(union, axis=0), np.unique(pair.anchors, axis=0)
        ):
            raise ValidationError("split does not partition the pair's anchors")

    def to_dict(self) -> dict[str, object]:
        return {"seed": self.seed, "train": self.train.tolist(), "test": self.test.tolist()}

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> AnchorSplit:
        return cls(
            train=np.asarray(data["train"], dtype=np.int64).reshape(-1, 2),
            test=np.asarray(data["test"], dtype=np.int64).reshape(-1, 2),
            seed=int(data["seed"]),  # type: ignore[call-overload]
        )


# --------------------------------------------------------------------------- disk layout


def _iter_rows(path: Path, width: int, min_only: bool = False) -> Iterator[tuple[int, list[int]]]:
    """Yields ``(line_no, ids)`` for each non-blank line of an integer table."""
    try:
        handle = path.open(encoding="utf-8")
    except OSError as e:
        raise DataFormatError(path, 0, f"cannot open file: {e}") from e
    with handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if min_only:
                fields = fields[:width]
            if len(fields) != width:
                raise DataFormatError(path, line_no, f"expected {width} fields, got {len(fields)}")
            ids: list[int] = []
            for token in fields:
                try:
                    value = int(token)
                except ValueError:
                    raise DataFormatError(
                        path, line_no, f"expected an integer id, got {token!r}"
                    ) from None
                if value < 0:
                    raise DataFormatError(path, line_no, f"negative id {value}")
                ids.append(value)
            yield line_no, ids


def _read_table(path: Path, width: int, min_only: bool = False) -> IdArray:
    rows = [ids for _, ids in _iter_rows(path, width, min_only)]
    return _as_id_array(rows, width)


def _dense_index(vocabulary: IdArray, path: Path, used: IdArray) -> tuple[IdArray, int]:
    """Maps raw ids onto ``0..n-1`` in ascending raw-id order."""
    vocab = np.unique(vocabulary)
    if len(used):
        missing = np.setdiff1d(used, vocab)
        if len(missing):
            raise DataFormatError(path, 0, f"id {int(missing[0])} is not in the vocabulary")
    return vocab, len(vocab)


def _reindex(raw: IdArray, vocab: IdArray) -> IdArray:
    return np.searchsorted(vocab, raw).astype(np.int64)


def load_kg_pair(dir_path: Path | str) -> KGPair:
    """Load and validate a pair stored in the DBP2.0 directory layout.

    Entity and relation ids are re-indexed densely per graph in ascending raw-id order.

    Args:
        dir_path: Directory holding ``triples_1``, ``triples_2`` and ``ent_links``

    Returns:
        The validated pair

    Raises:
        DataFormatError: A file is missing or a line is malformed
        ValidationError: The parsed data violates a pair invariant
    """
    root = Path(dir_path)
    for name in (*TRIPLE_FILES, LINK_FILE):
        if not (root / name).is_file():
            raise DataFormatError(root / name, 0, "required file is missing")

    triples = [_read_table(root / name, 3) for name in TRIPLE_FILES]
    links = _read_table(root / LINK_FILE, 2)
    dangling: list[IdArray | None] = []
    for name in DANGLING_FILES:
        path = root / name
        dangling.append(_read_table(path, 1).ravel() if path.is_file() else None)

    stores: list[TripleStore] = []
    entity_maps: list[IdArray] = []
    for side in range(2):
        raw = triples[side]
        parts = [raw[:, 0], raw[:, 2], links[:, side]]
        listed = dangling[side]
        if listed is not None:
            parts.append(listed)
        used_entities = np.concatenate(parts)
        ent_path = root / ENTITY_FILES[side]
        if ent_path.is_file():
            vocab_source = _read_table(ent_path, 1, min_only=True).ravel()
        else:
            vocab_source = used_entities
        entity_vocab, n_entities = _dense_index(vocab_source, ent_path, used_entities)

        rel_path = root / RELATION_FILES[side]
        if rel_path.is_file():
            rel_source = _read_table(rel_path, 1, min_only=True).ravel()
        else:
            rel_source = raw[:, 1]
        rel_vocab, n_relations = _dense_index(rel_source, rel_path, raw[:, 1])

        mapped = np.column_stack(
            [
                _reindex(raw[:, 0], entity_vocab),
                _reindex(raw[:, 1], rel_vocab),
                _reindex(raw[:, 2], entity_vocab),
            ]
        )
        store = TripleStore.from_triples(mapped, n_entities, n_relations)
        if len(store) != len(raw):
            logger.warning("%s: dropped %d duplicate triples", TRIPLE_FILES[side], len(raw) - len(store))
        stores.append(store)
        entity_maps.append(entity_vocab)

    anchors = np.column_stack(
        [_reindex(links[:, 0], entity_maps[0]), _reindex(links[:, 1], entity_maps[1])]
    )
    truth = [
        frozenset(_reindex(d, entity_maps[side]).tolist()) if d is not None else None
        for side, d in enumerate(dangling)
    ]

    shared = False
    meta_path = root / META_FILE
    if meta_path.is_file():
        try:
            shared = bool(json.loads(meta_path.read_text(encoding="utf-8")).get("shared_relations"))
        except json.JSONDecodeError as e:
            raise DataFormatError(meta_path, e.lineno, e.msg) from e

    pair = KGPair(stores[0], stores[1], anchors, truth[0], truth[1], shared_relations=shared)
    logger.info(
        "Loaded pair from %s: %d/%d entities, %d/%d triples, %d anchors",
        root,
        pair.source.n_entities,
        pair.target.n_entities,
        len(pair.source),
        len(pair.target),
        len(pair.anchors),
    )
    return pair


def _write_table(path: Path, rows: IdArray) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for row in rows.tolist():
            fh.write("\t".join(str(v) for v in row) + "\n")


def save_kg_pair(pair: KGPair, dir_path: Path | str) -> Path:
    """Write ``pair`` in the layout read by :func:`load_kg_pair`."""
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    stores = (pair.source, pair.target)
    truths = (pair.truth_dangling_src, pair.truth_dangling_tgt)
    for side, store in enumerate(stores):
        _write_table(root / TRIPLE_FILES[side], store.triples)
        _write_table(root / ENTITY_FILES[side], np.arange(store.n_entities).reshape(-1, 1))
        _write_table(root / RELATION_FILES[side], np.arange(store.n_relations).reshape(-1, 1))
        truth = truths[side]
        if truth is not None:
            _write_table(root / DANGLING_FILES[side], np.array(sorted(truth)).reshape(-1, 1))
        else:
            (root / DANGLING_FILES[side]).unlink(missing_ok=True)
    _write_table(root / LINK_FILE, pair.anchors)
    (root / META_FILE).write_text(
        json.dumps({"shared_relations": pair.shared_relations}), encoding="utf-8"
    )
    return root


# --------------------------------------------------------------------------- anchor splits


def split_anchors(pair: KGPair, train_ratio: float, seed: int) -> AnchorSplit:
    """Randomly split the anchors into labeled and held-out parts.

    Args:
        pair: The pair whose anchors are split
        train_ratio: Fraction of anchors labeled, strictly between 0 and 1
        seed: Seed of the permutation

    Returns:
        A split with ``round(train_ratio * |anchors|)`` training anchors (halves round up)
    """
    if not 0.0 < train_ratio < 1.0:
        raise ValidationError(f"train_ratio must lie in (0, 1), got {train_ratio}")
    if len(pair.anchors) < 2:
        raise ValidationError(f"need at least 2 anchors to split, got {len(pair.anchors)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pair.anchors))
    n_train = _round_half_up(train_ratio * len(pair.anchors))
    train = pair.anchors[np.sort(order[:n_train])]
    test = pair.anchors[np.sort(order[n_train:])]
    return AnchorSplit(train=train, test=test, seed=seed)


def full_anchor_split(pair: KGPair, seed: int = 0) -> AnchorSplit:
    """Every anchor labeled; the unlabeled set then holds dangling entities only."""
    if len(pair.anchors) == 0:
        raise ValidationError("pair has no anchors")
    return AnchorSplit(train=pair.anchors.copy(), test=np.empty((0, 2), dtype=np.int64), seed=seed)


# --------------------------------------------------------------------------- synthetic pairs


@dataclass(frozen=True)
class SyntheticConfig:
    """Planted-community generator settings.

    ``dangling_degree`` edges leave each dangling entity; each lands on a matchable member
    of the entity's community with probability ``dangling_bridge_prob`` and on another
    dangling entity of the same graph and community otherwise. ``dangling_relations`` extra
    relation ids are reserved for dangling triples (0 reuses the shared relations).
    """

    n_match: int = 500
    n_dang_src: int = 200
    n_dang_tgt: int = 300
    n_relations: int = 8
    community_count: int = 10
    intra_edge_prob: float = 0.1
    cross_noise: float = 0.0
    seed: int = 0
    dangling_degree: int = 3
    dangling_bridge_prob: float = 0.2
    dangling_relations: int = 0

    def __post_init__(self) -> None:
        for name in (
            "n_match",
            "n_dang_src",
            "n_dang_tgt",
            "n_relations",
            "community_count",
            "dangling_degree",
            "dangling_relations",
        ):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if self.n_match < self.community_count:
            raise ValidationError("n_match must be at least community_count")
        if self.community_count < 1:
            raise ValidationError("community_count must be >= 1")
        if self.n_relations + self.dangling_relations < 1:
            raise ValidationError("need at least one relation")
        for name in ("intra_edge_prob", "cross_noise", "dangling_bridge_prob"):
            _check_fraction(name, getattr(self, name))


def _community_edges(
    members: list[IdArray], prob: float, rng: np.random.Generator
) -> IdArray:
    edges = []
    for group in members:
        if len(group) < 2:
            continue
        rows, cols = np.triu_indices(len(group), k=1)
        keep = rng.random(len(rows)) < prob
        edges.append(np.column_stack([group[rows[keep]], group[cols[keep]]]))
    if not edges:
        return np.empty((0, 2), dtype=np.int64)
    return np.concatenate(edges).astype(np.int64)


def _dangling_edges(
    cfg: SyntheticConfig,
    n_dangling: int,
    match_members: list[IdArray],
    rng: np.random.Generator,
) -> tuple[IdArray, IdArray]:
    """Edges of dangling entities in the generator's matchable-first numbering.

    Dangling entity ``d`` is numbered ``n_match + d``. Returns ``(edges, relations)``.
    """
    communities = rng.integers(0, cfg.community_count, n_dangling)
    dangling_members = [
        cfg.n_match + np.flatnonzero(communities == c) for c in range(cfg.community_count)
    ]
    relation_low = cfg.n_relations if cfg.dangling_relations else 0
    relation_high = cfg.n_relations + cfg.dangling_relations
    edges: list[tuple[int, int]] = []
    for d in range(n_dangling):
        node = cfg.n_match + d
        c = int(communities[d])
        peers = dangling_members[c][dangling_members[c] != node]
        for _ in range(cfg.dangling_degree):
            if len(peers) == 0 or rng.random() < cfg.dangling_bridge_prob:
                other = int(rng.choice(match_members[c]))
            else:
                other = int(rng.choice(peers))
            edges.append((node, other))
    arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    relations = rng.integers(relation_low, relation_high, len(arr)).astype(np.int64)
    return arr, relations


def _orient(edges: IdArray, relations: IdArray, flip: NDArray[np.bool_]) -> IdArray:
    heads = np.where(flip, edges[:, 1], edges[:, 0])
    tails = np.where(flip, edges[:, 0], edges[:, 1])
    return np.column_stack([heads, relations, tails]).astype(np.int64)


def gen_synthetic_pair(cfg: SyntheticConfig) -> KGPair:
    """Generate a pair with planted communities and known dangling labels.

    The matchable core is one random community graph copied into both KGs (each copy drops
    every edge independently with probability ``cross_noise``); ids in each graph are
    shuffled so anchors are not the identity map.
    """
    rng = np.random.default_rng(cfg.seed)
    labels = np.arange(cfg.n_match) % cfg.community_count
    rng.shuffle(labels)
    match_members = [np.flatnonzero(labels == c) for c in range(cfg.community_count)]

    core = _community_edges(match_members, cfg.intra_edge_prob, rng)
    core_relations = rng.integers(0, max(cfg.n_relations, 1), len(core)).astype(np.int64)
    if cfg.n_relations == 0:
        core = core[:0]
        core_relations = core_relations[:0]
    core_triples = _orient(core, core_relations, rng.random(len(core)) < 0.5)

    n_rel_total = cfg.n_relations + cfg.dangling_relations
    stores: list[TripleStore] = []
    id_maps: list[IdArray] = []
    truths: list[frozenset[int]] = []
    for n_dangling in (cfg.n_dang_src, cfg.n_dang_tgt):
        n_total = cfg.n_match + n_dangling
        keep = rng.random(len(core_triples)) >= cfg.cross_noise
        dang_edges, dang_relations = _dangling_edges(cfg, n_dangling, match_members, rng)
        dang_triples = _orient(dang_edges, dang_relations, rng.random(len(dang_edges)) < 0.5)
        local = np.concatenate([core_triples[keep], dang_triples])
        id_map = rng.permutation(n_total).astype(np.int64)
        renamed = np.column_stack([id_map[local[:, 0]], local[:, 1], id_map[local[:, 2]]])
        stores.append(TripleStore.from_triples(renamed, n_total, n_rel_total))
        id_maps.append(id_map)
        truths.append(frozenset(id_map[cfg.n_match :].tolist()))

    anchors = np.column_stack([id_maps[0][: cfg.n_match], id_maps[1][: cfg.n_match]])
    anchors = anchors[np.argsort(anchors[:, 0], kind="stable")]
    pair = KGPair(
        stores[0],
        stores[1],
        anchors,
        truth_dangling_src=truths[0],
        truth_dangling_tgt=truths[1],
        shared_relations=True,
    )
    logger.info(
        "Generated synthetic pair: %d matchable, %d/%d dangling, %d/%d triples",
        cfg.n_match,
        cfg.n_dang_src,
        cfg.n_dang_tgt,
        len(pair.source),
        len(pair.target),
    )
    return pair


# --------------------------------------------------------------------------- transforms


def _drop_entities(store: TripleStore, drop: NDArray[np.bool_]) -> tuple[TripleStore, IdArray]:
    """Delete entities and their triples; survivors keep their relative order."""
    keep = ~drop
    mapping = np.full(store.n_entities, -1, dtype=np.int64)
    mapping[keep] = np.arange(int(keep.sum()))
    t = store.triples
    alive = keep[t[:, 0]] & keep[t[:, 2]] if len(t) else np.zeros(0, dtype=bool)
    kept = t[alive].copy()
    kept[:, 0] = mapping[kept[:, 0]]
    kept[:, 2] = mapping[kept[:, 2]]
    return TripleStore.from_triples(kept, int(keep.sum()), store.n_relations), mapping


def _remap_ids(ids: Iterable[int], mapping: IdArray) -> frozenset[int]:
    return frozenset(int(mapping[i]) for i in ids if mapping[i] >= 0)


def _rebuild(
    pair: KGPair,
    drop_src: NDArray[np.bool_],
    drop_tgt: NDArray[np.bool_],
    anchors: IdArray,
    dangling_src: Iterable[int],
    dangling_tgt: Iterable[int],
) -> KGPair:
    source, src_map = _drop_entities(pair.source, drop_src)
    target, tgt_map = _drop_entities(pair.target, drop_tgt)
    new_anchors = np.column_stack([src_map[anchors[:, 0]], tgt_map[anchors[:, 1]]])
    return KGPair(
        source,
        target,
        new_anchors,
        truth_dangling_src=_remap_ids(dangling_src, src_map),
        truth_dangling_tgt=_remap_ids(dangling_tgt, tgt_map),
        shared_relations=pair.shared_relations,
    )


def _delete_count(delete_frac: float, available: int) -> int:
    """``round(delete_frac * available)``, but at least one when both are positive."""
    if delete_frac <= 0 or available == 0:
        return 0
    return max(1, _round_half_up(delete_frac * available))


def transform_minus(pair: KGPair, delete_frac: float, seed: int) -> KGPair:
    """Turn matchable entities dangling by deleting one side of some anchor pairs.

    For ``round(delete_frac * |anchors|)`` random anchors (at least one when the fraction is
    positive) one side, chosen uniformly, is removed together with its triples; the
    surviving partner becomes dangling.
    """
    _check_fraction("delete_frac", delete_frac)
    rng = np.random.default_rng(seed)
    n_delete = _delete_count(delete_frac, len(pair.anchors))
    chosen = rng.choice(len(pair.anchors), size=n_delete, replace=False)
    side = rng.integers(0, 2, n_delete)
    removed = pair.anchors[chosen]

    drop_src = np.zeros(pair.source.n_entities, dtype=bool)
    drop_tgt = np.zeros(pair.target.n_entities, dtype=bool)
    drop_src[removed[side == 0, 0]] = True
    drop_tgt[removed[side == 1, 1]] = True

    remaining = np.delete(pair.anchors, chosen, axis=0)
    dangling_src = set(pair.dangling_src().tolist()) | set(removed[side == 1, 0].tolist())
    dangling_tgt = set(pair.dangling_tgt().tolist()) | set(removed[side == 0, 1].tolist())
    result = _rebuild(pair, drop_src, drop_tgt, remaining, dangling_src, dangling_tgt)
    logger.info(
        "Minus transform: %d anchors removed, pi_p %.4f -> %.4f",
        n_delete,
        pair.matchable_ratio,
        result.matchable_ratio,
    )
    return result


def transform_plus(pair: KGPair, delete_frac: float, seed: int) -> KGPair:
    """Delete the same fraction of dangling entities (and their triples) from both graphs."""
    _check_fraction("delete_frac", delete_frac)
    rng = np.random.default_rng(seed)
    dangling = (pair.dangling_src(), pair.dangling_tgt())
    drops = []
    survivors = []
    for ids, store in zip(dangling, (pair.source, pair.target), strict=True):
        n_delete = _delete_count(delete_frac, len(ids))
        gone = rng.choice(ids, size=n_delete, replace=False) if n_delete else ids[:0]
        mask = np.zeros(store.n_entities, dtype=bool)
        mask[gone] = True
        drops.append(mask)
        survivors.append(np.setdiff1d(ids, gone).tolist())
    result = _rebuild(pair, drops[0], drops[1], pair.anchors, survivors[0], survivors[1])
    logger.info(
        "Plus transform: %d/%d dangling removed, pi_p %.4f -> %.4f",
        int(drops[0].sum()),
        int(drops[1].sum()),
        pair.matchable_ratio,
        result.matchable_ratio,
    )
    return result


def suggest_dim(n_entities: int, base: float = math.e) -> int:
    """Smallest power of two strictly above ``8.33 * log_base(n_entities)``.

    Example:
        >>> suggest_dim(100_000)
        128
    """
    if n_entities < 2:
        raise ValidationError("n_entities must be at least 2")
    if base <= 0 or base == 1:
        raise ValidationError(f"invalid logarithm base {base}")
    bound = 8.33 * math.log(n_entities) / math.log(base)
    dim = 1
    while dim <= bound:
        dim *= 2
    return dim
