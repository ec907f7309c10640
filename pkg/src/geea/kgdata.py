"""Knowledge-graph data model, on-disk ingestion and synthetic pair generation.

Directory layout (UTF-8, tab separated)::

    ent_ids_1, ent_ids_2            id <TAB> name
    triples_1, triples_2            head <TAB> relation <TAB> tail
    attrs_1, attrs_2                entity <TAB> attribute-id
    img_features_1.f32, ..._2.f32   int64 rows, int64 cols, float32 row-major (LE)
    sup_pairs, ref_pairs            source-id <TAB> target-id
    val_pairs, dangling_pairs       optional, same format

Ids found in the files are arbitrary integers; they are densely re-indexed per
KG at load time and the original ids/names are kept in ``KnowledgeGraph.names``.
"""

from __future__ import annotations

import logging
import math
import os
import struct
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

DANGLING_FRACTION = 0.30
VALID_FRACTION = 0.05


class IngestionError(OSError):
    """A required dataset file is missing or unreadable."""


class ValidationError(ValueError):
    """Dataset content violates a structural invariant."""


def fill_missing_images(features: np.ndarray, mask: np.ndarray, seed: int, side: int) -> np.ndarray:
    """Replace rows without a real image by standard-normal draws.

    The draw depends only on ``(seed, side)`` and the shape, so loading the
    same files twice yields identical features.
    """
    fill = np.random.default_rng([seed, side]).standard_normal(features.shape).astype(np.float32)
    return np.where(np.asarray(mask, dtype=bool)[:, None], features, fill).astype(np.float32)


def _as_rows(values, width: int) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, width), dtype=np.int64)
    return arr.reshape(-1, width)


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    """One KG: relational triples, attribute assignments and image features.

    ``triples`` is an int64 array ``[n, 3]`` of (head, relation, tail) and
    ``attributes`` an int64 array ``[m, 2]`` of (entity, attribute). Rows of
    ``image_features`` whose ``image_mask`` entry is False were synthesized
    from a standard normal because the entity has no real image.
    """

    entity_count: int
    relation_count: int
    attribute_count: int
    triples: np.ndarray
    attributes: np.ndarray
    image_features: np.ndarray
    image_mask: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "triples", _as_rows(self.triples, 3))
        object.__setattr__(self, "attributes", _as_rows(self.attributes, 2))
        feats = np.asarray(self.image_features, dtype=np.float32)
        if feats.ndim != 2:
            feats = feats.reshape(self.entity_count, -1)
        object.__setattr__(self, "image_features", feats)
        object.__setattr__(self, "image_mask", np.asarray(self.image_mask, dtype=bool))
        if not self.names:
            object.__setattr__(self, "names", tuple(str(i) for i in range(self.entity_count)))
        for arr in (self.triples, self.attributes, self.image_features, self.image_mask):
            arr.setflags(write=False)
        self.validate()

    def validate(self) -> None:
        if min(self.entity_count, self.relation_count, self.attribute_count) < 0:
            raise ValidationError("counts must be non-negative")
        t, a = self.triples, self.attributes
        if len(t):
            if t.min() < 0 or t[:, [0, 2]].max() >= self.entity_count:
                raise ValidationError("triple references an unknown entity")
            if t[:, 1].max() >= self.relation_count:
                raise ValidationError("triple references an unknown relation")
            if len(np.unique(t, axis=0)) != len(t):
                raise ValidationError("duplicate triples")
        if len(a):
            if a.min() < 0 or a[:, 0].max() >= self.entity_count:
                raise ValidationError("attribute row references an unknown entity")
            if a[:, 1].max() >= self.attribute_count:
                raise ValidationError("attribute id out of range")
            if len(np.unique(a, axis=0)) != len(a):
                raise ValidationError("duplicate (entity, attribute) pairs")
        if self.image_features.shape[0] != self.entity_count:
            raise ValidationError("image_features must have one row per entity")
        if self.image_mask.shape != (self.entity_count,):
            raise ValidationError("image_mask must have one entry per entity")
        if len(self.names) != self.entity_count:
            raise ValidationError("names must have one entry per entity")

    @property
    def image_dim(self) -> int:
        return self.image_features.shape[1]

    @cached_property
    def neighbors(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR (indptr, indices) of the undirected, relation-agnostic adjacency."""
        n = self.entity_count
        if len(self.triples) == 0:
            return np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
        h, tl = self.triples[:, 0], self.triples[:, 2]
        mask = h != tl
        src = np.concatenate([h[mask], tl[mask]])
        dst = np.concatenate([tl[mask], h[mask]])
        pairs = np.unique(np.stack([src, dst], axis=1), axis=0)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, pairs[:, 0] + 1, 1)
        return np.cumsum(indptr), pairs[:, 1].copy()

    @cached_property
    def attribute_sets(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR (indptr, indices) of each entity's attribute ids."""
        n = self.entity_count
        a = self.attributes[np.lexsort((self.attributes[:, 1], self.attributes[:, 0]))]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, a[:, 0] + 1, 1)
        return np.cumsum(indptr), a[:, 1].copy()

    def drop_entities(self, entity_ids, image_seed: int = 0) -> KnowledgeGraph:
        """Return a view with every triple, attribute and image of ``entity_ids`` removed.

        Entity ids stay stable; the purged image rows are re-drawn from a
        standard normal and masked out.
        """
        gone = np.zeros(self.entity_count, dtype=bool)
        gone[np.asarray(entity_ids, dtype=np.int64)] = True
        t = self.triples
        keep_t = ~(gone[t[:, 0]] | gone[t[:, 2]]) if len(t) else np.zeros(0, dtype=bool)
        a = self.attributes
        keep_a = ~gone[a[:, 0]] if len(a) else np.zeros(0, dtype=bool)
        mask = self.image_mask & ~gone
        fill = fill_missing_images(self.image_features, np.zeros_like(mask), image_seed, 3)
        feats = np.where(gone[:, None], fill, self.image_features)
        return replace(self, triples=t[keep_t], attributes=a[keep_a], image_features=feats,
                       image_mask=mask)


def _check_pairs(pairs: np.ndarray, name: str, n_src: int, n_tgt: int) -> None:
    if len(pairs) == 0:
        return
    if pairs.min() < 0 or pairs[:, 0].max() >= n_src or pairs[:, 1].max() >= n_tgt:
        raise ValidationError(f"{name}: pair references an unknown entity")
    for col, side in ((0, "source"), (1, "target")):
        if len(np.unique(pairs[:, col])) != len(pairs):
            raise ValidationError(f"{name}: {side} entity appears in more than one pair")


@dataclass(frozen=True, eq=False)
class AlignmentDataset:
    """A source/target KG pair with its alignment splits.

    ``target_reference`` holds the unpurged target KG when a synthesis split
    has removed dangling targets from ``target``; it is the ground truth for
    synthesis evaluation and is never used for training.
    """

    source: KnowledgeGraph
    target: KnowledgeGraph
    seed_alignments: np.ndarray
    test_alignments: np.ndarray
    valid_alignments: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), np.int64))
    dangling_pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), np.int64))
    target_reference: KnowledgeGraph | None = None

    def __post_init__(self):
        for name in ("seed_alignments", "test_alignments", "valid_alignments", "dangling_pairs"):
            arr = _as_rows(getattr(self, name), 2)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        self.validate()

    @property
    def reference_target(self) -> KnowledgeGraph:
        return self.target_reference if self.target_reference is not None else self.target

    def validate(self) -> None:
        ns, nt = self.source.entity_count, self.target.entity_count
        splits = {
            "seed": self.seed_alignments,
            "test": self.test_alignments,
            "valid": self.valid_alignments,
            "dangling": self.dangling_pairs,
        }
        for name, pairs in splits.items():
            _check_pairs(pairs, name, ns, nt)
        seen: dict[tuple[int, int], str] = {}
        for name, pairs in splits.items():
            for p in map(tuple, pairs.tolist()):
                if p in seen:
                    raise ValidationError(f"pair {p} is in both {seen[p]} and {name}")
                seen[p] = name
        if self.target_reference is not None and self.target_reference.entity_count != nt:
            raise ValidationError("target_reference must have the target's entity count")


@dataclass(frozen=True)
class DatasetStatistics:
    entities: tuple[int, int]
    relations: tuple[int, int]
    attributes: tuple[int, int]
    images: tuple[int, int]
    triples: tuple[int, int]
    seed_alignments: int
    test_alignments: int
    known_test_alignments: int
    unknown_test_alignments: int

    def as_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self.__dict__.items()}


def compute_statistics(dataset: AlignmentDataset) -> DatasetStatistics:
    """Per-KG counts plus alignment split sizes.

    Test alignments count both the known (still in ``test_alignments``) and
    the unknown (moved to ``dangling_pairs``) pairs, as in the usual
    entity-synthesis benchmark tables.
    """
    s, t = dataset.source, dataset.reference_target
    known, unknown = len(dataset.test_alignments), len(dataset.dangling_pairs)
    return DatasetStatistics(
        entities=(s.entity_count, t.entity_count),
        relations=(s.relation_count, t.relation_count),
        attributes=(s.attribute_count, t.attribute_count),
        images=(int(s.image_mask.sum()), int(t.image_mask.sum())),
        triples=(len(s.triples), len(t.triples)),
        seed_alignments=len(dataset.seed_alignments),
        test_alignments=known + unknown,
        known_test_alignments=known,
        unknown_test_alignments=unknown,
    )


# --------------------------------------------------------------------------- io

def _read_rows(path: Path, width: int, required: bool = True) -> list[tuple[int, list[str]]]:
    if not path.exists():
        if required:
            raise IngestionError(f"missing dataset file: {path.name}")
        return []
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < width:
                raise ValidationError(f"{path.name}:{lineno}: expected {width} columns")
            rows.append((lineno, parts[:width]))
    return rows


def read_features(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16:
            raise ValidationError(f"{path.name}: truncated header")
        rows, cols = struct.unpack("<qq", header)
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != rows * cols:
        raise ValidationError(f"{path.name}: expected {rows}x{cols} floats, found {data.size}")
    return data.reshape(rows, cols).astype(np.float32)


def write_features(path: Path, features: np.ndarray) -> None:
    features = np.ascontiguousarray(features, dtype="<f4")
    rows, cols = features.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<qq", rows, cols))
        fh.write(features.tobytes())


def _load_kg(root: Path, side: int, image_seed: int) -> tuple[KnowledgeGraph, dict[int, int]]:
    ent_rows = _read_rows(root / f"ent_ids_{side}", 2)
    index: dict[int, int] = {}
    names = []
    for lineno, (raw_id, name) in ent_rows:
        try:
            key = int(raw_id)
        except ValueError as exc:
            raise ValidationError(f"ent_ids_{side}:{lineno}: bad id {raw_id!r}") from exc
        if key in index:
            raise ValidationError(f"ent_ids_{side}:{lineno}: duplicate id {key}")
        index[key] = len(names)
        names.append(name)

    def entity(fname: str, lineno: int, raw: str) -> int:
        try:
            return index[int(raw)]
        except (KeyError, ValueError):
            raise ValidationError(f"{fname}:{lineno}: unknown entity id {raw!r}") from None

    fname = f"triples_{side}"
    raw_triples = []
    for lineno, (h, r, t) in _read_rows(root / fname, 3):
        raw_triples.append((entity(fname, lineno, h), _int(fname, lineno, r), entity(fname, lineno, t)))
    rel_index = {r: i for i, r in enumerate(sorted({r for _, r, _ in raw_triples}))}
    triples = {(h, rel_index[r], t) for h, r, t in raw_triples}

    fname = f"attrs_{side}"
    raw_attrs = [(entity(fname, lineno, e), _int(fname, lineno, a))
                 for lineno, (e, a) in _read_rows(root / fname, 2, required=False)]
    attr_index = {a: i for i, a in enumerate(sorted({a for _, a in raw_attrs}))}
    attrs = {(e, attr_index[a]) for e, a in raw_attrs}

    n = len(names)
    img_path = root / f"img_features_{side}.f32"
    if img_path.exists():
        raw = read_features(img_path)
        if raw.shape[0] != n:
            raise ValidationError(f"{img_path.name}: {raw.shape[0]} rows for {n} entities")
        mask = np.isfinite(raw).all(axis=1) & (np.abs(raw).sum(axis=1) > 0)
    else:
        raise IngestionError(f"missing dataset file: {img_path.name}")
    feats = fill_missing_images(raw, mask, image_seed, side)

    kg = KnowledgeGraph(
        entity_count=n,
        relation_count=len(rel_index),
        attribute_count=len(attr_index),
        triples=sorted(triples),
        attributes=sorted(attrs),
        image_features=feats,
        image_mask=mask,
        names=tuple(names),
    )
    return kg, index


def _int(fname: str, lineno: int, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"{fname}:{lineno}: expected an integer, got {raw!r}") from None


def _load_pairs(path: Path, src: dict[int, int], tgt: dict[int, int], required: bool):
    out = []
    for lineno, (a, b) in _read_rows(path, 2, required=required):
        try:
            out.append((src[int(a)], tgt[int(b)]))
        except (KeyError, ValueError):
            raise ValidationError(f"{path.name}:{lineno}: unknown entity in pair") from None
    return np.asarray(out, dtype=np.int64).reshape(-1, 2)


def load_dataset(directory: str | os.PathLike, image_seed: int = 0,
                 valid_seed: int = 0) -> AlignmentDataset:
    """Read a dataset directory into a validated :class:`AlignmentDataset`.

    When ``val_pairs`` is absent, 5% of the seed pairs (at least one, if any
    exist) are moved to the validation split using ``valid_seed``.
    """
    root = Path(directory)
    if not root.is_dir():
        raise IngestionError(f"not a directory: {root}")
    source, src_index = _load_kg(root, 1, image_seed)
    target, tgt_index = _load_kg(root, 2, image_seed)
    seed = _load_pairs(root / "sup_pairs", src_index, tgt_index, True)
    test = _load_pairs(root / "ref_pairs", src_index, tgt_index, True)
    dangling = _load_pairs(root / "dangling_pairs", src_index, tgt_index, False)
    if (root / "val_pairs").exists():
        valid = _load_pairs(root / "val_pairs", src_index, tgt_index, False)
    else:
        seed, valid = _carve_valid(seed, valid_seed)
    reference = None
    if len(dangling):
        reference = target
        target = target.drop_entities(dangling[:, 1], image_seed)
    return AlignmentDataset(source, target, seed, test, valid, dangling, reference)


def _carve_valid(seed: np.ndarray, rng_seed: int) -> tuple[np.ndarray, np.ndarray]:
    if len(seed) < 2:
        return seed, np.zeros((0, 2), np.int64)
    n_valid = max(1, int(round(VALID_FRACTION * len(seed))))
    perm = np.random.default_rng(rng_seed).permutation(len(seed))
    valid_idx = np.sort(perm[:n_valid])
    keep = np.ones(len(seed), dtype=bool)
    keep[valid_idx] = False
    return seed[keep], seed[valid_idx]


def _write_kg(root: Path, side: int, kg: KnowledgeGraph) -> None:
    with open(root / f"ent_ids_{side}", "w", encoding="utf-8") as fh:
        for i, name in enumerate(kg.names):
            fh.write(f"{i}\t{name}\n")
    with open(root / f"triples_{side}", "w", encoding="utf-8") as fh:
        for h, r, t in kg.triples.tolist():
            fh.write(f"{h}\t{r}\t{t}\n")
    with open(root / f"attrs_{side}", "w", encoding="utf-8") as fh:
        for e, a in kg.attributes.tolist():
            fh.write(f"{e}\t{a}\n")
    feats = kg.image_features.copy()
    feats[~kg.image_mask] = 0.0
    write_features(root / f"img_features_{side}.f32", feats)


def _write_pairs(path: Path, pairs: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a, b in pairs.tolist():
            fh.write(f"{a}\t{b}\n")


def save_dataset(dataset: AlignmentDataset, directory: str | os.PathLike) -> Path:
    """Write ``dataset`` in the directory layout read by :func:`load_dataset`.

    Ids are written densely, so a reload reproduces the in-memory structure.
    Missing images are stored as all-zero rows; a dataset saved after a
    synthesis split stores the unpurged target plus ``dangling_pairs``.
    Relation and attribute ids are re-indexed by sorted raw id on load, so they
    survive the round trip whenever every relation and attribute is used.
    """
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    _write_kg(root, 1, dataset.source)
    _write_kg(root, 2, dataset.reference_target)
    _write_pairs(root / "sup_pairs", dataset.seed_alignments)
    _write_pairs(root / "ref_pairs", dataset.test_alignments)
    _write_pairs(root / "val_pairs", dataset.valid_alignments)
    if len(dataset.dangling_pairs):
        _write_pairs(root / "dangling_pairs", dataset.dangling_pairs)
    return root


# ------------------------------------------------------------------- synthesis

def build_synthesis_split(dataset: AlignmentDataset, dangling_fraction: float = DANGLING_FRACTION,
                          seed: int = 0, image_seed: int = 0) -> AlignmentDataset:
    """Move ``ceil(fraction * |T|)`` test pairs to ``dangling_pairs``.

    Every triple, attribute and image of the moved target entities is purged
    from the training view of the target KG; the unpurged KG is kept as
    ``target_reference`` for evaluation.
    """
    if not 0.0 < dangling_fraction < 1.0:
        raise ValueError(f"dangling_fraction must be in (0, 1), got {dangling_fraction}")
    test = dataset.test_alignments
    if len(test) == 0:
        raise ValueError("dataset has no test alignments to split")
    n_dangling = math.ceil(dangling_fraction * len(test) - 1e-9)
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.permutation(len(test))[:n_dangling])
    keep = np.ones(len(test), dtype=bool)
    keep[chosen] = False
    dangling = test[chosen]
    if len(dataset.dangling_pairs):
        dangling = np.concatenate([dataset.dangling_pairs, dangling])
    reference = dataset.reference_target
    purged = dataset.target.drop_entities(dangling[:, 1], image_seed)
    return AlignmentDataset(
        source=dataset.source,
        target=purged,
        seed_alignments=dataset.seed_alignments,
        test_alignments=test[keep],
        valid_alignments=dataset.valid_alignments,
        dangling_pairs=dangling,
        target_reference=reference,
    )


@dataclass(frozen=True)
class SyntheticConfig:
    """Shape of a generated KG pair. ``density`` is the mean degree per entity."""

    entities: int = 200
    relations: int = 10
    attributes: int = 10
    d_img: int = 4
    noise: float = 0.1
    seed_fraction: float = 0.3
    density: float = 8.0
    attrs_per_entity: float = 2.0
    image_fraction: float = 1.0
    valid_fraction: float = 0.25


def _sample_triples(rng, n_ent, n_rel, n_triples) -> set[tuple[int, int, int]]:
    out: set[tuple[int, int, int]] = set()
    # bounded retries; duplicates/self-loops are rejected
    for _ in range(50):
        need = n_triples - len(out)
        if need <= 0:
            break
        h = rng.integers(0, n_ent, size=need * 2)
        t = rng.integers(0, n_ent, size=need * 2)
        r = rng.integers(0, n_rel, size=need * 2)
        for triple in zip(h.tolist(), r.tolist(), t.tolist()):
            if triple[0] != triple[2]:
                out.add(triple)
                if len(out) >= n_triples:
                    break
    return out


def _perturb(rng, items: set, noise: float, resample) -> set:
    """Drop each item with probability ``noise`` and add as many fresh ones."""
    if noise <= 0:
        return set(items)
    ordered = sorted(items)
    drop = rng.random(len(ordered)) < noise
    kept = {x for x, d in zip(ordered, drop) if not d}
    n_add = int(drop.sum())
    fresh = [x for x in resample(n_add * 3) if x not in items]
    kept.update(fresh[:n_add])
    return kept


def generate_synthetic_pair(config: SyntheticConfig | None = None, seed: int = 0,
                            **overrides) -> AlignmentDataset:
    """Generate two KGs that are copies of each other up to noise.

    The target is the source relabelled by a random bijection. With
    ``noise > 0`` each triple and attribute assignment of the target is
    dropped with probability ``noise`` (and replaced by a random one) and the
    target image features get additive Gaussian noise of std ``noise``.
    ``seed_fraction`` of the pairs form S; of the remainder ``valid_fraction``
    go to the validation split and the rest to T.
    """
    cfg = replace(config or SyntheticConfig(), **overrides)
    if min(cfg.entities, cfg.relations, cfg.attributes, cfg.d_img) < 1:
        raise ValueError("all counts must be >= 1")
    if not 0.0 <= cfg.noise:
        raise ValueError("noise must be non-negative")
    if not 0.0 < cfg.seed_fraction < 1.0:
        raise ValueError("seed_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    n = cfg.entities

    n_triples = int(round(cfg.density * n / 2))
    src_triples = _sample_triples(rng, n, cfg.relations, n_triples)
    n_attr = min(int(round(cfg.attrs_per_entity * n)), n * cfg.attributes)
    src_attrs: set[tuple[int, int]] = set()
    while len(src_attrs) < n_attr:
        src_attrs.add((int(rng.integers(n)), int(rng.integers(cfg.attributes))))
    src_img = rng.standard_normal((n, cfg.d_img)).astype(np.float32)
    src_mask = rng.random(n) < cfg.image_fraction

    perm = rng.permutation(n)  # source id -> target id
    tgt_triples = {(int(perm[h]), r, int(perm[t])) for h, r, t in src_triples}
    tgt_attrs = {(int(perm[e]), a) for e, a in src_attrs}
    tgt_triples = _perturb(rng, tgt_triples, cfg.noise,
                           lambda k: _sample_triples(rng, n, cfg.relations, k))
    tgt_attrs = _perturb(
        rng, tgt_attrs, cfg.noise,
        lambda k: set(zip(rng.integers(0, n, k).tolist(), rng.integers(0, cfg.attributes, k).tolist())),
    )
    inverse = np.argsort(perm)
    tgt_img = src_img[inverse] + cfg.noise * rng.standard_normal((n, cfg.d_img)).astype(np.float32)
    tgt_mask = src_mask[inverse]
    src_img = fill_missing_images(src_img, src_mask, 0, 1)
    tgt_img = fill_missing_images(tgt_img, tgt_mask, 0, 2)

    source = KnowledgeGraph(n, cfg.relations, cfg.attributes, sorted(src_triples), sorted(src_attrs),
                            src_img, src_mask, tuple(f"src_{i}" for i in range(n)))
    target = KnowledgeGraph(n, cfg.relations, cfg.attributes, sorted(tgt_triples), sorted(tgt_attrs),
                            tgt_img, tgt_mask, tuple(f"tgt_{inverse[j]}" for j in range(n)))

    pairs = np.stack([np.arange(n), perm], axis=1)[rng.permutation(n)]
    n_seed = int(round(cfg.seed_fraction * n))
    rest = pairs[n_seed:]
    n_valid = int(round(cfg.valid_fraction * len(rest)))
    return AlignmentDataset(
        source, target,
        seed_alignments=pairs[:n_seed],
        test_alignments=rest[n_valid:],
        valid_alignments=rest[:n_valid],
    )


def ground_truth_bijection(dataset: AlignmentDataset) -> np.ndarray:
    """Source id -> target id over every split (dangling included)."""
    mapping = np.full(dataset.source.entity_count, -1, dtype=np.int64)
    for pairs in (dataset.seed_alignments, dataset.test_alignments,
                  dataset.valid_alignments, dataset.dangling_pairs):
        mapping[pairs[:, 0]] = pairs[:, 1]
    return mapping
