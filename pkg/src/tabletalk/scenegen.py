"""Procedural generation of labelled dining-scene knowledge graphs.

A scene is a small set of labelled objects (plate, food, drink vessel, three
tools) laid out on the unit square; the scene graph connects each object to
its k nearest neighbours by centroid distance. Node features are fixed random
concept embeddings plus the 2D centroid, with optional Gaussian noise on the
embedding part, so that identity and position are both recoverable without
any vision model.

Coordinates are y-up: "top" means larger y.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, IncompatibleDataError, StructuralError

DIRECTIONS = ("left", "right", "top", "bottom")

_DIRECTION_VECTORS = {
    "left": np.array([-1.0, 0.0]),
    "right": np.array([1.0, 0.0]),
    "top": np.array([0.0, 1.0]),
    "bottom": np.array([0.0, -1.0]),
}

PLATE = "plate"

DATASET_FORMAT_VERSION = 1

# Geometry of the layout, in unit-square coordinates.
_PLATE_JITTER = 0.05
_FOOD_JITTER = 0.05
_SIDE_OFFSET = 0.25
_DRINK_JITTER = 0.03
_TOOL_PAIR_GAP = 0.06
_TOOL3_JITTER = 0.10


@dataclass(frozen=True)
class ConceptCatalog:
    """Named concepts available per category; directions are fixed."""

    foods: tuple[str, ...]
    drinks: tuple[str, ...]
    tools: tuple[str, ...]
    directions: tuple[str, ...] = DIRECTIONS

    def __post_init__(self):
        for name, cat in (("foods", self.foods), ("drinks", self.drinks), ("tools", self.tools)):
            if len(cat) == 0:
                raise ConfigurationError(f"catalog category {name!r} is empty")
            if len(set(cat)) != len(cat):
                raise ConfigurationError(f"catalog category {name!r} has duplicate names")
        if set(self.directions) != set(DIRECTIONS) or len(self.directions) != 4:
            raise ConfigurationError("directions must be exactly left/right/top/bottom")

    def concepts(self) -> list[str]:
        """All node concepts this catalog can produce, in deterministic order."""
        return [PLATE, *self.foods, *self.drinks, *self.tools]

    def to_json(self) -> dict:
        return {"foods": list(self.foods), "drinks": list(self.drinks), "tools": list(self.tools)}

    @classmethod
    def from_json(cls, obj: dict) -> "ConceptCatalog":
        return cls(foods=tuple(obj["foods"]), drinks=tuple(obj["drinks"]), tools=tuple(obj["tools"]))


def builtin_catalog() -> ConceptCatalog:
    """Default 6-food / 4-drink / 5-tool catalog."""
    return ConceptCatalog(
        foods=("steak", "pasta", "salad", "pancake", "omelet", "dumpling"),
        drinks=("water", "juice", "coffee", "tea"),
        tools=("fork", "knife", "spoon", "chopsticks", "napkin"),
    )


@dataclass(frozen=True)
class ConceptTuple:
    """One scene description: what is on the table and where."""

    food: str
    drink: str
    tool1: str
    tool2: str
    tool3: str
    dir1: str
    dir2: str

    def __post_init__(self):
        if len({self.tool1, self.tool2, self.tool3}) != 3:
            raise ConfigurationError("tool slots must be pairwise distinct")
        if self.dir1 == self.dir2:
            raise ConfigurationError("direction slots must differ")
        for d in (self.dir1, self.dir2):
            if d not in DIRECTIONS:
                raise ConfigurationError(f"unknown direction {d!r}")

    def slots(self) -> tuple[str, ...]:
        return (self.food, self.drink, self.tool1, self.tool2, self.tool3, self.dir1, self.dir2)

    def to_json(self) -> list[str]:
        return list(self.slots())

    @classmethod
    def from_json(cls, obj: list[str]) -> "ConceptTuple":
        return cls(*obj)


@dataclass
class Scene:
    """Concept-labelled objects with centroids in the unit square."""

    objects: list[tuple[str, np.ndarray]]
    tuple: ConceptTuple


@dataclass
class SceneGraph:
    """kNN graph over a scene's objects.

    Edges are undirected, stored once as (u, v) with u < v, no self-edges.
    """

    node_features: np.ndarray  # (n, d)
    node_concepts: list[str]
    centroids: np.ndarray  # (n, 2)
    edges: set[tuple[int, int]]
    tuple: ConceptTuple

    @property
    def n_nodes(self) -> int:
        return self.node_features.shape[0]


@dataclass
class Dataset:
    """A batch of scene graphs plus everything needed to regenerate them."""

    graphs: list[SceneGraph]
    catalog: ConceptCatalog
    seed: int
    d: int
    k: int
    noise_sigma: float
    embed_table: dict[str, np.ndarray] = field(default_factory=dict)


def sample_concept_tuple(catalog: ConceptCatalog, rng: np.random.Generator) -> ConceptTuple:
    """Uniformly sample a scene description from the catalog.

    Tools and directions are sampled without replacement.
    """
    if len(catalog.tools) < 3:
        raise ConfigurationError("catalog needs at least 3 tools")
    food = catalog.foods[rng.integers(len(catalog.foods))]
    drink = catalog.drinks[rng.integers(len(catalog.drinks))]
    tools = [catalog.tools[i] for i in rng.choice(len(catalog.tools), size=3, replace=False)]
    dirs = [DIRECTIONS[i] for i in rng.choice(4, size=2, replace=False)]
    return ConceptTuple(food, drink, tools[0], tools[1], tools[2], dirs[0], dirs[1])


def _disk_jitter(radius: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform point in the disk of the given radius."""
    theta = rng.uniform(0.0, 2.0 * np.pi)
    r = radius * np.sqrt(rng.uniform())
    return np.array([r * np.cos(theta), r * np.sin(theta)])


def layout_scene(tup: ConceptTuple, rng: np.random.Generator) -> Scene:
    """Place the tuple's objects on the unit square.

    The plate sits near the center; the drink vessel at offset 0.25 in dir1;
    tool1/tool2 as a pair at offset 0.25 in dir2, split 0.06 apart
    perpendicular to that axis; tool3 within 0.1 of the drink. All centroids
    are clamped to [0, 1]^2.
    """
    plate = np.array([0.5, 0.5]) + _disk_jitter(_PLATE_JITTER, rng)
    food = plate + _disk_jitter(_FOOD_JITTER, rng)
    drink = plate + _SIDE_OFFSET * _DIRECTION_VECTORS[tup.dir1] + _disk_jitter(_DRINK_JITTER, rng)
    axis = _DIRECTION_VECTORS[tup.dir2]
    perp = np.array([-axis[1], axis[0]])
    pair_base = plate + _SIDE_OFFSET * axis
    tool1 = pair_base + (_TOOL_PAIR_GAP / 2.0) * perp
    tool2 = pair_base - (_TOOL_PAIR_GAP / 2.0) * perp
    tool3 = drink + _disk_jitter(_TOOL3_JITTER, rng)

    objects = [
        (PLATE, plate),
        (tup.food, food),
        (tup.drink, drink),
        (tup.tool1, tool1),
        (tup.tool2, tool2),
        (tup.tool3, tool3),
    ]
    objects = [(name, np.clip(pos, 0.0, 1.0)) for name, pos in objects]
    return Scene(objects=objects, tuple=tup)


def knn_edges(centroids: np.ndarray, k: int) -> set[tuple[int, int]]:
    """Symmetrized k-nearest-neighbour edge set over centroids.

    Distance ties break toward the lower node index.
    """
    n = centroids.shape[0]
    if k >= n:
        raise ConfigurationError(f"k={k} must be smaller than node count {n}")
    edges: set[tuple[int, int]] = set()
    for i in range(n):
        dists = np.linalg.norm(centroids - centroids[i], axis=1)
        others = sorted((j for j in range(n) if j != i), key=lambda j: (dists[j], j))
        for j in others[:k]:
            edges.add((min(i, j), max(i, j)))
    return edges


def build_scene_graph(
    scene: Scene,
    embed_table: dict[str, np.ndarray],
    noise_sigma: float,
    k: int,
    rng: np.random.Generator,
) -> SceneGraph:
    """Turn a scene into a kNN graph with noisy embedding+position features."""
    if noise_sigma < 0:
        raise ConfigurationError("noise_sigma must be non-negative")
    n = len(scene.objects)
    if k >= n:
        raise ConfigurationError(f"k={k} must be smaller than node count {n}")
    concepts = [name for name, _ in scene.objects]
    for name in concepts:
        if name not in embed_table:
            raise ConfigurationError(f"no embedding for concept {name!r}")
    centroids = np.stack([pos for _, pos in scene.objects])
    embeds = np.stack([np.asarray(embed_table[name], dtype=float) for name in concepts])
    if noise_sigma > 0:
        embeds = embeds + rng.normal(0.0, noise_sigma, size=embeds.shape)
    features = np.concatenate([embeds, centroids], axis=1)
    edges = knn_edges(centroids, k)
    return SceneGraph(
        node_features=features,
        node_concepts=concepts,
        centroids=centroids,
        edges=edges,
        tuple=scene.tuple,
    )


def make_embed_table(catalog: ConceptCatalog, d: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Standard-Gaussian embedding per concept, d-2 dims (centroid fills the rest)."""
    if d < 3:
        raise ConfigurationError("feature dimension d must be at least 3")
    return {name: rng.standard_normal(d - 2) for name in catalog.concepts()}


def generate_dataset(
    n_scenes: int,
    catalog: ConceptCatalog,
    d: int = 18,
    k: int = 2,
    noise_sigma: float = 0.1,
    seed: int = 0,
) -> Dataset:
    """Generate n_scenes labelled scene graphs.

    Each scene gets its own sub-seed derived from the master seed, so
    generation is reproducible and scenes are independent.
    """
    if n_scenes < 0:
        raise ConfigurationError("n_scenes must be non-negative")
    root = np.random.SeedSequence(seed)
    children = root.spawn(n_scenes + 1)
    table = make_embed_table(catalog, d, np.random.default_rng(children[0]))
    graphs = []
    for i in range(n_scenes):
        rng = np.random.default_rng(children[i + 1])
        tup = sample_concept_tuple(catalog, rng)
        scene = layout_scene(tup, rng)
        graphs.append(build_scene_graph(scene, table, noise_sigma, k, rng))
    return Dataset(graphs=graphs, catalog=catalog, seed=seed, d=d, k=k, noise_sigma=noise_sigma, embed_table=table)


def save_dataset(dataset: Dataset, path: str) -> None:
    """Write a dataset as line-delimited JSON: one header record, one record per graph."""
    header = {
        "version": DATASET_FORMAT_VERSION,
        "seed": dataset.seed,
        "d": dataset.d,
        "k": dataset.k,
        "noise_sigma": dataset.noise_sigma,
        "catalog": dataset.catalog.to_json(),
        "embed_table": {name: list(vec) for name, vec in sorted(dataset.embed_table.items())},
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for g in dataset.graphs:
            record = {
                "node_concepts": g.node_concepts,
                "centroids": g.centroids.tolist(),
                "node_features": g.node_features.tolist(),
                "edges": sorted(list(e) for e in g.edges),
                "tuple": g.tuple.to_json(),
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_dataset(path: str) -> Dataset:
    """Inverse of save_dataset; floats round-trip exactly."""
    with open(path) as fh:
        header_line = fh.readline()
        if not header_line:
            raise IncompatibleDataError(f"{path}: empty file")
        header = json.loads(header_line)
        if header.get("version") != DATASET_FORMAT_VERSION:
            raise IncompatibleDataError(
                f"{path}: dataset version {header.get('version')!r}, expected {DATASET_FORMAT_VERSION}"
            )
        catalog = ConceptCatalog.from_json(header["catalog"])
        table = {name: np.asarray(vec, dtype=float) for name, vec in header["embed_table"].items()}
        graphs = []
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            features = np.asarray(rec["node_features"], dtype=float)
            if features.ndim != 2 or features.shape[1] != header["d"]:
                raise IncompatibleDataError(f"{path}: node feature dim does not match header d={header['d']}")
            graphs.append(
                SceneGraph(
                    node_features=features,
                    node_concepts=list(rec["node_concepts"]),
                    centroids=np.asarray(rec["centroids"], dtype=float),
                    edges={(int(u), int(v)) for u, v in rec["edges"]},
                    tuple=ConceptTuple.from_json(rec["tuple"]),
                )
            )
    return Dataset(
        graphs=graphs,
        catalog=catalog,
        seed=header["seed"],
        d=header["d"],
        k=header["k"],
        noise_sigma=header["noise_sigma"],
        embed_table=table,
    )


def edge_index_pairs(edges: set[tuple[int, int]], n: int) -> list[tuple[int, int]]:
    """Validate and return the edge set in sorted order."""
    out = []
    for u, v in sorted(edges):
        if u == v:
            raise StructuralError(f"self-edge ({u},{v}) is not allowed")
        if not (0 <= u < n and 0 <= v < n):
            raise StructuralError(f"edge ({u},{v}) out of range for n={n}")
        out.append((u, v))
    return out
