"""Shifted-grid cell attribution heatmaps.

The spot is cut into ``t x t`` tiles; each tile is scored by its subgraph
relevance divided by its cell count, every cell takes its tile's score, and
the result is averaged over the ``(t/s)^2`` grid offsets ``{0, s, ...}^2``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cellgraph.graph import CellGraph
from .lrp import LrpConfig, forward_cache, resolve_target, subgraph_relevance, tile_relevances

SHORT_INTERVAL = (-0.02, 0.02)
LONG_INTERVAL = (-0.03, 0.08)
DEFAULT_INTERVALS = {"short": SHORT_INTERVAL, "long": LONG_INTERVAL}


@dataclass(frozen=True)
class GridSpec:
    tile_size: float = 0.05
    stride: float = 0.025

    def __post_init__(self):
        if not (0 < self.stride <= self.tile_size):
            raise ValueError("need 0 < stride <= tile_size")
        ratio = self.tile_size / self.stride
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("tile_size / stride must be a positive integer")

    @property
    def n_shifts_per_axis(self) -> int:
        return int(round(self.tile_size / self.stride))

    def shifts(self) -> list[tuple[float, float]]:
        m = self.n_shifts_per_axis
        return [(i * self.stride, j * self.stride) for i in range(m) for j in range(m)]


@dataclass
class RelevanceMap:
    graph_id: str
    cell_ids: np.ndarray
    relevance: np.ndarray
    grid_spec: GridSpec
    target_class: str
    interval: tuple[float, float] | None = None
    meta: dict = field(default_factory=dict)

    def as_dict(self) -> dict[int, float]:
        return {int(c): float(r) for c, r in zip(self.cell_ids, self.relevance)}


def tile_labels(xy: np.ndarray, grid: GridSpec, shift: tuple[float, float],
                origin: tuple[float, float] | None = None) -> np.ndarray:
    """Dense tile index per cell for one grid offset (floor convention)."""
    xy = np.asarray(xy, dtype=np.float64)
    dx, dy = shift
    if not (0 <= dx < grid.tile_size and 0 <= dy < grid.tile_size):
        raise ValueError("shift must lie in [0, tile_size)")
    x0, y0 = xy.min(axis=0) if origin is None else origin
    ix = np.floor((xy[:, 0] - x0 + dx) / grid.tile_size).astype(np.int64)
    iy = np.floor((xy[:, 1] - y0 + dy) / grid.tile_size).astype(np.int64)
    _, labels = np.unique(np.stack([ix, iy], axis=1), axis=0, return_inverse=True)
    return labels.ravel()


def partition(cells_xy: np.ndarray, grid: GridSpec, shift: tuple[float, float],
              origin: tuple[float, float] | None = None) -> list[np.ndarray]:
    """Node indices of each nonempty tile for one grid offset."""
    labels = tile_labels(cells_xy, grid, shift, origin)
    return [np.flatnonzero(labels == k) for k in range(labels.max() + 1)]


def _target_name(target: int) -> str:
    return "short" if target == 0 else "long"


def grid_attribution(model, graph: CellGraph, grid: GridSpec = GridSpec(),
                     config: LrpConfig = LrpConfig(), batched: bool = True) -> RelevanceMap:
    """Per-cell heatmap averaged over all grid offsets.

    ``batched`` scores every tile of an offset in one block-diagonal pass;
    otherwise each tile runs its own subgraph pass (same result).
    """
    cache = forward_cache(model, graph)
    target = resolve_target(cache, config)
    fixed = LrpConfig(config.gamma, config.epsilon_stab, target)
    shifts = grid.shifts()
    per_shift = np.empty((len(shifts), graph.n_nodes))
    for i, shift in enumerate(shifts):
        labels = tile_labels(graph.xy, grid, shift)
        counts = np.bincount(labels)
        if batched:
            scores = tile_relevances(model, graph, labels, fixed, cache)
        else:
            scores = np.array([subgraph_relevance(model, graph, np.flatnonzero(labels == k), fixed, cache)
                               for k in range(len(counts))])
        per_shift[i] = (scores / counts)[labels]
    # exactly rounded mean: identical shift scores average to themselves
    relevance = np.array([math.fsum(col) for col in per_shift.T]) / len(shifts)
    return RelevanceMap(graph.graph_id, graph.cell_ids.copy(), relevance, grid, _target_name(target),
                        meta={"logits": cache["logits"].tolist(), "n_shifts": len(shifts)})


def normalize(values, interval: tuple[float, float]) -> np.ndarray:
    lo, hi = interval
    if not hi > lo:
        raise ValueError("degenerate interval: need lo < hi")
    return (np.clip(np.asarray(values, dtype=np.float64), lo, hi) - lo) / (hi - lo)


def raster(graph: CellGraph, values_01: np.ndarray, stride: float) -> np.ndarray:
    """Mean normalized value per stride-sized pixel; empty pixels are 0. Row 0 is the top (max y)."""
    xy = graph.xy
    origin = xy.min(axis=0)
    extent = xy.max(axis=0) - origin
    w, h = (max(1, math.ceil(e / stride)) for e in extent)
    ix = np.minimum(np.floor((xy[:, 0] - origin[0]) / stride).astype(int), w - 1)
    iy = np.minimum(np.floor((xy[:, 1] - origin[1]) / stride).astype(int), h - 1)
    total = np.zeros((h, w))
    count = np.zeros((h, w))
    np.add.at(total, (iy, ix), values_01)
    np.add.at(count, (iy, ix), 1)
    img = np.divide(total, count, out=np.zeros_like(total), where=count > 0)
    return img[::-1]


def write_pgm(path, img01: np.ndarray) -> None:
    data = np.round(np.clip(img01, 0, 1) * 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def render(rmap: RelevanceMap, graph: CellGraph, interval: tuple[float, float], out_dir,
           stem: str | None = None) -> dict:
    """Write the per-cell CSV, a grayscale PGM and its JSON sidecar; returns file paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = stem or rmap.graph_id
    norm = normalize(rmap.relevance, interval)
    csv_path = out_dir / f"{stem}.csv"
    csv_path.write_text(relevance_rows(rmap, graph, norm, header=True))
    img = raster(graph, norm, rmap.grid_spec.stride)
    pgm_path = out_dir / f"{stem}.pgm"
    write_pgm(pgm_path, img)
    sidecar = {
        "graph_id": rmap.graph_id,
        "target_class": rmap.target_class,
        "interval": list(interval),
        "tile_size_mm": rmap.grid_spec.tile_size,
        "stride_mm": rmap.grid_spec.stride,
        "origin_mm": graph.xy.min(axis=0).tolist(),
        "width": int(img.shape[1]),
        "height": int(img.shape[0]),
        "pixel_mm": rmap.grid_spec.stride,
        "row0": "max_y",
    }
    json_path = out_dir / f"{stem}.json"
    json_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return {"csv": csv_path, "pgm": pgm_path, "json": json_path}


RELEVANCE_HEADER = "graph_id,cell_id,x_mm,y_mm,phenotype_id,relevance,relevance_normalized\n"


def relevance_rows(rmap: RelevanceMap, graph: CellGraph, normalized: np.ndarray,
                   header: bool = False) -> str:
    lines = [RELEVANCE_HEADER] if header else []
    for i in range(graph.n_nodes):
        lines.append(f"{rmap.graph_id},{int(graph.cell_ids[i])},{float(graph.xy[i, 0])!r},{float(graph.xy[i, 1])!r},"
                     f"{int(graph.phenotypes[i])},{float(rmap.relevance[i])!r},{float(normalized[i])!r}\n")
    return "".join(lines)
