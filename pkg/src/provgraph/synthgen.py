"""Synthetic provenance cases with known ground truth.

A case is described by a :class:`CaseBlueprint`: base nodes drawn from a
source pool, near-duplicate nodes derived by chains of content-preserving
transforms, composite nodes built by splicing donor regions into a host, and
an optional number of unrelated distractors. Generation is a pure function of
the blueprint, so a manifest reproduces its images bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw
from scipy import fft, ndimage

from .errors import InsufficientSources, InvalidTransformSpec
from .graph import ProvenanceGraph, QueryCase
from .records import ImageRecord, load_image, quantize8, save_image

KINDS = ("Resample", "Crop", "Affine", "Contrast", "Brightness", "Gamma", "Compress")
TONAL_KINDS = ("Contrast", "Brightness", "Gamma", "Compress")

# Conservative ranges; each key lists (low, high, default).
PARAM_RANGES: Dict[str, Dict[str, Tuple[float, float, float]]] = {
    "Resample": {"scale": (0.5, 1.5, 1.0)},
    "Crop": {
        "width_frac": (0.6, 1.0, 1.0),
        "height_frac": (0.6, 1.0, 1.0),
        "center_x": (0.0, 1.0, 0.5),
        "center_y": (0.0, 1.0, 0.5),
    },
    "Affine": {
        "rotation_deg": (-30.0, 30.0, 0.0),
        "shear": (-0.15, 0.15, 0.0),
        "scale_x": (0.8, 1.25, 1.0),
        "scale_y": (0.8, 1.25, 1.0),
    },
    "Contrast": {"factor": (0.5, 1.5, 1.0)},
    "Brightness": {"delta": (-0.3, 0.3, 0.0)},
    "Gamma": {"gamma": (0.5, 2.0, 1.0)},
    "Compress": {"quality": (10.0, 100.0, 75.0)},
}
MIN_CROP_AREA = 0.6
MIN_SPLICE_AREA = 0.02
FEATHER_PX = 2.0


@dataclass(frozen=True)
class TransformSpec:
    kind: str
    params: Dict[str, float] = field(default_factory=dict)
    rng_seed: int = 0

    def resolved(self) -> Dict[str, float]:
        if self.kind not in PARAM_RANGES:
            raise InvalidTransformSpec(f"unknown transform kind {self.kind!r}")
        ranges = PARAM_RANGES[self.kind]
        unknown = set(self.params) - set(ranges)
        if unknown:
            raise InvalidTransformSpec(f"{self.kind}: unknown parameter(s) {sorted(unknown)}")
        out = {}
        for name, (lo, hi, default) in ranges.items():
            value = float(self.params.get(name, default))
            if not (lo <= value <= hi) or not math.isfinite(value):
                raise InvalidTransformSpec(f"{self.kind}.{name}={value} outside [{lo}, {hi}]")
            out[name] = value
        if self.kind == "Crop" and out["width_frac"] * out["height_frac"] < MIN_CROP_AREA - 1e-12:
            raise InvalidTransformSpec("Crop must retain at least 60% of the area")
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(sorted(self.params.items())), "rng_seed": self.rng_seed}

    @classmethod
    def from_dict(cls, data: dict) -> "TransformSpec":
        return cls(data["kind"], {k: float(v) for k, v in data.get("params", {}).items()},
                   int(data.get("rng_seed", 0)))

    @classmethod
    def random(cls, kind: str, rng: np.random.Generator, mild: bool = True) -> "TransformSpec":
        """Draw parameters for ``kind``; ``mild`` keeps them well inside the safe range."""
        if kind == "Resample":
            params = {"scale": rng.uniform(0.8, 1.25) if mild else rng.uniform(0.5, 1.5)}
        elif kind == "Crop":
            w = rng.uniform(0.8, 0.95)
            h = rng.uniform(max(0.8, MIN_CROP_AREA / w), 0.95)
            params = {"width_frac": w, "height_frac": h,
                      "center_x": rng.uniform(0.4, 0.6), "center_y": rng.uniform(0.4, 0.6)}
        elif kind == "Affine":
            params = {"rotation_deg": rng.uniform(-15, 15), "shear": rng.uniform(-0.05, 0.05),
                      "scale_x": rng.uniform(0.92, 1.08), "scale_y": rng.uniform(0.92, 1.08)}
        elif kind == "Contrast":
            params = {"factor": rng.uniform(0.75, 1.3)}
        elif kind == "Brightness":
            params = {"delta": rng.uniform(-0.12, 0.12)}
        elif kind == "Gamma":
            params = {"gamma": rng.choice([rng.uniform(0.7, 0.9), rng.uniform(1.1, 1.45)])}
        elif kind == "Compress":
            params = {"quality": rng.uniform(50, 90)}
        else:
            raise InvalidTransformSpec(f"unknown transform kind {kind!r}")
        params = {k: round(float(v), 6) for k, v in params.items()}
        return cls(kind, params, int(rng.integers(2**31)))


def _warp_affine(pixels: np.ndarray, inverse: np.ndarray, out_shape: Tuple[int, int], prefilter_sigma=0.0):
    """Sample ``pixels`` at inverse-mapped output coordinates (bilinear)."""
    h, w = out_shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = inverse[0, 0] * xx + inverse[0, 1] * yy + inverse[0, 2]
    sy = inverse[1, 0] * xx + inverse[1, 1] * yy + inverse[1, 2]
    coords = np.stack([sy, sx])
    channels = pixels[..., None] if pixels.ndim == 2 else pixels
    out = []
    for c in range(channels.shape[2]):
        plane = channels[..., c]
        if prefilter_sigma > 0:
            plane = ndimage.gaussian_filter(plane, prefilter_sigma, mode="nearest")
        out.append(ndimage.map_coordinates(plane, coords, order=1, mode="nearest"))
    result = np.stack(out, axis=-1)
    return result[..., 0] if pixels.ndim == 2 else result


_JPEG_LUMA = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61], [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56], [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77], [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101], [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


def _block_quantize(plane: np.ndarray, quality: float) -> np.ndarray:
    """8x8 block-DCT coefficient quantisation (compression-style noise, no codec)."""
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    step = np.maximum(np.floor((_JPEG_LUMA * scale + 50.0) / 100.0), 1.0) / 255.0
    h, w = plane.shape
    ph, pw = -h % 8, -w % 8
    padded = np.pad(plane, ((0, ph), (0, pw)), mode="edge") - 0.5
    blocks = padded.reshape(padded.shape[0] // 8, 8, padded.shape[1] // 8, 8).transpose(0, 2, 1, 3)
    coef = fft.dctn(blocks, axes=(2, 3), norm="ortho")
    coef = np.round(coef / step) * step
    rec = fft.idctn(coef, axes=(2, 3), norm="ortho").transpose(0, 2, 1, 3).reshape(padded.shape)
    return rec[:h, :w] + 0.5


def transform_geometry(spec: TransformSpec, width: int, height: int):
    """(3x3 forward map from input to output pixel coordinates, output (h, w))."""
    p = spec.resolved()
    if spec.kind == "Resample":
        s = p["scale"]
        out_w, out_h = max(16, int(round(width * s))), max(16, int(round(height * s)))
        sx, sy = out_w / width, out_h / height
        # pixel-centre aligned scaling
        fwd = np.array([[sx, 0, 0.5 * sx - 0.5], [0, sy, 0.5 * sy - 0.5], [0, 0, 1]])
        return fwd, (out_h, out_w)
    if spec.kind == "Crop":
        out_w = int(math.ceil(p["width_frac"] * width - 1e-9))
        out_h = int(math.ceil(p["height_frac"] * height - 1e-9))
        x0 = int(round(p["center_x"] * (width - out_w)))
        y0 = int(round(p["center_y"] * (height - out_h)))
        fwd = np.array([[1.0, 0, -x0], [0, 1.0, -y0], [0, 0, 1]])
        return fwd, (out_h, out_w)
    if spec.kind == "Affine":
        th = math.radians(p["rotation_deg"])
        rot = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
        lin = rot @ np.array([[1.0, p["shear"]], [0.0, 1.0]]) @ np.diag([p["scale_x"], p["scale_y"]])
        c = np.array([(width - 1) / 2.0, (height - 1) / 2.0])
        fwd = np.eye(3)
        fwd[:2, :2] = lin
        fwd[:2, 2] = c - lin @ c
        return fwd, (height, width)
    return np.eye(3), (height, width)


def apply_transform(image: ImageRecord, spec: TransformSpec, new_id: Optional[str] = None) -> ImageRecord:
    """Apply one transform; output is re-quantised to the 8-bit grid."""
    p = spec.resolved()
    px = image.pixels()
    if spec.kind in ("Resample", "Crop", "Affine"):
        fwd, shape = transform_geometry(spec, image.width, image.height)
        if spec.kind == "Crop":
            x0, y0 = int(-fwd[0, 2]), int(-fwd[1, 2])
            out = px[y0:y0 + shape[0], x0:x0 + shape[1]].copy()
        else:
            sigma = 0.0
            if spec.kind == "Resample" and p["scale"] < 1.0:
                sigma = 0.5 * (1.0 / p["scale"] - 1.0)
            out = _warp_affine(px, np.linalg.inv(fwd), shape, sigma)
    elif spec.kind == "Contrast":
        out = (px - 0.5) * p["factor"] + 0.5
    elif spec.kind == "Brightness":
        out = px + p["delta"]
    elif spec.kind == "Gamma":
        out = np.clip(px, 0.0, 1.0) ** p["gamma"]
    else:
        planes = px[..., None] if px.ndim == 2 else px
        out = np.stack([_block_quantize(planes[..., c], p["quality"]) for c in range(planes.shape[2])], -1)
        out = out[..., 0] if px.ndim == 2 else out
    return image.with_pixels(quantize8(out), id=new_id)


# --- source pools -----------------------------------------------------------------

def _shape_mask(rng, xx, yy, cx, cy, r):
    kind = rng.integers(3)
    dx, dy = xx - cx, yy - cy
    ang = rng.uniform(0, np.pi)
    u = dx * np.cos(ang) + dy * np.sin(ang)
    v = -dx * np.sin(ang) + dy * np.cos(ang)
    a = rng.uniform(0.35, 1.0)
    if kind == 0:
        return (u / r) ** 2 + (v / (a * r)) ** 2 <= 1
    if kind == 1:
        return (np.abs(u) <= r) & (np.abs(v) <= a * r)
    d = np.hypot(dx, dy)
    return (d <= r) & (d >= r * rng.uniform(0.3, 0.7))


def procedural_texture(seed: int, height: int = 384, width: int = 384) -> np.ndarray:
    """Colour texture of layered smooth noise and many random shapes."""
    rng = np.random.default_rng(seed)
    img = np.zeros((height, width, 3))
    for k, sig in enumerate((24, 10, 4)):
        noise = ndimage.gaussian_filter(rng.standard_normal((height, width, 3)), (sig, sig, 0))
        img += noise / (noise.std() + 1e-12) * (0.5**k) * 0.12
    img += rng.uniform(0.3, 0.7, size=3)
    yy, xx = np.mgrid[0:height, 0:width]
    area = height * width / 65536.0
    n_big = int(rng.integers(15, 30) * area)
    n_small = int(rng.integers(250, 400) * area)
    radii = np.concatenate([rng.uniform(8, 30, n_big), rng.uniform(1.5, 7, n_small)])
    for r in radii:
        cx, cy = rng.uniform(0, width), rng.uniform(0, height)
        x0, x1 = int(max(cx - r - 1, 0)), int(min(cx + r + 2, width))
        y0, y1 = int(max(cy - r - 1, 0)), int(min(cy + r + 2, height))
        if x1 <= x0 or y1 <= y0:
            continue
        m = _shape_mask(rng, xx[y0:y1, x0:x1], yy[y0:y1, x0:x1], cx, cy, r)
        color = rng.uniform(0, 1, size=3)
        alpha = rng.uniform(0.6, 1.0)
        sub = img[y0:y1, x0:x1]
        sub[m] = (1 - alpha) * sub[m] + alpha * color
    img = ndimage.gaussian_filter(img, (0.7, 0.7, 0))
    img += rng.standard_normal(img.shape) * 0.01
    return quantize8(img)


class SourcePool:
    """Named source images. ``procedural:<seed>`` names are always resolvable."""

    def __init__(self, names: Sequence[str], directory: Optional[Path] = None, size: int = 384):
        self.names = list(names)
        self.directory = Path(directory) if directory is not None else None
        self.size = size

    @classmethod
    def procedural(cls, count: int = 10_000, offset: int = 0, size: int = 384) -> "SourcePool":
        return cls([f"procedural:{offset + i}" for i in range(count)], size=size)

    @classmethod
    def from_directory(cls, directory) -> "SourcePool":
        directory = Path(directory)
        names = sorted(p.name for p in directory.iterdir()
                       if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
        return cls(names, directory=directory)

    def __len__(self) -> int:
        return len(self.names)

    def load(self, name: str, id: str) -> ImageRecord:
        if name.startswith("procedural:"):
            seed = int(name.split(":", 1)[1])
            return ImageRecord.from_rgb(id, procedural_texture(seed, self.size, self.size), source_path=name)
        if self.directory is None:
            raise InsufficientSources(f"source {name!r} needs a directory pool")
        rec = load_image(self.directory / name, id=id)
        return rec.with_pixels(quantize8(rec.pixels()), id=id)


# --- blueprints ---------------------------------------------------------------------

@dataclass
class NodeSpec:
    id: str
    parent_ops: List[dict]

    def to_dict(self) -> dict:
        return {"id": self.id, "parent_ops": self.parent_ops}


@dataclass
class CaseBlueprint:
    nodes: List[NodeSpec]
    edges: List[Tuple[str, str]]
    query_id: str
    distractor_count: int = 0
    master_seed: int = 0
    distractors: List[dict] = field(default_factory=list)

    @property
    def base_images(self) -> List[str]:
        return [op["source"] for n in self.nodes for op in n.parent_ops if op["op"] == "source"]

    @property
    def splice_ops(self) -> List[dict]:
        return [dict(op, host=n.id) for n in self.nodes for op in n.parent_ops if op["op"] == "splice"]

    @property
    def graph_topology(self) -> ProvenanceGraph:
        return ProvenanceGraph.from_edges([n.id for n in self.nodes], self.edges)

    def to_manifest(self) -> dict:
        return {
            "nodes": [n.to_dict() for n in self.nodes],
            "edges": [list(e) for e in self.edges],
            "query_id": self.query_id,
            "distractor_count": self.distractor_count,
            "distractors": self.distractors,
            "master_seed": self.master_seed,
        }

    @classmethod
    def from_manifest(cls, data: dict) -> "CaseBlueprint":
        return cls(
            nodes=[NodeSpec(n["id"], n["parent_ops"]) for n in data["nodes"]],
            edges=[tuple(e) for e in data["edges"]],
            query_id=data["query_id"],
            distractor_count=int(data.get("distractor_count", len(data.get("distractors", [])))),
            master_seed=int(data.get("master_seed", 0)),
            distractors=list(data.get("distractors", [])),
        )


def _polygon_mask(polygon, height: int, width: int) -> np.ndarray:
    canvas = Image.new("L", (width, height), 0)
    ImageDraw.Draw(canvas).polygon([tuple(map(float, p)) for p in polygon], fill=255)
    return np.asarray(canvas, dtype=np.float64) / 255.0


def splice(host: ImageRecord, donor: ImageRecord, region, offset, transform: Optional[TransformSpec] = None,
           new_id: Optional[str] = None) -> ImageRecord:
    """Paste the donor polygon ``region`` into ``host`` shifted by ``offset``.

    ``transform`` (tonal kinds or Resample) is applied to the donor first; a
    Resample also scales the polygon. The seam is feathered over ~2 px.
    """
    region = np.asarray(region, dtype=np.float64)
    if transform is not None:
        if transform.kind not in TONAL_KINDS + ("Resample",):
            raise InvalidTransformSpec(f"splice transforms must be tonal or Resample, not {transform.kind}")
        fwd, _ = transform_geometry(transform, donor.width, donor.height)
        donor = apply_transform(donor, transform)
        region = region @ fwd[:2, :2].T + fwd[:2, 2]
    dx, dy = float(offset[0]), float(offset[1])
    mask = _polygon_mask(region + [dx, dy], host.height, host.width)
    if mask.sum() < MIN_SPLICE_AREA * host.width * host.height:
        raise InvalidTransformSpec("spliced region covers less than 2% of the composite")
    alpha = np.clip(ndimage.gaussian_filter(mask, FEATHER_PX / 2.0), 0.0, 1.0) * (mask > 0)
    alpha = np.maximum(alpha, mask * (ndimage.binary_erosion(mask > 0, iterations=2)))
    # donor pixel for host position p is donor[p - offset]
    shift = np.array([[1.0, 0, -dx], [0, 1.0, -dy], [0, 0, 1]])
    hp = host.pixels()
    dp = donor.pixels()
    if hp.ndim != dp.ndim:
        dp = dp if hp.ndim == 3 else donor.luma
        if hp.ndim == 3:
            dp = np.repeat(donor.luma[..., None], 3, axis=2)
    moved = _warp_affine(dp, shift, (host.height, host.width))
    a = alpha[..., None] if hp.ndim == 3 else alpha
    out = hp * (1 - a) + moved * a
    return host.with_pixels(quantize8(out), id=new_id or host.id)


def _apply_chain(image: ImageRecord, transforms: List[dict], new_id: str) -> ImageRecord:
    for t in transforms:
        image = apply_transform(image, TransformSpec.from_dict(t))
    return image.with_pixels(image.pixels(), id=new_id)


def generate_case(blueprint: CaseBlueprint, sources: SourcePool):
    """Materialise every node. Returns (images, QueryCase with ground truth)."""
    needed = len(blueprint.base_images) + blueprint.distractor_count
    if needed > len(sources):
        raise InsufficientSources(f"case needs {needed} sources, pool has {len(sources)}")
    built: Dict[str, ImageRecord] = {}
    pending = list(blueprint.nodes)
    while pending:
        progressed = False
        for node in list(pending):
            deps = [op[k] for op in node.parent_ops for k in ("parent", "donor") if k in op]
            if any(d not in built for d in deps):
                continue
            img = None
            for op in node.parent_ops:
                kind = op["op"]
                if kind == "source":
                    img = sources.load(op["source"], node.id)
                elif kind in ("transform", "host"):
                    img = _apply_chain(built[op["parent"]], op.get("transforms", []), node.id)
                elif kind == "splice":
                    t = op.get("transform")
                    img = splice(img, built[op["donor"]], op["region"], op["offset"],
                                 TransformSpec.from_dict(t) if t else None, new_id=node.id)
                else:
                    raise InvalidTransformSpec(f"unknown node op {kind!r}")
            built[node.id] = img
            pending.remove(node)
            progressed = True
        if not progressed:
            raise InvalidTransformSpec("blueprint has a dependency cycle or unknown parent")

    distractors = blueprint.distractors or _pick_distractors(blueprint, sources)
    blueprint.distractors = distractors
    images = [built[n.id] for n in blueprint.nodes]
    for d in distractors:
        images.append(sources.load(d["source"], d["id"]))
    truth = blueprint.graph_topology
    case = QueryCase(query_id=blueprint.query_id, candidates=[im.id for im in images], ground_truth=truth)
    return images, case


def _pick_distractors(blueprint: CaseBlueprint, sources: SourcePool) -> List[dict]:
    if blueprint.distractor_count == 0:
        return []
    used = set(blueprint.base_images)
    free = [n for n in sources.names if n not in used]
    if len(free) < blueprint.distractor_count:
        raise InsufficientSources("not enough unused sources for distractors")
    rng = np.random.default_rng([blueprint.master_seed, 0xD157])
    chosen = rng.choice(len(free), size=blueprint.distractor_count, replace=False)
    return [{"id": f"x{k:02d}", "source": free[i]} for k, i in enumerate(sorted(chosen))]


def _random_quad(rng, width: int, height: int, frac: float):
    """Convex quadrilateral inside the donor covering roughly ``frac`` of its area."""
    side_w = math.sqrt(frac) * width
    side_h = math.sqrt(frac) * height
    x0 = rng.uniform(0.1 * width, 0.9 * width - side_w)
    y0 = rng.uniform(0.1 * height, 0.9 * height - side_h)
    jitter = 0.12
    pts = [(0, 0), (1, 0), (1, 1), (0, 1)]
    quad = [(x0 + side_w * (u + rng.uniform(-jitter, jitter) * (1 if u == 0 else -1)),
             y0 + side_h * (v + rng.uniform(-jitter, jitter) * (1 if v == 0 else -1))) for u, v in pts]
    return [[round(x, 2), round(y, 2)] for x, y in quad]


def random_blueprint(
    seed: int,
    n_nodes: int = 6,
    n_donors: Optional[int] = None,
    distractor_count: int = 0,
    pool: Optional[SourcePool] = None,
    image_size: int = 384,
) -> CaseBlueprint:
    """A host, one to three donors, a multi-composite query and near-duplicate chains.

    Every source used is distinct; ``pool`` defaults to the procedural pool and
    sources are drawn from it without replacement using ``seed``.
    """
    rng = np.random.default_rng(seed)
    if n_donors is None:
        n_donors = int(rng.integers(1, max(1, min(3, n_nodes - 2)) + 1))
    n_donors = max(1, min(n_donors, 3))
    if n_nodes < n_donors + 2:
        raise InvalidTransformSpec(f"{n_nodes} nodes cannot hold a host, {n_donors} donors and a composite")
    pool = pool or SourcePool.procedural()
    picks = rng.choice(len(pool), size=n_donors + 1, replace=False)
    names = [pool.names[i] for i in picks]

    nodes: List[NodeSpec] = []
    edges: List[Tuple[str, str]] = []
    counter = iter(range(1000))

    def new_id():
        return f"n{next(counter):02d}"

    host_id = new_id()
    nodes.append(NodeSpec(host_id, [{"op": "source", "source": names[0]}]))
    donor_ids = []
    for name in names[1:]:
        did = new_id()
        nodes.append(NodeSpec(did, [{"op": "source", "source": name}]))
        donor_ids.append(did)

    # place donor regions in disjoint horizontal/vertical slots of the host
    query_id = new_id()
    ops = [{"op": "host", "parent": host_id, "transforms": []}]
    slots = _slots(n_donors, rng)
    for did, (sx0, sy0, sx1, sy1) in zip(donor_ids, slots):
        frac = float(rng.uniform(0.08, 0.14))
        quad = _random_quad(rng, image_size, image_size, frac)
        q = np.array(quad)
        qw, qh = q[:, 0].max() - q[:, 0].min(), q[:, 1].max() - q[:, 1].min()
        tx = rng.uniform(sx0 * image_size, max(sx0 * image_size, sx1 * image_size - qw)) - q[:, 0].min()
        ty = rng.uniform(sy0 * image_size, max(sy0 * image_size, sy1 * image_size - qh)) - q[:, 1].min()
        spec = TransformSpec.random(str(rng.choice(("Contrast", "Brightness", "Gamma"))), rng)
        ops.append({"op": "splice", "donor": did, "region": quad,
                    "offset": [round(float(tx), 2), round(float(ty), 2)], "transform": spec.to_dict()})
    nodes.append(NodeSpec(query_id, ops))
    edges.append((host_id, query_id))
    edges.extend((did, query_id) for did in donor_ids)

    # near-duplicate children hang off random existing nodes
    while len(nodes) < n_nodes:
        parent = nodes[int(rng.integers(len(nodes)))].id
        n_t = int(rng.integers(1, 3))
        kinds = rng.choice(KINDS, size=n_t, replace=False)
        transforms = [TransformSpec.random(str(k), rng).to_dict() for k in kinds]
        nid = new_id()
        nodes.append(NodeSpec(nid, [{"op": "transform", "parent": parent, "transforms": transforms}]))
        edges.append((parent, nid))

    return CaseBlueprint(nodes, edges, query_id, distractor_count, seed)


def protocol_blueprints(seed: int, count: int, min_nodes: int = 4, max_nodes: int = 10,
                        pad_to: int = 0) -> List[CaseBlueprint]:
    """``count`` random cases with sizes in [min_nodes, max_nodes].

    With ``pad_to`` > 0 each case is completed with distractors up to that
    many images in total.
    """
    if min_nodes < 3 or max_nodes < min_nodes:
        raise InvalidTransformSpec("need 3 <= min_nodes <= max_nodes")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        case_seed = int(rng.integers(2**31))
        n_nodes = int(rng.integers(min_nodes, max_nodes + 1))
        out.append(random_blueprint(case_seed, n_nodes=n_nodes, distractor_count=max(0, pad_to - n_nodes)))
    return out


def _slots(n: int, rng) -> List[Tuple[float, float, float, float]]:
    """Disjoint rectangles (fractions of the host) for up to three splices."""
    if n == 1:
        cells = [(0.05, 0.05, 0.95, 0.95)]
    elif n == 2:
        cells = [(0.02, 0.02, 0.5, 0.98), (0.5, 0.02, 0.98, 0.98)]
    else:
        cells = [(0.02, 0.02, 0.5, 0.5), (0.5, 0.02, 0.98, 0.5), (0.02, 0.5, 0.98, 0.98)]
    order = rng.permutation(len(cells))
    return [cells[i] for i in order[:n]]


def write_case(directory, images: List[ImageRecord], case: QueryCase, blueprint: CaseBlueprint) -> Path:
    """Write PNGs plus ``manifest.json``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for im in images:
        save_image(im, directory / f"{im.id}.png")
    manifest = blueprint.to_manifest()
    manifest["images"] = {im.id: f"{im.id}.png" for im in images}
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
