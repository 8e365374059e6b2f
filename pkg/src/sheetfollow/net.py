"""Two-pathway convolutional matcher with exact handwritten gradients.

The audio pathway eats a 1x136x40 log-filterbank excerpt, the sheet
pathway a 1x40x200 ink-normalized strip window; each runs three
conv3x3/ReLU/maxpool2 stages into a dense embedding, and the merged
head maps 96 features to a 40-way softmax over window bins.

All parameters live in a flat name->array dict in a canonical order so
that serialization, SGD updates and the finite-difference check can walk
them uniformly. Everything is plain numpy; float32 in production, any
dtype for checks.
"""

from dataclasses import dataclass
import json
import struct

import numpy as np

from .audio import EXCERPT_FRAMES, AudioExcerpt
from .errors import FormatError, NumericalError, ShapeError
from .score import NUM_BINS, STRIP_HEIGHT, WINDOW_WIDTH, SheetWindow

MAGIC = b"MMSF1"
AUDIO_BANDS = 136


@dataclass(frozen=True)
class ModelSpec:
    """Widths of the architecture; the layer stack itself is fixed."""

    conv_channels: tuple[int, int, int] = (8, 16, 16)
    embed_dim: int = 48
    head_dim: int = 96
    audio_bands: int = AUDIO_BANDS

    @property
    def audio_flat(self) -> int:
        h, w = self.audio_bands, EXCERPT_FRAMES
        return self.conv_channels[2] * (h // 8) * (w // 8)

    @property
    def sheet_flat(self) -> int:
        return self.conv_channels[2] * (STRIP_HEIGHT // 8) * (WINDOW_WIDTH // 8)

    def param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """Canonical (name, shape) order used everywhere."""
        c1, c2, c3 = self.conv_channels
        shapes = []
        for path, flat in (("audio", self.audio_flat), ("sheet", self.sheet_flat)):
            shapes += [
                (f"{path}_conv1_w", (c1, 1, 3, 3)), (f"{path}_conv1_b", (c1,)),
                (f"{path}_conv2_w", (c2, c1, 3, 3)), (f"{path}_conv2_b", (c2,)),
                (f"{path}_conv3_w", (c3, c2, 3, 3)), (f"{path}_conv3_b", (c3,)),
                (f"{path}_fc_w", (self.embed_dim, flat)),
                (f"{path}_fc_b", (self.embed_dim,)),
            ]
        shapes += [
            ("head_fc1_w", (self.head_dim, 2 * self.embed_dim)),
            ("head_fc1_b", (self.head_dim,)),
            ("head_fc2_w", (NUM_BINS, self.head_dim)),
            ("head_fc2_b", (NUM_BINS,)),
        ]
        return shapes


REDUCED_SPEC = ModelSpec(conv_channels=(2, 2, 2), embed_dim=8, head_dim=8)


@dataclass
class ModelParams:
    spec: ModelSpec
    tensors: dict[str, np.ndarray]

    def copy(self) -> "ModelParams":
        return ModelParams(self.spec, {k: v.copy() for k, v in self.tensors.items()})


def init_params(spec: ModelSpec | None = None, seed: int = 0,
                dtype=np.float32, zero_head: bool = True) -> ModelParams:
    """He-normal weights, zero biases; the final dense layer is zeroed
    (so an untrained model predicts the exactly uniform distribution)."""
    spec = spec or ModelSpec()
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in spec.param_shapes():
        if name.endswith("_b") or (zero_head and name.startswith("head_fc2")):
            tensors[name] = np.zeros(shape, dtype=dtype)
        elif name.endswith("_w"):
            fan_in = int(np.prod(shape[1:]))
            std = np.sqrt(2.0 / fan_in)
            tensors[name] = (rng.standard_normal(shape) * std).astype(dtype)
    return ModelParams(spec=spec, tensors=tensors)


# ---------------------------------------------------------------- layers

def _conv3x3_forward(x, w, b):
    """Same-padded 3x3 conv via im2col and one batched GEMM.

    Returns the output and the column matrix (kept for the backward pass).
    """
    B, C, H, W = x.shape
    F = w.shape[0]
    xp = np.empty((B, C, H + 2, W + 2), x.dtype)
    xp[:, :, 0, :] = 0
    xp[:, :, -1, :] = 0
    xp[:, :, :, 0] = 0
    xp[:, :, :, -1] = 0
    xp[:, :, 1:-1, 1:-1] = x
    cols = np.empty((B, C * 9, H * W), x.dtype)
    view = cols.reshape(B, C, 9, H, W)
    for ky in range(3):
        for kx in range(3):
            view[:, :, ky * 3 + kx] = xp[:, :, ky:ky + H, kx:kx + W]
    out = np.matmul(w.reshape(F, C * 9), cols).reshape(B, F, H, W)
    out += b.reshape(1, F, 1, 1)
    return out, cols


def _conv3x3_backward(dy, cols, w):
    B, F, H, W = dy.shape
    C = w.shape[1]
    dyf = dy.reshape(B, F, H * W)
    dw = np.matmul(dyf, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    db = dy.sum(axis=(0, 2, 3))
    dcols = np.matmul(w.reshape(F, C * 9).T, dyf)
    dxp = np.empty((B, C, H + 2, W + 2), dy.dtype)
    dxp[:, :, H:, :] = 0
    dxp[:, :, :, W:] = 0
    dcv = dcols.reshape(B, C, 9, H, W)
    dxp[:, :, :H, :W] = dcv[:, :, 0]
    for k in range(1, 9):
        ky, kx = divmod(k, 3)
        dxp[:, :, ky:ky + H, kx:kx + W] += dcv[:, :, k]
    return dxp[:, :, 1:-1, 1:-1], dw, db


def _pool_quadrants(x):
    """The four 2x2-window members as strided views, row-major order."""
    return (x[:, :, 0::2, 0::2], x[:, :, 0::2, 1::2],
            x[:, :, 1::2, 0::2], x[:, :, 1::2, 1::2])


def _maxpool2_forward(x):
    a, b, c, d = _pool_quadrants(x)
    out = np.maximum(np.maximum(a, b), np.maximum(c, d))
    # first index wins ties (row-major window order)
    idx = np.where(a == out, 0,
                   np.where(b == out, 1,
                            np.where(c == out, 2, 3))).astype(np.int8)
    return out, idx


def _maxpool2_backward(dy, idx, in_shape):
    dx = np.empty(in_shape, dy.dtype)
    qa, qb, qc, qd = _pool_quadrants(dx)
    qa[...] = dy * (idx == 0)
    qb[...] = dy * (idx == 1)
    qc[...] = dy * (idx == 2)
    qd[...] = dy * (idx == 3)
    return dx


def _maxpool2_apply(x, idx):
    """Pool with a fixed window selection (for frozen-routing probes)."""
    a, b, c, d = _pool_quadrants(x)
    return (a * (idx == 0) + b * (idx == 1)
            + c * (idx == 2) + d * (idx == 3))


def _dense_forward(x, w, b):
    return x @ w.T + b


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# ------------------------------------------------------------- the model

def _check(name, got, want):
    if got != want:
        raise ShapeError(f"{name}: expected {want}, got {got}")


def _pathway_forward(params, prefix, x):
    # ReLU runs in place on fresh conv outputs; backward needs only the
    # bool masks, int8 pool routings, and im2col matrices kept here.
    p = params.tensors
    cache = {}
    h = x
    for stage in (1, 2, 3):
        h, cols = _conv3x3_forward(h, p[f"{prefix}_conv{stage}_w"],
                                   p[f"{prefix}_conv{stage}_b"])
        cache[f"cols{stage}"] = cols
        cache[f"shape{stage}"] = h.shape
        cache[f"mask{stage}"] = h > 0
        np.maximum(h, 0, out=h)
        h, idx = _maxpool2_forward(h)
        cache[f"idx{stage}"] = idx

    flat = h.reshape(h.shape[0], -1)
    cache["pool3_out_shape"], cache["flat"] = h.shape, flat
    emb = _dense_forward(flat, p[f"{prefix}_fc_w"], p[f"{prefix}_fc_b"])
    cache["mask_fc"] = emb > 0
    np.maximum(emb, 0, out=emb)
    return emb, cache


def _pathway_backward(params, prefix, cache, demb):
    p = params.tensors
    grads = {}
    d = demb * cache["mask_fc"]
    grads[f"{prefix}_fc_w"] = d.T @ cache["flat"]
    grads[f"{prefix}_fc_b"] = d.sum(axis=0)
    dflat = d @ p[f"{prefix}_fc_w"]
    d = dflat.reshape(cache["pool3_out_shape"])

    for stage in (3, 2, 1):
        d = _maxpool2_backward(d, cache[f"idx{stage}"], cache[f"shape{stage}"])
        d *= cache[f"mask{stage}"]
        d, dw, db = _conv3x3_backward(d, cache[f"cols{stage}"],
                                      p[f"{prefix}_conv{stage}_w"])
        grads[f"{prefix}_conv{stage}_w"] = dw
        grads[f"{prefix}_conv{stage}_b"] = db
    return grads


def _forward_arrays(params: ModelParams, xa: np.ndarray, xs: np.ndarray):
    """Batched forward pass on prepared arrays; returns (probs, caches)."""
    spec = params.spec
    _check("audio input", tuple(xa.shape[1:]), (1, spec.audio_bands, EXCERPT_FRAMES))
    _check("sheet input", tuple(xs.shape[1:]), (1, STRIP_HEIGHT, WINDOW_WIDTH))
    p = params.tensors
    ea, ca = _pathway_forward(params, "audio", xa)
    es, cs = _pathway_forward(params, "sheet", xs)
    merged = np.concatenate([ea, es], axis=1)
    h = _dense_forward(merged, p["head_fc1_w"], p["head_fc1_b"])
    mask_h = h > 0
    np.maximum(h, 0, out=h)
    logits = _dense_forward(h, p["head_fc2_w"], p["head_fc2_b"])
    probs = _softmax(logits)
    caches = {"audio": ca, "sheet": cs, "merged": merged,
              "mask_h": mask_h, "h": h}
    return probs, caches


def _backward_arrays(params: ModelParams, caches, dlogits):
    p = params.tensors
    grads = {}
    grads["head_fc2_w"] = dlogits.T @ caches["h"]
    grads["head_fc2_b"] = dlogits.sum(axis=0)
    dh = dlogits @ p["head_fc2_w"]
    dh = dh * caches["mask_h"]
    grads["head_fc1_w"] = dh.T @ caches["merged"]
    grads["head_fc1_b"] = dh.sum(axis=0)
    dmerged = dh @ p["head_fc1_w"]
    k = params.spec.embed_dim
    grads.update(_pathway_backward(params, "audio", caches["audio"], dmerged[:, :k]))
    grads.update(_pathway_backward(params, "sheet", caches["sheet"], dmerged[:, k:]))
    return grads


def normalize_sheet(pixels: np.ndarray) -> np.ndarray:
    """Map paper-white 255 to 0.0 and ink 0 to 1.0."""
    return (1.0 - pixels.astype(np.float32) / 255.0)


def prepare_audio(excerpt) -> np.ndarray:
    frames = excerpt.frames if isinstance(excerpt, AudioExcerpt) else np.asarray(excerpt)
    if frames.shape != (EXCERPT_FRAMES, AUDIO_BANDS):
        raise ShapeError(
            f"audio excerpt: expected {(EXCERPT_FRAMES, AUDIO_BANDS)}, got {frames.shape}")
    return frames.T.astype(np.float32)[None, None]


def prepare_sheet(window) -> np.ndarray:
    pixels = window.pixels if isinstance(window, SheetWindow) else np.asarray(window)
    if pixels.shape != (STRIP_HEIGHT, WINDOW_WIDTH):
        raise ShapeError(
            f"sheet window: expected {(STRIP_HEIGHT, WINDOW_WIDTH)}, got {pixels.shape}")
    if pixels.dtype == np.uint8:
        pixels = normalize_sheet(pixels)
    return pixels.astype(np.float32)[None, None]


def forward(params: ModelParams, excerpt, window) -> np.ndarray:
    """Probability of a match for each of the 40 window bins."""
    probs, _ = _forward_arrays(params, prepare_audio(excerpt), prepare_sheet(window))
    return probs[0]


@dataclass(frozen=True)
class TrainSample:
    audio: np.ndarray   # (40, 136) excerpt, frames oldest-first
    sheet: np.ndarray   # (40, 200) ink-normalized floats
    label: int          # window bin 0..39


def loss_only(params: ModelParams, xa, xs, targets) -> float:
    probs, _ = _forward_arrays(params, xa, xs)
    nll = -(targets * np.log(np.maximum(probs, 1e-38))).sum(axis=1)
    return float(nll.mean())


def loss_and_grads_arrays(params: ModelParams, xa, xs, targets):
    """Mean cross-entropy and exact gradients on prepared batch arrays."""
    probs, caches = _forward_arrays(params, xa, xs)
    eps_p = np.maximum(probs, 1e-38)
    nll = -(targets * np.log(eps_p)).sum(axis=1)
    if not np.isfinite(nll).all():
        bad = int(np.flatnonzero(~np.isfinite(nll))[0])
        raise NumericalError(f"non-finite loss at batch sample {bad}")
    loss = float(nll.mean())
    dlogits = (probs - targets) / probs.shape[0]
    grads = _backward_arrays(params, caches, dlogits.astype(probs.dtype))
    return loss, grads


def loss_and_grads(params: ModelParams, batch: list[TrainSample]):
    """Batch entry point over TrainSample lists (one-hot targets)."""
    if not batch:
        raise ShapeError("empty batch")
    dtype = next(iter(params.tensors.values())).dtype
    xa = np.stack([s.audio.T for s in batch])[:, None].astype(dtype)
    xs = np.stack([s.sheet for s in batch])[:, None].astype(dtype)
    targets = np.zeros((len(batch), NUM_BINS), dtype=dtype)
    for i, s in enumerate(batch):
        if not (0 <= s.label < NUM_BINS):
            raise ShapeError(f"label {s.label} outside 0..{NUM_BINS - 1}")
        targets[i, s.label] = 1.0
    return loss_and_grads_arrays(params, xa, xs, targets)


# --------------------------------------------------------- serialization

def save_params(params: ModelParams) -> bytes:
    names = [n for n, _ in params.spec.param_shapes()]
    header = json.dumps({"layers": [[n, list(params.tensors[n].shape)]
                                    for n in names]}).encode()
    body = b"".join(np.ascontiguousarray(params.tensors[n], dtype="<f4").tobytes()
                    for n in names)
    return MAGIC + struct.pack("<I", len(header)) + header + body


def load_params(data: bytes) -> ModelParams:
    if data[:5] != MAGIC:
        raise FormatError(f"bad magic {data[:5]!r}, expected {MAGIC.decode()!r}")
    if len(data) < 9:
        raise FormatError("truncated model file (no header length)")
    (hlen,) = struct.unpack("<I", data[5:9])
    if len(data) < 9 + hlen:
        raise FormatError("truncated model file (header cut short)")
    try:
        header = json.loads(data[9:9 + hlen])
        layers = [(str(n), tuple(int(d) for d in shape))
                  for n, shape in header["layers"]]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"unreadable model header: {exc}") from exc

    spec = _spec_from_layers(layers)
    if layers != spec.param_shapes():
        raise FormatError("layer table does not match the architecture")
    want = sum(int(np.prod(s)) for _, s in layers) * 4
    body = data[9 + hlen:]
    if len(body) != want:
        raise FormatError(f"model body is {len(body)} bytes, expected {want}")
    tensors, off = {}, 0
    for name, shape in layers:
        n = int(np.prod(shape)) * 4
        tensors[name] = np.frombuffer(body[off:off + n], dtype="<f4").reshape(shape).copy()
        off += n
    return ModelParams(spec=spec, tensors=tensors)


def _spec_from_layers(layers) -> ModelSpec:
    table = dict(layers)
    try:
        c1 = table["audio_conv1_w"][0]
        c2 = table["audio_conv2_w"][0]
        c3 = table["audio_conv3_w"][0]
        embed = table["audio_fc_w"][0]
        head = table["head_fc1_w"][0]
    except KeyError as exc:
        raise FormatError(f"model header missing layer {exc}") from exc
    return ModelSpec(conv_channels=(c1, c2, c3), embed_dim=embed, head_dim=head)


# -------------------------------------------------------- gradient check

def _capture_routing(params: ModelParams, xa, xs):
    """Record every ReLU mask and pool selection at the evaluation point."""
    _, caches = _forward_arrays(params, xa, xs)
    routing = {}
    for path in ("audio", "sheet"):
        c = caches[path]
        routing[path] = {
            "m1": c["mask1"], "i1": c["idx1"],
            "m2": c["mask2"], "i2": c["idx2"],
            "m3": c["mask3"], "i3": c["idx3"],
            "mfc": c["mask_fc"],
        }
    routing["mh"] = caches["mask_h"]
    return routing


def _frozen_loss(params: ModelParams, xa, xs, targets, routing) -> float:
    """Loss along the branch active at the capture point.

    ReLU masks and pool selections are held fixed, so this composition is
    smooth in the parameters and central differences estimate exactly the
    derivative the backward pass computes. Probing the raw loss instead
    would cross switch points at any usable step size and corrupt the
    estimate.
    """
    p = params.tensors

    def pathway(prefix, x):
        r = routing[prefix]
        h, _ = _conv3x3_forward(x, p[f"{prefix}_conv1_w"], p[f"{prefix}_conv1_b"])
        h = _maxpool2_apply(h * r["m1"], r["i1"])
        h, _ = _conv3x3_forward(h, p[f"{prefix}_conv2_w"], p[f"{prefix}_conv2_b"])
        h = _maxpool2_apply(h * r["m2"], r["i2"])
        h, _ = _conv3x3_forward(h, p[f"{prefix}_conv3_w"], p[f"{prefix}_conv3_b"])
        h = _maxpool2_apply(h * r["m3"], r["i3"])
        flat = h.reshape(h.shape[0], -1)
        return _dense_forward(flat, p[f"{prefix}_fc_w"], p[f"{prefix}_fc_b"]) * r["mfc"]

    merged = np.concatenate([pathway("audio", xa), pathway("sheet", xs)], axis=1)
    h = _dense_forward(merged, p["head_fc1_w"], p["head_fc1_b"]) * routing["mh"]
    logits = _dense_forward(h, p["head_fc2_w"], p["head_fc2_b"])
    probs = _softmax(logits)
    nll = -(targets * np.log(np.maximum(probs, 1e-38))).sum(axis=1)
    return float(nll.mean())


def check_gradients(spec: ModelSpec | None = None, seed: int = 0,
                    num_batches: int = 3, batch_size: int = 2,
                    eps: float = 1e-3):
    """Compare analytic gradients to central finite differences.

    Runs in float64 on randomly initialized params (head included, so
    every path carries gradient). The probe freezes the ReLU/pool switch
    states captured at the evaluation point (see _frozen_loss). Returns
    per-block dicts of the max component-wise relative error and the
    block-norm relative error.
    """
    spec = spec or REDUCED_SPEC
    rng = np.random.default_rng(seed)
    params = init_params(spec, seed=seed, dtype=np.float64, zero_head=False)
    params.tensors["head_fc2_w"] = rng.standard_normal(
        params.tensors["head_fc2_w"].shape) * 0.1
    params.tensors["head_fc2_b"] = rng.standard_normal(NUM_BINS) * 0.01

    comp_err: dict[str, float] = {}
    norm_err: dict[str, float] = {}
    for _ in range(num_batches):
        xa = rng.uniform(0.0, 2.0, (batch_size, 1, spec.audio_bands, EXCERPT_FRAMES))
        xs = rng.uniform(0.0, 1.0, (batch_size, 1, STRIP_HEIGHT, WINDOW_WIDTH))
        targets = np.zeros((batch_size, NUM_BINS))
        targets[np.arange(batch_size), rng.integers(0, NUM_BINS, batch_size)] = 1.0

        routing = _capture_routing(params, xa, xs)
        _, grads = loss_and_grads_arrays(params, xa, xs, targets)
        for name in params.tensors:
            g = grads[name]
            num = np.zeros_like(g)
            flat_p = params.tensors[name].ravel()
            flat_n = num.ravel()
            for i in range(flat_p.size):
                orig = flat_p[i]
                flat_p[i] = orig + eps
                lp = _frozen_loss(params, xa, xs, targets, routing)
                flat_p[i] = orig - eps
                lm = _frozen_loss(params, xa, xs, targets, routing)
                flat_p[i] = orig
                flat_n[i] = (lp - lm) / (2 * eps)
            denom = np.maximum(np.maximum(np.abs(g), np.abs(num)), 1e-4)
            comp = float((np.abs(g - num) / denom).max())
            nrm = float(np.linalg.norm(g - num)
                        / max(np.linalg.norm(g), np.linalg.norm(num), 1e-12))
            comp_err[name] = max(comp_err.get(name, 0.0), comp)
            norm_err[name] = max(norm_err.get(name, 0.0), nrm)
    return comp_err, norm_err
