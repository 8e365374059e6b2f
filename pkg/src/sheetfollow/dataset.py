"""Training-set construction for the demo regime.

Every performance (piece x tempo factor) is synthesized, run through the
streaming frontend, and sampled every 2nd frame. For each kept frame the
ground-truth pixel position is taken from the alignment; a window origin
is drawn so that the position lands in a uniformly random bin 0..39,
which teaches the matcher to localize anywhere in the window rather than
memorize the centered case.

A small fraction of extra samples get their most recent rows zeroed and
a uniform target: the matcher learns to spread its belief when the
performer stops, which is what drives the tracker's lost detection.
"""

from dataclasses import dataclass
import math

import numpy as np

from .audio import AudioConfig, StreamingFrontend, build_filterbank
from .score import BIN_WIDTH, NUM_BINS, Piece, StaffStrip, render_strip
from .synth import Alignment, make_alignment, synthesize
from .net import normalize_sheet
from .score import WINDOW_WIDTH

FRAME_STRIDE = 2
SILENCE_FRACTION = 0.02
SILENCE_SUFFIX_LO, SILENCE_SUFFIX_HI = 5, 40
CENTER_BIN_SIGMA = 4.0


@dataclass(frozen=True)
class PieceArtifacts:
    """A piece with its rendered strip and anchor table."""

    piece: Piece
    strip: StaffStrip
    anchors: np.ndarray

    @classmethod
    def of(cls, piece: Piece) -> "PieceArtifacts":
        strip, anchors = render_strip(piece)
        return cls(piece=piece, strip=strip, anchors=anchors)


@dataclass(frozen=True)
class _Row:
    perf: int          # index into the feature list
    frame: int         # excerpt end frame
    origin_x: int      # window origin, multiple of 5
    label: int         # target bin, or -1 for a uniform target
    zero_suffix: int   # trailing excerpt rows forced to silence


class ExcerptDataset:
    """Lazy batch assembly over per-performance frame matrices.

    Excerpts overlap by 39 of 40 rows, so samples store only indices and
    windows are sliced from the strip on demand.
    """

    def __init__(self, features, strips, rows, num_bands):
        self._features = features
        self._strips = strips
        self._rows = rows
        self._bands = num_bands

    def __len__(self):
        return len(self._rows)

    def gather(self, indices):
        b = len(indices)
        xa = np.zeros((b, 1, self._bands, 40), dtype=np.float32)
        xs = np.zeros((b, 1, 40, WINDOW_WIDTH), dtype=np.float32)
        targets = np.zeros((b, NUM_BINS), dtype=np.float32)
        for i, ridx in enumerate(indices):
            row = self._rows[ridx]
            frames = self._features[row.perf]
            lo = max(0, row.frame - 39)
            ex = np.zeros((40, self._bands), dtype=np.float32)
            ex[40 - (row.frame - lo + 1):] = frames[lo:row.frame + 1]
            if row.zero_suffix:
                ex[40 - row.zero_suffix:] = 0.0
            xa[i, 0] = ex.T

            strip = self._strips[row.perf]
            win = np.full((40, WINDOW_WIDTH), 255, dtype=np.uint8)
            s_lo = max(row.origin_x, 0)
            s_hi = min(row.origin_x + WINDOW_WIDTH, strip.shape[1])
            if s_hi > s_lo:
                win[:, s_lo - row.origin_x:s_hi - row.origin_x] = strip[:, s_lo:s_hi]
            xs[i, 0] = normalize_sheet(win)

            if row.label < 0:
                targets[i] = 1.0 / NUM_BINS
            else:
                targets[i, row.label] = 1.0
        return xa, xs, targets


def extract_features(samples: np.ndarray, frontend: StreamingFrontend) -> np.ndarray:
    """All spectral frames of a finished take as one (T, bands) matrix."""
    frames = frontend.process_block(samples)
    if not frames:
        return np.zeros((0, frontend.filterbank.num_filters), dtype=np.float32)
    return np.stack([f.values for f in frames]).astype(np.float32)


def build_training_set(artifacts: list[PieceArtifacts], tempi, seed: int = 0,
                       cfg: AudioConfig | None = None,
                       frame_stride: int = FRAME_STRIDE,
                       silence_fraction: float = SILENCE_FRACTION) -> ExcerptDataset:
    """The demo-regime dataset: every piece at every tempo, every
    frame_stride-th frame, plus the silence-augmented slice."""
    cfg = cfg or AudioConfig()
    bank = build_filterbank(cfg)
    rng = np.random.default_rng(seed)
    rate = float(cfg.frame_rate_hz)

    features: list[np.ndarray] = []
    strips: list[np.ndarray] = []
    rows: list[_Row] = []
    for art in artifacts:
        for k, tempo in enumerate(tempi):
            perf = synthesize(art.piece, float(tempo),
                              seed=int(rng.integers(1, 2 ** 31)), cfg=cfg)
            feats = extract_features(perf.samples, StreamingFrontend(cfg, bank))
            align = make_alignment(art.piece, float(tempo), art.anchors)
            perf_idx = len(features)
            features.append(feats)
            strips.append(art.strip.pixels)
            for t in range(0, feats.shape[0], frame_stride):
                truth = float(align.x_at_time(t / rate))
                # one placement anywhere in the window, one clustered near
                # the center the way a live tracking session frames it
                centered = int(np.clip(round(rng.normal(NUM_BINS / 2,
                                                        CENTER_BIN_SIGMA)),
                                       0, NUM_BINS - 1))
                for label in (int(rng.integers(0, NUM_BINS)), centered):
                    origin = BIN_WIDTH * (math.floor(truth / BIN_WIDTH) - label)
                    rows.append(_Row(perf=perf_idx, frame=t, origin_x=origin,
                                     label=label, zero_suffix=0))

    num_silence = int(round(silence_fraction * len(rows)))
    base_count = len(rows)
    for _ in range(num_silence):
        src = rows[int(rng.integers(0, base_count))]
        suffix = int(rng.integers(SILENCE_SUFFIX_LO, SILENCE_SUFFIX_HI + 1))
        rows.append(_Row(perf=src.perf, frame=src.frame, origin_x=src.origin_x,
                         label=-1, zero_suffix=suffix))

    return ExcerptDataset(features, strips, rows, bank.num_filters)
