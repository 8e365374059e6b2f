"""Streaming audio frontend.

Converts a mono PCM stream at 22.05 kHz into 136-band log-filterbank
frames at 15 fps and keeps a ring of recent frames from which 40-frame
excerpts (roughly 2.7 s of context) are drawn.

Per frame: 2048-sample Hann window -> magnitude spectrum (1025 bins) ->
triangular log-spaced filterbank -> log10(1 + x). Frame t covers samples
[t*hop, t*hop + 2048), hop = 1470, so frames are emitted as soon as their
window is fully available, independent of how the input is chunked.
"""

from dataclasses import dataclass, field
from collections import deque

import numpy as np
import wave

from .errors import AudioInputError, EmptyStreamError, InvalidConfigError

EXCERPT_FRAMES = 40


@dataclass(frozen=True)
class AudioConfig:
    """Frontend parameters. Defaults give hop=1470 and 136 filters.

    num_filters pins the bank size: snapping the quarter-tone ladder onto
    the FFT grid merges neighbouring candidates at the low end, so the
    ladder is extended past fmax_hz until the pinned count is reached.
    Set num_filters=None to take whatever the ladder yields within fmax.
    """

    sample_rate_hz: int = 22050
    fft_size: int = 2048
    frame_rate_hz: int = 15
    fmin_hz: float = 80.0
    fmax_hz: float = 8000.0
    bands_per_octave: int = 24
    num_filters: int | None = 136

    def __post_init__(self):
        if self.sample_rate_hz % self.frame_rate_hz != 0:
            raise InvalidConfigError(
                f"sample rate {self.sample_rate_hz} not divisible by "
                f"frame rate {self.frame_rate_hz}")
        if self.fft_size & (self.fft_size - 1) != 0 or self.fft_size < 2:
            raise InvalidConfigError(f"fft_size {self.fft_size} not a power of two")
        if not (0 < self.fmin_hz < self.fmax_hz <= self.sample_rate_hz / 2):
            raise InvalidConfigError(
                f"need 0 < fmin < fmax <= nyquist, got {self.fmin_hz}, {self.fmax_hz}")
        if self.bands_per_octave < 1:
            raise InvalidConfigError("bands_per_octave must be >= 1")

    @property
    def hop(self) -> int:
        return self.sample_rate_hz // self.frame_rate_hz

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1


@dataclass(frozen=True)
class FilterBank:
    """Triangular filters over FFT bins; every row sums to 1."""

    matrix: np.ndarray       # (num_filters, fft_size/2+1)
    center_bins: np.ndarray  # strictly increasing FFT bin per filter
    bin_hz: float            # FFT bin spacing

    @property
    def num_filters(self) -> int:
        return self.matrix.shape[0]

    @property
    def center_freqs_hz(self) -> np.ndarray:
        return self.center_bins * self.bin_hz


def build_filterbank(cfg: AudioConfig) -> FilterBank:
    """Build the log-spaced triangular filterbank for cfg.

    Candidate centers walk the geometric ladder fmin * 2^(k/bands) and are
    snapped to the nearest FFT bin (ties round half up); duplicates are
    dropped. When cfg.num_filters is set, the ladder keeps walking past
    fmax until that many distinct centers exist. Filter i rises from
    center i-1 to center i and falls to center i+1; the first and last
    filters are one-sided. Rows are normalized to unit sum.
    """
    bin_hz = cfg.sample_rate_hz / cfg.fft_size
    top_bin = cfg.fft_size // 2
    centers: list[int] = []
    k = 0
    while True:
        f = cfg.fmin_hz * 2.0 ** (k / cfg.bands_per_octave)
        if f > cfg.fmax_hz and (
                cfg.num_filters is None or len(centers) >= cfg.num_filters):
            break
        b = int(np.floor(f / bin_hz + 0.5))
        if b > top_bin:
            raise InvalidConfigError(
                f"ladder ran past the nyquist bin with only {len(centers)} "
                f"of {cfg.num_filters} filters")
        if not centers or b != centers[-1]:
            centers.append(b)
        k += 1
    if cfg.num_filters is not None and len(centers) != cfg.num_filters:
        raise InvalidConfigError(
            f"ladder within fmax yields {len(centers)} filters, "
            f"{cfg.num_filters} pinned")
    if len(centers) < 2:
        raise InvalidConfigError("configuration yields fewer than 2 unique centers")

    matrix = np.zeros((len(centers), cfg.num_bins))
    for i, c in enumerate(centers):
        left = centers[i - 1] if i > 0 else c
        right = centers[i + 1] if i < len(centers) - 1 else c
        support = np.arange(left, right + 1, dtype=np.float64)
        w = np.zeros_like(support)
        if c > left:
            rising = support <= c
            w[rising] = (support[rising] - left) / (c - left)
        if right > c:
            falling = support >= c
            w[falling] = (right - support[falling]) / (right - c)
        w[support == c] = 1.0
        matrix[i, left:right + 1] = w / w.sum()

    return FilterBank(matrix=matrix,
                      center_bins=np.asarray(centers, dtype=np.int64),
                      bin_hz=bin_hz)


@dataclass(frozen=True)
class SpectralFrame:
    values: np.ndarray   # (num_filters,) nonnegative log-energies
    frame_index: int
    time_sec: float


@dataclass(frozen=True)
class AudioExcerpt:
    """The most recent 40 frames, oldest first, zero-padded at the start."""

    frames: np.ndarray   # (40, num_filters)
    end_frame_index: int


class StreamingFrontend:
    """Stateful per-stream frame extractor. Single-owner, not thread safe.

    Holds the unconsumed sample tail so frames come out identical no
    matter how the input was chunked.
    """

    def __init__(self, cfg: AudioConfig | None = None,
                 filterbank: FilterBank | None = None):
        self.cfg = cfg or AudioConfig()
        self.filterbank = filterbank or build_filterbank(self.cfg)
        self._window = np.hanning(self.cfg.fft_size)
        self._pending = np.zeros(0, dtype=np.float64)
        self._next_frame = 0

    @property
    def frames_emitted(self) -> int:
        return self._next_frame

    def process_block(self, samples) -> list[SpectralFrame]:
        """Feed a chunk of mono PCM in [-1, 1]; return newly complete frames."""
        arr = np.asarray(samples, dtype=np.float64).ravel()
        if arr.size and not np.all(np.isfinite(arr)):
            raise AudioInputError(
                f"non-finite sample in chunk of {arr.size} "
                f"(stream offset {self._next_frame * self.cfg.hop + self._pending.size})")
        self._pending = np.concatenate([self._pending, arr])

        nfft, hop = self.cfg.fft_size, self.cfg.hop
        rate = float(self.cfg.frame_rate_hz)
        out = []
        while self._pending.size >= nfft:
            seg = self._pending[:nfft] * self._window
            mag = np.abs(np.fft.rfft(seg))
            values = np.log10(1.0 + self.filterbank.matrix @ mag)
            out.append(SpectralFrame(values=values,
                                     frame_index=self._next_frame,
                                     time_sec=self._next_frame / rate))
            self._pending = self._pending[hop:]
            self._next_frame += 1
        return out


class FrameRing:
    """Keeps the last 40 frames pushed; excerpts are drawn oldest-first."""

    def __init__(self, num_bands: int, capacity: int = EXCERPT_FRAMES):
        self.num_bands = num_bands
        self.capacity = capacity
        self._rows: deque[np.ndarray] = deque(maxlen=capacity)
        self._count = 0

    def push(self, frame: SpectralFrame) -> None:
        self._rows.append(frame.values)
        self._count += 1

    def __len__(self) -> int:
        return self._count

    def latest_excerpt(self) -> AudioExcerpt:
        if self._count == 0:
            raise EmptyStreamError("no frames pushed yet")
        rows = np.stack(list(self._rows))
        if rows.shape[0] < self.capacity:
            pad = np.zeros((self.capacity - rows.shape[0], self.num_bands))
            rows = np.vstack([pad, rows])
        return AudioExcerpt(frames=rows, end_frame_index=self._count - 1)


def load_wav(path, cfg: AudioConfig | None = None) -> np.ndarray:
    """Read a 16-bit mono WAV at the configured rate into [-1, 1) floats.

    Anything but 16-bit signed mono PCM at the expected rate is rejected;
    there is no resampling.
    """
    cfg = cfg or AudioConfig()
    try:
        with wave.open(str(path), "rb") as w:
            if w.getnchannels() != 1:
                raise AudioInputError(f"{path}: expected mono, got {w.getnchannels()} channels")
            if w.getsampwidth() != 2:
                raise AudioInputError(f"{path}: expected 16-bit samples, got {8 * w.getsampwidth()}-bit")
            if w.getframerate() != cfg.sample_rate_hz:
                raise AudioInputError(
                    f"{path}: expected {cfg.sample_rate_hz} Hz, got {w.getframerate()} Hz")
            raw = w.readframes(w.getnframes())
    except wave.Error as exc:
        raise AudioInputError(f"{path}: not a readable WAV file ({exc})") from exc
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0


def save_wav(path, samples, cfg: AudioConfig | None = None) -> None:
    cfg = cfg or AudioConfig()
    pcm = np.clip(np.rint(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(cfg.sample_rate_hz)
        w.writeframes(pcm.tobytes())
