"""Audio and annotation file formats.

WAV input may be 16-bit PCM or 32-bit IEEE float with any number of
channels; it is always downmixed to mono by averaging channels. Output is
16-bit PCM mono.

Annotations are UTF-8 CSV:

* f0 tracks: ``time_sec,f0_hz`` per row, optional header, uniform hop,
  ``f0 <= 0`` marks an unvoiced frame.
* multi-f0 sequences: ``time_sec`` followed by zero or more f0 values in Hz.

Floats are written with ``repr`` so values survive a write/read cycle
bit-exactly.
"""
from __future__ import annotations

import csv
import logging
import struct
import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

PCM16_SCALE = 32768.0
HOP_JITTER_S = 1e-6
F0_MIN_HZ = 20.0
F0_MAX_HZ = 5000.0

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class WavFormatError(ValueError):
    """A WAV file could not be decoded. ``field`` names the offending header field."""

    def __init__(self, path: str | Path, field: str, message: str):
        self.path = str(path)
        self.field = field
        super().__init__(f"{path}: {field}: {message}")


def _frozen(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono sample buffer. Samples are nominally in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = _frozen(self.samples)
        if samples.ndim != 1:
            raise ValueError(f"AudioClip expects mono samples, got shape {samples.shape}")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioClip samples must be finite")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.samples))) if len(self) else 0.0


@dataclass(frozen=True, eq=False)
class F0Track:
    """Single f0 trajectory on a uniform time grid.

    Frame ``i`` sits at ``start_seconds + i * hop_seconds``. Values ``<= 0``
    are unvoiced.
    """

    hop_seconds: float
    frames: np.ndarray
    start_seconds: float = 0.0

    def __post_init__(self):
        frames = _frozen(self.frames)
        if frames.ndim != 1:
            raise ValueError("F0Track frames must be one-dimensional")
        if not self.hop_seconds > 0:
            raise ValueError(f"hop_seconds must be positive, got {self.hop_seconds}")
        if not np.all(np.isfinite(frames)):
            raise ValueError("F0Track frames must be finite")
        voiced = frames[frames > 0]
        if voiced.size and (voiced.min() < F0_MIN_HZ or voiced.max() > F0_MAX_HZ):
            raise ValueError(
                f"voiced f0 values must lie in [{F0_MIN_HZ}, {F0_MAX_HZ}] Hz, "
                f"got range [{voiced.min()}, {voiced.max()}]"
            )
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.start_seconds + np.arange(len(self)) * self.hop_seconds

    @property
    def voiced(self) -> np.ndarray:
        return self.frames > 0


@dataclass(frozen=True, eq=False)
class MultiF0Sequence:
    """Per-timestamp multisets of active f0 values (Hz)."""

    timestamps: np.ndarray
    frames: tuple[tuple[float, ...], ...] = field(default=())

    def __post_init__(self):
        times = _frozen(self.timestamps)
        frames = tuple(tuple(float(f) for f in frame) for frame in self.frames)
        if times.ndim != 1 or times.shape[0] != len(frames):
            raise ValueError(
                f"timestamps ({times.shape}) and frames ({len(frames)}) must align"
            )
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        for frame in frames:
            for f in frame:
                if not (np.isfinite(f) and f > 0):
                    raise ValueError(f"f0 values must be positive and finite, got {f}")
        object.__setattr__(self, "timestamps", times)
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)

    def __eq__(self, other):
        if not isinstance(other, MultiF0Sequence):
            return NotImplemented
        return np.array_equal(self.timestamps, other.timestamps) and self.frames == other.frames

    @property
    def hop_seconds(self) -> float:
        """Median spacing of timestamps (``inf`` for a single frame)."""
        if len(self) < 2:
            return float("inf")
        return float(np.median(np.diff(self.timestamps)))


# --------------------------------------------------------------------------
# WAV
# --------------------------------------------------------------------------

def _parse_fmt(path, body: bytes) -> tuple[int, int, int, int, int]:
    if len(body) < 16:
        raise WavFormatError(path, "fmt", f"chunk too short ({len(body)} bytes)")
    tag, channels, rate, _byte_rate, block_align, bits = struct.unpack_from("<HHIIHH", body)
    if tag == _WAVE_FORMAT_EXTENSIBLE:
        if len(body) < 26:
            raise WavFormatError(path, "fmt", "extensible chunk too short")
        tag = struct.unpack_from("<H", body, 24)[0]
    return tag, channels, rate, block_align, bits


def load_wav(path: str | Path) -> AudioClip:
    """Read a RIFF/WAVE file (PCM16 or float32) as a mono clip.

    Channels are averaged. Integer samples are divided by 32768.

    Raises:
        FileNotFoundError: the file does not exist.
        WavFormatError: malformed header or unsupported codec; ``.field``
            names the offending field.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF":
        raise WavFormatError(path, "riff_id", "not a RIFF file")
    if data[8:12] != b"WAVE":
        raise WavFormatError(path, "wave_id", f"expected 'WAVE', got {data[8:12]!r}")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        size = struct.unpack_from("<I", data, pos + 4)[0]
        body = data[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            fmt = _parse_fmt(path, body)
        elif chunk_id == b"data":
            if len(body) < size:
                logger.warning("%s: data chunk truncated (%d of %d bytes)", path, len(body), size)
            payload = body
        pos += 8 + size + (size & 1)

    if fmt is None:
        raise WavFormatError(path, "fmt", "missing fmt chunk")
    if payload is None:
        raise WavFormatError(path, "data", "missing data chunk")

    tag, channels, rate, block_align, bits = fmt
    if channels < 1:
        raise WavFormatError(path, "num_channels", f"invalid channel count {channels}")
    if rate < 1:
        raise WavFormatError(path, "sample_rate", f"invalid sample rate {rate}")
    if tag == _WAVE_FORMAT_PCM:
        if bits != 16:
            raise WavFormatError(path, "bits_per_sample", f"unsupported PCM bit depth {bits}")
        dtype, scale = np.dtype("<i2"), PCM16_SCALE
    elif tag == _WAVE_FORMAT_IEEE_FLOAT:
        if bits != 32:
            raise WavFormatError(path, "bits_per_sample", f"unsupported float bit depth {bits}")
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise WavFormatError(path, "audio_format", f"unsupported codec tag 0x{tag:04x}")
    if block_align != channels * dtype.itemsize:
        raise WavFormatError(
            path, "block_align",
            f"{block_align} does not match {channels} channels x {dtype.itemsize} bytes",
        )

    n_frames = len(payload) // block_align
    raw = np.frombuffer(payload[:n_frames * block_align], dtype=dtype).reshape(n_frames, channels)
    samples = raw.astype(np.float64).mean(axis=1) / scale
    if not np.all(np.isfinite(samples)):
        raise WavFormatError(path, "data", "non-finite float samples")
    return AudioClip(samples, rate)


def write_wav(clip: AudioClip, path: str | Path) -> int:
    """Write ``clip`` as 16-bit PCM mono. Returns the number of clipped samples.

    Samples outside [-1, 1] are hard-clipped to the int16 range.
    """
    x = clip.samples
    n_clipped = int(np.count_nonzero(np.abs(x) > 1.0))
    if n_clipped:
        logger.warning("%s: %d samples clipped", path, n_clipped)
    pcm = np.clip(np.round(x * PCM16_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate)
        w.writeframes(pcm.tobytes())
    return n_clipped


# --------------------------------------------------------------------------
# CSV annotations
# --------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def _numeric_rows(path: Path) -> list[tuple[int, list[float]]]:
    """Parse CSV rows as floats; a non-numeric first row is taken as a header."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in row]
            while cells and cells[-1] == "":
                cells.pop()
            if not cells:
                continue
            try:
                values = [float(c) for c in cells]
            except ValueError:
                if not rows and lineno == 1:
                    continue
                bad = next(c for c in cells if not _is_float(c))
                raise ValueError(f"{path}:{lineno}: non-numeric cell {bad!r}") from None
            rows.append((lineno, values))
    return rows


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_f0_track(path: str | Path) -> F0Track:
    """Read a ``time_sec,f0_hz`` CSV. The hop is taken from the first two rows."""
    path = Path(path)
    rows = _numeric_rows(path)
    for lineno, values in rows:
        if len(values) != 2:
            raise ValueError(f"{path}:{lineno}: expected 2 columns, got {len(values)}")
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two rows to infer the hop")
    times = np.array([v[0] for _, v in rows])
    f0 = np.array([v[1] for _, v in rows])
    hop = times[1] - times[0]
    if not hop > 0:
        raise ValueError(f"{path}: non-increasing timestamps in first two rows")
    expected = times[0] + np.arange(len(times)) * hop
    bad = np.flatnonzero(np.abs(times - expected) > HOP_JITTER_S)
    if bad.size:
        lineno = rows[bad[0]][0]
        raise ValueError(
            f"{path}:{lineno}: non-uniform hop (t={times[bad[0]]}, expected {expected[bad[0]]})"
        )
    f0 = np.where(f0 > 0, f0, 0.0)
    return F0Track(hop_seconds=float(hop), frames=f0, start_seconds=float(times[0]))


def write_f0_track(track: F0Track, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_sec", "f0_hz"])
        for t, f in zip(track.times, track.frames):
            w.writerow([_fmt(t), _fmt(f)])


def load_multif0(path: str | Path) -> MultiF0Sequence:
    """Read a multi-f0 CSV: ``time_sec[,f0_hz...]`` per row.

    Rows with only a timestamp are silent frames. Zero-valued pitches are
    dropped (some estimators pad with zeros); negative ones are an error.
    """
    path = Path(path)
    times, frames = [], []
    for lineno, values in _numeric_rows(path):
        t, pitches = values[0], values[1:]
        if times and t <= times[-1]:
            raise ValueError(f"{path}:{lineno}: non-increasing timestamp {t}")
        if any(p < 0 for p in pitches):
            raise ValueError(f"{path}:{lineno}: negative f0")
        times.append(t)
        frames.append(tuple(p for p in pitches if p > 0))
    return MultiF0Sequence(np.array(times, dtype=np.float64), tuple(frames))


def write_multif0(seq: MultiF0Sequence, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for t, frame in zip(seq.timestamps, seq.frames):
            w.writerow([_fmt(t), *(_fmt(f) for f in frame)])


def multif0_from_tracks(tracks: Sequence[F0Track] | Iterable[F0Track]) -> MultiF0Sequence:
    """Stack f0 tracks on a shared grid into a multi-f0 sequence (duplicates kept).

    Tracks must share hop and start; shorter tracks are unvoiced past their end.
    """
    tracks = list(tracks)
    if not tracks:
        raise ValueError("need at least one track")
    hop, start = tracks[0].hop_seconds, tracks[0].start_seconds
    for tr in tracks[1:]:
        if abs(tr.hop_seconds - hop) > 1e-9 or abs(tr.start_seconds - start) > HOP_JITTER_S:
            raise ValueError(
                f"hop/start mismatch: ({tr.hop_seconds}, {tr.start_seconds}) vs ({hop}, {start})"
            )
    n = max(len(tr) for tr in tracks)
    frames = []
    for i in range(n):
        frames.append(tuple(float(tr.frames[i]) for tr in tracks if i < len(tr) and tr.frames[i] > 0))
    return MultiF0Sequence(start + np.arange(n) * hop, tuple(frames))


def section_anchor(tracks: Sequence[F0Track]) -> F0Track:
    """Per-frame mean f0 of the voiced singers, averaged in the log (cents) domain.

    A frame is unvoiced only when every singer is unvoiced there.
    """
    tracks = list(tracks)
    grid = multif0_from_tracks(tracks)
    anchor = np.zeros(len(grid))
    for i, frame in enumerate(grid.frames):
        if frame:
            anchor[i] = float(np.exp2(np.mean(np.log2(frame))))
    return F0Track(tracks[0].hop_seconds, anchor, tracks[0].start_seconds)
