"""Short-time spectra and pitch-unit conversions."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .signal_io import AudioClip

REF_HZ = 220.0
WINDOW_KINDS = ("hann",)


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class StftConfig:
    window_size: int = 4096
    fft_size: int = 8192
    hop_size: int = 1024
    window_kind: str = "hann"

    def __post_init__(self):
        if not (_is_pow2(self.window_size) and _is_pow2(self.fft_size)):
            raise ValueError(
                f"window_size and fft_size must be powers of two, got {self.window_size}, {self.fft_size}"
            )
        if self.fft_size < self.window_size:
            raise ValueError("fft_size must be >= window_size")
        if not 0 < self.hop_size <= self.window_size:
            raise ValueError(f"hop_size must be in (0, window_size], got {self.hop_size}")
        if self.window_kind not in WINDOW_KINDS:
            raise ValueError(f"unknown window kind {self.window_kind!r}")


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """Linear magnitude frames, shape ``(n_frames, fft_size // 2 + 1)``.

    ``frame_times`` follow the window-center convention.
    """

    magnitudes: np.ndarray
    frame_times: np.ndarray
    bin_hz: float
    sample_rate: int
    config: StftConfig

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def hop_seconds(self) -> float:
        return self.config.hop_size / self.sample_rate

    @property
    def frequencies(self) -> np.ndarray:
        return np.arange(self.magnitudes.shape[1]) * self.bin_hz

    def nearest_frame(self, t: float) -> int | None:
        """Index of the frame whose center is within half a hop of ``t``."""
        if self.n_frames == 0:
            return None
        k = int(np.rint((t - self.frame_times[0]) / self.hop_seconds))
        if not 0 <= k < self.n_frames:
            return None
        if abs(t - self.frame_times[k]) > 0.5 * self.hop_seconds + 1e-9:
            return None
        return k


def make_window(kind: str, size: int) -> np.ndarray:
    """Periodic analysis window: ``w[i] = 0.5 - 0.5 cos(2 pi i / size)`` for Hann."""
    if size < 2:
        raise ValueError(f"window size must be >= 2, got {size}")
    if kind != "hann":
        raise ValueError(f"unknown window kind {kind!r}")
    i = np.arange(size)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * i / size)


def _frame_view(samples: np.ndarray, cfg: StftConfig) -> np.ndarray:
    n_frames = 1 + (len(samples) - cfg.window_size) // cfg.hop_size
    view = np.lib.stride_tricks.sliding_window_view(samples, cfg.window_size)
    return view[::cfg.hop_size][:n_frames]


def stft_complex(clip: AudioClip, cfg: StftConfig = StftConfig(), workers: int = 1,
                 block_frames: int = 256) -> np.ndarray:
    """Complex non-negative-frequency STFT, shape ``(n_frames, fft_size // 2 + 1)``.

    Frame ``k`` covers samples ``[k * hop, k * hop + window)``; the trailing
    partial frame is dropped. Blocks of frames may be transformed on a thread
    pool; output order does not depend on ``workers``.
    """
    if len(clip) < cfg.window_size:
        raise ValueError(
            f"clip has {len(clip)} samples, shorter than one window ({cfg.window_size})"
        )
    frames = _frame_view(clip.samples, cfg)
    window = make_window(cfg.window_kind, cfg.window_size)
    out = np.empty((frames.shape[0], cfg.fft_size // 2 + 1), dtype=np.complex128)

    def run(start: int) -> None:
        stop = min(start + block_frames, frames.shape[0])
        out[start:stop] = np.fft.rfft(frames[start:stop] * window, n=cfg.fft_size, axis=1)

    starts = range(0, frames.shape[0], block_frames)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, starts))
    else:
        for s in starts:
            run(s)
    return out


def frame_times(n_frames: int, sample_rate: int, cfg: StftConfig) -> np.ndarray:
    return (np.arange(n_frames) * cfg.hop_size + cfg.window_size / 2) / sample_rate


def stft(clip: AudioClip, cfg: StftConfig = StftConfig(), workers: int = 1) -> Spectrogram:
    mags = np.abs(stft_complex(clip, cfg, workers=workers))
    mags.setflags(write=False)
    times = frame_times(mags.shape[0], clip.sample_rate, cfg)
    times.setflags(write=False)
    return Spectrogram(
        magnitudes=mags,
        frame_times=times,
        bin_hz=clip.sample_rate / cfg.fft_size,
        sample_rate=clip.sample_rate,
        config=cfg,
    )


def hz_to_cents(f, ref: float = REF_HZ):
    """``1200 * log2(f / ref)``; works elementwise on arrays."""
    f_arr = np.asarray(f, dtype=np.float64)
    if ref <= 0 or np.any(~(f_arr > 0)):
        raise ValueError("frequencies and reference must be positive")
    out = 1200.0 * np.log2(f_arr / ref)
    return float(out) if out.ndim == 0 else out


def cents_to_hz(c, ref: float = REF_HZ):
    c_arr = np.asarray(c, dtype=np.float64)
    if not np.all(np.isfinite(c_arr)):
        raise ValueError("cents values must be finite")
    out = ref * np.exp2(c_arr / 1200.0)
    return float(out) if out.ndim == 0 else out
