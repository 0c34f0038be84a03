"""WAV and feature-file persistence.

Feature file layout (little-endian)::

    offset  type     field
    0       8s       magic b"DDSPFEAT"
    8       u16      version (1)
    10      u32      sample_rate
    14      u32      hop
    18      u32      T (frames)
    22      u16      v (envelope bands, 80)
    24      u16      p (periodicity bands, 12)
    26      f32[...] f0[T], periodicity[T*p], envelope_logmel[T*v], row-major

Nothing may follow the payload.
"""

from __future__ import annotations

import csv
import io as _io
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .analysis import N_ENVELOPE, N_PERIODICITY, AcousticFeatures
from .loss import DiscriminatorScores
from .signal import FrameConfig, Waveform

MAGIC = b"DDSPFEAT"
VERSION = 1
HEADER = struct.Struct("<8sHIIIHH")
ENCODINGS = ("pcm16", "float32")


class FormatError(ValueError):
    """Malformed or unsupported file contents."""


def atomic_write(path, data: bytes) -> None:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_wav(path) -> Waveform:
    """Mono PCM16 (scaled by 1/32768) or float32 WAV."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    try:
        sr, data = wavfile.read(path)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if data.ndim != 1:
        raise FormatError(f"{path}: {data.shape[1]} channels, only mono is supported")
    if data.shape[0] == 0:
        raise FormatError(f"{path}: empty data chunk")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported sample type {data.dtype}")
    return Waveform(samples, int(sr))


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    """Clamp to the int16 range, then round half away from zero."""
    x = np.clip(np.asarray(samples, dtype=np.float64) * 32768.0, -32768.0, 32767.0)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int16)


def write_wav(path, wave: Waveform, encoding: str = "float32") -> None:
    if encoding not in ENCODINGS:
        raise ValueError(f"encoding must be one of {ENCODINGS}, got {encoding!r}")
    if len(wave) == 0:
        raise ValueError("refusing to write an empty waveform")
    data = to_pcm16(wave.samples) if encoding == "pcm16" else wave.samples.astype(np.float32)
    buf = _io.BytesIO()
    wavfile.write(buf, wave.sample_rate, data)
    atomic_write(path, buf.getvalue())


def encode_features(features: AcousticFeatures) -> bytes:
    features.validate()
    cfg = features.config
    t = features.n_frames
    v = features.envelope_logmel.shape[1]
    p = features.periodicity.shape[1]
    header = HEADER.pack(MAGIC, VERSION, cfg.sample_rate, cfg.hop, t, v, p)
    payload = np.concatenate(
        [features.f0.ravel(), features.periodicity.ravel(), features.envelope_logmel.ravel()]
    ).astype("<f4")
    return header + payload.tobytes()


def decode_features(blob: bytes, source: str = "<bytes>") -> AcousticFeatures:
    if len(blob) < HEADER.size:
        raise FormatError(f"{source}: {len(blob)} bytes is shorter than the {HEADER.size}-byte header")
    magic, version, sr, hop, t, v, p = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported version {version}")
    if v != N_ENVELOPE or p != N_PERIODICITY:
        raise FormatError(
            f"{source}: dimension mismatch, file has v={v} p={p}, expected v={N_ENVELOPE} p={N_PERIODICITY}"
        )
    n_values = t * (1 + p + v)
    expected = HEADER.size + 4 * n_values
    if len(blob) < expected:
        raise FormatError(f"{source}: truncated payload, {len(blob)} of {expected} bytes")
    if len(blob) > expected:
        raise FormatError(f"{source}: {len(blob) - expected} trailing bytes after payload")
    values = np.frombuffer(blob, dtype="<f4", count=n_values, offset=HEADER.size).astype(np.float64)
    f0 = values[:t]
    periodicity = values[t:t + t * p].reshape(t, p)
    envelope = values[t + t * p:].reshape(t, v)
    try:
        cfg = FrameConfig(sample_rate=sr, hop=hop, fft_size=2 * hop, window_len=2 * hop)
        return AcousticFeatures(f0, periodicity, envelope, cfg)
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}") from exc


def write_features(path, features: AcousticFeatures) -> None:
    atomic_write(path, encode_features(features))


def read_features(path) -> AcousticFeatures:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return decode_features(path.read_bytes(), str(path))


def read_scores(path) -> DiscriminatorScores:
    """Discriminator scores from CSV rows ``k, D_k`` (header optional, k from 0)."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() in ("k", "band"):
                continue
            if len(row) != 2:
                raise FormatError(f"{path}: expected 2 columns, got {len(row)}")
            try:
                rows.append((int(row[0]), float(row[1])))
            except ValueError as exc:
                raise FormatError(f"{path}: {exc}") from exc
    ks = [k for k, _ in rows]
    if ks != list(range(len(rows))):
        raise FormatError(f"{path}: band indices must be 0..K-1 in order")
    return DiscriminatorScores(np.array([d for _, d in rows]))


def write_scores(path, scores: DiscriminatorScores) -> None:
    lines = ["k,D_k"] + [f"{k},{d!r}" for k, d in enumerate(scores.scores.tolist())]
    atomic_write(path, ("\n".join(lines) + "\n").encode())
