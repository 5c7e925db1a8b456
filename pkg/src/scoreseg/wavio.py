"""RIFF/WAVE reading and writing (PCM 16-bit and IEEE float 32-bit)."""

from __future__ import annotations

import struct

import numpy as np

from .dsp import Waveform
from .fsutil import atomic_write_bytes

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class WavError(ValueError):
    """Malformed or unsupported WAV data; ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def _need(data: bytes, offset: int, n: int, what: str):
    if offset + n > len(data):
        raise WavError(f"truncated {what}: need {n} bytes, have {len(data) - offset}", offset)


def decode_wav(data: bytes) -> Waveform:
    _need(data, 0, 12, "RIFF header")
    if data[0:4] != b"RIFF":
        raise WavError(f"bad magic {data[0:4]!r}, expected b'RIFF'", 0)
    if data[8:12] != b"WAVE":
        raise WavError(f"bad form type {data[8:12]!r}, expected b'WAVE'", 8)
    riff_size = struct.unpack_from("<I", data, 4)[0]
    end = min(len(data), 8 + riff_size)

    fmt = None
    payload = None
    payload_offset = 0
    pos = 12
    while pos + 8 <= end:
        cid = data[pos:pos + 4]
        size = struct.unpack_from("<I", data, pos + 4)[0]
        body = pos + 8
        if body + size > len(data):
            raise WavError(f"chunk {cid!r} declares {size} bytes past end of file", pos)
        if cid == b"fmt ":
            if size < 16:
                raise WavError(f"fmt chunk too short ({size} bytes)", pos)
            tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", data, body)
            if tag == WAVE_FORMAT_EXTENSIBLE:
                if size < 40:
                    raise WavError("extensible fmt chunk too short", pos)
                tag = struct.unpack_from("<H", data, body + 24)[0]
            fmt = (tag, channels, rate, block_align, bits, pos)
        elif cid == b"data":
            payload = data[body:body + size]
            payload_offset = body
        pos = body + size + (size & 1)
    if fmt is None:
        raise WavError("missing fmt chunk", 12)
    if payload is None:
        raise WavError("missing data chunk", 12)

    tag, channels, rate, block_align, bits, fmt_pos = fmt
    if channels < 1:
        raise WavError("zero channels", fmt_pos + 10)
    if rate <= 0:
        raise WavError("zero sample rate", fmt_pos + 12)
    if (tag, bits) == (WAVE_FORMAT_PCM, 16):
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif (tag, bits) == (WAVE_FORMAT_IEEE_FLOAT, 32):
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise WavError(f"unsupported encoding (format tag {tag:#06x}, {bits} bits)", fmt_pos + 8)
    if block_align != channels * dtype.itemsize:
        raise WavError(f"block align {block_align} inconsistent with {channels}x{bits}-bit", fmt_pos + 20)
    if len(payload) % block_align:
        raise WavError(f"data size {len(payload)} not a multiple of block align {block_align}",
                       payload_offset - 4)
    frames = np.frombuffer(payload, dtype=dtype).reshape(-1, channels).T
    return Waveform(frames.astype(np.float64) * scale, rate)


def encode_wav(w: Waveform, encoding: str = "pcm16") -> bytes:
    x = np.asarray(w.samples, dtype=np.float64)
    channels = x.shape[0]
    if encoding == "pcm16":
        pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
        tag, bits = WAVE_FORMAT_PCM, 16
    elif encoding == "float32":
        pcm = x.astype("<f4")
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        raise ValueError(f"unknown encoding {encoding!r}; use 'pcm16' or 'float32'")
    payload = pcm.T.tobytes()
    block_align = channels * bits // 8
    fmt = struct.pack("<HHIIHH", tag, channels, w.sample_rate,
                      w.sample_rate * block_align, block_align, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    return b"RIFF" + struct.pack("<I", len(body)) + body


def read_wav(path) -> Waveform:
    with open(path, "rb") as fh:
        return decode_wav(fh.read())


def write_wav(path, w: Waveform, encoding: str = "float32"):
    """Write atomically (temp file in the target directory, then rename)."""
    atomic_write_bytes(path, encode_wav(w, encoding))
