"""Minimal native FLAC decoder.

No audio codec library is assumed; this reads standard FLAC streams that
use the common subset: constant / verbatim / fixed / LPC subframes, Rice
and Rice2 residual coding with escape partitions, independent and
left-side / right-side / mid-side stereo, 8-32 bit samples. Frame CRCs
are verified. Decoding is sample-by-sample Python, intended for the
short utterances this toolkit works with, not for bulk transcoding.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

_BLOCK_SIZE_CODES = {1: 192, 2: 576, 3: 1152, 4: 2304, 5: 4608,
                     8: 256, 9: 512, 10: 1024, 11: 2048, 12: 4096,
                     13: 8192, 14: 16384, 15: 32768}
_SAMPLE_RATE_CODES = {1: 88200, 2: 176400, 3: 192000, 4: 8000, 5: 16000,
                      6: 22050, 7: 24000, 8: 32000, 9: 44100, 10: 48000,
                      11: 96000}
_SAMPLE_SIZE_CODES = {1: 8, 2: 12, 4: 16, 5: 20, 6: 24, 7: 32}

_FIXED_COEFFS = {0: [], 1: [1], 2: [2, -1], 3: [3, -3, 1], 4: [4, -6, 4, -1]}


def crc8(data: bytes) -> int:
    """CRC-8 with polynomial x^8 + x^2 + x + 1, init 0 (FLAC header CRC)."""
    crc = 0
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = ((crc << 1) ^ 0x07) & 0xFF if crc & 0x80 else (crc << 1) & 0xFF
    return crc


def crc16(data: bytes) -> int:
    """CRC-16 with polynomial x^16 + x^15 + x^2 + 1, init 0 (FLAC frame CRC)."""
    crc = 0
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x8005) & 0xFFFF if crc & 0x8000 else (crc << 1) & 0xFFFF
    return crc


class _BitReader:
    def __init__(self, data: bytes, pos_bytes: int = 0):
        self.data = data
        self.pos = pos_bytes * 8  # absolute bit position

    def read_bits(self, n: int) -> int:
        end = self.pos + n
        if end > len(self.data) * 8:
            raise DataError("unexpected end of FLAC stream")
        first, last = self.pos // 8, (end + 7) // 8
        chunk = int.from_bytes(self.data[first:last], "big")
        shift = last * 8 - end
        self.pos = end
        return (chunk >> shift) & ((1 << n) - 1)

    def read_signed(self, n: int) -> int:
        value = self.read_bits(n)
        return value - (1 << n) if value & (1 << (n - 1)) else value

    def read_unary(self) -> int:
        count = 0
        while self.read_bits(1) == 0:
            count += 1
        return count

    def read_utf8_number(self) -> int:
        first = self.read_bits(8)
        if first < 0x80:
            return first
        n_cont = 0
        mask = 0x40
        while first & mask:
            n_cont += 1
            mask >>= 1
        if n_cont == 0 or n_cont > 6:
            raise DataError("invalid UTF-8 coded number in frame header")
        value = first & (mask - 1)
        for _ in range(n_cont):
            byte = self.read_bits(8)
            if byte & 0xC0 != 0x80:
                raise DataError("invalid UTF-8 continuation in frame header")
            value = (value << 6) | (byte & 0x3F)
        return value

    def align_to_byte(self):
        self.pos = (self.pos + 7) // 8 * 8

    @property
    def byte_pos(self) -> int:
        return self.pos // 8


@dataclass
class StreamInfo:
    sample_rate: int
    channels: int
    bits_per_sample: int
    total_samples: int


def _parse_stream_info(reader: _BitReader) -> StreamInfo:
    reader.read_bits(16)  # min block size
    reader.read_bits(16)  # max block size
    reader.read_bits(24)  # min frame size
    reader.read_bits(24)  # max frame size
    sample_rate = reader.read_bits(20)
    channels = reader.read_bits(3) + 1
    bits = reader.read_bits(5) + 1
    total = reader.read_bits(36)
    reader.read_bits(64)
    reader.read_bits(64)  # md5, unchecked
    return StreamInfo(sample_rate, channels, bits, total)


def read_stream_info(path: str | Path) -> StreamInfo:
    data = Path(path).read_bytes()
    info, _ = _read_header(data)
    return info


def _read_header(data: bytes) -> tuple[StreamInfo, int]:
    if data[:4] != b"fLaC":
        raise DataError("not a FLAC stream (missing fLaC marker)")
    pos = 4
    info = None
    while True:
        if pos + 4 > len(data):
            raise DataError("truncated FLAC metadata")
        head = data[pos]
        last = bool(head & 0x80)
        block_type = head & 0x7F
        length = int.from_bytes(data[pos + 1:pos + 4], "big")
        body = pos + 4
        if block_type == 0:
            info = _parse_stream_info(_BitReader(data, body))
        pos = body + length
        if last:
            break
    if info is None:
        raise DataError("FLAC stream has no STREAMINFO block")
    return info, pos


def _decode_residual(reader: _BitReader, block_size: int, order: int) -> list[int]:
    method = reader.read_bits(2)
    if method > 1:
        raise DataError("reserved FLAC residual coding method")
    param_bits = 4 if method == 0 else 5
    escape = (1 << param_bits) - 1
    partition_order = reader.read_bits(4)
    n_partitions = 1 << partition_order
    if block_size % n_partitions or (block_size >> partition_order) <= order and n_partitions == 1:
        pass
    residual = []
    for part in range(n_partitions):
        count = block_size >> partition_order
        if part == 0:
            count -= order
        if count < 0:
            raise DataError("invalid FLAC partition layout")
        param = reader.read_bits(param_bits)
        if param == escape:
            raw_bits = reader.read_bits(5)
            for _ in range(count):
                residual.append(reader.read_signed(raw_bits) if raw_bits else 0)
        else:
            for _ in range(count):
                quotient = reader.read_unary()
                value = (quotient << param) | (reader.read_bits(param) if param else 0)
                residual.append((value >> 1) ^ -(value & 1))
    return residual


def _decode_subframe(reader: _BitReader, block_size: int, bps: int) -> list[int]:
    if reader.read_bits(1) != 0:
        raise DataError("invalid FLAC subframe padding bit")
    sf_type = reader.read_bits(6)
    wasted = 0
    if reader.read_bits(1):
        wasted = reader.read_unary() + 1
    bps -= wasted

    if sf_type == 0:
        value = reader.read_signed(bps)
        samples = [value] * block_size
    elif sf_type == 1:
        samples = [reader.read_signed(bps) for _ in range(block_size)]
    elif 8 <= sf_type <= 12:
        order = sf_type & 0x07
        samples = [reader.read_signed(bps) for _ in range(order)]
        residual = _decode_residual(reader, block_size, order)
        coeffs = _FIXED_COEFFS[order]
        for res in residual:
            pred = sum(c * samples[-1 - j] for j, c in enumerate(coeffs))
            samples.append(res + pred)
    elif sf_type >= 32:
        order = (sf_type & 0x1F) + 1
        samples = [reader.read_signed(bps) for _ in range(order)]
        precision = reader.read_bits(4) + 1
        if precision == 16:
            raise DataError("invalid FLAC LPC precision code")
        shift = reader.read_signed(5)
        if shift < 0:
            raise DataError("negative FLAC LPC shift")
        coeffs = [reader.read_signed(precision) for _ in range(order)]
        residual = _decode_residual(reader, block_size, order)
        for res in residual:
            acc = sum(c * samples[-1 - j] for j, c in enumerate(coeffs))
            samples.append(res + (acc >> shift))
    else:
        raise DataError(f"reserved FLAC subframe type {sf_type}")

    if wasted:
        samples = [s << wasted for s in samples]
    return samples


def _decode_frame(data: bytes, reader: _BitReader, info: StreamInfo):
    start = reader.byte_pos
    sync = reader.read_bits(14)
    if sync != 0x3FFE:
        raise DataError("lost FLAC frame sync")
    reader.read_bits(1)  # reserved
    reader.read_bits(1)  # blocking strategy
    bs_code = reader.read_bits(4)
    sr_code = reader.read_bits(4)
    ch_code = reader.read_bits(4)
    ss_code = reader.read_bits(3)
    reader.read_bits(1)  # reserved
    reader.read_utf8_number()

    if bs_code == 0:
        raise DataError("reserved FLAC block size code")
    elif bs_code == 6:
        block_size = reader.read_bits(8) + 1
    elif bs_code == 7:
        block_size = reader.read_bits(16) + 1
    else:
        block_size = _BLOCK_SIZE_CODES[bs_code]

    if sr_code == 12:
        reader.read_bits(8)
    elif sr_code in (13, 14):
        reader.read_bits(16)
    elif sr_code == 15:
        raise DataError("invalid FLAC sample rate code")

    bps = info.bits_per_sample if ss_code == 0 else _SAMPLE_SIZE_CODES.get(ss_code)
    if bps is None:
        raise DataError("reserved FLAC sample size code")

    header_end = reader.byte_pos
    stored_crc8 = reader.read_bits(8)
    if crc8(data[start:header_end]) != stored_crc8:
        raise DataError("FLAC frame header CRC mismatch")

    if ch_code < 8:
        n_channels = ch_code + 1
        channels = [_decode_subframe(reader, block_size, bps) for _ in range(n_channels)]
    elif ch_code in (8, 9, 10):
        extra_on = 1 if ch_code in (8, 10) else 0
        first = _decode_subframe(reader, block_size, bps + (0 if extra_on else 1))
        second = _decode_subframe(reader, block_size, bps + (1 if extra_on else 0))
        if ch_code == 8:  # left/side
            left, side = first, second
            right = [l - s for l, s in zip(left, side)]
            channels = [left, right]
        elif ch_code == 9:  # right/side
            side, right = first, second
            left = [r + s for r, s in zip(right, side)]
            channels = [left, right]
        else:  # mid/side
            mid, side = first, second
            channels = [[], []]
            for m, s in zip(mid, side):
                m = (m << 1) | (s & 1)
                channels[0].append((m + s) >> 1)
                channels[1].append((m - s) >> 1)
    else:
        raise DataError(f"reserved FLAC channel assignment {ch_code}")

    reader.align_to_byte()
    frame_end = reader.byte_pos
    stored_crc16 = reader.read_bits(16)
    if crc16(data[start:frame_end]) != stored_crc16:
        raise DataError("FLAC frame CRC mismatch")
    return channels, bps


def read_flac(path: str | Path) -> tuple[np.ndarray, int]:
    """Decode a FLAC file to float32 in [-1, 1].

    Returns (samples, sample_rate); samples is [n] for mono, [n, channels]
    otherwise.
    """
    data = Path(path).read_bytes()
    info, pos = _read_header(data)
    reader = _BitReader(data, pos)
    per_channel: list[list[int]] = [[] for _ in range(info.channels)]
    total_bits = len(data) * 8
    while reader.pos + 16 <= total_bits:
        channels, _ = _decode_frame(data, reader, info)
        if len(channels) != info.channels:
            raise DataError("FLAC frame channel count disagrees with STREAMINFO")
        for buf, chan in zip(per_channel, channels):
            buf.extend(chan)
    if info.total_samples and len(per_channel[0]) < info.total_samples:
        raise DataError("FLAC stream ended before the declared sample count")
    if info.total_samples:
        per_channel = [c[:info.total_samples] for c in per_channel]

    scale = float(1 << (info.bits_per_sample - 1))
    arr = np.asarray(per_channel, dtype=np.float64).T / scale
    arr = arr.astype(np.float32)
    if info.channels == 1:
        arr = arr[:, 0]
    return arr, info.sample_rate
