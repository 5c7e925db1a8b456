"""Musical knowledge: Standard MIDI Files, a JSON score format, unit timelines."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

UNITS = ("silence", "piano", "mixture", "bass")
INSTRUMENTS = ("piano", "bass")
DEFAULT_TEMPO = 500000  # microseconds per quarter note


class ScoreError(ValueError):
    """Malformed score input. ``offset`` is a byte offset (SMF) or None."""

    def __init__(self, message: str, offset=None, path=None):
        where = ""
        if offset is not None:
            where = f" (at byte {offset})"
        elif path is not None:
            where = f" (at {path})"
        super().__init__(message + where)
        self.offset = offset
        self.path = path


@dataclass(frozen=True, order=True)
class Note:
    onset: int
    offset: int
    pitch: int
    velocity: int = 64


@dataclass
class Score:
    tracks: dict
    ticks_per_quarter: int = 480
    tempo_map: list = field(default_factory=lambda: [(0, DEFAULT_TEMPO)])

    def __post_init__(self):
        if self.ticks_per_quarter <= 0:
            raise ScoreError(f"ticks_per_quarter must be positive, got {self.ticks_per_quarter}")
        tm = sorted((int(t), int(u)) for t, u in self.tempo_map) or [(0, DEFAULT_TEMPO)]
        if tm[0][0] != 0:
            tm.insert(0, (0, DEFAULT_TEMPO))
        self.tempo_map = tm
        for name, notes in self.tracks.items():
            for n in notes:
                if n.offset <= n.onset:
                    raise ScoreError(f"note in track {name!r} has offset {n.offset} <= onset {n.onset}")

    def tick_to_seconds(self, ticks) -> np.ndarray:
        ticks = np.asarray(ticks, dtype=np.float64)
        out = np.zeros_like(ticks)
        elapsed = 0.0
        for i, (tick, tempo) in enumerate(self.tempo_map):
            nxt = self.tempo_map[i + 1][0] if i + 1 < len(self.tempo_map) else np.inf
            sec_per_tick = tempo / 1e6 / self.ticks_per_quarter
            inside = (ticks >= tick) & (ticks < nxt)
            out = np.where(inside, elapsed + (ticks - tick) * sec_per_tick, out)
            if np.isfinite(nxt):
                elapsed += (nxt - tick) * sec_per_tick
        return out

    def note_times(self, track: str) -> np.ndarray:
        """``(n, 2)`` array of note on/off times in seconds."""
        notes = self.tracks[track]
        if not notes:
            return np.zeros((0, 2))
        ticks = np.array([(n.onset, n.offset) for n in notes], dtype=np.float64)
        return self.tick_to_seconds(ticks)


@dataclass
class UnitTimeline:
    """Contiguous, maximally merged ``(unit, start_frame, end_frame)`` runs."""

    segments: list
    frame_shift_ms: float = 10.0

    def __post_init__(self):
        self.segments = [(str(u), int(s), int(e)) for u, s, e in self.segments]
        for i, (u, s, e) in enumerate(self.segments):
            if e <= s:
                raise ValueError(f"segment {i} ({u}, {s}, {e}) is empty")
            if i and self.segments[i - 1][2] != s:
                raise ValueError(f"segment {i} starts at {s}, previous ends at {self.segments[i - 1][2]}")
            if i and self.segments[i - 1][0] == u:
                raise ValueError(f"adjacent segments {i - 1} and {i} share unit {u!r}")

    @classmethod
    def from_labels(cls, labels, frame_shift_ms: float = 10.0) -> "UnitTimeline":
        segs = []
        start = 0
        for i in range(1, len(labels) + 1):
            if i == len(labels) or labels[i] != labels[start]:
                segs.append((labels[start], start, i))
                start = i
        return cls(segs, frame_shift_ms)

    @property
    def total_frames(self) -> int:
        return self.segments[-1][2] if self.segments else 0

    @property
    def units(self) -> list:
        return [u for u, _, _ in self.segments]

    @property
    def boundaries(self) -> list:
        return [s for _, s, _ in self.segments[1:]]

    def labels(self) -> list:
        out = []
        for u, s, e in self.segments:
            out.extend([u] * (e - s))
        return out

    def crop(self, total_frames: int) -> "UnitTimeline":
        labels = self.labels()[:total_frames]
        if len(labels) < total_frames:
            labels += [labels[-1] if labels else "silence"] * (total_frames - len(labels))
        return UnitTimeline.from_labels(labels, self.frame_shift_ms)

    def to_list(self) -> list:
        return [[u, s, e] for u, s, e in self.segments]

    @classmethod
    def from_list(cls, data, frame_shift_ms: float = 10.0) -> "UnitTimeline":
        return cls([tuple(x) for x in data], frame_shift_ms)


def frame_activity(times: np.ndarray, total_frames: int, frame_shift_ms: float = 10.0) -> np.ndarray:
    """Frame i is active iff some interval in ``times`` contains its center ``(i + 0.5) * shift``."""
    active = np.zeros(total_frames, dtype=bool)
    if len(times) == 0:
        return active
    shift = frame_shift_ms / 1000.0
    # first frame whose center >= t is ceil(t / shift - 0.5)
    first = np.ceil(times[:, 0] / shift - 0.5 - 1e-9).astype(np.int64)
    stop = np.ceil(times[:, 1] / shift - 0.5 - 1e-9).astype(np.int64)
    diff = np.zeros(total_frames + 1, dtype=np.int64)
    first = np.clip(first, 0, total_frames)
    stop = np.clip(stop, 0, total_frames)
    np.add.at(diff, first, 1)
    np.add.at(diff, stop, -1)
    return np.cumsum(diff[:-1]) > 0


def timeline_from_score(s: Score, instrument_map: dict, total_frames: int,
                        frame_shift_ms: float = 10.0) -> UnitTimeline:
    """Label every frame silence/piano/bass/mixture from the mapped tracks.

    ``instrument_map`` maps track name to ``"piano"`` or ``"bass"``.
    """
    if total_frames < 1:
        raise ValueError(f"total_frames must be >= 1, got {total_frames}")
    missing = [t for t in instrument_map if t not in s.tracks]
    if missing:
        raise ScoreError(f"tracks {missing} not in score; available tracks: {sorted(s.tracks)}")
    active = {inst: np.zeros(total_frames, dtype=bool) for inst in INSTRUMENTS}
    for track, inst in instrument_map.items():
        if inst not in INSTRUMENTS:
            raise ScoreError(f"track {track!r} mapped to unknown instrument {inst!r}")
        active[inst] |= frame_activity(s.note_times(track), total_frames, frame_shift_ms)
    code = active["piano"].astype(int) + 2 * active["bass"].astype(int)
    names = np.array(["silence", "piano", "bass", "mixture"])
    return UnitTimeline.from_labels(list(names[code]), frame_shift_ms)


# -- Standard MIDI File -------------------------------------------------------

def _read_vlq(data: bytes, pos: int, end: int):
    value = 0
    for i in range(4):
        if pos >= end:
            raise ScoreError("truncated variable-length quantity", pos)
        b = data[pos]
        pos += 1
        value = (value << 7) | (b & 0x7F)
        if not b & 0x80:
            return value, pos
    raise ScoreError("variable-length quantity longer than 4 bytes", pos - 4)


def _parse_track(data: bytes, start: int, end: int):
    """Return (name, notes, tempo events) for one MTrk body."""
    pos = start
    tick = 0
    status = None
    name = None
    open_notes: dict = {}
    notes = []
    tempos = []
    while pos < end:
        delta, pos = _read_vlq(data, pos, end)
        tick += delta
        if pos >= end:
            raise ScoreError("truncated event", pos)
        b = data[pos]
        if b == 0xFF:
            if pos + 2 > end:
                raise ScoreError("truncated meta event", pos)
            mtype = data[pos + 1]
            length, body = _read_vlq(data, pos + 2, end)
            if body + length > end:
                raise ScoreError(f"meta event 0x{mtype:02X} overruns track", pos)
            payload = data[body:body + length]
            if mtype == 0x2F:
                pos = body + length
                break
            if mtype == 0x51:
                if length != 3:
                    raise ScoreError(f"set-tempo meta event has length {length}, expected 3", pos)
                tempos.append((tick, int.from_bytes(payload, "big")))
            elif mtype == 0x03 and name is None:
                name = payload.decode("latin-1")
            pos = body + length
            status = None
            continue
        if b in (0xF0, 0xF7):
            length, body = _read_vlq(data, pos + 1, end)
            if body + length > end:
                raise ScoreError("sysex event overruns track", pos)
            pos = body + length
            status = None
            continue
        if b & 0x80:
            status = b
            pos += 1
        elif status is None:
            raise ScoreError(f"data byte 0x{b:02X} without running status", pos)
        kind = status & 0xF0
        if kind == 0xF0:
            raise ScoreError(f"unsupported system message 0x{status:02X}", pos - 1)
        n_data = 1 if kind in (0xC0, 0xD0) else 2
        if pos + n_data > end:
            raise ScoreError("truncated channel event", pos)
        args = data[pos:pos + n_data]
        pos += n_data
        if kind == 0x90 and args[1] > 0:
            open_notes.setdefault((status & 0x0F, args[0]), []).append((tick, args[1]))
        elif kind == 0x80 or (kind == 0x90 and args[1] == 0):
            stack = open_notes.get((status & 0x0F, args[0]))
            if stack:
                on_tick, vel = stack.pop(0)
                if tick > on_tick:
                    notes.append(Note(on_tick, tick, args[0], vel))
            # unmatched note-off is ignored
    return name, sorted(notes), tempos


def parse_smf(data: bytes) -> Score:
    """Parse a format 0/1 Standard MIDI File with metrical division.

    Tracks are keyed by their track-name meta event, falling back to
    ``track<i>``; unnamed tracks without notes (conductor tracks) are
    dropped. Notes still sounding at end-of-track are discarded.
    """
    if len(data) < 14:
        raise ScoreError(f"file too short for a header chunk ({len(data)} bytes)", 0)
    if data[0:4] != b"MThd":
        raise ScoreError(f"bad magic {data[0:4]!r}, expected b'MThd'", 0)
    hlen = struct.unpack_from(">I", data, 4)[0]
    if hlen < 6 or 8 + hlen > len(data):
        raise ScoreError(f"bad header length {hlen}", 4)
    fmt, ntrks, division = struct.unpack_from(">HHH", data, 8)
    if fmt not in (0, 1):
        raise ScoreError(f"unsupported SMF format {fmt}", 8)
    if division & 0x8000:
        raise ScoreError("SMPTE time division is not supported", 12)
    if division == 0:
        raise ScoreError("zero ticks per quarter note", 12)
    pos = 8 + hlen
    tracks = {}
    tempos = []
    for i in range(ntrks):
        if pos + 8 > len(data):
            raise ScoreError(f"truncated chunk header for track {i}", pos)
        cid = data[pos:pos + 4]
        length = struct.unpack_from(">I", data, pos + 4)[0]
        if pos + 8 + length > len(data):
            raise ScoreError(f"chunk {cid!r} declares {length} bytes past end of file", pos)
        if cid != b"MTrk":
            pos += 8 + length  # alien chunk, skip by declared length
            continue
        name, notes, t = _parse_track(data, pos + 8, pos + 8 + length)
        tempos.extend(t)
        pos += 8 + length
        if not name and not notes:
            continue  # conductor track
        key = name if name and name not in tracks else f"track{i}"
        tracks[key] = notes
    tempo_map = {}
    for tick, tempo in tempos:
        tempo_map[tick] = tempo
    return Score(tracks, division, sorted(tempo_map.items()) or [(0, DEFAULT_TEMPO)])


def _vlq(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def _chunk(cid: bytes, body: bytes) -> bytes:
    return cid + struct.pack(">I", len(body)) + body


def write_smf(s: Score, channel_of=None) -> bytes:
    """Serialize as format 1: a tempo track followed by one named track per entry.

    Note-offs are written as note-on velocity 0 under running status.
    """
    body = bytearray()
    prev = 0
    for tick, tempo in s.tempo_map:
        body += _vlq(tick - prev) + b"\xFF\x51\x03" + tempo.to_bytes(3, "big")
        prev = tick
    body += b"\x00\xFF\x2F\x00"
    chunks = [_chunk(b"MTrk", bytes(body))]
    for i, (name, notes) in enumerate(s.tracks.items()):
        ch = (channel_of or {}).get(name, i % 16)
        events = []
        for n in notes:
            events.append((n.offset, 0, n.pitch, 0))
            events.append((n.onset, 1, n.pitch, n.velocity))
        events.sort()
        body = bytearray()
        raw = name.encode("latin-1")
        body += b"\x00\xFF\x03" + _vlq(len(raw)) + raw
        prev = 0
        status = None
        for tick, _, pitch, vel in events:
            body += _vlq(tick - prev)
            prev = tick
            if status != 0x90 | ch:
                status = 0x90 | ch
                body.append(status)
            body += bytes([pitch, vel])
        body += b"\x00\xFF\x2F\x00"
        chunks.append(_chunk(b"MTrk", bytes(body)))
    header = _chunk(b"MThd", struct.pack(">HHH", 1, len(chunks), s.ticks_per_quarter))
    return header + b"".join(chunks)


# -- JSON score ---------------------------------------------------------------

def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def parse_score_json(text: str) -> Score:
    """Parse ``{"tpq": int, "tempo": [[tick, us], ...], "tracks": {name: [[on, off, pitch, vel], ...]}}``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScoreError(f"invalid JSON: {exc.msg}", path=f"line {exc.lineno} column {exc.colno}") from exc
    if not isinstance(doc, dict):
        raise ScoreError("score document must be an object", path="$")
    tpq = doc.get("tpq")
    if not _is_int(tpq) or tpq <= 0:
        raise ScoreError(f"tpq must be a positive integer, got {tpq!r}", path="$.tpq")
    tempo = doc.get("tempo", [[0, DEFAULT_TEMPO]])
    if not isinstance(tempo, list):
        raise ScoreError("tempo must be a list", path="$.tempo")
    tempo_map = []
    for i, entry in enumerate(tempo):
        if (not isinstance(entry, list) or len(entry) != 2
                or not all(_is_int(v) for v in entry) or entry[0] < 0 or entry[1] <= 0):
            raise ScoreError(f"tempo entry must be [tick >= 0, us_per_quarter > 0], got {entry!r}",
                             path=f"$.tempo[{i}]")
        tempo_map.append(tuple(entry))
    tracks_doc = doc.get("tracks")
    if not isinstance(tracks_doc, dict):
        raise ScoreError("tracks must be an object", path="$.tracks")
    tracks = {}
    for name, notes in tracks_doc.items():
        if not isinstance(notes, list):
            raise ScoreError("track must be a list of notes", path=f"$.tracks.{name}")
        parsed = []
        for j, n in enumerate(notes):
            p = f"$.tracks.{name}[{j}]"
            if not isinstance(n, list) or len(n) != 4 or not all(_is_int(v) for v in n):
                raise ScoreError(f"note must be [on_tick, off_tick, pitch, velocity] integers, got {n!r}", path=p)
            on, off, pitch, vel = n
            if on < 0:
                raise ScoreError(f"negative onset {on}", path=p + "[0]")
            if off <= on:
                raise ScoreError(f"note duration must be positive (on={on}, off={off})", path=p + "[1]")
            if not 0 <= pitch <= 127:
                raise ScoreError(f"pitch {pitch} outside 0..127", path=p + "[2]")
            if not 1 <= vel <= 127:
                raise ScoreError(f"velocity {vel} outside 1..127", path=p + "[3]")
            parsed.append(Note(on, off, pitch, vel))
        tracks[name] = sorted(parsed)
    return Score(tracks, tpq, tempo_map or [(0, DEFAULT_TEMPO)])


def score_to_json(s: Score) -> str:
    return json.dumps({
        "tpq": s.ticks_per_quarter,
        "tempo": [list(t) for t in s.tempo_map],
        "tracks": {name: [[n.onset, n.offset, n.pitch, n.velocity] for n in notes]
                   for name, notes in s.tracks.items()},
    }, sort_keys=True)
