"""Append-only frame recordings.

One ``<eye>.vrec`` file per eye holds length-prefixed frame messages; a
``<eye>.vidx`` sidecar lists ``frame_index offset`` per line so replay
can seek. A truncated final frame (crash mid-write) is ignored on read,
and a missing or stale index can always be rebuilt by scanning.
"""

from __future__ import annotations

import struct
from pathlib import Path

from .wire import WireError, peek_frame_index

_LEN = struct.Struct("<I")
RECORD_SUFFIX = ".vrec"
INDEX_SUFFIX = ".vidx"


class RecordingError(RuntimeError):
    pass


class RecordingWriter:
    """Writes per-eye streams under one directory."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._files: dict[str, object] = {}
        self._indices: dict[str, object] = {}
        self.frames_written = 0

    def append(self, eye_id: str, message: bytes) -> None:
        if eye_id not in self._files:
            rec = (self.directory / f"{eye_id}{RECORD_SUFFIX}").open("wb")
            idx = (self.directory / f"{eye_id}{INDEX_SUFFIX}").open("w")
            self._files[eye_id] = rec
            self._indices[eye_id] = idx
        rec = self._files[eye_id]
        idx = self._indices[eye_id]
        offset = rec.tell()
        frame_index = peek_frame_index(message)
        rec.write(_LEN.pack(len(message)))
        rec.write(message)
        idx.write(f"{frame_index} {offset}\n")
        self.frames_written += 1

    def flush(self) -> None:
        for fh in list(self._files.values()) + list(self._indices.values()):
            fh.flush()

    def close(self) -> None:
        for fh in list(self._files.values()) + list(self._indices.values()):
            fh.close()
        self._files.clear()
        self._indices.clear()

    def __enter__(self) -> "RecordingWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def iter_recording(path: str | Path):
    """Yield raw frame messages from one .vrec file, stopping silently at
    a truncated tail."""
    path = Path(path)
    if not path.exists():
        raise RecordingError(f"no recording at {path}")
    with path.open("rb") as fh:
        while True:
            head = fh.read(_LEN.size)
            if len(head) < _LEN.size:
                return
            (length,) = _LEN.unpack(head)
            body = fh.read(length)
            if len(body) < length:
                return  # partial trailing frame: drop it
            yield body


def build_index(rec_path: str | Path) -> list[tuple[int, int]]:
    """Scan a .vrec and produce its (frame_index, offset) table."""
    rec_path = Path(rec_path)
    entries = []
    offset = 0
    for message in iter_recording(rec_path):
        try:
            entries.append((peek_frame_index(message), offset))
        except WireError as exc:
            raise RecordingError(f"{rec_path}: unreadable frame at {offset}: {exc}") from exc
        offset += _LEN.size + len(message)
    return entries


def write_index(rec_path: str | Path, entries: list[tuple[int, int]]) -> Path:
    idx_path = Path(rec_path).with_suffix(INDEX_SUFFIX)
    idx_path.write_text("".join(f"{fi} {off}\n" for fi, off in entries))
    return idx_path


def load_index(rec_path: str | Path) -> list[tuple[int, int]]:
    """Load the sidecar index, rebuilding it from the stream when missing
    or unreadable."""
    idx_path = Path(rec_path).with_suffix(INDEX_SUFFIX)
    if idx_path.exists():
        entries = []
        ok = True
        for line in idx_path.read_text().splitlines():
            parts = line.split()
            if len(parts) != 2 or not all(p.isdigit() for p in parts):
                ok = False
                break
            entries.append((int(parts[0]), int(parts[1])))
        if ok:
            return entries
    entries = build_index(rec_path)
    write_index(rec_path, entries)
    return entries


def recorded_eyes(directory: str | Path) -> list[str]:
    directory = Path(directory)
    if not directory.is_dir():
        raise RecordingError(f"{directory} is not a recording directory")
    return sorted(p.stem for p in directory.glob(f"*{RECORD_SUFFIX}"))


def load_latest_set(directory: str | Path, eyes: list[str] | None = None):
    """Decode the newest frame index present for every eye of a recording.

    Returns (eye ids, depth rasters, intrinsics) in the order of ``eyes``
    when given, else in sorted recorded order. Undecodable messages are
    skipped; an empty intersection of indices is an error.
    """
    from .codec import DecodeError, decode_depth
    from .wire import decode_frame_message

    recorded = recorded_eyes(directory)
    if eyes is None:
        eyes = recorded
    missing = sorted(set(eyes) - set(recorded))
    if missing:
        raise RecordingError(f"recording at {directory} has no stream for {missing}")
    if not eyes:
        raise RecordingError(f"recording at {directory} is empty")

    per_eye = {}
    for eye in eyes:
        messages = {}
        for raw in iter_recording(Path(directory) / f"{eye}{RECORD_SUFFIX}"):
            try:
                message = decode_frame_message(raw)
            except (WireError, DecodeError):
                continue
            messages[message.frame_index] = message
        per_eye[eye] = messages
    common = set.intersection(*(set(m) for m in per_eye.values()))
    if not common:
        raise RecordingError("recording has no frame index common to all eyes")
    index = max(common)
    try:
        depths = [decode_depth(per_eye[eye][index].depth_payload) for eye in eyes]
    except DecodeError as exc:
        raise RecordingError(f"recorded depth payload is corrupt: {exc}") from exc
    intrinsics = [per_eye[eye][index].intrinsics for eye in eyes]
    return list(eyes), depths, intrinsics
