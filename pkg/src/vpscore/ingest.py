"""Canonical route-archive format, RIB reconstruction and update replay.

One record per line::

    timestamp|vp_id|A or W|prefix|as path (space separated)|communities (space separated)

RIB snapshot files use the same record layout (kind always ``A``) after a
``#RIB vp_id timestamp`` header line.
"""

from __future__ import annotations

import gzip
import io
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator

logger = logging.getLogger(__name__)

ANNOUNCE = "A"
WITHDRAW = "W"


class ParseError(ValueError):
    """Malformed archive record."""

    def __init__(self, message, lineno=None, field_name=None):
        self.lineno = lineno
        self.field_name = field_name
        where = f"line {lineno}: " if lineno is not None else ""
        what = f"field '{field_name}': " if field_name else ""
        super().__init__(f"{where}{what}{message}")


class StreamOrderError(ValueError):
    """Update stream is not sorted by timestamp."""


@dataclass(frozen=True)
class BgpUpdate:
    timestamp: int
    vp_id: str
    kind: str
    prefix: str
    as_path: tuple = ()
    communities: frozenset = frozenset()

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError("timestamp must be >= 0")
        if self.kind not in (ANNOUNCE, WITHDRAW):
            raise ValueError(f"unknown update kind {self.kind!r}")
        if self.kind == ANNOUNCE and not self.as_path:
            raise ValueError("announce with empty path")

    @property
    def is_withdraw(self) -> bool:
        return self.kind == WITHDRAW

    def to_line(self) -> str:
        return format_update(self)


@dataclass(frozen=True)
class Route:
    as_path: tuple
    communities: frozenset
    last_update_time: int


@dataclass
class RibTable:
    vp_id: str
    as_of: int
    routes: dict = field(default_factory=dict)

    def copy(self) -> "RibTable":
        return RibTable(self.vp_id, self.as_of, dict(self.routes))

    def path(self, prefix):
        route = self.routes.get(prefix)
        return route.as_path if route else None

    def apply(self, update: BgpUpdate) -> Route | None:
        """Install ``update`` and return the route it displaced (if any)."""
        old = self.routes.get(update.prefix)
        if update.is_withdraw:
            if old is None:
                logger.debug("withdraw of absent prefix %s on %s", update.prefix, self.vp_id)
            else:
                del self.routes[update.prefix]
        else:
            self.routes[update.prefix] = Route(update.as_path, update.communities, update.timestamp)
        self.as_of = max(self.as_of, update.timestamp)
        return old

    def __len__(self):
        return len(self.routes)


def _parse_int(text, lineno, name):
    try:
        value = int(text)
    except ValueError:
        raise ParseError(f"not an integer: {text!r}", lineno, name) from None
    if value < 0:
        raise ParseError(f"negative value: {text!r}", lineno, name)
    return value


def parse_update_line(line: str, lineno: int | None = None) -> BgpUpdate:
    fields = line.rstrip("\r\n").split("|")
    if len(fields) != 6:
        raise ParseError(f"expected 6 fields, got {len(fields)}", lineno, "record")
    ts, vp_id, kind, prefix, path_text, comm_text = fields
    timestamp = _parse_int(ts, lineno, "timestamp")
    if not vp_id:
        raise ParseError("empty vp_id", lineno, "vp_id")
    if kind not in (ANNOUNCE, WITHDRAW):
        raise ParseError(f"kind must be A or W, got {kind!r}", lineno, "kind")
    if not prefix:
        raise ParseError("empty prefix", lineno, "prefix")
    as_path = tuple(_parse_int(tok, lineno, "as_path") for tok in path_text.split())
    if kind == ANNOUNCE and not as_path:
        raise ParseError("announce with empty path", lineno, "as_path")
    communities = frozenset(comm_text.split())
    return BgpUpdate(timestamp, vp_id, kind, prefix, as_path, communities)


def format_update(update: BgpUpdate) -> str:
    return "|".join((
        str(update.timestamp),
        update.vp_id,
        update.kind,
        update.prefix,
        " ".join(map(str, update.as_path)),
        " ".join(sorted(update.communities)),
    ))


def _open_text(path) -> io.TextIOBase:
    path = os.fspath(path)
    if path.endswith(".gz"):
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def iter_updates(lines: Iterable[str]) -> Iterator[BgpUpdate]:
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        yield parse_update_line(line, lineno)


def read_updates(path) -> list[BgpUpdate]:
    with _open_text(path) as fh:
        return list(iter_updates(fh))


def write_updates(updates: Iterable[BgpUpdate], fh) -> None:
    for u in updates:
        fh.write(format_update(u))
        fh.write("\n")


def read_rib(path) -> RibTable:
    with _open_text(path) as fh:
        return parse_rib(fh)


def parse_rib(lines: Iterable[str]) -> RibTable:
    rib = None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if line.startswith("#RIB"):
            parts = line.split()
            if len(parts) != 3:
                raise ParseError("header must be '#RIB vp_id timestamp'", lineno, "header")
            rib = RibTable(parts[1], _parse_int(parts[2], lineno, "timestamp"))
            continue
        if line.startswith("#"):
            continue
        if rib is None:
            raise ParseError("record before #RIB header", lineno, "header")
        u = parse_update_line(line, lineno)
        if u.kind != ANNOUNCE:
            raise ParseError("RIB records must be announcements", lineno, "kind")
        if u.vp_id != rib.vp_id:
            raise ParseError(f"vp_id {u.vp_id!r} differs from header {rib.vp_id!r}", lineno, "vp_id")
        rib.routes[u.prefix] = Route(u.as_path, u.communities, u.timestamp)
    if rib is None:
        raise ParseError("missing #RIB header", None, "header")
    return rib


def format_rib(rib: RibTable) -> str:
    out = [f"#RIB {rib.vp_id} {rib.as_of}"]
    for prefix in sorted(rib.routes):
        r = rib.routes[prefix]
        out.append(format_update(BgpUpdate(r.last_update_time, rib.vp_id, ANNOUNCE, prefix,
                                           r.as_path, r.communities)))
    return "\n".join(out) + "\n"


def check_sorted(updates) -> None:
    last = None
    for i, u in enumerate(updates):
        if last is not None and u.timestamp < last:
            raise StreamOrderError(f"update {i} at t={u.timestamp} precedes t={last}")
        last = u.timestamp


def rib_at(vp_id: str, t: int, snapshot: RibTable | None, updates: Iterable[BgpUpdate]) -> RibTable:
    """Reconstruct ``vp_id``'s RIB at time ``t``.

    Starts from ``snapshot`` (or an empty table) and applies, in stream order,
    every update of ``vp_id`` whose timestamp lies in ``(snapshot.as_of, t]``.
    """
    if snapshot is None:
        rib = RibTable(vp_id, 0)
    else:
        if snapshot.as_of > t:
            raise ValueError(f"snapshot taken at {snapshot.as_of} is after t={t}")
        rib = snapshot.copy()
    start = rib.as_of if snapshot is not None else -1
    last = None
    for u in updates:
        if last is not None and u.timestamp < last:
            raise StreamOrderError(f"stream not sorted at t={u.timestamp}")
        last = u.timestamp
        if u.timestamp > t:
            break
        if u.vp_id != vp_id or u.timestamp <= start:
            continue
        rib.apply(u)
    rib.as_of = t
    return rib


def split_by_vp(updates: Iterable[BgpUpdate]) -> dict[str, list[BgpUpdate]]:
    out: dict[str, list[BgpUpdate]] = {}
    for u in updates:
        out.setdefault(u.vp_id, []).append(u)
    return out


def merge_streams(streams: Iterable[Iterable[BgpUpdate]]) -> list[BgpUpdate]:
    """Merge per-VP streams into one; stable on equal timestamps."""
    merged = [u for s in streams for u in s]
    merged.sort(key=lambda u: u.timestamp)
    return merged
