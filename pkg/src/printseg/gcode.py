"""G-code parsing and toolpath extraction.

Turns Marlin-flavour slicer output into a list of :class:`Command` objects,
then into a :class:`Toolpath` of planar extrusion segments grouped by layer.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import re
from dataclasses import dataclass, replace
from typing import IO, Iterable, Sequence

__all__ = [
    "CommandKind",
    "Command",
    "HintKind",
    "FeatureHint",
    "ExtrusionSegment",
    "Layer",
    "Toolpath",
    "SlicingConfig",
    "GCodeError",
    "GCodeParseError",
    "parse_gcode",
    "extract_toolpath",
    "split_layers",
    "load_toolpath",
    "write_toolpath",
    "read_toolpath",
    "Z_TOLERANCE",
    "MIN_WIDTH",
    "MAX_WIDTH",
]

Z_TOLERANCE = 0.01
MIN_WIDTH = 0.05
MAX_WIDTH = 2.0

TOOLPATH_SCHEMA = "printseg.toolpath"
TOOLPATH_VERSION = 1


class GCodeError(ValueError):
    """Raised when G-code cannot be turned into a valid toolpath."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class GCodeParseError(GCodeError):
    """Malformed G-code text."""


class CommandKind(enum.Enum):
    MOVE = "move"
    SET_POSITION = "set_position"
    HOME = "home"
    ABS_EXTRUDE = "abs_extrude"
    REL_EXTRUDE = "rel_extrude"
    COMMENT = "comment"
    OTHER = "other"


class HintKind(enum.Enum):
    WALL_OUTER = "WallOuter"
    WALL_INNER = "WallInner"
    INFILL = "Infill"
    SUPPORT = "Support"
    SKIN = "Skin"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class FeatureHint:
    value: HintKind = HintKind.UNKNOWN
    source_line: int = 0


UNKNOWN_HINT = FeatureHint()

# Path-type spellings, normalized to upper case with spaces/underscores as '-'.
# Cura and MatterControl (MatterSlice) share the ";TYPE:" tokens; PrusaSlicer
# and SuperSlicer spell theirs out.
_HINT_TABLE = {
    "WALL-OUTER": HintKind.WALL_OUTER,
    "WALL-INNER": HintKind.WALL_INNER,
    "FILL": HintKind.INFILL,
    "SKIN": HintKind.SKIN,
    "TOP-BOTTOM": HintKind.SKIN,
    "SUPPORT": HintKind.SUPPORT,
    "SUPPORT-INTERFACE": HintKind.SUPPORT,
    "SUPPORT-INFILL": HintKind.SUPPORT,
    "SUPPORT-ROOF": HintKind.SUPPORT,
    "SUPPORT-FLOOR": HintKind.SUPPORT,
    "EXTERNAL-PERIMETER": HintKind.WALL_OUTER,
    "OVERHANG-PERIMETER": HintKind.WALL_OUTER,
    "PERIMETER": HintKind.WALL_INNER,
    "INTERNAL-INFILL": HintKind.INFILL,
    "SOLID-INFILL": HintKind.SKIN,
    "TOP-SOLID-INFILL": HintKind.SKIN,
    "BRIDGE-INFILL": HintKind.SKIN,
    "GAP-FILL": HintKind.INFILL,
    "SUPPORT-MATERIAL": HintKind.SUPPORT,
    "SUPPORT-MATERIAL-INTERFACE": HintKind.SUPPORT,
}

_TYPE_RE = re.compile(r"^\s*TYPE\s*:\s*(.+?)\s*$", re.IGNORECASE)
_LAYER_RE = re.compile(r"^\s*LAYER\s*:\s*(-?\d+)\s*$", re.IGNORECASE)
_LAYER_CHANGE_RE = re.compile(r"^\s*LAYER_CHANGE\s*$", re.IGNORECASE)
_WORD_RE = re.compile(r"([A-Za-z])([^A-Za-z\s]*)")
_NUMBER_RE = re.compile(r"^[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?$")

_KIND_BY_CODE = {
    "G0": CommandKind.MOVE,
    "G1": CommandKind.MOVE,
    "G92": CommandKind.SET_POSITION,
    "G28": CommandKind.HOME,
    "M82": CommandKind.ABS_EXTRUDE,
    "M83": CommandKind.REL_EXTRUDE,
}


def lookup_hint(token: str) -> HintKind:
    key = re.sub(r"[\s_]+", "-", token.strip().upper())
    return _HINT_TABLE.get(key, HintKind.UNKNOWN)


@dataclass(frozen=True)
class Command:
    """One parsed source line.

    ``params`` maps axis letters to values for the commands the toolpath
    stage interprets; for :attr:`CommandKind.OTHER` it holds whatever
    numeric words could be read and is informational only.
    """

    kind: CommandKind
    params: dict[str, float]
    raw_line_no: int
    code: str = ""
    comment: str = ""
    hint: FeatureHint | None = None
    layer_marker: int | None = None


def _split_comment(line: str) -> tuple[str, str | None]:
    code, sep, comment = line.partition(";")
    if not sep:
        comment = None
    # parenthesized comments are legal G-code too
    code = re.sub(r"\([^)]*\)", " ", code)
    return code.strip(), comment


def _comment_command(comment: str, line_no: int) -> Command:
    hint = None
    marker = None
    m = _TYPE_RE.match(comment)
    if m:
        hint = FeatureHint(lookup_hint(m.group(1)), line_no)
    m = _LAYER_RE.match(comment)
    if m:
        marker = int(m.group(1))
    elif _LAYER_CHANGE_RE.match(comment):
        marker = -1
    return Command(CommandKind.COMMENT, {}, line_no, comment=comment.strip(), hint=hint, layer_marker=marker)


def _parse_line(code_part: str, comment: str | None, line_no: int) -> Command:
    words = _WORD_RE.findall(code_part)
    leftover = _WORD_RE.sub("", code_part).strip()
    if words and words[0][0].upper() == "N":
        words = words[1:]
    if not words:
        if leftover:
            raise GCodeParseError(f"cannot read {code_part!r}", line_no)
        return _comment_command(comment or "", line_no)

    letter, number = words[0]
    letter = letter.upper()
    # drop a trailing checksum ("*57")
    number = number.split("*", 1)[0]
    code = f"{letter}{int(number)}" if number.isdigit() else f"{letter}{number}"
    kind = _KIND_BY_CODE.get(code, CommandKind.OTHER)
    if code in ("G2", "G3"):
        raise GCodeError("arc moves (G2/G3) are not supported", line_no)

    params: dict[str, float] = {}
    strict = kind in (CommandKind.MOVE, CommandKind.SET_POSITION, CommandKind.HOME)
    if strict and leftover:
        raise GCodeParseError(f"unexpected text {leftover!r}", line_no)
    for axis, value in words[1:]:
        axis = axis.upper()
        value = value.split("*", 1)[0]
        if not value:
            if kind is CommandKind.HOME:
                params[axis] = 0.0
            elif strict:
                raise GCodeParseError(f"missing value for {axis}", line_no)
            continue
        if not _NUMBER_RE.match(value):
            if strict:
                raise GCodeParseError(f"malformed number {axis}{value}", line_no)
            continue
        params[axis] = float(value)
    return Command(kind, params, line_no, code=code, comment=(comment or "").strip())


def parse_gcode(text: str | Iterable[str]) -> list[Command]:
    """Parse G-code into one :class:`Command` per non-empty line.

    ``text`` may be a whole string or any iterable of lines (an open file).
    Line numbers are 1-based over the raw input, blank lines included.
    """
    lines = text.splitlines() if isinstance(text, str) else text
    commands = []
    for line_no, line in enumerate(lines, 1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        code_part, comment = _split_comment(line)
        if not code_part:
            commands.append(_comment_command(comment or "", line_no))
        else:
            commands.append(_parse_line(code_part, comment, line_no))
    return commands


@dataclass(frozen=True)
class SlicingConfig:
    filament_diameter: float = 1.75
    layer_height: float = 0.3
    line_width: float = 0.4

    @property
    def filament_area(self) -> float:
        return math.pi * (self.filament_diameter / 2.0) ** 2


@dataclass(frozen=True)
class ExtrusionSegment:
    start: tuple[float, float, float]
    end: tuple[float, float, float]
    width: float
    height: float
    hint: FeatureHint = UNKNOWN_HINT
    layer_index: int = -1
    # explicit layer number from the most recent layer comment, if any
    layer_tag: int | None = None

    @property
    def length(self) -> float:
        return math.dist(self.start, self.end)

    @property
    def z(self) -> float:
        return self.start[2]

    @property
    def volume(self) -> float:
        return self.width * self.height * self.length


@dataclass(frozen=True)
class Layer:
    z: float
    start: int
    stop: int

    def __len__(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class Toolpath:
    segments: tuple[ExtrusionSegment, ...] = ()
    layers: tuple[Layer, ...] = ()
    source_digest: str = ""

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    def layer_segments(self, index: int) -> tuple[ExtrusionSegment, ...]:
        layer = self.layers[index]
        return self.segments[layer.start:layer.stop]

    def bounds(self) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
        """Axis-aligned box of bead centerlines, (min corner, max corner)."""
        if not self.segments:
            raise ValueError("empty toolpath has no bounds")
        pts = [p for s in self.segments for p in (s.start, s.end)]
        lo = tuple(min(p[i] for p in pts) for i in range(3))
        hi = tuple(max(p[i] for p in pts) for i in range(3))
        return lo, hi

    @property
    def total_volume(self) -> float:
        return math.fsum(s.volume for s in self.segments)


def extract_toolpath(
    commands: Sequence[Command],
    defaults: SlicingConfig = SlicingConfig(),
    source_digest: str = "",
) -> Toolpath:
    """Run the extrusion state machine over ``commands`` and split into layers."""
    pos: list[float | None] = [None, None, None]
    e_pos = 0.0
    relative_e = False
    hint = UNKNOWN_HINT
    layer_tag: int | None = None
    tag_count = 0
    area = defaults.filament_area
    h = defaults.layer_height
    segments = []

    for cmd in commands:
        kind = cmd.kind
        if kind is CommandKind.COMMENT:
            if cmd.hint is not None:
                hint = cmd.hint
            if cmd.layer_marker is not None:
                # ";LAYER_CHANGE" carries no number, count them instead
                layer_tag = cmd.layer_marker if cmd.layer_marker >= 0 else tag_count
                tag_count += 1
        elif kind is CommandKind.OTHER and cmd.code == "G91":
            # relative XYZ would silently corrupt every later position
            raise GCodeError("relative positioning (G91) is not supported", cmd.raw_line_no)
        elif kind is CommandKind.ABS_EXTRUDE:
            relative_e = False
        elif kind is CommandKind.REL_EXTRUDE:
            relative_e = True
        elif kind is CommandKind.HOME:
            axes = [a for a in "XYZ" if a in cmd.params] or list("XYZ")
            for a in axes:
                pos["XYZ".index(a)] = 0.0
        elif kind is CommandKind.SET_POSITION:
            for i, a in enumerate("XYZ"):
                if a in cmd.params:
                    pos[i] = cmd.params[a]
            if "E" in cmd.params:
                e_pos = cmd.params["E"]
        elif kind is CommandKind.MOVE:
            p = cmd.params
            target = [p.get(a, pos[i]) for i, a in enumerate("XYZ")]
            de = 0.0
            if "E" in p:
                if relative_e:
                    de = p["E"]
                    e_pos += de
                else:
                    de = p["E"] - e_pos
                    e_pos = p["E"]
            if de > 0:
                if any(v is None for v in pos):
                    raise GCodeError("extruding move before the position is established", cmd.raw_line_no)
                start = tuple(pos)
                end = tuple(target)
                length = math.dist(start, end)
                if length > 0:
                    if abs(end[2] - start[2]) > 0:
                        raise GCodeError("non-planar extruding move (spiral/vase mode is unsupported)", cmd.raw_line_no)
                    if defaults.layer_height <= 0:
                        raise GCodeError("layer height must be positive", cmd.raw_line_no)
                    width = de * area / (length * h)
                    if width < 0:
                        raise GCodeError("negative computed width", cmd.raw_line_no)
                    width = min(max(width, MIN_WIDTH), MAX_WIDTH)
                    segments.append(ExtrusionSegment(start, end, width, h, hint, -1, layer_tag))
            pos = target

    return split_layers(segments, source_digest=source_digest)


def split_layers(segments: Sequence[ExtrusionSegment], source_digest: str = "") -> Toolpath:
    """Assign ``layer_index`` by grouping consecutive segments on z.

    Without layer comments a new layer starts whenever z rises by more than
    :data:`Z_TOLERANCE`. When segments carry explicit layer tags, a tag
    change also starts a new layer as long as z rose at all, so thin layers
    below the tolerance still separate.
    """
    out: list[ExtrusionSegment] = []
    layers: list[Layer] = []
    layer_z = None
    layer_tag = None
    start = 0
    for i, seg in enumerate(segments):
        z = seg.z
        if layer_z is None:
            layer_z, layer_tag = z, seg.layer_tag
        elif z < layer_z - Z_TOLERANCE:
            raise GCodeError(f"out-of-order layers: extrusion at z={z} after z={layer_z}")
        elif z > layer_z + Z_TOLERANCE or (
            seg.layer_tag is not None and seg.layer_tag != layer_tag and z > layer_z
        ):
            layers.append(Layer(layer_z, start, i))
            start = i
            layer_z, layer_tag = z, seg.layer_tag
        out.append(replace(seg, layer_index=len(layers)))
    if layer_z is not None:
        layers.append(Layer(layer_z, start, len(out)))
    return Toolpath(tuple(out), tuple(layers), source_digest)


def digest_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_toolpath(path, defaults: SlicingConfig = SlicingConfig()) -> Toolpath:
    """Read a G-code file and return its toolpath."""
    with open(path, encoding="utf-8") as f:
        text = f.read()
    return extract_toolpath(parse_gcode(text), defaults, digest_text(text))


# -- interchange -------------------------------------------------------------

def _segment_record(seg: ExtrusionSegment) -> dict:
    return {
        "layer": seg.layer_index,
        "sx": seg.start[0], "sy": seg.start[1], "sz": seg.start[2],
        "ex": seg.end[0], "ey": seg.end[1], "ez": seg.end[2],
        "width": seg.width,
        "height": seg.height,
        "hint": seg.hint.value.value,
        "hint_line": seg.hint.source_line,
        "tag": seg.layer_tag,
    }


def write_toolpath(toolpath: Toolpath, fp: IO[str], classes: Sequence | None = None) -> None:
    """Write the line-delimited interchange form.

    Line 1 is a header record naming the schema and version; each following
    line is one segment. When ``classes`` is given a ``class`` column is
    added (the classified-toolpath variant).
    """
    header = {
        "schema": TOOLPATH_SCHEMA,
        "version": TOOLPATH_VERSION,
        "source_digest": toolpath.source_digest,
        "segments": len(toolpath.segments),
        "layers": [layer.z for layer in toolpath.layers],
    }
    if classes is not None:
        header["classified"] = True
    fp.write(json.dumps(header) + "\n")
    for i, seg in enumerate(toolpath.segments):
        rec = _segment_record(seg)
        if classes is not None:
            rec["class"] = classes[i].name
        fp.write(json.dumps(rec) + "\n")


def read_toolpath(fp: IO[str]) -> tuple[Toolpath, list[str] | None]:
    """Inverse of :func:`write_toolpath`.

    Returns the toolpath and the raw class names (``None`` when the file
    carries no class column).
    """
    header = json.loads(fp.readline())
    if header.get("schema") != TOOLPATH_SCHEMA:
        raise GCodeError(f"not a toolpath file (schema {header.get('schema')!r})")
    if header.get("version") != TOOLPATH_VERSION:
        raise GCodeError(f"unsupported toolpath version {header.get('version')!r}")
    segments = []
    classes = [] if header.get("classified") else None
    for line in fp:
        if not line.strip():
            continue
        r = json.loads(line)
        segments.append(ExtrusionSegment(
            (r["sx"], r["sy"], r["sz"]),
            (r["ex"], r["ey"], r["ez"]),
            r["width"],
            r["height"],
            FeatureHint(HintKind(r["hint"]), r["hint_line"]),
            r["layer"],
            r["tag"],
        ))
        if classes is not None:
            classes.append(r["class"])
    if len(segments) != header["segments"]:
        raise GCodeError(f"truncated toolpath file: {len(segments)} of {header['segments']} segments")
    toolpath = split_layers(segments, header["source_digest"])
    return toolpath, classes
