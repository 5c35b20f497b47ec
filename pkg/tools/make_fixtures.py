"""Regenerate the bundled fixture G-code files in src/printseg/data/.

The files imitate MatterControl/Cura output: ";LAYER:n" and ";TYPE:..."
comments, absolute extrusion for the cube, relative extrusion for the
overhang model.
"""

import math
from pathlib import Path

LAYER = 0.3
WIDTH = 0.4
FILAMENT = 1.75
AREA = math.pi * (FILAMENT / 2) ** 2
OUT = Path(__file__).resolve().parents[1] / "src" / "printseg" / "data"


class Writer:
    def __init__(self, relative):
        self.lines = []
        self.e = 0.0
        self.relative = relative
        self.x = self.y = None

    def emit(self, s):
        self.lines.append(s)

    def travel(self, x, y, z=None):
        zs = f" Z{z:.3f}" if z is not None else ""
        self.emit(f"G0 F9000 X{x:.3f} Y{y:.3f}{zs}")
        self.x, self.y = x, y

    def extrude(self, x, y, width=WIDTH):
        length = math.hypot(x - self.x, y - self.y)
        de = round(width * LAYER * length / AREA, 5)
        if self.relative:
            self.emit(f"G1 X{x:.3f} Y{y:.3f} E{de:.5f}")
        else:
            self.e = round(self.e + de, 5)
            self.emit(f"G1 X{x:.3f} Y{y:.3f} E{self.e:.5f}")
        self.x, self.y = x, y

    def loop(self, x0, y0, x1, y1):
        self.travel(x0, y0)
        for x, y in ((x1, y0), (x1, y1), (x0, y1), (x0, y0)):
            self.extrude(x, y)

    def perimeters(self, x0, y0, x1, y1, count=4):
        for i in range(count):
            inset = WIDTH / 2 + i * WIDTH
            self.emit(";TYPE:WALL-OUTER" if i == 0 else ";TYPE:WALL-INNER")
            self.loop(x0 + inset, y0 + inset, x1 - inset, y1 - inset)

    def grid(self, x0, y0, x1, y1, spacing, direction, kind="FILL"):
        """Straight fill lines inside a rectangle, alternating in x or y."""
        self.emit(f";TYPE:{kind}")
        if direction == 0:
            n = int((x1 - x0) / spacing)
            for i in range(n + 1):
                x = x0 + i * spacing
                a, b = (y0, y1) if i % 2 == 0 else (y1, y0)
                self.travel(x, a)
                self.extrude(x, b, 0.45)
        else:
            n = int((y1 - y0) / spacing)
            for i in range(n + 1):
                y = y0 + i * spacing
                a, b = (x0, x1) if i % 2 == 0 else (x1, x0)
                self.travel(a, y)
                self.extrude(b, y, 0.45)


def header(w, name, layers, relative):
    w.emit(f"; generated fixture: {name}")
    w.emit(f"; layerThickness = {LAYER}")
    w.emit(f"; LAYER_COUNT: {layers}")
    w.emit("M104 S210")
    w.emit("M190 S60")
    w.emit("G28 ; home all axes")
    w.emit("G21")
    w.emit("G90")
    w.emit("M83" if relative else "M82")
    w.emit("G92 E0")


def footer(w):
    w.emit("M107")
    w.emit("G0 Z20")
    w.emit("M104 S0")
    w.emit("M84")


def calibration_cube():
    """20 x 20 x 3 mm block: 10 layers, 4 perimeters, 30% grid infill."""
    w = Writer(relative=False)
    header(w, "calibration cube 20x20x3", 10, False)
    x0, y0, x1, y1 = 90.0, 90.0, 110.0, 110.0
    inner = 4 * WIDTH
    spacing = 0.45 / 0.30 * 2  # two crossing directions at 30% density
    for k in range(10):
        z = round(LAYER * (k + 1), 3)
        w.emit(f";LAYER:{k}")
        w.travel(x0 + WIDTH / 2, y0 + WIDTH / 2, z)
        w.perimeters(x0, y0, x1, y1)
        w.grid(x0 + inner, y0 + inner, x1 - inner, y1 - inner, spacing, k % 2)
        # retract then prime, both zero-length
        e = round(w.e - 0.8, 5)
        w.emit(f"G1 E{e:.5f} F2400")
        w.emit(f"G1 E{w.e:.5f} F2400")
    footer(w)
    return "\n".join(w.lines) + "\n"


def overhang_model():
    """A 8 x 8 mm post carrying a 20 x 20 mm plate, with support underneath."""
    w = Writer(relative=True)
    header(w, "post with overhanging plate", 16, True)
    px0, py0, px1, py1 = 96.0, 96.0, 104.0, 104.0
    ox0, oy0, ox1, oy1 = 90.0, 90.0, 110.0, 110.0
    for k in range(16):
        z = round(LAYER * (k + 1), 3)
        w.emit(f";LAYER:{k}")
        w.travel(px0 + WIDTH / 2, py0 + WIDTH / 2, z)
        if k < 12:
            w.perimeters(px0, py0, px1, py1, count=2)
            w.grid(px0 + 0.8, py0 + 0.8, px1 - 0.8, py1 - 0.8, 3.0, k % 2)
            # support band on two sides of the post
            w.grid(ox0 + 0.5, oy0 + 0.5, px0 - 1.0, oy1 - 0.5, 2.0, 1, kind="SUPPORT")
            w.grid(px1 + 1.0, oy0 + 0.5, ox1 - 0.5, oy1 - 0.5, 2.0, 1, kind="SUPPORT")
        else:
            w.perimeters(ox0, oy0, ox1, oy1, count=3)
            w.grid(ox0 + 1.2, oy0 + 1.2, ox1 - 1.2, oy1 - 1.2, 3.0, k % 2)
    footer(w)
    return "\n".join(w.lines) + "\n"


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "calibration_cube.gcode").write_text(calibration_cube())
    (OUT / "overhang_post.gcode").write_text(overhang_model())
