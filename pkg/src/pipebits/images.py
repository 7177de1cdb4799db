"""Image samples: PGM and JSON ingestion plus a synthetic generator.

Only 8-bit grayscale is supported (P2/P5, maxval <= 255), which covers
the pipelines here; JSON arrays exist for tests and exact dumps.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class ImageSample:
    id: str
    pixels: tuple[tuple[int, ...], ...]

    @property
    def rows(self) -> int:
        return len(self.pixels)

    @property
    def cols(self) -> int:
        return len(self.pixels[0]) if self.pixels else 0

    def check_in_range(self, lo, hi) -> bool:
        return all(lo <= v <= hi for row in self.pixels for v in row)


def image_from_rows(ident: str, rows) -> ImageSample:
    pix = tuple(tuple(int(v) for v in row) for row in rows)
    if not pix or not pix[0]:
        raise ValueError("empty image %r" % ident)
    if any(len(r) != len(pix[0]) for r in pix):
        raise ValueError("ragged rows in image %r" % ident)
    return ImageSample(ident, pix)


def load_pgm(path) -> ImageSample:
    path = Path(path)
    data = path.read_bytes()
    if data[:2] not in (b"P2", b"P5"):
        raise ValueError("%s: not a PGM file" % path)
    binary = data[:2] == b"P5"
    # header tokens may be separated by whitespace and '#' comments
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        m = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\d+)").match(data, pos)
        if not m:
            raise ValueError("%s: truncated PGM header" % path)
        fields.append(int(m.group(1)))
        pos = m.end()
    cols, rows, maxval = fields
    if maxval > 255:
        raise ValueError("%s: only 8-bit PGM supported (maxval %d)" % (path, maxval))
    if binary:
        pos += 1  # single whitespace after maxval
        raster = data[pos:pos + rows * cols]
        if len(raster) < rows * cols:
            raise ValueError("%s: truncated raster" % path)
        vals = list(raster)
    else:
        vals = [int(t) for t in data[pos:].split()]
        if len(vals) < rows * cols:
            raise ValueError("%s: truncated raster" % path)
    it = iter(vals)
    pix = tuple(tuple(next(it) for _ in range(cols)) for _ in range(rows))
    return ImageSample(path.stem, pix)


def save_pgm(img: ImageSample, path) -> None:
    path = Path(path)
    header = "P5\n%d %d\n255\n" % (img.cols, img.rows)
    body = bytes(min(max(v, 0), 255) for row in img.pixels for v in row)
    path.write_bytes(header.encode("ascii") + body)


def load_json_image(path) -> ImageSample:
    path = Path(path)
    return image_from_rows(path.stem, json.loads(path.read_text()))


def load_image(path) -> ImageSample:
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return load_pgm(path)
    if path.suffix.lower() == ".json":
        return load_json_image(path)
    raise ValueError("unsupported image file %s" % path)


def shift_image(img: ImageSample, dj: int = 1) -> ImageSample:
    """Horizontal shift with edge replication; the default companion
    frame for two-input pipelines when only one image is supplied."""
    out = []
    for row in img.pixels:
        shifted = [row[min(max(j - dj, 0), len(row) - 1)] for j in range(len(row))]
        out.append(tuple(shifted))
    return ImageSample(img.id + "+shift%d" % dj, tuple(out))


def synthesize_images(count: int, rows: int, cols: int, seed: int,
                      feature: int = 8, style: str = "smooth") -> list[ImageSample]:
    """Reproducible textured images: two octaves of value noise.

    A coarse random lattice is bilinearly interpolated, then a half-
    amplitude octave at twice the frequency is mixed in. `feature` is
    the coarse lattice spacing in pixels. Style "blobs" thresholds the
    noise into high-contrast black/white regions whose junctions act as
    strong corners.
    """
    if style not in ("smooth", "blobs"):
        raise ValueError("unknown texture style %r" % style)
    rng = random.Random(seed)
    out = []
    for k in range(count):
        base = _value_noise(rng, rows, cols, feature)
        detail = _value_noise(rng, rows, cols, max(feature // 2, 2))
        pix = []
        for i in range(rows):
            row = []
            for j in range(cols):
                v = 0.7 * base[i][j] + 0.3 * detail[i][j]
                if style == "blobs":
                    row.append(255 if v >= 128 else 0)
                else:
                    row.append(min(255, max(0, int(round(v)))))
            pix.append(tuple(row))
        out.append(ImageSample("synthetic-%s-%d-%d" % (style, seed, k), tuple(pix)))
    return out


def _value_noise(rng: random.Random, rows: int, cols: int, spacing: int):
    gr = rows // spacing + 2
    gc = cols // spacing + 2
    lattice = [[rng.uniform(0, 255) for _ in range(gc)] for _ in range(gr)]
    img = []
    for i in range(rows):
        gi, fi = divmod(i, spacing)
        ti = fi / spacing
        row = []
        for j in range(cols):
            gj, fj = divmod(j, spacing)
            tj = fj / spacing
            v00 = lattice[gi][gj]
            v01 = lattice[gi][gj + 1]
            v10 = lattice[gi + 1][gj]
            v11 = lattice[gi + 1][gj + 1]
            top = v00 + (v01 - v00) * tj
            bot = v10 + (v11 - v10) * tj
            row.append(top + (bot - top) * ti)
        img.append(row)
    return img


def load_image_dir(dirpath) -> list[ImageSample]:
    dirpath = Path(dirpath)
    files = sorted(dirpath.glob("*.pgm")) + sorted(dirpath.glob("*.json"))
    if not files:
        raise ValueError("no .pgm or .json images under %s" % dirpath)
    return [load_image(f) for f in files]
