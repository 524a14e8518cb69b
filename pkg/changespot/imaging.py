"""
Grayscale image container, rectangle geometry and grid-cell partitioning.

Every other module works in pixel units with the origin at the top-left
corner; x grows to the right and y grows downwards.
"""

import logging
import math

import numpy as np
from PIL import Image as PILImage

from changespot.const import DEFAULT_CELL_SIZE
from changespot.errors import (
    UNREADABLE_IMAGE,
    EMPTY_IMAGE,
    BAD_CELL_SIZE,
    INVALID_RECT,
    INVALID_ARGUMENT,
)
from changespot.object_implem import Object
from changespot.utils import ChangeSpotException, floatMaxString

logger = logging.getLogger(__name__)

_COLOR_MODES = ("1", "P", "LA", "RGB", "RGBA", "CMYK", "YCbCr", "PA", "RGBX")


class Image(Object):
    """Immutable 8-bit grayscale raster, stored row-major as (height, width)."""

    def __init__(self, pixels, image_id: str = ""):
        arr = np.asarray(pixels)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ChangeSpotException(
                EMPTY_IMAGE.code(), EMPTY_IMAGE.msg(), f"shape {arr.shape}"
            )
        if arr.dtype != np.uint8:
            if arr.min() < 0 or arr.max() > 255:
                raise ChangeSpotException(
                    UNREADABLE_IMAGE.code(),
                    UNREADABLE_IMAGE.msg(),
                    "intensities outside [0,255]",
                )
            arr = np.rint(arr).astype(np.uint8)
        else:
            arr = arr.copy()
        arr.setflags(write=False)
        self.pixels = arr
        self.image_id = image_id

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def dims(self) -> tuple:
        return (self.width, self.height)

    def pixel(self, x: int, y: int) -> int:
        return int(self.pixels[y, x])

    def as_float(self) -> np.ndarray:
        return self.pixels.astype(np.float64)

    def __eq__(self, other):
        return isinstance(other, Image) and np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash((self.width, self.height, self.pixels.tobytes()))

    def __str__(self):
        return f"Id: {self.image_id}, Width: {self.width}, Height: {self.height}"


class Rect(Object):
    def __init__(self, x: int, y: int, w: int, h: int):
        if w <= 0 or h <= 0:
            raise ChangeSpotException(
                INVALID_RECT.code(), INVALID_RECT.msg(), f"({x},{y},{w},{h})"
            )
        self.x = int(x)
        self.y = int(y)
        self.w = int(w)
        self.h = int(h)

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    def contains(self, x, y) -> bool:
        return self.x <= x < self.x2 and self.y <= y < self.y2

    def contains_rect(self, other) -> bool:
        return (
            self.x <= other.x
            and self.y <= other.y
            and other.x2 <= self.x2
            and other.y2 <= self.y2
        )

    def inside(self, width: int, height: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.x2 <= width and self.y2 <= height

    def clipped(self, width: int, height: int):
        """Part of the rect inside a width x height frame, None when it falls outside."""
        x1, y1 = max(self.x, 0), max(self.y, 0)
        x2, y2 = min(self.x2, width), min(self.y2, height)
        if x2 <= x1 or y2 <= y1:
            return None
        return Rect(x1, y1, x2 - x1, y2 - y1)

    def as_tuple(self) -> tuple:
        return (self.x, self.y, self.w, self.h)

    def slices(self) -> tuple:
        return (slice(self.y, self.y2), slice(self.x, self.x2))

    def __iter__(self):
        return iter(self.as_tuple())

    def __eq__(self, other):
        return isinstance(other, Rect) and self.as_tuple() == other.as_tuple()

    def __hash__(self):
        return hash(self.as_tuple())

    def __str__(self):
        return "X: %d, Y: %d, W: %d, H: %d" % self.as_tuple()


class CellGrid(Object):
    """Per-cell scores over a width x height frame; border cells may be partial."""

    def __init__(self, width: int, height: int, cell_size: int = DEFAULT_CELL_SIZE, values=None):
        if cell_size < 1:
            raise ChangeSpotException(
                BAD_CELL_SIZE.code(), BAD_CELL_SIZE.msg(), str(cell_size)
            )
        self.width = int(width)
        self.height = int(height)
        self.cell_size = int(cell_size)
        self.cols = math.ceil(self.width / self.cell_size)
        self.rows = math.ceil(self.height / self.cell_size)
        if values is None:
            values = np.zeros((self.rows, self.cols), dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.rows, self.cols):
            raise ChangeSpotException(
                BAD_CELL_SIZE.code(),
                BAD_CELL_SIZE.msg(),
                f"values shape {values.shape} != {(self.rows, self.cols)}",
            )
        self.values = values

    @property
    def shape(self) -> tuple:
        return (self.rows, self.cols)

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    def cell_rect(self, row: int, col: int) -> Rect:
        x, y = col * self.cell_size, row * self.cell_size
        w = min(self.cell_size, self.width - x)
        h = min(self.cell_size, self.height - y)
        return Rect(x, y, w, h)

    def cell_of(self, x: int, y: int) -> tuple:
        return (y // self.cell_size, x // self.cell_size)

    def with_values(self, values):
        return CellGrid(self.width, self.height, self.cell_size, values)

    def __str__(self):
        return "Cells: %dx%d, CellSize: %d, Frame: %dx%d" % (
            self.cols,
            self.rows,
            self.cell_size,
            self.width,
            self.height,
        )


class LoCMap(Object):
    """Per-pixel likelihood of change, (height, width), finite and >= 0."""

    def __init__(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ChangeSpotException(
                INVALID_ARGUMENT.code(), INVALID_ARGUMENT.msg(), f"LoC shape {values.shape}"
            )
        if not np.all(np.isfinite(values)) or (values.size and values.min() < 0):
            raise ChangeSpotException(
                INVALID_ARGUMENT.code(),
                INVALID_ARGUMENT.msg(),
                "LoC values must be finite and non-negative",
            )
        self.values = values

    @classmethod
    def zeros(cls, image_dims):
        width, height = image_dims
        return cls(np.zeros((height, width)))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> tuple:
        return (self.width, self.height)

    def __str__(self):
        return "Width: %d, Height: %d, Max: %s" % (
            self.width,
            self.height,
            floatMaxString(float(self.values.max()) if self.values.size else 0.0),
        )


def load_image(path) -> Image:
    """Reads a PGM or PNG file as grayscale; color is averaged over channels."""

    try:
        with PILImage.open(path) as pil:
            pil.load()
            if pil.mode == "L":
                arr = np.asarray(pil, dtype=np.uint8)
            elif pil.mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(pil).astype(np.int64)
                arr = (arr >> 8) if arr.max() > 255 else arr
                arr = np.clip(arr, 0, 255).astype(np.uint8)
            elif pil.mode in _COLOR_MODES:
                rgb = np.asarray(pil.convert("RGB"), dtype=np.float64)
                arr = np.rint(rgb.mean(axis=2)).astype(np.uint8)
            else:
                raise ValueError(f"unsupported mode {pil.mode}")
    except (OSError, SyntaxError, ValueError) as ex:
        logger.debug("load_image failed on %s: %s", path, ex)
        raise ChangeSpotException(
            UNREADABLE_IMAGE.code(), UNREADABLE_IMAGE.msg(), f"{path}: {ex}"
        ) from ex

    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ChangeSpotException(EMPTY_IMAGE.code(), EMPTY_IMAGE.msg(), str(path))
    logger.debug("load_image %s %dx%d", path, arr.shape[1], arr.shape[0])
    return Image(arr, image_id=_stem(path))


def save_png(path, pixels):
    arr = np.asarray(pixels)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    PILImage.fromarray(arr).save(path, format="PNG")


def resample(values, width: int, height: int, bilinear: bool = True) -> np.ndarray:
    """Resizes a 2D float raster with Pillow's nearest or bilinear filter."""

    src = PILImage.fromarray(np.ascontiguousarray(values, dtype=np.float32))
    method = PILImage.Resampling.BILINEAR if bilinear else PILImage.Resampling.NEAREST
    return np.asarray(src.resize((int(width), int(height)), method), dtype=np.float64)


def intersect(a: Rect, b: Rect) -> int:
    w = min(a.x2, b.x2) - max(a.x, b.x)
    h = min(a.y2, b.y2) - max(a.y, b.y)
    if w <= 0 or h <= 0:
        return 0
    return w * h


def cells_of(image_dims, cell_size: int = DEFAULT_CELL_SIZE) -> CellGrid:
    width, height = image_dims
    return CellGrid(width, height, cell_size)


def _stem(path) -> str:
    name = str(path).replace("\\", "/").rsplit("/", 1)[-1]
    return name.rsplit(".", 1)[0] if "." in name else name
