from PIL import Image, UnidentifiedImageError
import io
import logging
from dataclasses import dataclass
from typing import BinaryIO, Optional, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

SUPPORTED_FORMATS = ('raw_yuv', 'y4m', 'pgm')
CHROMA_LAYOUTS = ('420', '422', '444', 'mono')

Source = Union[bytes, bytearray, memoryview, BinaryIO]


class FrameError(ValueError):
    """Base class for frame ingestion and storage errors."""


class TruncatedStreamError(FrameError):
    pass


class MalformedHeaderError(FrameError):
    pass


class FrameIndexError(FrameError):
    pass


class FrameGeometryError(FrameError):
    pass


class BlockBoundsError(FrameError):
    pass


class FrameWriteError(OSError):
    pass


class LumaFrame:
    """8-bit grayscale raster, row-major, immutable after construction."""

    bit_depth = 8

    def __init__(self, samples):
        data = np.asarray(samples)
        if data.ndim != 2:
            raise FrameGeometryError(f"Frame samples must be 2-D, got shape {data.shape}")
        if data.shape[0] == 0 or data.shape[1] == 0:
            raise FrameGeometryError(f"Degenerate frame geometry {data.shape[1]}x{data.shape[0]}")
        if data.dtype != np.uint8:
            if data.size and (data.min() < 0 or data.max() > 255):
                raise FrameGeometryError("Frame samples must lie in [0, 255]")
            if not np.issubdtype(data.dtype, np.integer) and not np.array_equal(data, np.round(data)):
                raise FrameGeometryError("Frame samples must be whole numbers; round before building a frame")
            data = data.astype(np.uint8)
        data = np.array(data, dtype=np.uint8, copy=True)
        data.flags.writeable = False
        self._samples = data

    @property
    def samples(self) -> np.ndarray:
        return self._samples

    @property
    def width(self) -> int:
        return self._samples.shape[1]

    @property
    def height(self) -> int:
        return self._samples.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self._samples.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, LumaFrame):
            return NotImplemented
        return np.array_equal(self._samples, other._samples)

    def __hash__(self):
        return hash((self.shape, self._samples.tobytes()))

    def __repr__(self) -> str:
        return f"LumaFrame({self.width}x{self.height})"


@dataclass(frozen=True)
class BlockView:
    origin_x: int
    origin_y: int
    size: int

    def fits(self, width: int, height: int) -> bool:
        return (
            self.size > 0
            and self.origin_x >= 0
            and self.origin_y >= 0
            and self.origin_x + self.size <= width
            and self.origin_y + self.size <= height
        )


def chroma_plane_size(width: int, height: int, chroma: str) -> int:
    """Total bytes of the planes after luma (chroma, plus alpha for 444alpha) for one 8-bit frame."""
    half_w = (width + 1) // 2
    half_h = (height + 1) // 2
    if chroma.startswith('420'):
        return 2 * half_w * half_h
    if chroma.startswith('422'):
        return 2 * half_w * height
    if chroma == '444alpha':
        return 3 * width * height
    if chroma.startswith('444'):
        return 2 * width * height
    if chroma == 'mono':
        return 0
    raise MalformedHeaderError(f"Unsupported chroma layout: {chroma}")


class FrameReader:
    """Reads luma planes out of raw planar YUV, Y4M and binary PGM streams.

    Settings keys: 'format', 'width', 'height' (raw only) and 'chroma'
    (raw only, default '420').
    """

    def __init__(self, settings: dict):
        self.settings = settings.copy()
        self.format = self.settings.get('format', 'y4m')
        if self.format == 'raw':
            self.format = 'raw_yuv'
        if self.format not in SUPPORTED_FORMATS:
            raise MalformedHeaderError(f"Unknown input format: {self.format}")
        self.width = self.settings.get('width')
        self.height = self.settings.get('height')
        self.chroma = self.settings.get('chroma', '420')
        if self.chroma not in CHROMA_LAYOUTS:
            raise MalformedHeaderError(f"Unsupported chroma layout: {self.chroma}")

    def read(self, source: Source, frame_index: int = 0) -> LumaFrame:
        data = _read_all(source)
        if frame_index < 0:
            raise FrameIndexError(f"Frame index must be non-negative, got {frame_index}")
        if self.format == 'raw_yuv':
            frame = self._read_raw(data, frame_index)
        elif self.format == 'y4m':
            frame = self._read_y4m(data, frame_index)
        else:
            frame = self._read_pgm(data, frame_index)
        logger.debug(f"Loaded {self.format} frame {frame_index}: {frame.width}x{frame.height}")
        return frame

    def count_frames(self, source: Source) -> int:
        data = _read_all(source)
        if self.format == 'raw_yuv':
            width, height = self._raw_geometry()
            return len(data) // (width * height + chroma_plane_size(width, height, self.chroma))
        if self.format == 'y4m':
            return len(self._y4m_frame_offsets(data))
        return len(self._pgm_offsets(data))

    def _raw_geometry(self) -> Tuple[int, int]:
        if not self.width or not self.height:
            raise FrameGeometryError("Raw YUV input needs width and height")
        if self.width <= 0 or self.height <= 0:
            raise FrameGeometryError(f"Degenerate raw geometry {self.width}x{self.height}")
        return int(self.width), int(self.height)

    def _read_raw(self, data: bytes, frame_index: int) -> LumaFrame:
        width, height = self._raw_geometry()
        luma_size = width * height
        frame_size = luma_size + chroma_plane_size(width, height, self.chroma)
        complete, leftover = divmod(len(data), frame_size)
        if frame_index >= complete:
            if frame_index == complete and leftover:
                raise TruncatedStreamError(
                    f"Raw stream truncated: frame {frame_index} needs {frame_size} bytes, {leftover} left"
                )
            raise FrameIndexError(
                f"Frame index {frame_index} out of range: stream holds {complete} frame(s)"
            )
        luma = np.frombuffer(data, dtype=np.uint8, count=luma_size, offset=frame_index * frame_size)
        return LumaFrame(luma.reshape(height, width))

    def _parse_y4m_header(self, data: bytes) -> Tuple[int, int, str, int]:
        end = data.find(b'\n')
        if end < 0:
            raise MalformedHeaderError("Y4M header line is not terminated")
        fields = data[:end].decode('ascii', errors='replace').split(' ')
        if fields[0] != 'YUV4MPEG2':
            raise MalformedHeaderError(f"Not a Y4M stream: starts with {fields[0][:16]!r}")
        width = height = None
        chroma = '420'
        for field in fields[1:]:
            if not field:
                continue
            key, value = field[0], field[1:]
            try:
                if key == 'W':
                    width = int(value)
                elif key == 'H':
                    height = int(value)
            except ValueError:
                raise MalformedHeaderError(f"Bad Y4M geometry field: {field}")
            if key == 'C':
                chroma = value
        if not width or not height or width <= 0 or height <= 0:
            raise MalformedHeaderError("Y4M header lacks a valid W/H")
        if chroma.endswith(('p10', 'p12', 'p16')):
            raise MalformedHeaderError(f"Only 8-bit Y4M is supported, got C{chroma}")
        return width, height, chroma, end + 1

    def _y4m_frame_offsets(self, data: bytes) -> list:
        width, height, chroma, pos = self._parse_y4m_header(data)
        frame_size = width * height + chroma_plane_size(width, height, chroma)
        offsets = []
        while pos < len(data):
            end = data.find(b'\n', pos)
            if end < 0:
                offsets.append((pos, False))
                break
            marker = data[pos:end]
            if not marker.startswith(b'FRAME'):
                raise MalformedHeaderError(f"Expected FRAME marker at byte {pos}, got {marker[:16]!r}")
            start = end + 1
            if start + frame_size > len(data):
                offsets.append((start, False))
                break
            offsets.append((start, True))
            pos = start + frame_size
        return offsets

    def _read_y4m(self, data: bytes, frame_index: int) -> LumaFrame:
        width, height, _, _ = self._parse_y4m_header(data)
        offsets = self._y4m_frame_offsets(data)
        if frame_index >= len(offsets):
            raise FrameIndexError(
                f"Frame index {frame_index} out of range: stream holds {len(offsets)} frame(s)"
            )
        start, complete = offsets[frame_index]
        if not complete:
            raise TruncatedStreamError(f"Y4M frame {frame_index} payload is truncated")
        luma = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=start)
        return LumaFrame(luma.reshape(height, width))

    def _open_pgm(self, data: bytes, offset: int) -> Tuple[Image.Image, int]:
        try:
            image = Image.open(io.BytesIO(data[offset:]))
        except (UnidentifiedImageError, SyntaxError, ValueError) as e:
            raise MalformedHeaderError(f"Malformed PGM header at byte {offset}: {e}")
        if image.format != 'PPM' or image.mode != 'L':
            raise MalformedHeaderError(f"Expected an 8-bit P5 PGM, got {image.format}/{image.mode}")
        decoder, _, payload_offset, _ = image.tile[0]
        if decoder != 'raw':
            raise MalformedHeaderError("Only binary P5 PGM with maxval 255 is supported")
        end = payload_offset + image.size[0] * image.size[1]
        if offset + end > len(data):
            raise TruncatedStreamError(
                f"PGM payload truncated: need {end} bytes, have {len(data) - offset}"
            )
        return image, offset + end

    def _pgm_offsets(self, data: bytes) -> list:
        offsets = []
        pos = 0
        while pos < len(data):
            offsets.append(pos)
            _, pos = self._open_pgm(data, pos)
            # whitespace between concatenated images is tolerated
            while pos < len(data) and data[pos:pos + 1].isspace():
                pos += 1
        return offsets

    def _read_pgm(self, data: bytes, frame_index: int) -> LumaFrame:
        if not data:
            raise TruncatedStreamError("Empty PGM stream")
        offsets = self._pgm_offsets(data) if frame_index > 0 else [0]
        if frame_index >= len(offsets):
            raise FrameIndexError(
                f"Frame index {frame_index} out of range: stream holds {len(offsets)} image(s)"
            )
        image, _ = self._open_pgm(data, offsets[frame_index])
        try:
            return LumaFrame(np.asarray(image, dtype=np.uint8))
        except OSError as e:
            raise TruncatedStreamError(f"PGM payload could not be decoded: {e}")


def _read_all(source: Source) -> bytes:
    if isinstance(source, (bytes, bytearray, memoryview)):
        return bytes(source)
    return source.read()


def load_frame(source: Source, fmt: str, width: Optional[int] = None, height: Optional[int] = None,
               frame_index: int = 0, chroma: str = '420') -> LumaFrame:
    """Load the luma plane of one frame; chroma is skipped."""
    reader = FrameReader({'format': fmt, 'width': width, 'height': height, 'chroma': chroma})
    return reader.read(source, frame_index)


def extract_block(frame: LumaFrame, view: BlockView) -> np.ndarray:
    if not view.fits(frame.width, frame.height):
        raise BlockBoundsError(
            f"Block {view.size}x{view.size} at ({view.origin_x}, {view.origin_y}) "
            f"exceeds {frame.width}x{frame.height} frame"
        )
    y, x, n = view.origin_y, view.origin_x, view.size
    return frame.samples[y:y + n, x:x + n].copy()


def save_pgm(frame: LumaFrame, sink: BinaryIO) -> None:
    """Write the frame as a binary 8-bit PGM (P5, maxval 255)."""
    if frame.width == 0 or frame.height == 0:
        raise FrameGeometryError("Cannot save a degenerate frame")
    image = Image.fromarray(np.ascontiguousarray(frame.samples))
    try:
        image.save(sink, format='PPM')
    except OSError as e:
        raise FrameWriteError(f"Failed writing PGM: {e}")
