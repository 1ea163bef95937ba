import numpy as np
from scipy import ndimage


def textured(height: int, width: int, seed: int = 0, sigma: float = 1.5) -> np.ndarray:
    """Smoothed uniform noise stretched to the full 8-bit range."""
    rng = np.random.default_rng(seed)
    noise = ndimage.gaussian_filter(rng.uniform(0, 255, size=(height, width)), sigma)
    noise -= noise.min()
    noise *= 255.0 / max(noise.max(), 1e-9)
    return np.round(noise).astype(np.uint8)


def random_block(size: int = 16, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 256, size=(size, size), dtype=np.uint8)


def shifted_pair(dx: int, dy: int, size: int = 128, margin: int = 8, seed: int = 0):
    """Reference and target cut from one larger texture; target(x, y) == reference(x + dx, y + dy)."""
    big = textured(size + 2 * margin, size + 2 * margin, seed=seed)
    reference = big[margin:margin + size, margin:margin + size]
    target = big[margin + dy:margin + dy + size, margin + dx:margin + dx + size]
    return reference.copy(), target.copy()


def y4m_bytes(frames, chroma: str = '420jpeg', frame_params: str = '') -> bytes:
    height, width = frames[0].shape
    header = f"YUV4MPEG2 W{width} H{height} F30:1 Ip A1:1 C{chroma}\n".encode('ascii')
    if chroma.startswith('420'):
        chroma_size = 2 * ((width + 1) // 2) * ((height + 1) // 2)
    elif chroma == 'mono':
        chroma_size = 0
    elif chroma == '444alpha':
        chroma_size = 3 * width * height
    elif chroma == '422':
        chroma_size = 2 * ((width + 1) // 2) * height
    else:
        chroma_size = 2 * width * height
    out = bytearray(header)
    for frame in frames:
        out += b'FRAME' + frame_params.encode('ascii') + b'\n'
        out += np.ascontiguousarray(frame, dtype=np.uint8).tobytes()
        out += bytes([128]) * chroma_size
    return bytes(out)


def pgm_bytes(frame: np.ndarray) -> bytes:
    height, width = frame.shape
    return f"P5\n{width} {height}\n255\n".encode('ascii') + np.ascontiguousarray(frame, dtype=np.uint8).tobytes()


def faded_checkerboard_pair(cells: int = 4, cell: int = 16, contrast: float = 0.4, seed: int = 0):
    """Reference: noise cells alternating with flat mid-grey cells.

    Every target cell is a contrast-reduced copy of a noise cell: its own cell, or the
    row neighbour when its own cell is flat. Pixel differences then favour the flat
    cells while the matching structure sits at 0 or 16 pixels of motion.
    """
    rng = np.random.default_rng(seed)
    size = cells * cell
    reference = np.full((size, size), 128, dtype=np.uint8)
    for i in range(cells):
        for j in range(cells):
            if (i + j) % 2 == 0:
                reference[i * cell:(i + 1) * cell, j * cell:(j + 1) * cell] = rng.integers(
                    0, 256, size=(cell, cell), dtype=np.uint8)

    target = np.empty_like(reference)
    for i in range(cells):
        for j in range(cells):
            source = j if (i + j) % 2 == 0 else (j - 1 if j > 0 else j + 1)
            block = reference[i * cell:(i + 1) * cell, source * cell:(source + 1) * cell].astype(np.float64)
            faded = np.round(contrast * block + (1 - contrast) * 128)
            target[i * cell:(i + 1) * cell, j * cell:(j + 1) * cell] = faded.astype(np.uint8)
    return reference, target
