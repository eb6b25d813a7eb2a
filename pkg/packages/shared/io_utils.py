import csv, json, pathlib, typing as T

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from packages.shared.errors import ModelFormatError
from packages.submodular.oracles import PHI_REGISTRY, ConcaveCardinality, Cut, Modular, Sum


class HopSpec(BaseModel):
    elements: T.List[int] = Field(..., min_length=1, description="Region P of the concave-of-cardinality term")
    scale: float = Field(..., ge=0.0, description="Multiplier c in c * phi(|A ∩ P| / |P|)")
    phi: str = Field("z(1-z)", description="Name of the concave function")

    @field_validator("phi")
    @classmethod
    def _known_phi(cls, v: str) -> str:
        if v not in PHI_REGISTRY:
            raise ValueError(f"unknown phi {v!r}; supported: {sorted(PHI_REGISTRY)}")
        return v


class ModelFile(BaseModel):
    """JSON model: F(A) = m(A) + cut(A) + sum of hop terms."""

    n: int = Field(..., ge=1)
    modular: T.Optional[T.List[float]] = None
    edges: T.List[T.Tuple[int, int, float]] = Field(default_factory=list)
    hops: T.List[HopSpec] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_ranges(self):
        if self.modular is not None and len(self.modular) != self.n:
            raise ValueError(f"modular has {len(self.modular)} entries, expected n={self.n}")
        for u, v, w in self.edges:
            if not (0 <= u < self.n and 0 <= v < self.n) or u == v:
                raise ValueError(f"edge ({u}, {v}) is not a pair of distinct elements of 0..{self.n - 1}")
            if w < 0:
                raise ValueError(f"edge ({u}, {v}) has negative weight {w}")
        for hop in self.hops:
            if min(hop.elements) < 0 or max(hop.elements) >= self.n:
                raise ValueError(f"hop region {hop.elements} out of range")
            if len(set(hop.elements)) != len(hop.elements):
                raise ValueError(f"hop region {hop.elements} repeats an element")
        return self

    def modular_values(self) -> np.ndarray:
        return np.zeros(self.n) if self.modular is None else np.asarray(self.modular, dtype=float)


def load_model(path: str) -> ModelFile:
    p = pathlib.Path(path)
    try:
        return ModelFile.model_validate(json.loads(p.read_text(encoding="utf-8")))
    except FileNotFoundError:
        raise ModelFormatError(f"model file not found: {p}")
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{p}: not valid JSON ({e})")
    except ValidationError as e:
        raise ModelFormatError(f"{p}: invalid model\n{e}")


def hop_oracle(hop: HopSpec) -> ConcaveCardinality:
    """The hop term on its own region, re-indexed 0..|P|-1."""
    k = len(hop.elements)
    return ConcaveCardinality(k, range(k), hop.scale, phi=PHI_REGISTRY[hop.phi], phi_name=hop.phi)


def model_to_oracle(model: ModelFile) -> Sum:
    terms = [(Modular(model.modular_values()), None)]
    if model.edges:
        terms.append((Cut(model.n, model.edges), None))
    terms.extend((hop_oracle(h), h.elements) for h in model.hops)
    return Sum(model.n, terms)


# --- PNM images ---------------------------------------------------------

def _pnm_header(data: bytes, count: int) -> T.Tuple[T.List[bytes], int]:
    """First `count` whitespace-separated header tokens (comments skipped) and the raster offset."""
    tokens, i = [], 0
    while len(tokens) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if i >= len(data):
            raise ModelFormatError("truncated PNM header")
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        tokens.append(data[i:j])
        i = j
    # A single whitespace byte separates the header from a binary raster.
    return tokens, i + 1


def _read_pnm(path: str, plain: bytes, raw: bytes, channels: int) -> T.Tuple[np.ndarray, int]:
    p = pathlib.Path(path)
    try:
        data = p.read_bytes()
    except FileNotFoundError:
        raise ModelFormatError(f"image not found: {p}")
    magic = data[:2]
    if magic not in (plain, raw):
        raise ModelFormatError(f"{p}: expected {plain.decode()} or {raw.decode()}, found {magic!r}")
    try:
        tokens, offset = _pnm_header(data, 4)
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError:
        raise ModelFormatError(f"{p}: malformed header")
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ModelFormatError(f"{p}: bad dimensions {width}x{height} or maxval {maxval}")
    size = width * height * channels
    if magic == plain:
        try:
            values = np.array([int(t) for t in data[offset - 1:].split()], dtype=np.int64)
        except ValueError:
            raise ModelFormatError(f"{p}: non-numeric raster")
    else:
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        available = max(0, (len(data) - offset) // dtype.itemsize)
        values = np.frombuffer(data[offset:], dtype=dtype, count=min(size, available))
    if values.size != size:
        raise ModelFormatError(f"{p}: expected {size} samples, found {values.size}")
    if values.max(initial=0) > maxval:
        raise ModelFormatError(f"{p}: sample exceeds maxval {maxval}")
    shape = (height, width, channels) if channels > 1 else (height, width)
    return values.astype(np.int64).reshape(shape), maxval


def read_ppm(path: str) -> np.ndarray:
    """RGB image (P3 or P6) as floats in [0, 1], shape (height, width, 3)."""
    values, maxval = _read_pnm(path, b"P3", b"P6", 3)
    return values / float(maxval)


def read_pgm(path: str) -> T.Tuple[np.ndarray, int]:
    """Grayscale image (P2 or P5) as integers, with its maxval."""
    return _read_pnm(path, b"P2", b"P5", 1)


def write_ppm(path: str, rgb: np.ndarray) -> None:
    rgb = np.clip(np.round(np.asarray(rgb, dtype=float) * 255.0), 0, 255).astype(np.uint8)
    height, width, _ = rgb.shape
    pathlib.Path(path).write_bytes(f"P6\n{width} {height}\n255\n".encode("ascii") + rgb.tobytes())


def write_pgm(path: str, gray: np.ndarray) -> None:
    gray = np.asarray(gray)
    if gray.min(initial=0) < 0 or gray.max(initial=0) > 255:
        raise ValueError("gray levels must lie in 0..255")
    height, width = gray.shape
    pathlib.Path(path).write_bytes(f"P5\n{width} {height}\n255\n".encode("ascii") + gray.astype(np.uint8).tobytes())


def quantize(p: np.ndarray) -> np.ndarray:
    """Probabilities to 8-bit gray levels, round(255 p)."""
    return np.round(255.0 * np.asarray(p, dtype=float)).astype(np.uint8)


# --- CSV ------------------------------------------------------------------

def write_marginals_csv(path: str, p: np.ndarray) -> None:
    """One row per element in flat (row-major) order: element_index, probability."""
    flat = np.asarray(p, dtype=float).ravel()
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["element_index", "probability"])
        for i, value in enumerate(flat):
            writer.writerow([i, repr(float(value))])


def read_marginals_csv(path: str) -> np.ndarray:
    return read_values_csv(path, "probability")


def read_values_csv(path: str, column: str) -> np.ndarray:
    """Values keyed by element_index, returned in index order."""
    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
    except FileNotFoundError:
        raise ModelFormatError(f"file not found: {path}")
    try:
        pairs = sorted((int(r["element_index"]), float(r[column])) for r in rows)
    except (KeyError, TypeError, ValueError):
        raise ModelFormatError(f"{path}: expected columns element_index, {column}")
    if [i for i, _ in pairs] != list(range(len(pairs))):
        raise ModelFormatError(f"{path}: element indices must be 0..{len(pairs) - 1} without gaps")
    return np.array([v for _, v in pairs])


def load_label_map(path: str, shape: T.Tuple[int, int]) -> np.ndarray:
    """Integer label grid from a PGM (labels as gray levels) or a CSV of rows."""
    p = pathlib.Path(path)
    if p.suffix.lower() == ".csv":
        try:
            with p.open(newline="", encoding="utf-8") as f:
                labels = np.array([[int(x) for x in row] for row in csv.reader(f) if row], dtype=np.int64)
        except FileNotFoundError:
            raise ModelFormatError(f"label map not found: {p}")
        except ValueError:
            raise ModelFormatError(f"{p}: label map must hold integers")
    else:
        labels, _ = read_pgm(str(p))
    if labels.ndim != 2 or labels.shape != tuple(shape):
        raise ModelFormatError(f"{p}: label map of shape {labels.shape} does not match image {tuple(shape)}")
    return labels


def write_json(path: str, payload: T.Any) -> None:
    pathlib.Path(path).write_text(json.dumps(payload, ensure_ascii=False, indent=2), encoding="utf-8")
