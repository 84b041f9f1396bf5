"""Page backends: turn an input source into parsed pages with token geometry.

The built-in backend reads the ``docforge-pages`` interchange format, a JSON
stand-in for a PDF parser's output::

    {"header": {"format_tag": "docforge-pages", "version": 1},
     "name": "...",
     "pages": [{"page_no": 1, "width": 612, "height": 792,
                "tokens": [{"id": 0, "text": "Hello", "bbox": [l, t, r, b],
                            "font_size": 10}],
                "raster": {"dpi": 72, "path": "p1.png"},
                "proposals": [{"bbox": [...], "label": "picture",
                               "confidence": 1.0}]}]}

``raster`` may carry ``base64`` instead of ``path``; ``raster``,
``proposals`` and ``font_size`` are optional. ``header`` must be the first
key of the top-level object.
"""

from __future__ import annotations

import base64
import binascii
import io
import json
import logging
import math
import os
import re
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Protocol, Union

import numpy as np

from .model import BoundingBox, DocItemLabel, LayoutProposal, ParsedPage, Raster, TextToken

log = logging.getLogger(__name__)

FORMAT_TAG = "docforge-pages"
FORMAT_VERSION = 1
FILE_SUFFIX = ".dpages.json"
PROBE_BYTES = 512
DEFAULT_URL_TIMEOUT = 30.0
MAX_REDIRECTS = 5


class BackendError(Exception):
    """Base class for errors raised while loading a source."""


class SourceError(BackendError):
    """The input source could not be resolved or read."""


class InputTooLargeError(BackendError):
    def __init__(self, size: int, limit: int):
        super().__init__(f"input size limit exceeded ({size} > {limit} bytes)")
        self.size = size
        self.limit = limit


class InterchangeError(BackendError):
    """Malformed interchange payload."""

    def __init__(self, reason: str, offset: Optional[int] = None, path: str = ""):
        where = []
        if offset is not None:
            where.append(f"byte {offset}")
        if path:
            where.append(path)
        msg = f"malformed interchange payload: {reason}"
        if where:
            msg += f" (at {', '.join(where)})"
        super().__init__(msg)
        self.reason = reason
        self.offset = offset
        self.path = path


class UnsupportedVersionError(BackendError):
    pass


class UnsupportedFormatError(BackendError):
    pass


@dataclass(frozen=True)
class InputSource:
    """Exactly one of a filesystem path, raw bytes, or a URL."""

    path: Optional[Path] = None
    data: Optional[bytes] = None
    url: Optional[str] = None
    name: Optional[str] = None

    def __post_init__(self) -> None:
        populated = sum(x is not None for x in (self.path, self.data, self.url))
        if populated != 1:
            raise ValueError("an input source needs exactly one of path, data or url")

    @classmethod
    def coerce(cls, src: Union[InputSource, str, os.PathLike, bytes]) -> InputSource:
        if isinstance(src, InputSource):
            return src
        if isinstance(src, (bytes, bytearray)):
            return cls(data=bytes(src))
        text = os.fspath(src)
        if re.match(r"^https?://", text, re.IGNORECASE):
            return cls(url=text)
        return cls(path=Path(text))

    @property
    def display_name(self) -> str:
        if self.name:
            return self.name
        if self.path is not None:
            return strip_suffix(self.path.name)
        if self.url is not None:
            return strip_suffix(self.url.rstrip("/").rsplit("/", 1)[-1] or "document")
        return "document"

    @property
    def base_dir(self) -> Optional[Path]:
        return self.path.resolve().parent if self.path is not None else None

    def read(self, max_bytes: Optional[int] = None, timeout: float = DEFAULT_URL_TIMEOUT) -> bytes:
        if self.data is not None:
            _check_size(len(self.data), max_bytes)
            return self.data
        if self.path is not None:
            try:
                size = self.path.stat().st_size
                _check_size(size, max_bytes)
                return self.path.read_bytes()
            except OSError as exc:
                raise SourceError(f"cannot read {self.path}: {exc.strerror or exc}") from exc
        return _fetch(self.url, max_bytes, timeout)


def strip_suffix(name: str) -> str:
    for suffix in (FILE_SUFFIX, ".json"):
        if name.endswith(suffix) and len(name) > len(suffix):
            return name[: -len(suffix)]
    return name


def _check_size(size: int, limit: Optional[int]) -> None:
    if limit is not None and size > limit:
        raise InputTooLargeError(size, limit)


class _LimitedRedirects(urllib.request.HTTPRedirectHandler):
    max_redirections = MAX_REDIRECTS


def _fetch(url: str, max_bytes: Optional[int], timeout: float) -> bytes:
    opener = urllib.request.build_opener(_LimitedRedirects)
    try:
        with opener.open(url, timeout=timeout) as resp:
            if max_bytes is None:
                return resp.read()
            body = resp.read(max_bytes + 1)
            _check_size(len(body), max_bytes)
            return body
    except (urllib.error.URLError, OSError, ValueError) as exc:
        raise SourceError(f"cannot fetch {url}: {exc}") from exc


@dataclass(frozen=True)
class ParsedDocument:
    name: str
    pages: tuple[ParsedPage, ...] = ()
    warnings: tuple[str, ...] = field(default=(), compare=False)


@dataclass(frozen=True, eq=False)
class PageImage:
    dpi: int
    pixels: np.ndarray  # uint8 grayscale, shape (height_px, width_px)

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])


def probe_format(data: bytes) -> str:
    """Identify the backend able to read ``data`` from a bounded prefix."""
    prefix = bytes(data[:PROBE_BYTES]).decode("utf-8", errors="ignore").lstrip("﻿")
    pattern = r'^\s*\{\s*"header"\s*:\s*\{[^}]*"format_tag"\s*:\s*"' + re.escape(FORMAT_TAG) + '"'
    if re.match(pattern, prefix):
        return FORMAT_TAG
    return "unknown"


# --- interchange decoding -------------------------------------------------


def _reject_constant(name: str) -> Any:
    raise ValueError(f"non-finite number {name}")


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def _require(obj: dict, key: str, kind, path: str):
    if key not in obj:
        raise InterchangeError(f"missing field {key!r}", path=path)
    value = obj[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InterchangeError(f"field {key!r} must be a number", path=path)
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise InterchangeError(f"field {key!r} must be an integer", path=path)
        return value
    if not isinstance(value, kind):
        raise InterchangeError(f"field {key!r} has the wrong type", path=path)
    return value


def _parse_bbox(raw: Any, path: str) -> BoundingBox:
    if not isinstance(raw, list) or len(raw) != 4:
        raise InterchangeError("bbox must be a list of four numbers", path=path)
    if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in raw):
        raise InterchangeError("bbox must be a list of four numbers", path=path)
    try:
        return BoundingBox(*raw)
    except ValueError as exc:
        raise InterchangeError(str(exc), path=path) from None


def decode_interchange(
    data: bytes,
    max_pages: Optional[int] = None,
    base_dir: Optional[Path] = None,
) -> ParsedDocument:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InterchangeError("payload is not valid UTF-8", offset=exc.start) from None
    try:
        obj = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise InterchangeError(exc.msg, offset=_byte_offset(text, exc.pos)) from None
    except ValueError as exc:
        raise InterchangeError(str(exc)) from None

    if not isinstance(obj, dict) or not obj:
        raise InterchangeError("top level must be a non-empty object", offset=0)
    if next(iter(obj)) != "header":
        raise InterchangeError("'header' must be the first key", offset=0)
    header = _require(obj, "header", dict, "header")
    if header.get("format_tag") != FORMAT_TAG:
        raise InterchangeError(f"format_tag must be {FORMAT_TAG!r}", path="header.format_tag")
    version = _require(header, "version", int, "header")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported interchange version {version}")

    name = _require(obj, "name", str, "")
    raw_pages = _require(obj, "pages", list, "")
    warnings: list[str] = []
    pages = [_decode_page(raw, f"pages[{i}]", base_dir, warnings) for i, raw in enumerate(raw_pages)]
    pages.sort(key=lambda p: p.page_no)
    for expected, page in enumerate(pages, start=1):
        if page.page_no != expected:
            raise InterchangeError("non-consecutive page numbers", path="pages")
    if max_pages is not None:
        pages = pages[:max_pages]
    return ParsedDocument(name=name, pages=tuple(pages), warnings=tuple(warnings))


def _decode_page(raw: Any, path: str, base_dir: Optional[Path], warnings: list[str]) -> ParsedPage:
    if not isinstance(raw, dict):
        raise InterchangeError("page must be an object", path=path)
    page_no = _require(raw, "page_no", int, path)
    width = _require(raw, "width", float, path)
    height = _require(raw, "height", float, path)
    if not (math.isfinite(width) and math.isfinite(height) and width > 0 and height > 0):
        raise InterchangeError("page size must be positive", path=path)
    if page_no < 1:
        raise InterchangeError("page_no must be >= 1", path=path)

    tokens = []
    seen: set[int] = set()
    for j, tok in enumerate(_require(raw, "tokens", list, path)):
        tpath = f"{path}.tokens[{j}]"
        if not isinstance(tok, dict):
            raise InterchangeError("token must be an object", path=tpath)
        tid = _require(tok, "id", int, tpath)
        if tid in seen:
            raise InterchangeError(f"duplicate token id {tid}", path=tpath)
        seen.add(tid)
        text = _require(tok, "text", str, tpath)
        bbox = _parse_bbox(tok.get("bbox"), tpath + ".bbox")
        clamped = bbox.clamp(width, height)
        if clamped != bbox:
            warnings.append(f"page {page_no}: token {tid} bbox clamped to the page")
            bbox = clamped
        font_size = None
        if tok.get("font_size") is not None:
            font_size = _require(tok, "font_size", float, tpath)
        tokens.append(TextToken(tid, text, bbox, font_size))

    raster = None
    if raw.get("raster") is not None:
        raster = _decode_raster(raw["raster"], path + ".raster", base_dir)

    proposals = []
    for j, prop in enumerate(raw.get("proposals") or []):
        ppath = f"{path}.proposals[{j}]"
        if not isinstance(prop, dict):
            raise InterchangeError("proposal must be an object", path=ppath)
        try:
            label = DocItemLabel.parse(_require(prop, "label", str, ppath))
            conf = _require(prop, "confidence", float, ppath) if "confidence" in prop else 1.0
            bbox = _parse_bbox(prop.get("bbox"), ppath + ".bbox").clamp(width, height)
            proposals.append(LayoutProposal(bbox, label, conf))
        except ValueError as exc:
            raise InterchangeError(str(exc), path=ppath) from None

    return ParsedPage(page_no, width, height, tuple(tokens), raster, tuple(proposals))


def _decode_raster(raw: Any, path: str, base_dir: Optional[Path]) -> Raster:
    if not isinstance(raw, dict):
        raise InterchangeError("raster must be an object", path=path)
    dpi = _require(raw, "dpi", int, path)
    if dpi <= 0:
        raise InterchangeError("raster dpi must be positive", path=path)
    if "base64" in raw:
        try:
            data = base64.b64decode(_require(raw, "base64", str, path), validate=True)
        except binascii.Error:
            raise InterchangeError("invalid base64 raster data", path=path) from None
        return Raster(dpi, data=data)
    ref = _require(raw, "path", str, path)
    p = Path(ref)
    if not p.is_absolute() and base_dir is not None:
        p = base_dir / p
    return Raster(dpi, path=str(p))


def encode_interchange(doc: ParsedDocument) -> str:
    """Serialize parsed pages back to interchange JSON (inverse of decoding)."""
    pages = []
    for page in doc.pages:
        out: dict[str, Any] = {
            "page_no": page.page_no,
            "width": page.width,
            "height": page.height,
            "tokens": [_encode_token(t) for t in page.tokens],
        }
        if page.raster is not None:
            r = page.raster
            if r.data is not None:
                out["raster"] = {"dpi": r.dpi, "base64": base64.b64encode(r.data).decode("ascii")}
            else:
                out["raster"] = {"dpi": r.dpi, "path": r.path}
        if page.proposals:
            out["proposals"] = [
                {"bbox": p.bbox.as_list(), "label": p.label.value, "confidence": p.confidence}
                for p in page.proposals
            ]
        pages.append(out)
    payload = {
        "header": {"format_tag": FORMAT_TAG, "version": FORMAT_VERSION},
        "name": doc.name,
        "pages": pages,
    }
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":"), allow_nan=False)


def _encode_token(t: TextToken) -> dict[str, Any]:
    out: dict[str, Any] = {"id": t.token_id, "text": t.text, "bbox": t.bbox.as_list()}
    if t.font_size is not None:
        out["font_size"] = t.font_size
    return out


# --- rendering ------------------------------------------------------------


def raster_size(width_pts: float, height_pts: float, dpi: int) -> tuple[int, int]:
    return math.ceil(width_pts * dpi / 72), math.ceil(height_pts * dpi / 72)


def render_page(page: ParsedPage, dpi: int) -> PageImage:
    """Rasterize ``page`` at ``dpi``.

    An embedded raster is rescaled to the requested resolution; without one
    a synthetic image is drawn (white page, black token boxes).
    """
    if dpi <= 0:
        raise ValueError(f"dpi must be positive, got {dpi}")
    w, h = raster_size(page.width, page.height, dpi)
    if page.raster is not None:
        return PageImage(dpi, _load_raster(page.raster, w, h))
    pixels = np.full((h, w), 255, dtype=np.uint8)
    scale = dpi / 72
    for tok in page.tokens:
        b = tok.bbox
        x0, y0 = int(math.floor(b.left * scale)), int(math.floor(b.top * scale))
        x1, y1 = int(math.ceil(b.right * scale)), int(math.ceil(b.bottom * scale))
        pixels[y0:y1, x0:x1] = 0
    return PageImage(dpi, pixels)


def _load_raster(raster: Raster, w: int, h: int) -> np.ndarray:
    from PIL import Image

    try:
        source = io.BytesIO(raster.data) if raster.data is not None else raster.path
        with Image.open(source) as img:
            img = img.convert("L")
            if img.size != (w, h):
                img = img.resize((w, h), Image.Resampling.BILINEAR)
            return np.asarray(img, dtype=np.uint8).copy()
    except OSError as exc:
        raise SourceError(f"cannot load page raster: {exc}") from exc


# --- backend registry -----------------------------------------------------


class Backend(Protocol):
    """Adapter contract every page backend satisfies."""

    def load_document(
        self, src: InputSource, max_pages: Optional[int] = None, *, max_bytes: Optional[int] = None
    ) -> ParsedDocument: ...

    def render_page(self, page: ParsedPage, dpi: int) -> PageImage: ...


class InterchangeBackend:
    def load_document(
        self,
        src: InputSource,
        max_pages: Optional[int] = None,
        *,
        max_bytes: Optional[int] = None,
        timeout: float = DEFAULT_URL_TIMEOUT,
    ) -> ParsedDocument:
        data = src.read(max_bytes=max_bytes, timeout=timeout)
        if probe_format(data) != FORMAT_TAG:
            if data[:5] == b"%PDF-":
                raise UnsupportedFormatError("PDF input needs a PDF backend; none is registered")
            if data.lstrip()[:1] != b"{":
                raise UnsupportedFormatError("unrecognized input format")
        doc = decode_interchange(data, max_pages=max_pages, base_dir=src.base_dir)
        for w in doc.warnings:
            log.warning("%s: %s", src.display_name, w)
        return doc

    def render_page(self, page: ParsedPage, dpi: int) -> PageImage:
        return render_page(page, dpi)


_BACKENDS: dict[str, Backend] = {"interchange": InterchangeBackend()}


def register_backend(name: str, backend: Backend) -> None:
    _BACKENDS[name] = backend


def get_backend(name: str) -> Backend:
    try:
        return _BACKENDS[name]
    except KeyError:
        raise KeyError(f"unknown backend {name!r}; available: {', '.join(sorted(_BACKENDS))}") from None


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def load_document(
    src: Union[InputSource, str, os.PathLike, bytes],
    max_pages: Optional[int] = None,
    *,
    max_bytes: Optional[int] = None,
    timeout: float = DEFAULT_URL_TIMEOUT,
) -> ParsedDocument:
    """Load ``src`` with the interchange backend."""
    return InterchangeBackend().load_document(
        InputSource.coerce(src), max_pages, max_bytes=max_bytes, timeout=timeout
    )
