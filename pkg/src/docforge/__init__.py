"""Convert parsed PDF pages into structured documents.

Pages arrive as text tokens with coordinates, go through layout analysis
and table structure recognition, and are assembled into a typed document
that serializes to canonical JSON or Markdown.
"""

from .backend import ParsedDocument, load_document
from .model import (
    BoundingBox,
    DocItem,
    DocItemLabel,
    Document,
    ParsedPage,
    TableCell,
    TableStructure,
    TextToken,
    validate_document,
)
from .pipeline import ConversionResult, ConversionStatus, PipelineConfig, build_pipeline, convert_batch, convert_single
from .serialize import from_json, to_json, to_markdown

__all__ = [
    "BoundingBox",
    "ConversionResult",
    "ConversionStatus",
    "DocItem",
    "DocItemLabel",
    "Document",
    "ParsedDocument",
    "ParsedPage",
    "PipelineConfig",
    "TableCell",
    "TableStructure",
    "TextToken",
    "build_pipeline",
    "convert_batch",
    "convert_single",
    "from_json",
    "load_document",
    "to_json",
    "to_markdown",
    "validate_document",
]
