"""Alignment-format XML reading and writing.

Layout::

    <Alignment xmlns="http://knowledgeweb.semanticweb.org/heterogeneity/alignment#"
               xmlns:rdf="http://www.w3.org/1999/02/22-rdf-syntax-ns#">
      <map>
        <Cell>
          <entity1 rdf:resource="..."/>
          <entity2 rdf:resource="..."/>
          <relation>=</relation>
          <measure>0.9</measure>
          <ext key="filter/neighbours/jaccard">0.5</ext>
        </Cell>
      </map>
    </Alignment>

Cells are written in (source, target) order so equal alignments serialize
to identical bytes.
"""

import logging
import math
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Dict, Optional, Union

from alignment import Alignment, Correspondence, Relation

logger = logging.getLogger("AlignmentXML")

ALIGN_NS = "http://knowledgeweb.semanticweb.org/heterogeneity/alignment#"
RDF_NS = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"

ET.register_namespace("", ALIGN_NS)
ET.register_namespace("rdf", RDF_NS)


class AlignmentFormatError(ValueError):
    def __init__(self, message: str, cell_ordinal: Optional[int] = None):
        prefix = f"Cell #{cell_ordinal}: " if cell_ordinal is not None else ""
        super().__init__(prefix + message)
        self.cell_ordinal = cell_ordinal


def format_decimal(value: float) -> str:
    """Canonical decimal text with at most 10 significant digits.

    Reading an alignment back therefore returns every confidence and
    extension value rounded to 10 significant digits; values that already
    fit come back unchanged.
    """
    return format(value, ".10g")


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _resource(element: ET.Element) -> Optional[str]:
    for name, value in element.attrib.items():
        if _local(name) == "resource":
            return value
    return None


def serialize_alignment_xml(alignment: Alignment) -> str:
    root = ET.Element(f"{{{ALIGN_NS}}}Alignment")
    mapping = ET.SubElement(root, f"{{{ALIGN_NS}}}map")
    for c in alignment.sorted():
        cell = ET.SubElement(mapping, f"{{{ALIGN_NS}}}Cell")
        ET.SubElement(cell, f"{{{ALIGN_NS}}}entity1", {f"{{{RDF_NS}}}resource": c.source})
        ET.SubElement(cell, f"{{{ALIGN_NS}}}entity2", {f"{{{RDF_NS}}}resource": c.target})
        ET.SubElement(cell, f"{{{ALIGN_NS}}}relation").text = c.relation.value
        ET.SubElement(cell, f"{{{ALIGN_NS}}}measure").text = format_decimal(c.confidence)
        for key in sorted(c.extensions):
            ext = ET.SubElement(cell, f"{{{ALIGN_NS}}}ext", {"key": key})
            ext.text = format_decimal(c.extensions[key])
    ET.indent(root, space="  ")
    return '<?xml version="1.0" encoding="utf-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def _parse_number(text: Optional[str], what: str, ordinal: int) -> float:
    try:
        value = float((text or "").strip())
    except ValueError:
        raise AlignmentFormatError(f"{what} is not a number: {text!r}", ordinal)
    if not math.isfinite(value):
        raise AlignmentFormatError(f"{what} must be finite, got {text!r}", ordinal)
    return value


def parse_alignment_xml(text: str) -> Alignment:
    """Parse an alignment document. Errors name the 1-based Cell ordinal."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as e:
        raise AlignmentFormatError(f"Malformed XML: {e}")
    if _local(root.tag) != "Alignment":
        raise AlignmentFormatError(f"Root element must be Alignment, found {_local(root.tag)}")

    alignment = Alignment()
    cells = [el for el in root.iter() if _local(el.tag) == "Cell"]
    for ordinal, cell in enumerate(cells, start=1):
        children: Dict[str, ET.Element] = {}
        extensions: Dict[str, float] = {}
        for child in cell:
            name = _local(child.tag)
            if name == "ext":
                key = child.attrib.get("key")
                if not key:
                    raise AlignmentFormatError("ext element without key attribute", ordinal)
                extensions[key] = _parse_number(child.text, f"ext {key!r}", ordinal)
            else:
                children[name] = child

        for required in ("entity1", "entity2", "relation", "measure"):
            if required not in children:
                raise AlignmentFormatError(f"missing {required}", ordinal)

        source = _resource(children["entity1"])
        target = _resource(children["entity2"])
        if not source or not target:
            raise AlignmentFormatError("entity1/entity2 need an rdf:resource attribute", ordinal)
        try:
            relation = Relation.parse(children["relation"].text or "")
            confidence = _parse_number(children["measure"].text, "measure", ordinal)
            alignment.add(Correspondence(source, target, relation, confidence, extensions))
        except AlignmentFormatError:
            raise
        except ValueError as e:
            raise AlignmentFormatError(str(e), ordinal)
    return alignment


def read_alignment_file(path: Union[str, Path]) -> Alignment:
    """
    Read an Alignment-format XML file.

    Args:
        path: File to read

    Returns:
        The alignment, with decimals as written (10 significant digits)

    Raises:
        AlignmentFormatError: Naming the Cell that could not be read
    """
    with open(path, "r", encoding="utf-8") as f:
        alignment = parse_alignment_xml(f.read())
    logger.info(f"Read {len(alignment)} correspondences from {path}")
    return alignment


def write_alignment_file(alignment: Alignment, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(serialize_alignment_xml(alignment))
    logger.info(f"Wrote {len(alignment)} correspondences to {path}")
    return path
