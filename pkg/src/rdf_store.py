"""Immutable in-memory RDF graph with subject/predicate/object indexes.

Terms are interned to integer ids; the indexes hold ids only. N-Triples is
the ingestion format: each statement line goes through rdflib's N-Triples
grammar so a malformed line can be reported with its line number. Blank
nodes are skolemized to `urn:x-genid:<document>:<label>` so filters and
walks see stable identities.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Set, Tuple, Union

from rdflib import BNode, URIRef
from rdflib import Literal as RdfLiteral
from rdflib.plugins.parsers.ntriples import W3CNTriplesParser

logger = logging.getLogger("RdfStore")

RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"
RDFS_LABEL = "http://www.w3.org/2000/01/rdf-schema#label"
RDFS_COMMENT = "http://www.w3.org/2000/01/rdf-schema#comment"
RDFS_SUBCLASS_OF = "http://www.w3.org/2000/01/rdf-schema#subClassOf"
SKOS_PREF_LABEL = "http://www.w3.org/2004/02/skos/core#prefLabel"
SKOS_ALT_LABEL = "http://www.w3.org/2004/02/skos/core#altLabel"
SKOS_HIDDEN_LABEL = "http://www.w3.org/2004/02/skos/core#hiddenLabel"

GENID_PREFIX = "urn:x-genid:"


@dataclass(frozen=True)
class Resource:
    iri: str

    def __post_init__(self):
        if not self.iri:
            raise ValueError("Resource IRI must be non-empty")

    def __str__(self) -> str:
        return self.iri


@dataclass(frozen=True)
class Literal:
    lexical: str
    language: Optional[str] = None
    datatype: Optional[str] = None

    def __post_init__(self):
        if self.language and self.datatype:
            raise ValueError(
                f"Literal {self.lexical!r} cannot carry both a language tag and a datatype"
            )

    def __str__(self) -> str:
        return self.lexical


Term = Union[Resource, Literal]
NodeRef = Union[Resource, str]


@dataclass(frozen=True)
class Triple:
    subject: Resource
    predicate: Resource
    object: Term


class Direction(Enum):
    OUTGOING = "outgoing"
    INCOMING = "incoming"
    BOTH = "both"


class NTriplesParseError(ValueError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


def is_skolem(iri: str) -> bool:
    return iri.startswith(GENID_PREFIX)


def _as_resource(node: NodeRef) -> Resource:
    return node if isinstance(node, Resource) else Resource(node)


class Graph:
    """Indexed triple set. Built once from triples; read-only afterwards."""

    def __init__(self, triples: Iterable[Triple] = ()):
        self._terms: List[Term] = []
        self._ids: Dict[Term, int] = {}
        self._triples: Set[Tuple[int, int, int]] = set()
        # subject -> predicate -> objects, predicate -> object -> subjects,
        # object -> subject -> predicates
        self._spo: Dict[int, Dict[int, Set[int]]] = {}
        self._pos: Dict[int, Dict[int, Set[int]]] = {}
        self._osp: Dict[int, Dict[int, Set[int]]] = {}

        for triple in triples:
            s = self._intern(triple.subject)
            p = self._intern(triple.predicate)
            o = self._intern(triple.object)
            if (s, p, o) in self._triples:
                continue
            self._triples.add((s, p, o))
            self._spo.setdefault(s, {}).setdefault(p, set()).add(o)
            self._pos.setdefault(p, {}).setdefault(o, set()).add(s)
            self._osp.setdefault(o, {}).setdefault(s, set()).add(p)

    def _intern(self, term: Term) -> int:
        term_id = self._ids.get(term)
        if term_id is None:
            term_id = len(self._terms)
            self._terms.append(term)
            self._ids[term] = term_id
        return term_id

    def _lookup(self, node: NodeRef) -> Optional[int]:
        return self._ids.get(_as_resource(node))

    def _triple(self, ids: Tuple[int, int, int]) -> Triple:
        s, p, o = ids
        return Triple(self._terms[s], self._terms[p], self._terms[o])

    def __len__(self) -> int:
        return len(self._triples)

    def __iter__(self) -> Iterator[Triple]:
        for ids in self._triples:
            yield self._triple(ids)

    def __contains__(self, triple: Triple) -> bool:
        s = self._ids.get(triple.subject)
        p = self._ids.get(triple.predicate)
        o = self._ids.get(triple.object)
        if s is None or p is None or o is None:
            return False
        return (s, p, o) in self._triples

    def triple_set(self) -> Set[Triple]:
        return set(self)

    def has_node(self, node: NodeRef) -> bool:
        return self._lookup(node) is not None

    def subjects(self) -> Set[Resource]:
        return {self._terms[s] for s in self._spo}

    def predicates(self) -> Set[Resource]:
        return {self._terms[p] for p in self._pos}

    def nodes(self) -> Set[Resource]:
        """Subjects plus every object that is a Resource."""
        result = self.subjects()
        for o in self._osp:
            term = self._terms[o]
            if isinstance(term, Resource):
                result.add(term)
        return result

    def triples_by_subject(self, node: NodeRef) -> List[Triple]:
        s = self._lookup(node)
        if s is None:
            return []
        return [
            self._triple((s, p, o))
            for p, objects in self._spo.get(s, {}).items()
            for o in objects
        ]

    def neighbours(self, node: NodeRef, direction: Direction = Direction.BOTH) -> Set[Resource]:
        """Resources adjacent to node. Literals never appear."""
        n = self._lookup(node)
        if n is None:
            return set()
        result: Set[Resource] = set()
        if direction in (Direction.OUTGOING, Direction.BOTH):
            for objects in self._spo.get(n, {}).values():
                for o in objects:
                    term = self._terms[o]
                    if isinstance(term, Resource):
                        result.add(term)
        if direction in (Direction.INCOMING, Direction.BOTH):
            for s in self._osp.get(n, {}):
                result.add(self._terms[s])
        return result

    def literal_values(self, node: NodeRef, property: Optional[NodeRef] = None) -> List[Literal]:
        """Literal objects of node (optionally under one property), sorted by lexical form."""
        n = self._lookup(node)
        if n is None:
            return []
        by_predicate = self._spo.get(n, {})
        if property is not None:
            p = self._lookup(property)
            if p is None:
                return []
            object_sets = [by_predicate.get(p, set())]
        else:
            object_sets = list(by_predicate.values())

        literals = {
            self._terms[o]
            for objects in object_sets
            for o in objects
            if isinstance(self._terms[o], Literal)
        }
        return sorted(literals, key=lambda lit: (lit.lexical, lit.language or "", lit.datatype or ""))

    def properties(self, node: NodeRef) -> Set[Resource]:
        n = self._lookup(node)
        if n is None:
            return set()
        return {self._terms[p] for p in self._spo.get(n, {})}

    def objects(self, node: NodeRef, property: NodeRef) -> Set[Resource]:
        """Resource objects of (node, property)."""
        n = self._lookup(node)
        p = self._lookup(property)
        if n is None or p is None:
            return set()
        return {
            self._terms[o]
            for o in self._spo.get(n, {}).get(p, set())
            if isinstance(self._terms[o], Resource)
        }

    def outgoing_edges(self, node: NodeRef) -> List[Tuple[Resource, Resource]]:
        """(predicate, object) pairs with a Resource object, sorted by IRIs."""
        n = self._lookup(node)
        if n is None:
            return []
        edges = []
        for p, objects in self._spo.get(n, {}).items():
            for o in objects:
                term = self._terms[o]
                if isinstance(term, Resource):
                    edges.append((self._terms[p], term))
        edges.sort(key=lambda edge: (edge[0].iri, edge[1].iri))
        return edges


class _TripleSink:
    def __init__(self):
        self.triples: List[tuple] = []

    def triple(self, s, p, o):
        self.triples.append((s, p, o))


def _convert_term(term, document_id: str, labels: Dict[str, str]) -> Term:
    if isinstance(term, BNode):
        label = labels.get(str(term), str(term))
        return Resource(f"{GENID_PREFIX}{document_id}:{label}")
    if isinstance(term, RdfLiteral):
        datatype = str(term.datatype) if term.datatype is not None else None
        return Literal(str(term), term.language, datatype)
    return Resource(str(term))


def parse_ntriples(source: Union[str, Iterable[str]], document_id: str = "doc") -> Graph:
    """
    Parse N-Triples text into a Graph.

    Comment and blank lines are skipped, duplicate statements collapse.

    Args:
        source: The document as one string, or an iterable of lines
        document_id: Scope for blank-node skolem IRIs

    Returns:
        The parsed graph

    Raises:
        NTriplesParseError: With the 1-based line number of the first malformed statement
    """
    # only LF and CR end a statement; other Unicode line breaks may sit inside literals
    lines = source.split("\n") if isinstance(source, str) else source
    sink = _TripleSink()
    parser = W3CNTriplesParser(sink=sink)
    bnode_context: Dict[str, BNode] = {}

    for line_number, line in enumerate(lines, start=1):
        statement = line.strip(" \t\r\n")
        if not statement or statement.startswith("#"):
            continue
        before = len(sink.triples)
        try:
            parser.parsestring(statement + "\n", bnode_context=bnode_context)
        except Exception as e:
            raise NTriplesParseError(line_number, str(e)) from e
        if len(sink.triples) == before:
            raise NTriplesParseError(line_number, f"no statement found in {statement!r}")

    labels = {str(bnode): label for label, bnode in bnode_context.items()}
    graph = Graph(
        Triple(
            _convert_term(s, document_id, labels),
            _convert_term(p, document_id, labels),
            _convert_term(o, document_id, labels),
        )
        for s, p, o in sink.triples
    )
    logger.info(f"Parsed {len(graph)} triples (document={document_id})")
    return graph


def load_ntriples(path: Union[str, Path], document_id: Optional[str] = None) -> Graph:
    """
    Read a UTF-8 N-Triples file.

    Args:
        path: File to read
        document_id: Skolem scope; defaults to the file name without suffix

    Returns:
        The parsed graph
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        return parse_ntriples(f, document_id or path.stem)


_LITERAL_ESCAPES = str.maketrans({"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r"})


def _term_n3(term: Term) -> str:
    if isinstance(term, Literal):
        quoted = '"' + term.lexical.translate(_LITERAL_ESCAPES) + '"'
        if term.language:
            return f"{quoted}@{term.language}"
        if term.datatype:
            return f"{quoted}^^{URIRef(term.datatype).n3()}"
        return quoted
    return URIRef(term.iri).n3()


def serialize_ntriples(graph: Graph) -> str:
    """One sorted line per triple; skolem IRIs are written as plain IRIs."""
    lines = sorted(
        f"{_term_n3(t.subject)} {_term_n3(t.predicate)} {_term_n3(t.object)} ."
        for t in graph
    )
    return "".join(line + "\n" for line in lines)
