"""Rule-grammar extraction of (figure, relation, ground) tuples from a sentence."""
from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

RELATIVE_FRONT = "relative_front"
RELATIVE_LEFT = "relative_left"
ABSOLUTE = "absolute"
NONE = "none"


@dataclass(frozen=True)
class RelationInfo:
    requires_for: bool
    for_kind: str
    antonym: str | None
    sigma_multiplier: float


def _rel(kind, antonym=None, sigma=None):
    needs = kind != NONE
    if sigma is None:
        sigma = 2.0 if needs else 1.0
    return RelationInfo(needs, kind, antonym, sigma)


LEXICON: dict[str, RelationInfo] = {
    "at": _rel(NONE, sigma=0.5),
    "on": _rel(NONE, sigma=0.5),
    "in": _rel(NONE, sigma=0.5),
    "near": _rel(NONE),
    "beside": _rel(NONE),
    "next": _rel(NONE),
    "along": _rel(NONE),
    "by": _rel(NONE),
    "front": _rel(RELATIVE_FRONT, "behind"),
    "behind": _rel(RELATIVE_FRONT, "front"),
    "left": _rel(RELATIVE_LEFT, "right"),
    "right": _rel(RELATIVE_LEFT, "left"),
    "north": _rel(ABSOLUTE, "south"),
    "south": _rel(ABSOLUTE, "north"),
    "east": _rel(ABSOLUTE, "west"),
    "west": _rel(ABSOLUTE, "east"),
    "northeast": _rel(ABSOLUTE, "southwest"),
    "northwest": _rel(ABSOLUTE, "southeast"),
    "southeast": _rel(ABSOLUTE, "northwest"),
    "southwest": _rel(ABSOLUTE, "northeast"),
    # vertical words read as map-up / map-down
    "above": _rel(ABSOLUTE, "below"),
    "top": _rel(ABSOLUTE, "under"),
    "below": _rel(ABSOLUTE, "above"),
    "down": _rel(ABSOLUTE, "above"),
    "under": _rel(ABSOLUTE, "top"),
}

FOR_RELATIONS = frozenset(r for r, info in LEXICON.items() if info.requires_for)

# surface phrases -> relation, matched longest first
_PHRASES = {
    ("in", "front", "of"): "front",
    ("front", "of"): "front",
    ("in", "back", "of"): "behind",
    ("behind",): "behind",
    ("to", "the", "left", "of"): "left",
    ("on", "the", "left", "of"): "left",
    ("left", "of"): "left",
    ("to", "the", "right", "of"): "right",
    ("on", "the", "right", "of"): "right",
    ("right", "of"): "right",
    ("on", "top", "of"): "top",
    ("next", "to"): "next",
    ("close", "to"): "near",
    ("near",): "near",
    ("nearby",): "near",
    ("beside",): "beside",
    ("along",): "along",
    ("by",): "by",
    ("at",): "at",
    ("on",): "on",
    ("in",): "in",
    ("above",): "above",
    ("below",): "below",
    ("under",): "under",
    ("down",): "down",
}
for _d in ("north", "south", "east", "west", "northeast", "northwest", "southeast", "southwest"):
    _PHRASES[("to", "the", _d, "of")] = _d
    _PHRASES[(_d, "of")] = _d
    _PHRASES[(_d,)] = _d
_MAX_PHRASE = max(len(p) for p in _PHRASES)

CANONICAL_PHRASE = {
    "front": "in front of", "left": "to the left of", "right": "to the right of",
    "next": "next to", "top": "on top of",
    **{d: f"{d} of" for d in ("north", "south", "east", "west",
                               "northeast", "northwest", "southeast", "southwest")},
}

_TOKEN = re.compile(r"[a-z0-9]+|,")


class UnknownRelation(KeyError):
    pass


def requires_for(relation: str) -> tuple[bool, str]:
    try:
        info = LEXICON[relation]
    except KeyError:
        raise UnknownRelation(f"unknown relation {relation!r}") from None
    return info.requires_for, info.for_kind


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def cosine(a: Counter, b: Counter) -> float:
    dot = sum(a[t] * b[t] for t in a if t in b)
    if dot == 0:
        return 0.0
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    return dot / (na * nb)


def match_symbol(phrase, vocabulary: dict, threshold: float = 0.5):
    """Best vocabulary id for ``phrase`` by token-multiset cosine, or None below threshold."""
    tokens = phrase if isinstance(phrase, list) else tokenize(phrase)
    if not tokens:
        raise ValueError("empty phrase")
    bag = Counter(tokens)
    best_id, best = None, -1.0
    for vid in sorted(vocabulary):
        for syn in vocabulary[vid]:
            s = cosine(bag, Counter(tokenize(syn)))
            if s > best:
                best_id, best = vid, s
    if best_id is None or best < threshold:
        return None
    return best_id, best


@dataclass(frozen=True, order=True)
class SpatialTuple:
    figure: str
    relation: str
    ground: str


@dataclass(frozen=True)
class SpatialLanguageObservation:
    tuples: frozenset = field(default_factory=frozenset)
    source_text: str = ""

    def for_figure(self, figure) -> list:
        return sorted(t for t in self.tuples if t.figure == figure)

    def figures(self) -> list:
        return sorted({t.figure for t in self.tuples})

    def relations(self) -> list:
        return sorted({t.relation for t in self.tuples})


def load_targets(path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return {t["id"]: [s.lower() for s in t["synonyms"]] for t in data["targets"]}


def landmark_vocabulary(gmap) -> dict:
    return {lm.id: list(lm.synonyms) or [lm.id.lower()] for lm in gmap.landmarks.values()}


def _vocab_tokens(vocab):
    return {t for syns in vocab.values() for s in syns for t in tokenize(s)}


_ARTICLES = frozenset({"the", "a", "an", "both"})


def _single_rel_tokens():
    return {p[0] for p in _PHRASES if len(p) == 1}


def _covering_match(gram, vocab):
    """match_symbol, restricted to entries whose synonyms contain every token of ``gram``."""
    if not vocab:
        return None
    hit = match_symbol(gram, vocab)
    if hit and set(gram) <= _vocab_tokens({hit[0]: vocab[hit[0]]}):
        return hit
    return None


def _segment(tokens, targets, landmarks):
    """Turn tokens into (kind, value) items.

    kinds: 'target', 'landmark', 'rel', 'between', 'sep', 'and', 'word'.
    """
    content = _vocab_tokens(targets) | _vocab_tokens(landmarks)
    rel_words = _single_rel_tokens()
    items = []
    i, n = 0, len(tokens)
    while i < n:
        tok = tokens[i]
        if tok in (",", "and", "between"):
            items.append(({",": "sep"}.get(tok, tok), tok))
            i += 1
            continue
        hit = None
        for size in range(min(4, n - i), 0, -1):
            gram = tokens[i:i + size]
            if not all(t in content for t in gram):
                continue
            if size == 1 and tok in rel_words:
                continue
            t = _covering_match(gram, targets)
            lmk = _covering_match(gram, landmarks)
            if t and (not lmk or t[1] >= lmk[1]):
                hit = ("target", t[0], size)
            elif lmk:
                hit = ("landmark", lmk[0], size)
            if hit:
                break
        if hit:
            items.append(hit[:2])
            i += hit[2]
            continue
        for size in range(min(_MAX_PHRASE, n - i), 0, -1):
            r = _PHRASES.get(tuple(tokens[i:i + size]))
            if r:
                items.append(("rel", r))
                i += size
                break
        else:
            items.append(("word", tok))
            i += 1
    return items


def _figure_group(items, i):
    """Collect 'A and the B' style figure lists starting at items[i]; return (figures, next index)."""
    figures = [items[i][1]]
    j = i + 1
    while True:
        k = j
        while k < len(items) and (items[k][0] in ("and", "sep")
                                  or (items[k][0] == "word" and items[k][1] in _ARTICLES)):
            k += 1
        if k > j and k < len(items) and items[k][0] == "target":
            figures.append(items[k][1])
            j = k + 1
        else:
            return figures, j


def extract_tuples(sentence: str, gmap, targets: dict) -> SpatialLanguageObservation:
    landmarks = landmark_vocabulary(gmap)
    items = _segment(tokenize(sentence), targets, landmarks)
    out = set()
    i = 0
    while i < len(items):
        if items[i][0] != "target":
            i += 1
            continue
        figures, k = _figure_group(items, i)
        pending = last = None
        between_left = 0
        while k < len(items) and items[k][0] != "target":
            kind, val = items[k]
            if kind == "rel":
                pending = val
            elif kind == "between":
                between_left = 2
            elif kind == "sep":
                pending = last = None
                between_left = 0
            elif kind == "landmark":
                if between_left:
                    rel = "near"
                    between_left -= 1
                elif pending:
                    rel = pending
                elif items[k - 1][0] == "and" and last:
                    rel = last
                else:
                    rel = "at"
                for f in figures:
                    out.add(SpatialTuple(f, rel, val))
                last, pending = rel, None
            k += 1
        i = k
    return SpatialLanguageObservation(frozenset(out), sentence)


def render_canonical(figure_phrase: str, relations) -> str:
    """'the <figure> is <rel1> <ground1>[, <rel2> <ground2>]'"""
    parts = [f"{CANONICAL_PHRASE.get(r, r)} {g}" for r, g in relations]
    return f"the {figure_phrase} is " + ", ".join(parts)
