"""Bundled word lists: synonyms, position mirrors and stopwords.

File formats (lowercase, one record per line, ``#`` comments allowed):

- synonyms: ``word<TAB>syn1,syn2,...``
- mirror pairs: ``wordA<TAB>wordB``
- stopwords: one word per line
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterator, Optional, Tuple

from app.errors import ConfigurationError

RESOURCES_DIR = Path(__file__).resolve().parents[1] / "resources"
DEFAULT_SYNONYMS = RESOURCES_DIR / "synonyms.tsv"
DEFAULT_MIRROR = RESOURCES_DIR / "mirror.tsv"
DEFAULT_STOPWORDS = RESOURCES_DIR / "stopwords.txt"


@dataclass(frozen=True)
class PositionLexicon:
    mirror_pairs: FrozenSet[Tuple[str, str]]
    _lookup: Dict[str, str] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lookup: Dict[str, str] = {}
        for a, b in self.mirror_pairs:
            if a == b:
                raise ConfigurationError(f"mirror pair maps '{a}' to itself")
            for word, mirrored in ((a, b), (b, a)):
                if word in lookup and lookup[word] != mirrored:
                    raise ConfigurationError(f"'{word}' appears in more than one mirror pair")
                lookup[word] = mirrored
        object.__setattr__(self, "_lookup", lookup)

    def mirror(self, word: str) -> str:
        return self._lookup.get(word, word)

    def __contains__(self, word: str) -> bool:
        return word in self._lookup


@dataclass(frozen=True)
class TextResources:
    synonyms: Dict[str, Tuple[str, ...]]
    mirror: PositionLexicon
    stopwords: FrozenSet[str]

    def vocabulary(self) -> FrozenSet[str]:
        words = set(self.synonyms)
        for syns in self.synonyms.values():
            words.update(syns)
        words.update(w for pair in self.mirror.mirror_pairs for w in pair)
        return frozenset(words)


def _records(path: Path) -> Iterator[Tuple[int, str]]:
    if not path.exists():
        raise ConfigurationError(f"lexicon file not found: {path}")
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if line and not line.startswith("#"):
            yield lineno, line


def load_synonyms(path: Path = DEFAULT_SYNONYMS) -> Dict[str, Tuple[str, ...]]:
    out: Dict[str, Tuple[str, ...]] = {}
    for lineno, line in _records(Path(path)):
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0]:
            raise ConfigurationError(f"{path}:{lineno}: expected 'word<TAB>syn1,syn2'")
        syns = tuple(s.strip().lower() for s in parts[1].split(",") if s.strip())
        if syns:
            out[parts[0].strip().lower()] = syns
    return out


def load_mirror(path: Path = DEFAULT_MIRROR) -> PositionLexicon:
    pairs = set()
    for lineno, line in _records(Path(path)):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ConfigurationError(f"{path}:{lineno}: expected 'wordA<TAB>wordB'")
        pairs.add((parts[0].strip().lower(), parts[1].strip().lower()))
    return PositionLexicon(frozenset(pairs))


def load_stopwords(path: Path = DEFAULT_STOPWORDS) -> FrozenSet[str]:
    return frozenset(line.lower() for _, line in _records(Path(path)))


def load_text_resources(
    synonyms_path: Optional[str] = None,
    mirror_path: Optional[str] = None,
    stopwords_path: Optional[str] = None,
) -> TextResources:
    return TextResources(
        synonyms=load_synonyms(Path(synonyms_path) if synonyms_path else DEFAULT_SYNONYMS),
        mirror=load_mirror(Path(mirror_path) if mirror_path else DEFAULT_MIRROR),
        stopwords=load_stopwords(Path(stopwords_path) if stopwords_path else DEFAULT_STOPWORDS),
    )
