"""Dataset manifests: labeled image records driving every experiment.

On-disk format: UTF-8, one record per line, tab-separated fields
(path, genre, style, domain, split) with an optional sixth provenance
field for rows produced by augmentation; lines starting with '#' are
comments.
"""

from dataclasses import dataclass, replace

DOMAINS = ("painting", "normal_photo", "artist_photo", "stylized_laplacian", "stylized_neural")
SPLITS = ("train", "test", "unassigned")

# 25 named genre classes plus the catch-all; unknown labels map to the last.
WIKIART_GENRES = (
    "Abstract Art",
    "Allegorical Painting",
    "Animal Painting",
    "Battle Painting",
    "Cityscape",
    "Design",
    "Figurative",
    "Flower Painting",
    "Genre Painting",
    "History Painting",
    "Illustration",
    "Interior",
    "Landscape",
    "Literary Painting",
    "Marina",
    "Mythological Painting",
    "Nude Painting",
    "Portrait",
    "Poster",
    "Religious Painting",
    "Self-Portrait",
    "Sketch and Study",
    "Still Life",
    "Symbolic Painting",
    "Wildlife Painting",
    "Others",
)


@dataclass(frozen=True)
class ManifestRow:
    path: str
    genre: str
    style: str = ""
    domain: str = "painting"
    split: str = "unassigned"
    provenance: str = ""

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        for name, value in (("path", self.path), ("genre", self.genre)):
            if "\t" in value or "\n" in value:
                raise ValueError(f"{name} must not contain tabs or newlines")

    def with_split(self, split: str) -> "ManifestRow":
        return replace(self, split=split)


def normalize_genre(genre: str, classes=WIKIART_GENRES) -> str:
    """Map a label onto the configured class list; unknown labels fold into the catch-all."""
    if genre in classes:
        return genre
    if classes is WIKIART_GENRES or classes[-1] == "Others":
        return classes[-1]
    raise ValueError(f"genre {genre!r} not in the configured class list")


def check_unique_paths(rows) -> None:
    seen = set()
    for row in rows:
        if row.path in seen:
            raise ValueError(f"duplicate path in manifest: {row.path}")
        seen.add(row.path)


def read_manifest(path) -> list:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) not in (5, 6):
                raise ValueError(f"{path}:{lineno}: expected 5 or 6 tab-separated fields")
            rows.append(ManifestRow(*fields))
    check_unique_paths(rows)
    return rows


def manifest_to_text(rows) -> str:
    lines = ["# path\tgenre\tstyle\tdomain\tsplit\tprovenance"]
    for row in rows:
        lines.append(
            "\t".join((row.path, row.genre, row.style, row.domain, row.split, row.provenance))
        )
    return "\n".join(lines) + "\n"


def write_manifest(rows, path) -> None:
    from ._util import atomic_write_text

    check_unique_paths(rows)
    atomic_write_text(path, manifest_to_text(rows))
