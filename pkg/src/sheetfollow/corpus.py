"""Access to the bundled demo pieces and directory-based corpora."""

from importlib import resources
from pathlib import Path

from .dataset import PieceArtifacts
from .errors import FormatError
from .score import load_piece

BUNDLED_NAMES = ("twinkle", "minuet_g", "the_riddle")


def bundled_pieces_dir() -> Path:
    return Path(str(resources.files("sheetfollow") / "pieces"))


def load_corpus(pieces_dir=None) -> list[PieceArtifacts]:
    """Load every *.json piece in the directory (bundled corpus by default),
    rendered and sorted by file name."""
    root = Path(pieces_dir) if pieces_dir else bundled_pieces_dir()
    paths = sorted(root.glob("*.json"))
    if not paths:
        raise FormatError(f"no piece files (*.json) in {root}")
    return [PieceArtifacts.of(load_piece(p)) for p in paths]
