"""
Sample manifests: JSON lines, one entry per line, paths relative to the
manifest file.
"""

import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Union

import numpy as np

from src.audio.dsp import Waveform
from src.audio.wav_io import read_wav
from src.utils.error_handlers import DataError, handle_pipeline_errors
from src.utils.file_io import atomic_write_text
from src.utils.structured_logger import get_logger

logger = get_logger(__name__)

PathLike = Union[str, Path]


@dataclass
class SampleManifestEntry:
    id: str
    anchor_path: str
    mixture_path: str
    target_path: str
    interferer_paths: List[str] = field(default_factory=list)
    sir_db: float = 0.0
    speaker_id: str = ""

    @classmethod
    def from_dict(cls, data: Dict) -> "SampleManifestEntry":
        try:
            entry = cls(
                id=str(data["id"]),
                anchor_path=str(data["anchor_path"]),
                mixture_path=str(data["mixture_path"]),
                target_path=str(data["target_path"]),
                interferer_paths=[str(p) for p in data["interferer_paths"]],
                sir_db=float(data["sir_db"]),
                speaker_id=str(data["speaker_id"]),
            )
        except KeyError as e:
            raise DataError(f"Manifest entry is missing field {e.args[0]!r}", e)
        if not math.isfinite(entry.sir_db):
            raise DataError(f"Entry {entry.id} has a non-finite sir_db")
        if not entry.interferer_paths:
            raise DataError(f"Entry {entry.id} lists no interferers")
        return entry

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @property
    def all_paths(self) -> List[str]:
        return [self.anchor_path, self.mixture_path, self.target_path, *self.interferer_paths]


@dataclass
class SampleAudio:
    """Waveforms of one manifest entry, truncated to a common mixture length."""

    entry: SampleManifestEntry
    anchor: Waveform
    mixture: Waveform
    target: Waveform
    interferers: List[Waveform]


class Manifest:
    """Manifest entries plus the directory their relative paths start from."""

    def __init__(self, entries: List[SampleManifestEntry], base_dir: PathLike):
        self.entries = list(entries)
        self.base_dir = Path(base_dir)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, index: int) -> SampleManifestEntry:
        return self.entries[index]

    def resolve(self, relative: str) -> Path:
        return self.base_dir / relative

    def load_audio(self, entry: SampleManifestEntry) -> SampleAudio:
        anchor = read_wav(self.resolve(entry.anchor_path))
        mixture = read_wav(self.resolve(entry.mixture_path))
        target = read_wav(self.resolve(entry.target_path))
        interferers = [read_wav(self.resolve(p)) for p in entry.interferer_paths]

        length = min(len(mixture), len(target), *(len(i) for i in interferers))
        rate = mixture.sample_rate_hz

        def trim(w: Waveform) -> Waveform:
            return Waveform(w.samples[:length], rate)

        return SampleAudio(
            entry, anchor, trim(mixture), trim(target), [trim(i) for i in interferers]
        )


def write_manifest(path: PathLike, entries: Iterable[SampleManifestEntry]) -> Path:
    """Serialize entries to JSON lines (atomic replace)."""
    lines = [entry.to_json() for entry in entries]
    text = "\n".join(lines) + ("\n" if lines else "")
    return atomic_write_text(path, text)


def read_manifest(path: PathLike, check_paths: bool = True) -> Manifest:
    """
    Parse a JSON-lines manifest.

    Raises:
        DataError: malformed line, missing field, or (with check_paths)
            a path that does not resolve to a file
    """
    path = Path(path)
    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{line_no} is not valid JSON", e)
            entries.append(SampleManifestEntry.from_dict(data))

    manifest = Manifest(entries, path.parent)
    if check_paths:
        missing = [
            p for entry in entries for p in entry.all_paths if not manifest.resolve(p).is_file()
        ]
        if missing:
            raise DataError(
                f"{len(missing)} manifest path(s) do not resolve",
                details={"manifest": str(path), "first_missing": missing[0]},
            )
    logger.debug("Read manifest", path=str(path), entries=len(entries))
    return manifest


def measured_sir_db(target: np.ndarray, interferers: List[np.ndarray]) -> float:
    """10 log10 of target power over interferer-sum power on the common overlap."""
    length = min(len(target), *(len(i) for i in interferers))
    p_target = np.mean(target[:length] ** 2)
    p_interf = np.mean(np.sum([i[:length] for i in interferers], axis=0) ** 2)
    if p_target <= 0 or p_interf <= 0:
        raise DataError("zero-power source")
    return float(10.0 * np.log10(p_target / p_interf))


@handle_pipeline_errors("corpus indexing")
def index_wav_corpus(root: PathLike, manifest_path: PathLike) -> Manifest:
    """
    Build a manifest for an external corpus.

    Every sub-directory of root is one sample holding anchor.wav,
    mixture.wav, target.wav and interferer*.wav; an optional speaker.txt
    names the target speaker. sir_db is measured from the files.
    """
    root = Path(root)
    manifest_path = Path(manifest_path)
    base = manifest_path.parent.resolve()
    entries = []
    skipped = 0
    for sample_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        required = [sample_dir / name for name in ("anchor.wav", "mixture.wav", "target.wav")]
        interferers = sorted(sample_dir.glob("interferer*.wav"))
        if not all(p.is_file() for p in required) or not interferers:
            skipped += 1
            logger.warning("Skipping incomplete sample directory", path=str(sample_dir))
            continue

        target = read_wav(required[2]).samples
        sir_db = measured_sir_db(target, [read_wav(p).samples for p in interferers])
        speaker_file = sample_dir / "speaker.txt"
        speaker_id = ""
        if speaker_file.is_file():
            speaker_id = speaker_file.read_text(encoding="utf-8").strip()

        def rel(p: Path) -> str:
            return Path(os.path.relpath(p.resolve(), base)).as_posix()

        entries.append(
            SampleManifestEntry(
                id=sample_dir.name,
                anchor_path=rel(required[0]),
                mixture_path=rel(required[1]),
                target_path=rel(required[2]),
                interferer_paths=[rel(p) for p in interferers],
                sir_db=sir_db,
                speaker_id=speaker_id or sample_dir.name,
            )
        )

    if not entries:
        raise DataError(f"No complete sample directories under {root}")
    write_manifest(manifest_path, entries)
    logger.info("Indexed corpus", root=str(root), entries=len(entries), skipped=skipped)
    return Manifest(entries, manifest_path.parent)

