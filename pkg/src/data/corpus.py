"""
Synthetic toy corpus: parametric harmonic "speakers", SIR-controlled
mixing and the train/test manifests built from them.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from config.settings import DATA_CONFIG, STFT_CONFIG
from src.audio.dsp import Waveform
from src.audio.wav_io import quantize, write_wav
from src.data.manifest import SampleManifestEntry, write_manifest
from src.utils.error_handlers import ConfigError, DataError, handle_pipeline_errors
from src.utils.structured_logger import get_logger, log_call, log_duration
from src.utils.workers import parallel_map

logger = get_logger(__name__)

F0_RANGE_HZ = (80.0, 400.0)
MIN_DURATION_S = 0.5
FORMANT_BANDWIDTH_HZ = 600.0
MAX_HARMONIC_HZ = 7000.0

SPLIT_CODES = {"train": 1, "test": 2}


@dataclass(frozen=True)
class ToySpeakerSpec:
    speaker_id: str
    f0_hz: float
    harmonic_decay: float
    formant_center_hz: float
    am_rate_hz: float

    def __post_init__(self):
        lo, hi = F0_RANGE_HZ
        if not lo <= self.f0_hz <= hi:
            raise DataError(f"f0_hz {self.f0_hz} outside [{lo}, {hi}]")
        if not 0 < self.harmonic_decay < 1:
            raise DataError(f"harmonic_decay must lie in (0, 1), got {self.harmonic_decay}")


def make_speakers(n: int, seed: int, prefix: str = "spk") -> List[ToySpeakerSpec]:
    """
    n distinct toy speakers.

    Fundamentals are spread over separate slots of the f0 range with a
    random jitter, and every other parameter is drawn independently, so any
    two speakers differ in all five fields.
    """
    if n < 1:
        raise ConfigError("need at least one speaker")
    rng = np.random.default_rng((seed, 0))
    lo, hi = 90.0, 380.0
    slot = (hi - lo) / n
    order = rng.permutation(n)
    speakers = []
    for i in range(n):
        f0 = lo + slot * (order[i] + rng.uniform(0.15, 0.85))
        speakers.append(
            ToySpeakerSpec(
                speaker_id=f"{prefix}{i:03d}",
                f0_hz=float(f0),
                harmonic_decay=float(rng.uniform(0.3, 0.6)),
                formant_center_hz=float(rng.uniform(500.0, 3000.0)),
                am_rate_hz=float(rng.uniform(2.0, 6.0)),
            )
        )
    return speakers


def synth_speaker_utterance(
    spec: ToySpeakerSpec,
    duration_s: float,
    seed: int,
    sample_rate_hz: int = STFT_CONFIG["sample_rate_hz"],
) -> Waveform:
    """
    Harmonic tone stack at the speaker's f0.

    Harmonic h has amplitude decay^(h-1) boosted by up to 50% near the
    formant, so the fundamental stays the strongest partial. The stack is
    amplitude modulated, silenced in one or two random pauses and
    peak-normalized.
    """
    if duration_s < MIN_DURATION_S:
        raise DataError(f"duration_s must be >= {MIN_DURATION_S}, got {duration_s}")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate_hz))
    t = np.arange(n) / sample_rate_hz

    harmonics = np.arange(1, int(MAX_HARMONIC_HZ // spec.f0_hz) + 1)
    freqs = harmonics * spec.f0_hz
    formant_gain = np.exp(-0.5 * ((freqs - spec.formant_center_hz) / FORMANT_BANDWIDTH_HZ) ** 2)
    amps = spec.harmonic_decay ** (harmonics - 1) * (1.0 + 0.5 * formant_gain)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=harmonics.shape[0])

    tone = amps @ np.sin(2.0 * np.pi * freqs[:, None] * t[None, :] + phases[:, None])
    envelope = 1.0 + 0.5 * np.sin(2.0 * np.pi * spec.am_rate_hz * t + rng.uniform(0, 2 * np.pi))
    signal = tone * envelope

    for _ in range(int(rng.integers(1, 3))):
        pause = int(rng.uniform(0.05, 0.12) * sample_rate_hz)
        start = int(rng.integers(0, max(1, n - pause)))
        signal[start: start + pause] = 0.0

    peak = np.max(np.abs(signal))
    return Waveform(signal * (DATA_CONFIG["peak_level"] / peak), sample_rate_hz)


def scale_interferers(
    target: Waveform, interferers: Sequence[Waveform], sir_db: float
) -> Tuple[np.ndarray, List[np.ndarray]]:
    """
    Truncate to the shortest source and rescale the interferers together so
    the target / interferer-sum power ratio equals sir_db.

    Returns:
        (truncated target samples, scaled interferer samples)
    """
    if not interferers:
        raise DataError("mix_at_sir needs at least one interferer")
    rates = {target.sample_rate_hz, *(w.sample_rate_hz for w in interferers)}
    if len(rates) != 1:
        raise DataError(f"Sample rates differ: {sorted(rates)}")

    length = min(len(target), *(len(w) for w in interferers))
    s = target.samples[:length]
    parts = [w.samples[:length] for w in interferers]
    p_target = np.mean(s ** 2)
    p_interf = np.mean(np.sum(parts, axis=0) ** 2)
    if p_target <= 0 or p_interf <= 0:
        raise DataError("zero-power source", details={"p_target": p_target, "p_interf": p_interf})

    gain = np.sqrt(p_target / (p_interf * 10.0 ** (sir_db / 10.0)))
    return s, [gain * p for p in parts]


def mix_at_sir(target: Waveform, interferers: Sequence[Waveform], sir_db: float) -> Waveform:
    """target + interferer sum scaled to the requested SIR"""
    s, scaled = scale_interferers(target, interferers, sir_db)
    return Waveform(s + np.sum(scaled, axis=0), target.sample_rate_hz)


@dataclass
class _EntryPlan:
    split: str
    index: int
    speaker: ToySpeakerSpec
    interferers: List[ToySpeakerSpec]
    sir_db: float
    seed: int


@dataclass
class CorpusManifests:
    train_path: Path
    test_path: Path
    train_entries: List[SampleManifestEntry]
    test_entries: List[SampleManifestEntry]


def _plan_split(
    split: str,
    speakers: List[ToySpeakerSpec],
    utts: int,
    pool: List[ToySpeakerSpec],
    sir_range: Tuple[float, float],
    n_interferers: int,
    seed: int,
) -> List[_EntryPlan]:
    rng = np.random.default_rng((seed, SPLIT_CODES[split]))
    plans = []
    for speaker in speakers:
        for _ in range(utts):
            chosen = rng.choice(len(pool), size=n_interferers, replace=False)
            plans.append(
                _EntryPlan(
                    split=split,
                    index=len(plans),
                    speaker=speaker,
                    interferers=[pool[i] for i in sorted(chosen)],
                    sir_db=float(rng.uniform(*sir_range)),
                    seed=int(rng.integers(0, 2 ** 31)),
                )
            )
    return plans


def _render_entry(plan: _EntryPlan, out_dir: Path) -> SampleManifestEntry:
    rng = np.random.default_rng(plan.seed)
    lo, hi = DATA_CONFIG["mixture_duration_s"]
    duration = float(rng.uniform(lo, hi))
    seeds = rng.integers(0, 2 ** 31, size=2 + len(plan.interferers))

    anchor = synth_speaker_utterance(plan.speaker, DATA_CONFIG["anchor_duration_s"], int(seeds[0]))
    target = synth_speaker_utterance(plan.speaker, duration, int(seeds[1]))
    others = [
        synth_speaker_utterance(spk, duration, int(s))
        for spk, s in zip(plan.interferers, seeds[2:])
    ]
    s, scaled = scale_interferers(target, others, plan.sir_db)
    mixture = s + np.sum(scaled, axis=0)

    # keep the stored sources summing to the stored mixture
    peak = np.max(np.abs(mixture))
    if peak > DATA_CONFIG["clip_level"]:
        factor = DATA_CONFIG["clip_level"] / peak
        s, scaled, mixture = s * factor, [p * factor for p in scaled], mixture * factor

    entry_id = f"{plan.split}_{plan.index:05d}"
    rel_dir = Path(plan.split) / entry_id
    sample_dir = out_dir / rel_dir
    rate = target.sample_rate_hz
    write_wav(sample_dir / "anchor.wav", Waveform(quantize(anchor.samples), rate))
    write_wav(sample_dir / "mixture.wav", Waveform(quantize(mixture), rate))
    write_wav(sample_dir / "target.wav", Waveform(quantize(s), rate))
    interferer_paths = []
    for i, part in enumerate(scaled):
        name = f"interferer{i}.wav"
        write_wav(sample_dir / name, Waveform(quantize(part), rate))
        interferer_paths.append((rel_dir / name).as_posix())

    return SampleManifestEntry(
        id=entry_id,
        anchor_path=(rel_dir / "anchor.wav").as_posix(),
        mixture_path=(rel_dir / "mixture.wav").as_posix(),
        target_path=(rel_dir / "target.wav").as_posix(),
        interferer_paths=interferer_paths,
        sir_db=plan.sir_db,
        speaker_id=plan.speaker.speaker_id,
    )


@log_call("INFO")
@handle_pipeline_errors("corpus generation")
def build_toy_corpus(
    n_speakers: int = DATA_CONFIG["speakers"],
    utts_per_speaker: int = DATA_CONFIG["utts"],
    sir_range: Tuple[float, float] = (DATA_CONFIG["sir_min"], DATA_CONFIG["sir_max"]),
    n_interferers: int = DATA_CONFIG["interferers"],
    seed: int = DATA_CONFIG["seed"],
    out_dir: Union[str, Path] = "data/toy",
    test_speakers: int = DATA_CONFIG["test_speakers"],
    test_utts: int = DATA_CONFIG["test_utts"],
    interferer_pool: int = DATA_CONFIG["interferer_pool"],
) -> CorpusManifests:
    """
    Render the toy corpus and write train.jsonl / test.jsonl under out_dir.

    Train targets, test targets and the interferer pool are three disjoint
    speaker sets. Entries are rendered in parallel; every random draw comes
    from a generator seeded by (seed, split, entry), so reruns are
    byte-identical.
    """
    sir_min, sir_max = float(sir_range[0]), float(sir_range[1])
    problems = []
    if n_speakers < 2:
        problems.append("n_speakers must be at least 2")
    if utts_per_speaker < 1 or test_utts < 0 or test_speakers < 0:
        problems.append("utterance and speaker counts must be positive")
    if not (np.isfinite(sir_min) and np.isfinite(sir_max)) or sir_min > sir_max:
        problems.append(f"invalid SIR range [{sir_min}, {sir_max}]")
    if n_interferers < 1 or n_interferers > interferer_pool:
        problems.append(f"interferers must be in [1, {interferer_pool}]")
    if problems:
        raise ConfigError("; ".join(problems))

    out_dir = Path(out_dir)
    everyone = make_speakers(n_speakers + test_speakers + interferer_pool, seed)
    train_spk = everyone[:n_speakers]
    test_spk = everyone[n_speakers: n_speakers + test_speakers]
    pool = everyone[n_speakers + test_speakers:]

    plans = _plan_split("train", train_spk, utts_per_speaker, pool, (sir_min, sir_max),
                        n_interferers, seed)
    test_plans = _plan_split("test", test_spk, test_utts, pool, (sir_min, sir_max),
                             n_interferers, seed)

    with log_duration("toy corpus rendering", logger, entries=len(plans) + len(test_plans)):
        entries = parallel_map(lambda p: _render_entry(p, out_dir), plans + test_plans)

    by_split: Dict[str, List[SampleManifestEntry]] = {"train": [], "test": []}
    for plan, entry in zip(plans + test_plans, entries):
        by_split[plan.split].append(entry)

    train_path = write_manifest(out_dir / "train.jsonl", by_split["train"])
    test_path = write_manifest(out_dir / "test.jsonl", by_split["test"])
    logger.info(
        "Toy corpus written",
        out_dir=str(out_dir),
        train=len(by_split["train"]),
        test=len(by_split["test"]),
    )
    return CorpusManifests(train_path, test_path, by_split["train"], by_split["test"])
