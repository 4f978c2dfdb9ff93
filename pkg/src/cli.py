"""
Command-line interface.

Subcommands: make-dataset, train, extract, eval, dump-embeddings,
stability. Options may also come from a JSON file passed with --config
(keys mirror the flag names); explicit flags win over the file.

Exit codes: 0 success, 1 usage error, 2 runtime or data error.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from tabulate import tabulate

from config.settings import DATA_CONFIG, LOGGING_CONFIG, TRAIN_CONFIG
from src.analysis import checkpoint_stability, embedding_points
from src.audio.dsp import Waveform, magnitude, stft
from src.audio.wav_io import read_wav, write_wav
from src.config_validator import CURRICULA, VARIANTS, TrainConfig
from src.core.checkpoint import load_checkpoint, save_checkpoint
from src.core.evaluator import eval_report, summary_table, write_report
from src.core.inference import MODE_VARIANTS, check_mode, extract_waveform, needs_anchor
from src.core.trainer import train
from src.data.corpus import build_toy_corpus
from src.data.manifest import read_manifest
from src.utils.error_handlers import EXIT_OK, ConfigError, DenetError, exit_code_for
from src.utils.file_io import atomic_write_text
from src.utils.structured_logger import configure_logging, get_logger

logger = get_logger(__name__)

Options = argparse.Namespace
OptionSpec = Tuple[str, Dict[str, Any]]

MODES = tuple(MODE_VARIANTS)

# flag -> argparse kwargs; defaults live in COMMAND_DEFAULTS so a config
# file can fill anything the command line leaves out
COMMAND_OPTIONS: Dict[str, List[OptionSpec]] = {
    "make-dataset": [
        ("--out", {"help": "Output directory"}),
        ("--speakers", {"type": int, "help": "Training target speakers"}),
        ("--utts", {"type": int, "help": "Utterances per training speaker"}),
        ("--sir-min", {"type": float, "help": "Lowest SIR in dB (may be negative)"}),
        ("--sir-max", {"type": float, "help": "Highest SIR in dB"}),
        ("--interferers", {"type": int, "help": "Interferers per mixture"}),
        ("--test-speakers", {"type": int, "help": "Held-out test speakers"}),
        ("--test-utts", {"type": int, "help": "Utterances per test speaker"}),
        ("--seed", {"type": int}),
    ],
    "train": [
        ("--manifest", {"help": "Training manifest (JSON lines)"}),
        ("--variant", {"choices": VARIANTS}),
        ("--preset", {"help": "Model preset (desk or paper)"}),
        ("--epochs", {"type": int}),
        ("--batch-size", {"type": int}),
        ("--learning-rate", {"type": float}),
        ("--curriculum", {"choices": CURRICULA}),
        ("--seed", {"type": int}),
        ("--out", {"help": "Checkpoint path"}),
    ],
    "extract": [
        ("--ckpt", {"help": "Checkpoint path"}),
        ("--anchor", {"help": "Anchor utterance WAV"}),
        ("--mixture", {"help": "Mixture WAV"}),
        ("--out", {"help": "Output WAV"}),
        ("--mode", {"choices": MODES}),
        ("--target", {"help": "Target reference WAV (oracle modes)"}),
        ("--interferer", {"action": "append", "help": "Interferer reference WAV (repeatable)"}),
        ("--streaming", {"action": "store_true", "default": None,
                         "help": "Frame-by-frame causal extraction"}),
    ],
    "eval": [
        ("--ckpt", {"help": "Checkpoint path"}),
        ("--manifest", {"help": "Evaluation manifest"}),
        ("--mode", {"choices": MODES}),
        ("--report", {"help": "Report JSON path (CSV mirror written alongside)"}),
        ("--streaming", {"action": "store_true", "default": None}),
    ],
    "dump-embeddings": [
        ("--ckpt", {"help": "denet checkpoint"}),
        ("--anchor", {}),
        ("--mixture", {}),
        ("--target", {}),
        ("--interferer", {"action": "append"}),
        ("--out", {"help": "CSV path"}),
    ],
    "stability": [
        ("--ckpt", {"help": "denet checkpoint"}),
    ],
}

COMMAND_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "make-dataset": {
        "speakers": DATA_CONFIG["speakers"],
        "utts": DATA_CONFIG["utts"],
        "sir_min": DATA_CONFIG["sir_min"],
        "sir_max": DATA_CONFIG["sir_max"],
        "interferers": DATA_CONFIG["interferers"],
        "test_speakers": DATA_CONFIG["test_speakers"],
        "test_utts": DATA_CONFIG["test_utts"],
        "seed": DATA_CONFIG["seed"],
    },
    "train": {
        "variant": TRAIN_CONFIG["variant"],
        "preset": TRAIN_CONFIG["preset"],
        "epochs": TRAIN_CONFIG["epochs"],
        "batch_size": TRAIN_CONFIG["batch_size"],
        "learning_rate": TRAIN_CONFIG["learning_rate"],
        "curriculum": None,
        "seed": TRAIN_CONFIG["seed"],
    },
    "extract": {"mode": "preset", "target": None, "interferer": [], "streaming": False},
    "eval": {"mode": "preset", "streaming": False},
    "dump-embeddings": {},
    "stability": {},
}

REQUIRED: Dict[str, Tuple[str, ...]] = {
    "make-dataset": ("out",),
    "train": ("manifest", "out"),
    "extract": ("ckpt", "mixture", "out"),
    "eval": ("ckpt", "manifest", "report"),
    "dump-embeddings": ("ckpt", "anchor", "mixture", "target", "interferer", "out"),
    "stability": ("ckpt",),
}


class CliParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors raise ConfigError (exit code 1)."""

    def error(self, message):
        raise ConfigError(message)


def _dest(flag: str) -> str:
    return flag.lstrip("-").replace("-", "_")


def build_parser() -> CliParser:
    parser = CliParser(prog="denet", description="Target speaker extraction toolkit")
    parser.add_argument("--config", help="JSON file with default option values")
    parser.add_argument("--log-level", default=None,
                        help=f"Logging level (default {LOGGING_CONFIG['level']})")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command, options in COMMAND_OPTIONS.items():
        sub = subparsers.add_parser(command)
        for flag, kwargs in options:
            sub.add_argument(flag, **{"default": None, **kwargs})
    return parser


def load_config_file(path: str) -> Dict[str, Any]:
    try:
        values = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise ConfigError(f"Cannot read config file {path}", e)
    if not isinstance(values, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in values.items()}


def resolve_options(args: argparse.Namespace) -> Options:
    """Merge command line, config file and built-in defaults (in that order)."""
    command = args.command
    specs = {_dest(flag): kwargs for flag, kwargs in COMMAND_OPTIONS[command]}
    file_values = load_config_file(args.config) if args.config else {}

    unknown = sorted(set(file_values) - set(specs))
    if unknown:
        raise ConfigError(f"Unknown option(s) for {command} in config file: {', '.join(unknown)}")

    merged: Dict[str, Any] = {}
    for dest, kwargs in specs.items():
        value = getattr(args, dest)
        if value is None and dest in file_values:
            value = file_values[dest]
            if "type" in kwargs and value is not None:
                value = kwargs["type"](value)
            if kwargs.get("action") == "append" and isinstance(value, str):
                value = [value]
            if "choices" in kwargs and value not in kwargs["choices"]:
                raise ConfigError(f"Invalid {dest} {value!r}; choose from {kwargs['choices']}")
        if value is None:
            value = COMMAND_DEFAULTS[command].get(dest)
        merged[dest] = value

    missing = [dest for dest in REQUIRED[command] if not merged.get(dest)]
    if missing:
        flags = ", ".join("--" + d.replace("_", "-") for d in missing)
        raise ConfigError(f"{command}: missing required option(s) {flags}")
    return argparse.Namespace(command=command, **merged)


def cmd_make_dataset(o: Options) -> int:
    result = build_toy_corpus(
        n_speakers=o.speakers,
        utts_per_speaker=o.utts,
        sir_range=(o.sir_min, o.sir_max),
        n_interferers=o.interferers,
        seed=o.seed,
        out_dir=o.out,
        test_speakers=o.test_speakers,
        test_utts=o.test_utts,
    )
    print(f"train={result.train_path} entries={len(result.train_entries)}")
    print(f"test={result.test_path} entries={len(result.test_entries)}")
    return EXIT_OK


def cmd_train(o: Options) -> int:
    cfg = TrainConfig.from_dict(vars(o))
    ok, error = cfg.validate()
    if not ok:
        raise ConfigError(error)
    manifest = read_manifest(o.manifest)

    def report_epoch(epoch: int, loss: float) -> None:
        print(f"epoch={epoch} loss={loss:.6f}", flush=True)

    checkpoint = train(manifest, cfg, on_epoch=report_epoch)
    path = save_checkpoint(checkpoint, o.out)
    print(f"checkpoint={path}")
    return EXIT_OK


def _read_aligned(paths: Sequence[str]) -> List[Waveform]:
    """WAVs truncated to their common length"""
    waves = [read_wav(p) for p in paths]
    length = min(len(w) for w in waves)
    return [Waveform(w.samples[:length], w.sample_rate_hz) for w in waves]


def cmd_extract(o: Options) -> int:
    checkpoint = load_checkpoint(o.ckpt)
    check_mode(checkpoint, o.mode)
    if needs_anchor(checkpoint, o.mode) and not o.anchor:
        raise ConfigError(f"Mode {o.mode!r} needs --anchor")

    mixture = read_wav(o.mixture)
    anchor = read_wav(o.anchor) if o.anchor else None
    target = read_wav(o.target) if o.target else None
    interferers = [read_wav(p) for p in (o.interferer or [])]
    extraction = extract_waveform(
        checkpoint, o.mode, mixture, anchor, target, interferers, streaming=bool(o.streaming)
    )
    write_wav(o.out, extraction.waveform)
    line = f"wrote={o.out} samples={len(extraction.waveform)}"
    if extraction.selected_stream is not None:
        line += f" stream={extraction.selected_stream}"
    print(line)
    return EXIT_OK


def cmd_eval(o: Options) -> int:
    checkpoint = load_checkpoint(o.ckpt)
    check_mode(checkpoint, o.mode)
    report = eval_report(checkpoint, read_manifest(o.manifest), o.mode, bool(o.streaming))
    write_report(report, o.report)
    if report["entries"]:
        print(summary_table(report))
    return EXIT_OK


def cmd_dump_embeddings(o: Options) -> int:
    checkpoint = load_checkpoint(o.ckpt)
    anchor = read_wav(o.anchor)
    mixture, target, *interferers = _read_aligned([o.mixture, o.target, *o.interferer])
    frame = embedding_points(
        checkpoint,
        magnitude(stft(anchor)),
        magnitude(stft(mixture)),
        magnitude(stft(target)),
        [magnitude(stft(w)) for w in interferers],
    )
    atomic_write_text(o.out, frame.to_csv(index=False))
    print(f"wrote={o.out} points={len(frame)}")
    return EXIT_OK


def cmd_stability(o: Options) -> int:
    stats = checkpoint_stability(load_checkpoint(o.ckpt))
    rows = [
        [space, f"{s.mean_distance:.4f}", f"{s.max_distance:.4f}", f"{s.dispersion_ratio:.4f}"]
        for space, s in stats.items()
    ]
    headers = ["Extractor space", "Mean distance", "Max distance", "Dispersion ratio"]
    print(tabulate(rows, headers=headers, tablefmt="grid"))
    return EXIT_OK


COMMANDS: Dict[str, Callable[[Options], int]] = {
    "make-dataset": cmd_make_dataset,
    "train": cmd_train,
    "extract": cmd_extract,
    "eval": cmd_eval,
    "dump-embeddings": cmd_dump_embeddings,
    "stability": cmd_stability,
}


def main(argv: Optional[Sequence[str]] = None, configure: bool = False) -> int:
    """
    Run one subcommand.

    Args:
        argv: Arguments without the program name (default sys.argv[1:])
        configure: Set up root logging from --log-level first

    Returns:
        Process exit code
    """
    try:
        args = build_parser().parse_args(argv)
        if configure:
            configure_logging(args.log_level)
        options = resolve_options(args)
        return COMMANDS[options.command](options)
    except (DenetError, OSError) as e:
        logger.error(f"Command failed: {e}", error_type=type(e).__name__)
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)
