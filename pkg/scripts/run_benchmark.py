#!/usr/bin/env python3
"""
Script to benchmark the three model variants on the synthetic toy corpus

Builds the corpus, trains denet, danet_anchor and danet, evaluates every
inference mode on the held-out speakers, runs the two-speaker denet
checkpoint on three-speaker mixtures and prints the comparison table plus
the extractor stability statistics.
"""
import argparse
import json
import sys
from pathlib import Path

from tabulate import tabulate

# Add project root to Python path
sys.path.insert(0, str(Path(__file__).parent.parent))

from config.settings import DATA_CONFIG, TRAIN_CONFIG  # noqa: E402
from src.analysis import checkpoint_stability  # noqa: E402
from src.config_validator import TrainConfig  # noqa: E402
from src.core.checkpoint import save_checkpoint  # noqa: E402
from src.core.evaluator import compare_reports, eval_report, write_report  # noqa: E402
from src.core.trainer import train  # noqa: E402
from src.data.corpus import build_toy_corpus  # noqa: E402
from src.data.manifest import read_manifest  # noqa: E402
from src.utils.file_io import atomic_write_text  # noqa: E402
from src.utils.structured_logger import configure_logging, get_logger  # noqa: E402

logger = get_logger("run_benchmark")

# (row label, variant, mode)
EVALUATIONS = [
    ("DENet (preset)", "denet", "preset"),
    ("DENet (oracle membership)", "denet", "oracle"),
    ("DANet-Anchor", "danet_anchor", "anchor"),
    ("DANet-Anchor (primary preset)", "danet_anchor", "preset"),
    ("DANet-Oracle", "danet", "danet-oracle"),
    ("DANet-Nearest", "danet", "nearest"),
]


def make_corpus(args, out_dir: Path, interferers: int, sir_range=None):
    sir_range = sir_range or (args.sir_min, args.sir_max)
    return build_toy_corpus(
        n_speakers=args.speakers,
        utts_per_speaker=args.utts,
        sir_range=sir_range,
        n_interferers=interferers,
        seed=args.seed,
        out_dir=out_dir,
        test_speakers=args.test_speakers,
        test_utts=args.test_utts,
    )


def train_variant(args, variant: str, manifest_path: Path, ckpt_path: Path):
    cfg = TrainConfig.from_dict(
        {"variant": variant, "preset": args.preset, "epochs": args.epochs, "seed": args.seed}
    )

    def report(epoch, loss):
        print(f"[{variant}] epoch={epoch} loss={loss:.6f}", flush=True)

    checkpoint = train(read_manifest(manifest_path), cfg, on_epoch=report)
    save_checkpoint(checkpoint, ckpt_path)
    return checkpoint


def main():
    parser = argparse.ArgumentParser(description="Benchmark extractor variants on the toy corpus")
    parser.add_argument("--out", default="benchmark", help="Working directory")
    parser.add_argument("--speakers", type=int, default=DATA_CONFIG["speakers"])
    parser.add_argument("--utts", type=int, default=DATA_CONFIG["utts"])
    parser.add_argument("--test-speakers", type=int, default=DATA_CONFIG["test_speakers"])
    parser.add_argument("--test-utts", type=int, default=DATA_CONFIG["test_utts"])
    parser.add_argument("--sir-min", type=float, default=DATA_CONFIG["sir_min"])
    parser.add_argument("--sir-max", type=float, default=DATA_CONFIG["sir_max"])
    parser.add_argument("--epochs", type=int, default=TRAIN_CONFIG["epochs"])
    parser.add_argument("--preset", default=TRAIN_CONFIG["preset"])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--hostile", action="store_true",
                        help="Also evaluate denet on a -5..0 dB SIR test set")
    parser.add_argument("--skip-generalization", action="store_true",
                        help="Skip the three-speaker run")
    args = parser.parse_args()

    configure_logging()
    out = Path(args.out)
    corpus = make_corpus(args, out / "corpus", interferers=1)
    test_manifest = read_manifest(corpus.test_path)

    checkpoints = {
        variant: train_variant(args, variant, corpus.train_path, out / f"{variant}.dxnet")
        for variant in ("denet", "danet_anchor", "danet")
    }

    reports = {}
    for label, variant, mode in EVALUATIONS:
        report = eval_report(checkpoints[variant], test_manifest, mode)
        write_report(report, out / "reports" / f"{variant}_{mode}.json")
        reports[label] = report

    first = next(iter(reports.values()))["aggregate"]
    rows = [
        ["Orig Mixture", first["mixture"]["si_sdr"], first["mixture"]["sdr"]],
        ["Ideal binary mask", first["ideal_binary_mask"]["si_sdr"],
         first["ideal_binary_mask"]["sdr"]],
    ]
    rows += [
        [label, r["aggregate"]["model"]["si_sdr"], r["aggregate"]["model"]["sdr"]]
        for label, r in reports.items()
    ]
    print("\nTwo-speaker mixtures (held-out speakers)")
    print(tabulate(rows, headers=["Method", "SI-SDR (dB)", "SDR (dB)"],
                   tablefmt="grid", floatfmt=".2f"))

    summary = {label: r["aggregate"] for label, r in reports.items()}

    if not args.skip_generalization:
        three = make_corpus(args, out / "corpus_3spk", interferers=2)
        report = eval_report(checkpoints["denet"], read_manifest(three.test_path), "preset")
        write_report(report, out / "reports" / "denet_3spk_preset.json")
        agg = report["aggregate"]
        print("\nThree-speaker mixtures (denet trained on two-speaker mixtures)")
        print(tabulate(
            [["Orig Mixture", agg["mixture"]["si_sdr"], agg["mixture"]["sdr"]],
             ["DENet (preset)", agg["model"]["si_sdr"], agg["model"]["sdr"]]],
            headers=["Method", "SI-SDR (dB)", "SDR (dB)"], tablefmt="grid", floatfmt=".2f",
        ))
        summary["three_speaker"] = agg

    if args.hostile:
        hostile = make_corpus(args, out / "corpus_hostile", interferers=1, sir_range=(-5.0, 0.0))
        report = eval_report(checkpoints["denet"], read_manifest(hostile.test_path), "preset")
        comparison = compare_reports(reports["DENet (preset)"], report)
        print("\nMedium vs hostile SIR (denet preset)")
        print(tabulate(
            [[k, v["medium"], v["hostile"], v["degradation_pct"]] for k, v in comparison.items()],
            headers=["System.metric", "0..10 dB", "-5..0 dB", "Degradation %"],
            tablefmt="grid", floatfmt=".2f",
        ))
        summary["hostile_comparison"] = comparison

    stats = checkpoint_stability(checkpoints["denet"])
    print("\nExtractor stability (denet training extractors)")
    print(tabulate(
        [[space, s.mean_distance, s.max_distance, s.dispersion_ratio]
         for space, s in stats.items()],
        headers=["Extractor space", "Mean distance", "Max distance", "Dispersion ratio"],
        tablefmt="grid", floatfmt=".4f",
    ))
    summary["stability"] = {space: s.to_dict() for space, s in stats.items()}

    atomic_write_text(out / "benchmark.json", json.dumps(summary, indent=2))
    logger.info("Benchmark finished", out=str(out))


if __name__ == "__main__":
    main()
