#!/usr/bin/env python3
"""
Script to build a sample manifest for a directory of prepared WAV samples
"""
import argparse
import sys
from pathlib import Path

from tabulate import tabulate

# Add project root to Python path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.data.manifest import index_wav_corpus  # noqa: E402
from src.utils.error_handlers import DenetError, exit_code_for  # noqa: E402
from src.utils.structured_logger import configure_logging  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(
        description="Index sample directories (anchor/mixture/target/interferer*.wav)"
    )
    parser.add_argument("root", help="Directory with one sub-directory per sample")
    parser.add_argument("manifest", help="Manifest (JSON lines) to write")
    parser.add_argument("--show", type=int, default=10, help="Entries to print")
    args = parser.parse_args()

    configure_logging()
    try:
        manifest = index_wav_corpus(args.root, args.manifest)
    except (DenetError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)

    rows = [
        [e.id, e.speaker_id, len(e.interferer_paths), f"{e.sir_db:.2f}"]
        for e in manifest.entries[: args.show]
    ]
    print(tabulate(rows, headers=["Sample", "Speaker", "Interferers", "SIR (dB)"],
                   tablefmt="grid"))
    print(f"{len(manifest)} entries written to {args.manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
