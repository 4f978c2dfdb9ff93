"""
Manifest-level evaluation: per-entry SI-SDR / SDR for the unprocessed
mixture, the ideal binary mask and the model, plus report I/O.
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
from tabulate import tabulate

from src.audio.dsp import StftConfig, apply_mask, magnitude, resynthesize, stft
from src.core.checkpoint import Checkpoint
from src.core.inference import check_mode, extract_waveform
from src.data.manifest import Manifest, SampleManifestEntry
from src.metrics import sdr, si_sdr
from src.model.extractor import ideal_membership
from src.utils.error_handlers import handle_pipeline_errors
from src.utils.file_io import atomic_write_text
from src.utils.structured_logger import get_logger, log_duration
from src.utils.workers import parallel_map

logger = get_logger(__name__)

SYSTEMS = ("mixture", "ideal_binary_mask", "model")
METRICS = {"si_sdr": si_sdr, "sdr": sdr}
METRIC_LABELS = {"si_sdr": "SI-SDR (dB)", "sdr": "SDR (dB)"}


def _scores(est: np.ndarray, ref: np.ndarray) -> Dict[str, float]:
    n = min(len(est), len(ref))
    return {name: fn(est[:n], ref[:n]) for name, fn in METRICS.items()}


def evaluate_entry(
    checkpoint: Checkpoint,
    manifest: Manifest,
    entry: SampleManifestEntry,
    mode: str,
    streaming: bool = False,
    stft_cfg: Optional[StftConfig] = None,
) -> Dict[str, Any]:
    cfg = stft_cfg or StftConfig()
    sample = manifest.load_audio(entry)
    n = len(sample.mixture)
    ref = sample.target.samples

    spec = stft(sample.mixture, cfg)
    mixture_mag = magnitude(spec)
    ibm = ideal_membership(
        magnitude(stft(sample.target, cfg)),
        [magnitude(stft(w, cfg)) for w in sample.interferers],
        mixture=mixture_mag,
    )
    extraction = extract_waveform(
        checkpoint,
        mode,
        sample.mixture,
        anchor=sample.anchor,
        target=sample.target,
        interferers=sample.interferers,
        streaming=streaming,
        stft_cfg=cfg,
    )
    return {
        "id": entry.id,
        "speaker_id": entry.speaker_id,
        "sir_db": entry.sir_db,
        "num_interferers": len(entry.interferer_paths),
        "mixture": _scores(resynthesize(spec, n, cfg), ref),
        "ideal_binary_mask": _scores(
            resynthesize(apply_mask(spec, ibm.astype(np.float64)), n, cfg), ref
        ),
        "model": _scores(extraction.waveform.samples, ref),
        "selected_stream": extraction.selected_stream,
    }


def entries_frame(entries: List[Dict[str, Any]]) -> pd.DataFrame:
    """One flat row per entry, e.g. columns model_si_sdr, mixture_sdr."""
    rows = []
    for entry in entries:
        row = {k: entry[k] for k in ("id", "speaker_id", "sir_db", "num_interferers")}
        for system in SYSTEMS:
            for metric in METRICS:
                row[f"{system}_{metric}"] = entry[system][metric]
        row["selected_stream"] = entry.get("selected_stream")
        rows.append(row)
    return pd.DataFrame(rows)


def aggregate(entries: List[Dict[str, Any]]) -> Dict[str, Any]:
    """Means over entries, per system and metric."""
    frame = entries_frame(entries)
    result: Dict[str, Any] = {"num_entries": len(entries)}
    for system in SYSTEMS:
        result[system] = {
            metric: float(np.mean(frame[f"{system}_{metric}"].to_numpy())) for metric in METRICS
        }
    result["si_sdr_improvement"] = result["model"]["si_sdr"] - result["mixture"]["si_sdr"]
    return result


@handle_pipeline_errors("evaluation")
def eval_report(
    checkpoint: Checkpoint,
    manifest: Manifest,
    mode: str,
    streaming: bool = False,
    stft_cfg: Optional[StftConfig] = None,
) -> Dict[str, Any]:
    """
    Score every manifest entry (in parallel, manifest order kept).

    Raises:
        ConfigError: the mode does not apply to the checkpoint variant
    """
    check_mode(checkpoint, mode)
    with log_duration("evaluation", logger, entries=len(manifest), mode=mode):
        entries = parallel_map(
            lambda e: evaluate_entry(checkpoint, manifest, e, mode, streaming, stft_cfg),
            manifest.entries,
        )
    report = {
        "variant": checkpoint.variant,
        "mode": mode,
        "streaming": streaming,
        "entries": entries,
        "aggregate": aggregate(entries) if entries else {"num_entries": 0},
    }
    if entries:
        logger.info(
            "Evaluation finished",
            mode=mode,
            model_si_sdr=report["aggregate"]["model"]["si_sdr"],
            mixture_si_sdr=report["aggregate"]["mixture"]["si_sdr"],
        )
    return report


def write_report(report: Dict[str, Any], path: Union[str, Path]) -> Path:
    """JSON report plus a CSV mirror of the entries next to it."""
    path = Path(path)
    atomic_write_text(path, json.dumps(report, indent=2))
    csv_text = entries_frame(report["entries"]).to_csv(index=False)
    atomic_write_text(path.with_suffix(".csv"), csv_text)
    logger.info("Report written", path=str(path))
    return path


def read_report(path: Union[str, Path]) -> Dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def compare_reports(
    medium: Dict[str, Any], hostile: Dict[str, Any]
) -> Dict[str, Dict[str, float]]:
    """
    Per system/metric means of both reports and the relative degradation
    (medium - hostile) / |medium| in percent.
    """
    comparison = {}
    for system in SYSTEMS:
        for metric in METRICS:
            a = medium["aggregate"][system][metric]
            b = hostile["aggregate"][system][metric]
            comparison[f"{system}.{metric}"] = {
                "medium": a,
                "hostile": b,
                "degradation_pct": (a - b) / abs(a) * 100.0 if a != 0 else math.nan,
            }
    return comparison


def summary_table(report: Dict[str, Any]) -> str:
    """Console table of the aggregate scores."""
    agg = report["aggregate"]
    headers = ["System"] + [METRIC_LABELS[m] for m in METRICS]
    rows = [
        [name] + [f"{agg[name][m]:.2f}" for m in METRICS]
        for name in SYSTEMS
        if name in agg
    ]
    title = f"{report['variant']} / {report['mode']} ({agg['num_entries']} entries)"
    return title + "\n" + tabulate(rows, headers=headers, tablefmt="grid")
