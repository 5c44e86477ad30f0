import json
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np
import pandas as pd
from scipy.io import wavfile

from src.models.acoustics import ImpulseResponse
from src.models.trajectory import RunReport, TimingTable
from src.utils.logger import setup_logger

logger = setup_logger(__name__)

PathLike = Union[str, Path]

CSV_FLOAT_FORMAT = "%.17g"
INT16_FULL_SCALE = 32767
MANIFEST_NAME = "manifest.json"
TIMINGS_NAME = "timings.csv"


def pose_stem(index: int, total: int) -> str:
    width = max(3, len(str(max(total - 1, 0))))
    return f"pose_{index:0{width}d}"


def impulse_frame(impulse: ImpulseResponse) -> pd.DataFrame:
    return pd.DataFrame({"time_s": impulse.time_axis(), "amplitude": impulse.samples})


def _write_json(path: Path, payload: Dict[str, Any]) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


class ImpulseExporter:
    """Writes impulses, manifests and timing tables into a run directory."""

    def __init__(self, directory: PathLike):
        self.directory = Path(directory)

    def _ensure_directory(self) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)

    def write_csv(self, stem: str, impulse: ImpulseResponse) -> Path:
        """``time_s,amplitude`` rows, full precision so reruns are byte-identical."""
        self._ensure_directory()
        path = self.directory / f"{stem}.csv"
        try:
            impulse_frame(impulse).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
        except OSError as e:
            logger.error("impulse_csv_write_failed", path=str(path), error=str(e))
            raise
        return path

    def write_wav(self, stem: str, impulse: ImpulseResponse) -> Path:
        """Peak-normalised 16-bit mono WAV plus a JSON sidecar with the scale factor."""
        self._ensure_directory()
        path = self.directory / f"{stem}.wav"
        peak = float(np.abs(impulse.samples).max(initial=0.0))
        scale = INT16_FULL_SCALE / peak if peak > 0 else 0.0
        pcm = np.round(impulse.samples * scale).astype(np.int16)
        try:
            wavfile.write(path, int(round(impulse.sample_rate)), pcm)
            _write_json(
                path.with_name(f"{path.name}.json"),
                {
                    "peak_amplitude": peak,
                    "scale": scale,
                    "sample_rate": impulse.sample_rate,
                    "samples": impulse.n,
                },
            )
        except OSError as e:
            logger.error("impulse_wav_write_failed", path=str(path), error=str(e))
            raise
        return path

    def write_report(self, report: RunReport, manifest: Dict[str, Any], write_wav: bool = True) -> Path:
        """Per-pose impulse files, ``timings.csv`` and ``manifest.json``."""
        self._ensure_directory()
        poses: List[Dict[str, Any]] = []
        for point in report.points:
            stem = pose_stem(point.index, report.point_count)
            self.write_csv(stem, point.impulse)
            if write_wav:
                self.write_wav(stem, point.impulse)
            poses.append(
                {
                    "index": point.index,
                    "file": f"{stem}.csv",
                    "position": list(point.pose.position),
                    "boresight": list(point.pose.boresight),
                    "facet_count": point.facet_count,
                    "wall_time_s": point.wall_time_s,
                }
            )

        report.timings_frame().to_csv(self.directory / TIMINGS_NAME, index=False)
        payload = dict(manifest)
        payload["poses"] = poses
        payload["point_count"] = report.point_count
        payload["tree_count"] = report.tree_count
        payload["total_wall_time_s"] = report.total_wall_time_s
        path = _write_json(self.directory / MANIFEST_NAME, payload)
        logger.info("run_exported", directory=str(self.directory), poses=report.point_count)
        return path

    def write_timing_table(self, table: TimingTable, name: str = "timing_table.csv") -> Path:
        self._ensure_directory()
        path = self.directory / name
        table.to_frame().to_csv(path, float_format="%.9g")
        return path


def read_manifest(run_directory: PathLike) -> Dict[str, Any]:
    path = Path(run_directory) / MANIFEST_NAME
    with path.open(encoding="utf-8") as handle:
        return json.load(handle)


def plot_data(frame: pd.DataFrame, sample_rate: float) -> Dict[str, Any]:
    """Series behind an impulse plot plus a peak annotation at argmax |amplitude|."""
    impulse = ImpulseResponse(samples=frame["amplitude"].to_numpy(dtype=float), sample_rate=sample_rate)
    amplitude = impulse.samples
    peak = int(np.argmax(np.abs(amplitude))) if amplitude.size else 0
    return {
        "sample_rate": sample_rate,
        "time_s": frame["time_s"].tolist(),
        "amplitude": amplitude.tolist(),
        "envelope": impulse.envelope().tolist(),
        "peak": {
            "index": peak,
            "time_s": float(frame["time_s"].iloc[peak]) if amplitude.size else 0.0,
            "amplitude": float(amplitude[peak]) if amplitude.size else 0.0,
        },
    }


def write_plot_data(run_directory: PathLike) -> List[Path]:
    """One ``<pose>.plot.json`` per impulse CSV listed in the run manifest."""
    run_directory = Path(run_directory)
    manifest = read_manifest(run_directory)
    sample_rate = float(manifest["acoustic"]["sample_rate"])
    written = []
    for pose in manifest["poses"]:
        csv_path = run_directory / pose["file"]
        frame = pd.read_csv(csv_path)
        target = csv_path.with_suffix(".plot.json")
        _write_json(target, plot_data(frame, sample_rate))
        written.append(target)
    logger.info("plot_data_written", directory=str(run_directory), files=len(written))
    return written
