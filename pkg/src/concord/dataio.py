"""On-disk formats: datasets, configs, experiment manifests, metric CSVs.

A dataset is a directory with one cloud per file plus a ``dataset.json``
manifest listing the files in order. Clouds are stored either as XYZ text
(one ``x y z`` line per point, full decimal precision) or as a packed
binary: magic ``PCLD1``, point count as a little-endian uint64, then
float32 LE coordinate triples.

Configs are flat ``key = value`` text with typed keys; unknown keys are
hard errors because a silently ignored typo can corrupt a whole ablation.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .geometry import PointCloud, as_cloud
from .model import TrainConfig

PCLD_MAGIC = b"PCLD1"
DATASET_MANIFEST = "dataset.json"
METRICS_HEADER = ("run", "epoch", "split", "cd_l2", "cd_l1", "da_cd", "f1_1pct", "ms_per_step")


# --- single clouds ---------------------------------------------------------


def write_xyz(path, cloud) -> None:
    c = as_cloud(cloud)
    with open(path, "w", encoding="ascii") as fh:
        for x, y, z in c.points:
            fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")


def read_xyz(path, label: str | None = None) -> PointCloud:
    pts = np.loadtxt(path, dtype=np.float64, ndmin=2)
    return PointCloud(pts, label=label)


def write_pcld(path, cloud) -> None:
    c = as_cloud(cloud)
    with open(path, "wb") as fh:
        fh.write(PCLD_MAGIC)
        fh.write(struct.pack("<Q", len(c)))
        fh.write(c.points.astype("<f4").tobytes())


def read_pcld(path, label: str | None = None) -> PointCloud:
    with open(path, "rb") as fh:
        magic = fh.read(len(PCLD_MAGIC))
        if magic != PCLD_MAGIC:
            raise ValueError(f"not a PCLD1 file: bad magic {magic!r}")
        (count,) = struct.unpack("<Q", fh.read(8))
        data = np.frombuffer(fh.read(12 * count), dtype="<f4")
        if data.size != 3 * count:
            raise ValueError("truncated PCLD1 file")
    return PointCloud(data.astype(np.float64).reshape(count, 3), label=label)


# --- datasets --------------------------------------------------------------


def write_dataset(directory, clouds, fmt: str = "xyz") -> None:
    """Write clouds plus a manifest; labels default to the file stem."""
    if fmt not in ("xyz", "pcld1"):
        raise ValueError(f"unknown dataset format {fmt!r}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ext = "xyz" if fmt == "xyz" else "pcld"
    entries = []
    for i, cloud in enumerate(clouds):
        c = as_cloud(cloud)
        label = c.label if c.label is not None else f"cloud-{i:05d}"
        fname = f"{i:05d}.{ext}"
        if fmt == "xyz":
            write_xyz(directory / fname, c)
        else:
            write_pcld(directory / fname, c)
        entries.append({"file": fname, "label": label})
    manifest = {"format": fmt, "clouds": entries}
    with open(directory / DATASET_MANIFEST, "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(directory) -> list[PointCloud]:
    directory = Path(directory)
    manifest_path = directory / DATASET_MANIFEST
    if not manifest_path.exists():
        raise ValueError(f"not a dataset directory: missing {DATASET_MANIFEST} in {directory}")
    with open(manifest_path, encoding="ascii") as fh:
        manifest = json.load(fh)
    fmt = manifest.get("format", "xyz")
    reader = read_xyz if fmt == "xyz" else read_pcld
    return [reader(directory / e["file"], label=e["label"]) for e in manifest["clouds"]]


# --- config files ----------------------------------------------------------


def _parse_int(s):
    return int(s)


def _parse_float(s):
    return float(s)


def _parse_widths(s):
    parts = [p for p in s.replace(",", " ").split() if p]
    return tuple(int(p) for p in parts)


def _fmt_widths(v):
    return ",".join(str(int(x)) for x in v)


# key -> (parser, formatter); covers every TrainConfig field.
_CONFIG_KEYS = {
    "epochs": (_parse_int, str),
    "batch_size": (_parse_int, str),
    "n_views": (_parse_int, str),
    "missing_ratio": (_parse_float, repr),
    "lr_max": (_parse_float, repr),
    "lr_min": (_parse_float, repr),
    "weight_decay": (_parse_float, repr),
    "alpha": (_parse_float, repr),
    "beta": (_parse_float, repr),
    "delta": (_parse_float, repr),
    "seed": (_parse_int, str),
    "input_size": (_parse_int, str),
    "output_size": (_parse_int, str),
    "encoder_widths": (_parse_widths, _fmt_widths),
    "decoder_widths": (_parse_widths, _fmt_widths),
    "beta1": (_parse_float, repr),
    "beta2": (_parse_float, repr),
    "eps": (_parse_float, repr),
    "eval_fraction": (_parse_float, repr),
    "f1_tau": (_parse_float, repr),
}


def parse_config_text(text: str, path=None) -> TrainConfig:
    """Parse flat ``key = value`` lines into a TrainConfig."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw!r}", path, lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}", path, lineno)
        if key in values:
            raise ConfigError(f"duplicate config key {key!r}", path, lineno)
        parser, _ = _CONFIG_KEYS[key]
        try:
            values[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", path, lineno) from exc
    return TrainConfig(**values)


def read_config(path) -> TrainConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", path) from exc
    return parse_config_text(text, path=path)


def serialize_config(config: TrainConfig) -> str:
    lines = []
    for key, (_, fmt) in _CONFIG_KEYS.items():
        lines.append(f"{key} = {fmt(getattr(config, key))}")
    return "\n".join(lines) + "\n"


def write_config(path, config: TrainConfig) -> None:
    Path(path).write_text(serialize_config(config), encoding="ascii")


# --- experiment manifests ---------------------------------------------------


@dataclass(frozen=True)
class ExperimentManifest:
    """What an output directory contains and how it was produced."""

    kind: str
    config: TrainConfig
    seeds: tuple[int, ...]
    outputs: dict[str, str]

    def to_json(self) -> str:
        payload = {
            "kind": self.kind,
            "config": {k: fmt(getattr(self.config, k)) for k, (_, fmt) in _CONFIG_KEYS.items()},
            "seeds": list(self.seeds),
            "outputs": dict(self.outputs),
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def manifest_from_json(text: str) -> ExperimentManifest:
    payload = json.loads(text)
    config_text = "\n".join(f"{k} = {v}" for k, v in payload["config"].items())
    return ExperimentManifest(
        kind=payload["kind"],
        config=parse_config_text(config_text),
        seeds=tuple(int(s) for s in payload["seeds"]),
        outputs=dict(payload["outputs"]),
    )


def write_manifest(path, manifest: ExperimentManifest) -> None:
    Path(path).write_text(manifest.to_json(), encoding="ascii")


def read_manifest(path) -> ExperimentManifest:
    return manifest_from_json(Path(path).read_text(encoding="ascii"))


# --- metric CSVs ------------------------------------------------------------


def format_float(x: float) -> str:
    return repr(float(x))


def write_metrics_csv(path, rows) -> None:
    """Rows are (run, epoch, split, cd_l2, cd_l1, da_cd, f1, ms_per_step)."""
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for run, epoch, split, *metrics in rows:
            writer.writerow([run, epoch, split] + [format_float(m) for m in metrics])


def read_metrics_csv(path) -> tuple[list[dict], int]:
    """Parse a metrics CSV leniently; returns (rows, skipped_count)."""
    rows = []
    skipped = 0
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != METRICS_HEADER:
            raise ValueError(f"unrecognized metrics header in {path}")
        for rec in reader:
            if len(rec) != len(METRICS_HEADER):
                skipped += 1
                continue
            try:
                rows.append({
                    "run": rec[0],
                    "epoch": int(rec[1]),
                    "split": rec[2],
                    "cd_l2": float(rec[3]),
                    "cd_l1": float(rec[4]),
                    "da_cd": float(rec[5]),
                    "f1_1pct": float(rec[6]),
                    "ms_per_step": float(rec[7]),
                })
            except ValueError:
                skipped += 1
    return rows, skipped
