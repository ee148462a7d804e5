"""Model files and evaluation/prediction CSVs.

Model file layout (all integers little-endian)::

    magic      8 bytes   b"NCLSTM\\x00\\x00"
    version    uint32    MODEL_FORMAT_VERSION
    hdr_len    uint32    length of the JSON header in bytes
    header     hdr_len   UTF-8 JSON, keys sorted
    arrays               raw little-endian tensors in header["arrays"] order

The header records dtype, shapes, the training config and the scaling
parameters needed to turn raw bins into model inputs. No timestamps are
stored, so identical models produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from ..errors import ForecastError
from .dataset import forecast_config_to_config
from .lstm import PARAM_NAMES, LstmParams
from .train import EVALUATION_COLUMNS, Evaluation, ForecastRun

MAGIC = b"NCLSTM\x00\x00"
MODEL_FORMAT_VERSION = 1


class ModelFormatError(ForecastError):
    pass


@dataclass
class ModelFile:
    params: LstmParams
    meta: dict = field(default_factory=dict)


def run_metadata(run: ForecastRun) -> dict:
    ds = run.train
    return {
        "config": forecast_config_to_config(run.config),
        "smoothing_window": run.smoothing_window,
        "feature_mins": [float(v) for v in ds.feature_mins],
        "feature_ranges": [float(v) for v in ds.feature_ranges],
        "target_min": ds.target_min,
        "target_scale": ds.target_scale,
    }


def dump_model(params: LstmParams, meta: dict | None = None) -> bytes:
    arrays = params.arrays()
    dtype = np.dtype(params.dtype).newbyteorder("<")
    header = {
        "dtype": dtype.name,
        "input_size": params.input_size,
        "hidden_units": params.hidden_units,
        "arrays": [[name, list(arrays[name].shape)] for name in PARAM_NAMES],
        "meta": meta or {},
    }
    hdr = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", MODEL_FORMAT_VERSION, len(hdr)), hdr]
    parts += [np.ascontiguousarray(arrays[name], dtype=dtype).tobytes() for name in PARAM_NAMES]
    return b"".join(parts)


def load_model(data: bytes) -> ModelFile:
    if len(data) < 16 or data[:8] != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    version, hdr_len = struct.unpack("<II", data[8:16])
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    try:
        header = json.loads(data[16 : 16 + hdr_len].decode("utf-8"))
    except ValueError as e:
        raise ModelFormatError(f"corrupt model header: {e}") from None
    dtype = np.dtype(header["dtype"]).newbyteorder("<")
    pos = 16 + hdr_len
    arrays = {}
    for name, shape in header["arrays"]:
        n = int(np.prod(shape)) * dtype.itemsize
        if pos + n > len(data):
            raise ModelFormatError(f"model file truncated in {name}")
        arrays[name] = np.frombuffer(data, dtype=dtype, count=int(np.prod(shape)), offset=pos).reshape(shape).astype(
            dtype.newbyteorder("=")
        )
        pos += n
    if pos != len(data):
        raise ModelFormatError("trailing bytes after model arrays")
    params = LstmParams(*(arrays[n] for n in PARAM_NAMES))
    params.check()
    return ModelFile(params, header.get("meta", {}))


def save_model(path, params: LstmParams, meta: dict | None = None) -> None:
    Path(path).write_bytes(dump_model(params, meta))


def read_model(path) -> ModelFile:
    return load_model(Path(path).read_bytes())


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_evaluation_csv(rows: Iterable[Evaluation], out=None) -> bytes | None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVALUATION_COLUMNS)
    for ev in rows:
        d = ev.as_row()
        w.writerow([_fmt(d[c]) for c in EVALUATION_COLUMNS])
    data = buf.getvalue().encode("utf-8")
    if out is None:
        return data
    out.write(data)
    return None


def read_evaluation_csv(data) -> list[Evaluation]:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != EVALUATION_COLUMNS:
        raise ValueError(f"evaluation CSV header must be {','.join(EVALUATION_COLUMNS)}")
    out = []
    for row in reader:
        out.append(
            Evaluation(
                train_rmse=float(row["train_rmse"]),
                test_rmse=float(row["test_rmse"]),
                series_std=float(row["series_std"]),
                relative_rmse=float(row["relative_rmse"]),
                test_std=float(row["test_std"]),
                target=row["target"],
                granularity=row["granularity"],
                smoothing_window=int(row["smoothing_window"]),
            )
        )
    return out


PREDICTION_COLUMNS = ("target", "smoothing_window", "bin_index", "bin_start", "split", "actual", "predicted")


def prediction_rows(run: ForecastRun) -> list[tuple]:
    rows = []
    for split, ds, pred in (("train", run.train, run.train_pred), ("test", run.test, run.test_pred)):
        for k, idx in enumerate(ds.target_index):
            start = ds.bin_starts[idx].strftime("%Y-%m-%dT%H:%M:%SZ") if ds.bin_starts else ""
            rows.append((ds.target.value, run.smoothing_window, int(idx), start, split, ds.targets[k], pred[k]))
    return rows


def write_predictions_csv(runs: Iterable[ForecastRun], out=None) -> bytes | None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PREDICTION_COLUMNS)
    for run in runs:
        for row in prediction_rows(run):
            w.writerow([_fmt(v) for v in row])
    data = buf.getvalue().encode("utf-8")
    if out is None:
        return data
    out.write(data)
    return None


def read_predictions_csv(data) -> list[dict]:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != PREDICTION_COLUMNS:
        raise ValueError(f"predictions CSV header must be {','.join(PREDICTION_COLUMNS)}")
    out = []
    for row in reader:
        row["smoothing_window"] = int(row["smoothing_window"])
        row["bin_index"] = int(row["bin_index"])
        row["actual"] = float(row["actual"])
        row["predicted"] = float(row["predicted"])
        out.append(row)
    return out
