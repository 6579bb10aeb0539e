"""CSV and SVG emission for sweep results."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from ..metrics import NmseRecord, aggregate

CSV_HEADER = ("experiment", "sweep_name", "sweep_value", "snr_db", "estimator",
              "mc_run", "n_train", "n_test", "nmse_db")

_X_LABELS = {
    "n_total": "total samples (train + test)",
    "a": "SNR (dB)",
    "P": "observation dimension P",
    "b_test": "test SNR (dB)",
}


def _num(v: float) -> str:
    return repr(float(v))


def csv_text(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([r.experiment, r.sweep_name, _num(r.sweep_value), _num(r.snr_db), r.estimator,
                    r.mc_run, r.n_train, r.n_test, _num(r.nmse_db)])
    return buf.getvalue()


def emit_csv(result, path) -> Path:
    if not result.records:
        raise ValueError("result has no records")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(csv_text(result.records))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path) -> list[NmseRecord]:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != CSV_HEADER:
                raise ValueError(f"{path}: unexpected header {header}")
            rows = list(reader)
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    return [
        NmseRecord(
            experiment=row[0], sweep_name=row[1], sweep_value=float(row[2]), snr_db=float(row[3]),
            estimator=row[4], mc_run=int(row[5]), n_train=int(row[6]), n_test=int(row[7]),
            nmse_db=float(row[8]), signal_power=float("nan"),
        )
        for row in rows
    ]


def emit_config(result, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(result.config, indent=2, sort_keys=True) + "\n")
    return path


def emit_plot(records, path, title: str = "", domain: str = "db") -> Path:
    """Mean +/- std NMSE per estimator against the sweep variable, as SVG.

    Sweeps over ``a`` or test noise are plotted against SNR in dB.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    records = list(getattr(records, "records", records))
    if not records:
        raise ValueError("no records to plot")
    sweep_name = records[0].sweep_name
    use_snr = sweep_name in ("a", "b_test")
    snr_of = {r.sweep_value: r.snr_db for r in records}
    names = []
    for r in records:
        if r.estimator not in names:
            names.append(r.estimator)

    stats = aggregate(records, domain)
    with matplotlib.rc_context({"svg.hashsalt": "gmmbench", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6.0, 4.2))
        for name in names:
            rows = sorted((s for s in stats if s.estimator == name), key=lambda s: s.sweep_value)
            x = np.array([snr_of[s.sweep_value] if use_snr else s.sweep_value for s in rows])
            y = np.array([s.mean for s in rows])
            e = np.array([s.std for s in rows])
            style = {}
            if name.startswith("mmse_"):
                style = dict(linestyle="--" if name == "mmse_bound" else ":", color="black")
            ax.errorbar(x, y, yerr=e, marker="o", markersize=3, capsize=3, label=name, **style)
        if sweep_name == "n_total":
            ax.set_xscale("log")
        ax.set_xlabel(_X_LABELS.get(sweep_name, sweep_name))
        ax.set_ylabel("NMSE (dB)")
        if title:
            ax.set_title(title)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
