"""CSV tables and matplotlib renderings of the study results."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

FIGURE_FORMATS = ("png", "svg")


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(r)
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _save(fig, stem: Path, formats) -> list[Path]:
    out = []
    for ext in formats:
        p = stem.with_suffix("." + ext)
        fig.savefig(p, dpi=120, bbox_inches="tight")
        out.append(p)
    plt.close(fig)
    return out


def _two_panel(title: str):
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(10, 3.8))
    fig.suptitle(title)
    a1.set_ylabel("magnitude MAPE (%)")
    a2.set_ylabel("angle MAE (rad)")
    for a in (a1, a2):
        a.grid(alpha=0.3)
    return fig, a1, a2


def hop_figure(rows, out_dir, formats=FIGURE_FORMATS) -> list[Path]:
    """rows: HopRow sequence. Writes fig3_hops.csv and a bar chart."""
    out_dir = Path(out_dir)
    csv_path = write_csv(out_dir / "fig3_hops.csv", ["hops", "n_buses", "mag_mape_pct", "ang_mae_rad"],
                         [(r.hops, r.n_buses, r.mag_mape, r.ang_mae) for r in rows])
    fig, a1, a2 = _two_panel("Error by distance from the nearest PMU bus")
    h = [r.hops for r in rows]
    a1.bar(h, [r.mag_mape for r in rows], color="tab:blue")
    a2.bar(h, [r.ang_mae for r in rows], color="tab:orange")
    for a in (a1, a2):
        a.set_xlabel("hops")
    return [csv_path] + _save(fig, out_dir / "fig3_hops", formats)


def _sweep_lines(rows, key: str, xlabel: str, title: str, stem: Path, scale: float, formats):
    fig, a1, a2 = _two_panel(title)
    modes = list(dict.fromkeys(r.mode for r in rows))
    for m in modes:
        sel = [r for r in rows if r.mode == m]
        x = [getattr(r, key) * scale for r in sel]
        a1.plot(x, [r.mag_mape for r in sel], marker="o", label=m)
        a2.plot(x, [r.ang_mae for r in sel], marker="o", label=m)
    for a in (a1, a2):
        a.set_xlabel(xlabel)
        a.legend(title="correction")
    return _save(fig, stem, formats)


def sweep_figures(eta_rows, k_rows, out_dir, formats=FIGURE_FORMATS) -> list[Path]:
    """SweepRow sequences for the bad-data fraction and severity sweeps."""
    out_dir = Path(out_dir)
    header = ["eta", "k", "mode", "mag_mape_pct", "ang_mae_rad"]
    paths = []
    if eta_rows:
        paths.append(write_csv(out_dir / "fig6_eta.csv", header,
                               [(r.eta, r.k, r.mode, r.mag_mape, r.ang_mae) for r in eta_rows]))
        paths += _sweep_lines(eta_rows, "eta", "bad-data fraction (%)", "Error versus bad-data fraction",
                              out_dir / "fig6_eta", 100.0, formats)
    if k_rows:
        paths.append(write_csv(out_dir / "fig7_severity.csv", header,
                               [(r.eta, r.k, r.mode, r.mag_mape, r.ang_mae) for r in k_rows]))
        paths += _sweep_lines(k_rows, "k", "severity (multiples of sigma)", "Error versus bad-data severity",
                              out_dir / "fig7_severity", 1.0, formats)
    return paths


def dbsize_figure(rows, out_dir, formats=FIGURE_FORMATS) -> list[Path]:
    """DbSizeRow sequence. Writes fig8_dbsize.csv and a line chart."""
    out_dir = Path(out_dir)
    csv_path = write_csv(out_dir / "fig8_dbsize.csv", ["size", "mag_mape_pct", "ang_mae_rad", "epochs"],
                         [(r.size, r.mag_mape, r.ang_mae, r.epochs) for r in rows])
    fig, a1, a2 = _two_panel("Error versus training database size")
    s = [r.size for r in rows]
    a1.plot(s, [r.mag_mape for r in rows], marker="o")
    a2.plot(s, [r.ang_mae for r in rows], marker="o", color="tab:orange")
    for a in (a1, a2):
        a.set_xlabel("database size (samples)")
    return [csv_path] + _save(fig, out_dir / "fig8_dbsize", formats)
