"""SVG grouped-bar charts: one file per system preset, one panel per percent
metric, paired COM/EQM bars for each market configuration."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

PANELS = (
    ("pct_demand", "Demand DA"),
    ("pct_price", "Equil. price"),
    ("pct_gross", "Gross welfare"),
    ("pct_net", "Net welfare"),
    ("pct_consumer", "Consumer payment"),
    ("pct_reserve", "Reserve cap. payment"),
)
MODEL_STYLE = {"COM": {"color": "#2b6ca3"}, "EQM": {"color": "#e08a2c", "hatch": "//"}}


def _ordered(values):
    seen = []
    for v in values:
        if v not in seen:
            seen.append(v)
    return seen


def write_charts(records: list[dict], out_dir) -> list[Path]:
    """``records`` are result dicts keyed by the CSV column names.  Missing
    metrics (failed solves) leave a gap.  Output is deterministic."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    with plt.rc_context({"svg.hashsalt": "cooptlab", "svg.fonttype": "none"}):
        for system in _ordered(r["config_system"] for r in records):
            rows = [r for r in records if r["config_system"] == system]
            markets = _ordered(r["config_market"] for r in rows)
            models = [m for m in ("COM", "EQM") if any(r["model"] == m for r in rows)]
            fig, axes = plt.subplots(2, 3, figsize=(13, 7), sharex=True)
            width = 0.8 / max(len(models), 1)
            for ax, (key, title) in zip(axes.flat, PANELS):
                for j, model in enumerate(models):
                    xs, hs = [], []
                    for i, market in enumerate(markets):
                        match = [r for r in rows if r["config_market"] == market and r["model"] == model]
                        if match and match[0].get(key) is not None:
                            xs.append(i + (j - (len(models) - 1) / 2) * width)
                            hs.append(match[0][key])
                    ax.bar(xs, hs, width=width, label=model, edgecolor="black", linewidth=0.4,
                           **MODEL_STYLE.get(model, {}))
                ax.set_title(title, fontsize=10)
                ax.set_ylabel("% of base", fontsize=8)
                ax.axhline(0.0, color="black", linewidth=0.5)
                ax.set_xticks(range(len(markets)))
                ax.set_xticklabels(markets, rotation=45, ha="right", fontsize=8)
                ax.tick_params(axis="y", labelsize=8)
            axes.flat[0].legend(fontsize=8)
            fig.suptitle(f"System {system}")
            fig.tight_layout()
            path = out_dir / f"{system}.svg"
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
            written.append(path)
    return written
