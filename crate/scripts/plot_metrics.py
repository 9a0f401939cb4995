#!/usr/bin/env python3
"""Plot training curves from one or more `pfb train` metrics files.

    python scripts/plot_metrics.py runs/*.csv -o curves.png

Only the CSV header names are relied on. Each file is labelled with the
method and step scale from its manifest sidecar when one is present.
"""

import argparse
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402


def label_for(path: Path) -> str:
    manifest = path.with_name(path.name + ".manifest.json")
    if not manifest.exists():
        return path.stem
    cfg = json.loads(manifest.read_text())["config"]
    rank = f"(k={cfg['rank']})" if cfg.get("rank") else ""
    return f"{cfg['method']}{rank} eta0={cfg['eta0']} {cfg['schedule']}"


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("files", nargs="+", type=Path)
    parser.add_argument("-o", "--out", type=Path, default=Path("curves.png"))
    args = parser.parse_args()

    fig, axes = plt.subplots(1, 3, figsize=(15, 4))
    panels = [("train_loss", "training objective"), ("test_loss", "test NLL"), ("test_acc", "test accuracy")]
    for path in args.files:
        df = pd.read_csv(path)
        for ax, (col, _) in zip(axes, panels):
            ax.plot(df["epoch"], df[col], label=label_for(path))
    for ax, (_, title) in zip(axes, panels):
        ax.set_xlabel("epoch")
        ax.set_title(title)
    axes[0].set_yscale("log")
    axes[0].legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)


if __name__ == "__main__":
    main()
