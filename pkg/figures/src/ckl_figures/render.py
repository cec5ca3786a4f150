"""Render the loss lab's CSV artifacts into figures.

Three kinds of input, identified by their exact column schemas:

* ``weights``:  doc_index,kind,q,weight            -> weight bars
* ``curves``:   branch,pq_ratio,q,g_ckl,g_bkl      -> ratio curves, two panels
* ``trainlog``: step,loss,margin,entropy,mrr10,ndcg10 -> four behavior panels

This package does no loss math of its own; every number comes from the CSVs.
Rendering is deterministic: fixed styles, a fixed SVG hash salt, and no
timestamps in the output, so identical inputs produce identical bytes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "ckl-figures"

import matplotlib.pyplot as plt

SCHEMAS = {
    "weights": ("doc_index", "kind", "q", "weight"),
    "curves": ("branch", "pq_ratio", "q", "g_ckl", "g_bkl"),
    "trainlog": ("step", "loss", "margin", "entropy", "mrr10", "ndcg10"),
}

POSITIVE_COLOR = "#1f77b4"
NEGATIVE_COLOR = "#d62728"


class SchemaError(ValueError):
    """Input CSV does not match the declared schema for its figure kind."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str  # weights | curves | trainlog
    input_path: str
    output_path: str
    second_input_path: str | None = None

    def __post_init__(self):
        if self.kind not in SCHEMAS:
            raise ValueError(f"unknown figure kind {self.kind!r}; expected one of {sorted(SCHEMAS)}")
        suffix = Path(self.output_path).suffix.lower()
        if suffix not in (".png", ".svg"):
            raise ValueError(f"unsupported image format {suffix!r}; use .png or .svg")


def read_rows(path: str, kind: str) -> list[dict]:
    expected = SCHEMAS[kind]
    p = Path(path)
    if not p.exists():
        raise SchemaError(f"input does not exist: {path}")
    with open(p, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = tuple(next(reader))
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected columns {','.join(expected)}")
        if header != expected:
            missing = [c for c in expected if c not in header]
            extra = [c for c in header if c not in expected]
            raise SchemaError(
                f"{path}: column mismatch for kind {kind!r}: "
                f"expected {','.join(expected)}; got {','.join(header)}"
                f"{'; missing ' + ','.join(missing) if missing else ''}"
                f"{'; unexpected ' + ','.join(extra) if extra else ''}"
            )
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if len(raw) != len(expected):
                raise SchemaError(f"{path}:{lineno}: expected {len(expected)} columns, got {len(raw)}")
            row = dict(zip(expected, raw))
            for key in expected:
                if key in ("kind", "branch"):
                    continue
                try:
                    row[key] = float(row[key])
                except ValueError:
                    raise SchemaError(f"{path}:{lineno}: non-numeric value {row[key]!r} in {key}")
            rows.append(row)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def _save(fig, output_path: str) -> None:
    # Date metadata would break byte-level reproducibility of SVG output.
    metadata = {"Date": None} if output_path.lower().endswith(".svg") else None
    fig.savefig(output_path, dpi=120, metadata=metadata)
    plt.close(fig)


def _render_weights(rows: list[dict], output_path: str) -> None:
    rows = sorted(rows, key=lambda r: -r["q"])
    colors = [POSITIVE_COLOR if r["kind"] == "positive" else NEGATIVE_COLOR for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(range(len(rows)), [r["weight"] for r in rows], color=colors)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels([f"{r['q']:.3f}" for r in rows], rotation=45, ha="right", fontsize=8)
    ax.set_xlabel("documents by descending student probability q")
    ax.set_ylabel("term weight")
    ax.set_title("weighted-KL term weights")
    handles = [
        plt.Rectangle((0, 0), 1, 1, color=POSITIVE_COLOR),
        plt.Rectangle((0, 0), 1, 1, color=NEGATIVE_COLOR),
    ]
    ax.legend(handles, ["positive", "negative"], frameon=False)
    fig.tight_layout()
    _save(fig, output_path)


def _render_curves(rows: list[dict], output_path: str) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    for ax, branch in zip(axes, ("positive", "negative")):
        branch_rows = [r for r in rows if r["branch"] == branch]
        if not branch_rows:
            raise SchemaError(f"no rows for branch {branch!r}")
        q_values = sorted({r["q"] for r in branch_rows})
        for i, q in enumerate(q_values):
            series = sorted((r for r in branch_rows if r["q"] == q), key=lambda r: r["pq_ratio"])
            x = [r["pq_ratio"] for r in series]
            alpha = 0.4 + 0.6 * (i + 1) / len(q_values)
            suffix = f" (q={q:g})" if len(q_values) > 1 else ""
            ax.plot(x, [r["g_ckl"] for r in series], color=POSITIVE_COLOR, alpha=alpha,
                    marker="^", markersize=3, linewidth=1.2, label="weighted KL" + suffix)
            ax.plot(x, [r["g_bkl"] for r in series], color=NEGATIVE_COLOR, alpha=alpha,
                    marker="o", markersize=3, linewidth=1.2, label="regularized KL" + suffix)
        ax.axhline(0.0, color="gray", linewidth=0.8)
        ax.set_xlabel("teacher/student probability ratio p/q")
        ax.set_title(f"{branch} documents")
        ax.legend(fontsize=7, frameon=False)
    axes[0].set_ylabel("gradient contribution ratio g")
    fig.tight_layout()
    _save(fig, output_path)


def _render_trainlog(
    rows: list[dict], output_path: str, second_rows: list[dict] | None, labels: tuple[str, str | None]
) -> None:
    panels = (
        ("margin", "margin separation"),
        ("entropy", "positive entropy (bits)"),
        ("mrr10", "MRR@10"),
        ("ndcg10", "NDCG@10"),
    )
    fig, axes = plt.subplots(2, 2, figsize=(10, 7))
    series = [(rows, labels[0], POSITIVE_COLOR)]
    if second_rows is not None:
        series.append((second_rows, labels[1] or "run 2", NEGATIVE_COLOR))
    for ax, (column, title) in zip(axes.flat, panels):
        for data, label, color in series:
            ordered = sorted(data, key=lambda r: r["step"])
            ax.plot(
                [r["step"] for r in ordered],
                [r[column] for r in ordered],
                color=color,
                linewidth=1.3,
                label=label,
            )
        ax.set_xlabel("training step")
        ax.set_ylabel(title)
        ax.legend(fontsize=8, frameon=False)
    fig.suptitle("training behavior")
    fig.tight_layout()
    _save(fig, output_path)


def render(spec: FigureSpec) -> str:
    """Render the spec's CSV into its image; returns the output path."""
    rows = read_rows(spec.input_path, spec.kind)
    if spec.kind == "weights":
        _render_weights(rows, spec.output_path)
    elif spec.kind == "curves":
        _render_curves(rows, spec.output_path)
    else:
        second = read_rows(spec.second_input_path, "trainlog") if spec.second_input_path else None
        labels = (
            Path(spec.input_path).stem,
            Path(spec.second_input_path).stem if spec.second_input_path else None,
        )
        _render_trainlog(rows, spec.output_path, second, labels)
    return spec.output_path
