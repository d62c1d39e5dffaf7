"""Command-line front to the pipeline.

Each subcommand is a thin client over one module: parse its flags,
call the library, print or write the result.  No pipeline logic lives
here; anything a subcommand can do is reachable from Python directly.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import NoReturn, Optional

import click

from . import dataset as ds
from . import evaluation, notation
from . import search as sv
from .errors import XqError
from .model import (
    EMBED_DIM,
    StructureConfig,
    TrainingOptions,
    build,
    load as load_checkpoint,
    save as save_checkpoint,
    train,
)
from .synthetic import ScriptedPolicy, synthesize_corpus

RECORDS_NAME = "records.txt"


class _Group(click.Group):
    """Surfaces domain errors as one-line messages instead of tracebacks."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except XqError as exc:
            raise click.ClickException(str(exc)) from exc


def _fail(message: str) -> NoReturn:
    raise click.ClickException(message)


def _parse_bins(spec: str) -> tuple[ds.EloBin, ...]:
    if spec == "standard":
        return ds.STANDARD_BINS
    if spec == "full":
        return (ds.FULL_RANGE,)
    bins = []
    for part in spec.split(","):
        lo, _, hi = part.partition(":")
        try:
            bins.append(ds.EloBin(int(lo), int(hi)))
        except ValueError as exc:
            _fail(f"bad bin {part!r}: {exc}")
    return tuple(bins)


def _parse_ratios(spec: str) -> tuple[float, float, float]:
    parts = spec.split(",")
    if len(parts) != 3:
        _fail(f"ratios need three comma-separated numbers, got {spec!r}")
    return tuple(float(p) for p in parts)  # type: ignore[return-value]


def _parse_memory(spec: str) -> Optional[int]:
    if spec.lower() in ("inf", "none", "unlimited"):
        return None
    return int(spec)


def _bin_by_label(loaded: ds.LoadedDataset, label: Optional[str]) -> ds.EloBin:
    if label is None:
        if len(loaded.bins) == 1:
            return loaded.bins[0]
        _fail(
            "dataset has several bins; pick one with --bin "
            f"(available: {', '.join(b.label for b in loaded.bins)})"
        )
    for bin_ in loaded.bins:
        if bin_.label == label:
            return bin_
    _fail(f"no bin {label!r} in this dataset")


def _read_config(path: Optional[str], sets: tuple[str, ...]) -> StructureConfig:
    text = Path(path).read_text() if path else ""
    for pair in sets:
        if "=" not in pair:
            _fail(f"--set wants key=value, got {pair!r}")
        text += "\n" + pair
    return StructureConfig.from_text(text)


def _out_file(spec) -> Path:
    path = Path(spec)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


@click.group(cls=_Group)
def main() -> None:
    """Imitate human Xiangqi players at a chosen strength range."""


# -- ingest ------------------------------------------------------------------


@main.command()
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--output", required=True, type=click.Path(), help="Dataset directory.")
@click.option("--strict", is_flag=True, help="Treat any dropped record as an error.")
def ingest(inputs, output, strict):
    """Parse record files and write one canonical records file."""
    records = []
    diagnostics = []
    for name in inputs:
        parsed, diags = notation.parse_record_file(Path(name).read_bytes())
        records.extend(parsed.records)
        diagnostics.extend(diags)
    out_dir = Path(output)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / RECORDS_NAME).write_text(notation.serialize_record_file(records))
    for diag in diagnostics:
        click.echo(f"dropped: {diag}", err=True)
    click.echo(f"{len(records)} record(s) -> {out_dir / RECORDS_NAME}")
    if strict and diagnostics:
        _fail(f"{len(diagnostics)} record(s) were dropped")


# -- synth -------------------------------------------------------------------


@main.command()
@click.option("--games", default=50, show_default=True)
@click.option("--plies", default=40, show_default=True)
@click.option("--salt", default=1, show_default=True, help="Policy family.")
@click.option("--elo", default=1050, show_default=True,
              help="Rating stamped on both players.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def synth(games, plies, salt, elo, seed, out):
    """Write a scripted calibration corpus (known attainable accuracy)."""
    records = synthesize_corpus(
        ScriptedPolicy(salt=salt), games=games, plies=plies, seed=seed, elo=elo
    )
    _out_file(out).write_text(notation.serialize_record_file(records))
    click.echo(f"{len(records)} scripted game(s) -> {out}")


# -- prepare -----------------------------------------------------------------


@main.command()
@click.argument("dataset_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--records", "records_file", type=click.Path(exists=True),
              help=f"Records file (default: <dataset_dir>/{RECORDS_NAME}).")
@click.option("--bins", default="standard", show_default=True,
              help='"standard", "full", or "lo:hi,lo:hi,...".')
@click.option("--memory", default="5", show_default=True,
              help='History window m, or "inf" for unlimited.')
@click.option("--ratios", default="0.8,0.1,0.1", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--policy", default="per-mover", show_default=True,
              type=click.Choice([p.value for p in ds.BinPolicy]))
def prepare(dataset_dir, records_file, bins, memory, ratios, seed, policy):
    """Window records into per-bin train/validation/test samples."""
    dataset_dir = Path(dataset_dir)
    source = Path(records_file) if records_file else dataset_dir / RECORDS_NAME
    if not source.exists():
        _fail(f"no records file at {source}; run ingest first or pass --records")
    parsed, diags = notation.parse_record_file(source.read_bytes())
    for diag in diags:
        click.echo(f"dropped: {diag}", err=True)

    bin_plan = _parse_bins(bins)
    m = _parse_memory(memory)
    ratio_triple = _parse_ratios(ratios)
    bin_policy = ds.BinPolicy(policy)
    by_bin, unmatched = ds.partition_by_elo(parsed.records, bin_plan, bin_policy)
    if unmatched:
        click.echo(f"{unmatched} game(s) matched no bin", err=True)

    splits = {}
    kept_records = {}
    for bin_, records in by_bin.items():
        samples = []
        for record in records:
            samples.extend(ds.make_samples(record, m, bin_, bin_policy))
        if not samples:
            continue
        splits[bin_] = ds.build_split(samples, ratio_triple, seed)
        kept_records[bin_] = records
    if not splits:
        _fail("no bin received any samples")

    ds.save_dataset(dataset_dir, splits, kept_records, m, seed, bin_policy)
    for bin_, split in splits.items():
        click.echo(
            f"{bin_.label}: train {len(split.train)}, "
            f"validation {len(split.validation)}, test {len(split.test)}"
        )


# -- train -------------------------------------------------------------------


@main.command(name="train")
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="Structure config as key=value lines; defaults when omitted.")
@click.option("--set", "sets", multiple=True, metavar="KEY=VALUE",
              help="Override one config field (repeatable).")
@click.option("--dataset", "dataset_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--bin", "bin_label", help="Bin label, e.g. (1000,1100].")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--max-epochs", default=100, show_default=True)
@click.option("--patience", default=10, show_default=True)
@click.option("--learning-rate", default=1e-3, show_default=True)
@click.option("--batch-size", default=256, show_default=True)
@click.option("--hidden", type=int, help="Override the recurrent width (toy scale).")
@click.option("--embed-dim", type=int, help="Override the embedding width (toy scale).")
def train_cmd(config_path, sets, dataset_dir, bin_label, seed, out,
              max_epochs, patience, learning_rate, batch_size, hidden, embed_dim):
    """Train one model on one bin and write a checkpoint."""
    config = _read_config(config_path, sets)
    loaded = ds.load_dataset(Path(dataset_dir))
    bin_ = _bin_by_label(loaded, bin_label)
    if loaded.m != config.m:
        _fail(
            f"dataset was windowed with m={loaded.m} but the config wants "
            f"m={config.m}; re-run prepare with a matching --memory"
        )
    options = TrainingOptions(
        learning_rate=learning_rate, batch_size=batch_size,
        max_epochs=max_epochs, patience=patience, seed=seed,
    )
    params = build(
        config, vocab_size=len(loaded.vocabulary), seed=seed,
        hidden=hidden, embed_dim=embed_dim if embed_dim else EMBED_DIM,
    )
    result = train(params, config, loaded.splits[bin_], options)
    out_path = _out_file(out)
    out_path.write_bytes(save_checkpoint(result.params, config, loaded.vocabulary))
    best = result.history.best_val_accuracy
    full = bin_ == ds.FULL_RANGE
    sidecar = {
        "elo_lower": None if full else bin_.lower,
        "elo_upper": None if full else bin_.upper,
        "val_accuracy": None if best != best else round(best, 6),
    }
    out_path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")
    click.echo(
        f"trained {len(result.history.epochs)} epoch(s) "
        f"({result.history.stop_reason}), best validation accuracy "
        f"{best:.4f} -> {out_path}"
    )


# -- search ------------------------------------------------------------------


@main.command(name="search")
@click.option("--dataset", "dataset_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--bin", "bin_label", help="Bin label to search on.")
@click.option("--plan", "plan_path", type=click.Path(exists=True),
              help="JSON plan: phases, budget, winner_budget, full_budget, seed.")
@click.option("--budget", type=int, help="Per-candidate epochs (overrides plan).")
@click.option("--seed", type=int, help="Search seed (overrides plan).")
@click.option("--out", required=True, type=click.Path(), help="JSONL log path.")
@click.option("--hidden", type=int, help="Override the recurrent width (toy scale).")
@click.option("--embed-dim", type=int, help="Override the embedding width (toy scale).")
@click.option("--learning-rate", default=1e-3, show_default=True)
@click.option("--batch-size", default=256, show_default=True)
def search_cmd(dataset_dir, bin_label, plan_path, budget, seed, out,
               hidden, embed_dim, learning_rate, batch_size):
    """Run the phased structure search and write its log."""
    plan_fields = dict(json.loads(Path(plan_path).read_text())) if plan_path else {}
    if "phases" in plan_fields:
        plan_fields["phases"] = tuple(tuple(p) for p in plan_fields["phases"])
    if budget is not None:
        plan_fields["budget"] = budget
        plan_fields.setdefault("winner_budget", budget)
    if seed is not None:
        plan_fields["seed"] = seed
    plan = sv.SearchPlan(**plan_fields)

    loaded = ds.load_dataset(Path(dataset_dir))
    bin_ = _bin_by_label(loaded, bin_label)
    if not loaded.records[bin_]:
        _fail(f"dataset stores no replayable records for {bin_.label}")
    options = TrainingOptions(learning_rate=learning_rate, batch_size=batch_size)
    log = sv.run_search(
        plan,
        loaded.records[bin_],
        bin_=bin_,
        options=options,
        vocabulary=loaded.vocabulary,
        hidden=hidden,
        embed_dim=embed_dim if embed_dim else EMBED_DIM,
    )
    _out_file(out).write_text(sv.serialize_log(log))
    click.echo(sv.report(log), nl=False)
    click.echo(f"log -> {out}")


# -- eval --------------------------------------------------------------------


@main.command(name="eval")
@click.option("--model", "model_paths", multiple=True, required=True,
              type=click.Path(exists=True),
              help="Checkpoint (repeat once per bin for --matrix).")
@click.option("--dataset", "dataset_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--bin", "bin_label", help="Bin label (single-model mode).")
@click.option("--split", default="test", show_default=True,
              type=click.Choice(["train", "validation", "test"]))
@click.option("--k", "ks", default="1,2,3,5,10", show_default=True)
@click.option("--p", "ps", default="0,0.1,0.3,0.5,0.9,1.0", show_default=True)
@click.option("--no-filter", is_flag=True, help="Skip the legality filter.")
@click.option("--matrix", is_flag=True,
              help="Evaluate every model on every bin; model order follows bins.")
@click.option("--report", "report_path", type=click.Path(), help="Write JSON report.")
@click.option("--plot", "plot_path", type=click.Path(), help="Write curve/matrix CSV.")
def eval_cmd(model_paths, dataset_dir, bin_label, split, ks, ps,
             no_filter, matrix, report_path, plot_path):
    """Measure accuracy curves, or a cross-bin matrix with --matrix."""
    loaded = ds.load_dataset(Path(dataset_dir))
    k_list = tuple(int(k) for k in ks.split(",") if k)
    p_list = tuple(float(p) for p in ps.split(",") if p)

    if matrix:
        if len(model_paths) != len(loaded.bins):
            _fail(
                "--matrix wants one --model per bin "
                f"({len(loaded.bins)} bin(s), {len(model_paths)} model(s))"
            )
        models = {}
        datasets = {}
        records = []
        for bin_, path in zip(loaded.bins, model_paths):
            models[bin_.label] = load_checkpoint(
                Path(path).read_bytes(), loaded.vocabulary
            )
            datasets[bin_.label] = getattr(loaded.splits[bin_], split)
            records.extend(loaded.records[bin_])
        labels, values = evaluation.cross_elo_matrix(
            models, datasets,
            records=records, use_filter=not no_filter,
            vocabulary=loaded.vocabulary,
        )
        csv_text = evaluation.matrix_csv(labels, values)
        click.echo(csv_text, nl=False)
        if plot_path:
            _out_file(plot_path).write_text(csv_text)
        if report_path:
            payload = {
                "labels": list(labels),
                "values": [[float(v) for v in row] for row in values],
                "split": split,
                "filtered": not no_filter,
            }
            _out_file(report_path).write_text(json.dumps(payload, indent=2) + "\n")
        return

    if len(model_paths) != 1:
        _fail("exactly one --model unless --matrix is set")
    params, config = load_checkpoint(Path(model_paths[0]).read_bytes(),
                                     loaded.vocabulary)
    bin_ = _bin_by_label(loaded, bin_label)
    samples = getattr(loaded.splits[bin_], split)
    report = evaluation.evaluate(
        params, config, samples,
        ks=k_list, ps=p_list, use_filter=not no_filter,
        records=loaded.records[bin_], vocabulary=loaded.vocabulary,
        label=f"{Path(model_paths[0]).stem} on {bin_.label} {split}",
    )
    click.echo(report.table_text(), nl=False)
    if report_path:
        payload = {
            "label": report.label,
            "samples": report.sample_count,
            "filtered": report.filtered,
            "anomalies": report.anomalies,
            "top1": report.top1,
            "top_k": [[k, acc] for k, acc in report.top_k],
            "top_p": [[p, acc] for p, acc in report.top_p],
        }
        _out_file(report_path).write_text(json.dumps(payload, indent=2) + "\n")
    if plot_path:
        lines = ["curve,cut,accuracy"]
        lines += [f"top_k,{k},{acc:.6f}" for k, acc in report.top_k]
        lines += [f"top_p,{p:g},{acc:.6f}" for p, acc in report.top_p]
        _out_file(plot_path).write_text("\n".join(lines) + "\n")


# -- serve -------------------------------------------------------------------


@main.command(name="serve")
@click.option("--models-dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--addr", default="127.0.0.1:8000", show_default=True)
@click.option("--persist", "persist_dir", type=click.Path(),
              help="Directory for per-session append logs.")
@click.option("--static", "static_dir", type=click.Path(exists=True),
              help="Static client bundle to serve at /.")
def serve_cmd(models_dir, addr, persist_dir, static_dir):
    """Serve models for live play over HTTP."""
    import uvicorn

    from .service import create_app

    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        _fail(f"--addr wants host:port, got {addr!r}")
    app = create_app(models_dir, persist_dir=persist_dir, static_dir=static_dir)
    for diag in app.state.sessions.restore_diagnostics:
        click.echo(f"session log skipped: {diag}", err=True)
    uvicorn.run(app, host=host.strip("[]"), port=int(port), log_level="info")


if __name__ == "__main__":  # pragma: no cover
    main()
