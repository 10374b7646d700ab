"""Command-line entry point.

Subcommands cover the whole artifact flow: ``build`` turns an observation
stream into a concrete map, ``abstract`` lifts that into the anchor map,
``query`` ranks anchors for a feature, ``navigate`` runs episodes in a
simulated world, ``simulate`` runs full benchmark suites, and ``eval`` scores
maps and episode logs.

Exit codes: 0 success, 1 usage error, 2 broken or inconsistent input data,
3 internal failure. Every run is deterministic given its inputs and seeds;
wall-clock timing is printed to stdout only, never written into output files,
so identical invocations produce byte-identical artifacts. Config precedence
is defaults < --config file < --set flags, and the effective config is echoed
into each output file's header.
"""

from __future__ import annotations

import copy
import json
import time
from collections import Counter
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import click
import numpy as np
import yaml

from .abstract import abstract_map
from .bench import build_scenario_map, run_benchmark
from .config import RunConfig
from .errors import ConfigError, DataError, SemnavError
from .features import as_feature
from .mapio import (
    load_abstract,
    load_concrete,
    load_labeled,
    load_scene,
    read_episode_log,
    save_abstract,
    save_concrete,
    save_scene,
    write_episode_log,
)
from .metrics import (
    episode_succeeded,
    failure_kind,
    labeled_cloud_from_map,
    odr,
    segmentation_metrics,
)
from .navigation import (
    STRATEGIES,
    NavigationEpisode,
    Query,
    rank_anchors,
    run_episode,
)
from .pipeline import build_from_stream
from .sim import SimEpisodeWorld, load_scenario
from .stream import read_stream


# --- shared option plumbing -------------------------------------------------


def _config_options(fn):
    fn = click.option(
        "--set",
        "overrides",
        multiple=True,
        metavar="KEY=VALUE",
        help="Override one config value (repeatable).",
    )(fn)
    fn = click.option(
        "--config",
        "config_path",
        type=click.Path(exists=True, dir_okay=False),
        default=None,
        help="YAML config file.",
    )(fn)
    return fn


def _effective_config(
    config_path: Optional[str], overrides: Sequence[str]
) -> Tuple[RunConfig, frozenset]:
    """Merged config plus the set of keys the caller pinned explicitly."""
    data: Dict[str, object] = {}
    if config_path:
        try:
            raw = yaml.safe_load(Path(config_path).read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {config_path}: unparseable YAML: {exc}") from exc
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {config_path} must hold a mapping")
        data.update(raw)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise click.UsageError(f"--set needs KEY=VALUE, got {item!r}")
        try:
            data[key.strip()] = yaml.safe_load(value)
        except yaml.YAMLError as exc:
            raise click.UsageError(f"--set {item!r}: unparseable value: {exc}")
    return RunConfig.from_dict(data), frozenset(data)


def _adopt_dim(
    config: RunConfig, pinned: frozenset, file_dim: int, source: str
) -> RunConfig:
    """Follow the input file's feature dimension unless the caller pinned one."""
    if "dim" in pinned:
        if config.dim != file_dim:
            raise DataError(
                f"{source} carries {file_dim}-dim features but config pins dim={config.dim}"
            )
        return config
    if config.dim != file_dim:
        return config.with_overrides({"dim": file_dim})
    return config


def _load_feature_file(path: str) -> np.ndarray:
    try:
        arr = np.load(path)
    except (OSError, ValueError) as exc:
        raise DataError(f"feature file {path}: {exc}") from exc
    arr = np.asarray(arr, dtype=np.float64).reshape(-1)
    if arr.size == 0 or not np.isfinite(arr).all():
        raise DataError(f"feature file {path}: need a finite non-empty vector")
    return arr


def _write_json(path: str, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# --- command group ----------------------------------------------------------


@click.group(name="semnav")
def cli() -> None:
    """Open-vocabulary object mapping, retrieval, and navigation tools."""


@cli.command()
@click.argument("stream", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False),
              help="Concrete map output (.dmcm).")
@click.option("--scene", "scene_path", type=click.Path(dir_okay=False), default=None,
              help="Also write the accumulated scene cloud (.dmsc).")
@click.option("--stats-json", "stats_path", type=click.Path(dir_okay=False), default=None,
              help="Write machine-readable counters (no timing).")
@click.option("--stability/--no-stability", "enable_stability", default=True,
              help="Drop objects that fail the stability check.")
@click.option("--split/--no-split", "enable_split", default=True,
              help="Split objects with persistent class conflicts.")
@_config_options
def build(
    stream: str,
    output: str,
    scene_path: Optional[str],
    stats_path: Optional[str],
    enable_stability: bool,
    enable_split: bool,
    config_path: Optional[str],
    overrides: Sequence[str],
) -> None:
    """Build a concrete object map from an observation stream (.dmos)."""
    config, pinned = _effective_config(config_path, overrides)
    with open(stream, "rb") as fh:
        items, reader = read_stream(fh)
    config = _adopt_dim(config, pinned, reader.header.dim, stream)
    cmap, scene, stats = build_from_stream(
        items, config, enable_stability=enable_stability, enable_split=enable_split
    )
    save_concrete(cmap, output)
    if scene_path:
        save_scene(scene, scene_path, config)
    if stats_path:
        _write_json(
            stats_path,
            {
                "config": config.to_dict(),
                "objects": len(cmap.objects),
                "frames": stats.frames,
                "observations": stats.observations,
                "matched": stats.matched,
                "created": stats.created,
                "removed_by_stability": stats.removed_by_stability,
                "splits": stats.splits,
                "keyframes": stats.keyframes,
                "rejected_observations": reader.rejected_observations,
                "rejected_frames": reader.rejected_frames,
            },
        )
    click.echo(f"objects: {len(cmap.objects)}")
    click.echo(
        f"frames: {stats.frames}  observations: {stats.observations}  "
        f"keyframes: {stats.keyframes}"
    )
    click.echo(
        f"rejected: {reader.rejected_observations} observations, "
        f"{reader.rejected_frames} frames"
    )
    click.echo(
        f"time per frame: {stats.seconds_per_frame * 1000:.3f} ms "
        f"({stats.frames_per_second:.1f} frames/s)"
    )
    click.echo(f"wrote {output}")


@cli.command("abstract")
@click.argument("concrete", type=click.Path(exists=True, dir_okay=False))
@click.argument("scene", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False),
              help="Abstract map output (.dmam).")
@click.option("--template", "template_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Static-class template feature (.npy).")
@click.option("--scenario", "scenario_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Scenario file whose vocabulary provides the template.")
@_config_options
def abstract_cmd(
    concrete: str,
    scene: str,
    output: str,
    template_path: Optional[str],
    scenario_path: Optional[str],
    config_path: Optional[str],
    overrides: Sequence[str],
) -> None:
    """Lift a concrete map into anchors, volatiles, and an occupancy layout."""
    if (template_path is None) == (scenario_path is None):
        raise click.UsageError("give exactly one of --template or --scenario")
    config, pinned = _effective_config(config_path, overrides)
    cmap = load_concrete(concrete)
    config = _adopt_dim(config, pinned, cmap.config.dim, concrete)
    scene_cloud = load_scene(scene)
    if template_path is not None:
        template = _load_feature_file(template_path)
    else:
        template = load_scenario(scenario_path).vocabulary.static_template()
    if template.shape != (config.dim,):
        raise DataError(
            f"template has dimension {template.shape[0]}, map uses {config.dim}"
        )
    amap = abstract_map(cmap, as_feature(template), scene_cloud.cloud, config)
    save_abstract(amap, config, output)
    click.echo(f"anchors: {len(amap.anchors)}")
    click.echo(f"layout cells: {len(amap.layout.occupied)}")
    click.echo(f"wrote {output}")


@cli.command()
@click.argument("abstract_map", type=click.Path(exists=True, dir_okay=False))
@click.option("--feature", "feature_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Query feature vector (.npy).")
@click.option("--class-name", "class_name", default=None,
              help="Query by class name; needs --scenario for the vocabulary.")
@click.option("--scenario", "scenario_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Scenario file providing the vocabulary.")
@click.option("-k", "top_k", type=int, default=5, show_default=True,
              help="How many anchors to list.")
@click.option("--exclude", "excluded", multiple=True, type=int,
              help="Anchor id to skip (repeatable).")
@click.option("--json", "json_path", type=click.Path(dir_okay=False), default=None,
              help="Write the ranking as JSON.")
def query(
    abstract_map: str,
    feature_path: Optional[str],
    class_name: Optional[str],
    scenario_path: Optional[str],
    top_k: int,
    excluded: Sequence[int],
    json_path: Optional[str],
) -> None:
    """Rank anchors of an abstract map against a query feature."""
    if (feature_path is None) == (class_name is None):
        raise click.UsageError("give exactly one of --feature or --class-name")
    if class_name is not None and scenario_path is None:
        raise click.UsageError("--class-name needs --scenario for the vocabulary")
    if top_k <= 0:
        raise click.UsageError("-k must be positive")
    amap, map_config = load_abstract(abstract_map)
    if feature_path is not None:
        vector = _load_feature_file(feature_path)
        text = feature_path
    else:
        vocab = load_scenario(scenario_path).vocabulary
        try:
            vector = vocab.base(class_name)
        except KeyError as exc:
            raise DataError(str(exc)) from exc
        text = class_name
    if vector.shape != (map_config.dim,):
        raise DataError(
            f"query has dimension {vector.shape[0]}, map uses {map_config.dim}"
        )
    q = Query(feature=vector, text=text)
    ranked = rank_anchors(q, amap, excluded=set(excluded))[:top_k]
    for rank, (aid, score) in enumerate(ranked, start=1):
        anchor = amap.anchors[aid]
        label = anchor.class_id if anchor.class_id is not None else "(none)"
        click.echo(f"{rank:2d}. anchor {aid:3d}  score {score:+.6f}  class {label}")
    if not ranked:
        click.echo("no anchors available")
    if json_path:
        _write_json(
            json_path,
            {
                "config": map_config.to_dict(),
                "query": text,
                "excluded": sorted(int(e) for e in excluded),
                "ranking": [
                    {
                        "anchor_id": aid,
                        "score": score,
                        "class": amap.anchors[aid].class_id,
                    }
                    for aid, score in ranked
                ],
            },
        )
        click.echo(f"wrote {json_path}")


@cli.command()
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
@click.option("--item", "item_id", type=int, default=None,
              help="Run only the query for this item id.")
@click.option("--strategy", type=click.Choice(STRATEGIES), default="updated",
              show_default=True, help="Candidate re-selection strategy.")
@click.option("--log", "log_path", type=click.Path(dir_okay=False), default=None,
              help="Write the event log (.jsonl).")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None,
              help="Write episode results as JSON.")
@_config_options
def navigate(
    scenario: str,
    item_id: Optional[int],
    strategy: str,
    log_path: Optional[str],
    report_path: Optional[str],
    config_path: Optional[str],
    overrides: Sequence[str],
) -> None:
    """Map a scenario, apply its relocations, then navigate to its queries."""
    config, _ = _effective_config(config_path, overrides)
    sc = load_scenario(scenario)
    queries = sc.queries
    if item_id is not None:
        queries = [q for q in sc.queries if q.item_id == item_id]
        if not queries:
            raise DataError(f"scenario has no query for item {item_id}")

    built = build_scenario_map(sc, config)
    sc.world.apply_events(sc.relocations)
    template = sc.vocabulary.static_template()
    strategy_index = STRATEGIES.index(strategy)

    events: List[dict] = [{"event": "run_config", "config": config.to_dict()}]
    episode_rows: List[dict] = []
    for query_index, qspec in enumerate(sc.queries):
        if qspec not in queries:
            continue
        text = qspec.text or f"{sc.name}/item-{qspec.item_id}"
        feature = sc.world.instance_feature(("item", qspec.item_id), sc.vocabulary)
        gt_position = sc.world.item_position(qspec.item_id)
        seed = sc.seed * 100_000 + query_index * 100 + strategy_index
        agent = copy.deepcopy(sc.agent)
        episode_world = SimEpisodeWorld(sc.world, agent, sc.vocabulary, built.next_tick)
        episode, _ = run_episode(
            Query(feature=feature, text=text),
            built.amap,
            episode_world,
            config,
            template=template,
            strategy=strategy,
            seed=seed,
            event_sink=events.append,
        )
        succeeded = episode_succeeded(
            episode, gt_position, config.success_radius, config.attempt_limit
        )
        failure = failure_kind(episode, gt_position, config.success_radius)
        events.append(
            {
                "event": "episode",
                "item_id": qspec.item_id,
                "gt_position": list(gt_position),
                "succeeded": succeeded,
                "failure": failure,
                "episode": episode.to_json_dict(),
            }
        )
        episode_rows.append(events[-1])
        verdict = "success" if succeeded else f"failure ({failure})"
        click.echo(
            f"{text}: {verdict}  status={episode.status}  "
            f"attempts={len(episode.attempts)}"
        )
    if log_path:
        write_episode_log(events, log_path)
        click.echo(f"wrote {log_path}")
    if report_path:
        _write_json(
            report_path,
            {
                "config": config.to_dict(),
                "scenario": sc.name,
                "strategy": strategy,
                "episodes": [
                    {k: v for k, v in row.items() if k != "event"}
                    for row in episode_rows
                ],
            },
        )
        click.echo(f"wrote {report_path}")


@cli.command()
@click.argument("scenarios", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None,
              help="Write the benchmark report as JSON.")
@click.option("--strategy", "strategies", multiple=True, type=click.Choice(STRATEGIES),
              help="Strategy to run (repeatable; default: all three).")
@click.option("--stability/--no-stability", "enable_stability", default=True,
              help="Stability check during map building.")
@click.option("--split/--no-split", "enable_split", default=True,
              help="Split detection during map building.")
@_config_options
def simulate(
    scenarios: Sequence[str],
    report_path: Optional[str],
    strategies: Sequence[str],
    enable_stability: bool,
    enable_split: bool,
    config_path: Optional[str],
    overrides: Sequence[str],
) -> None:
    """Run the relocation benchmark over one or more scenario files."""
    config, _ = _effective_config(config_path, overrides)
    chosen = tuple(strategies) if strategies else STRATEGIES
    started = time.perf_counter()
    report = run_benchmark(
        list(scenarios),
        config,
        chosen,
        enable_stability=enable_stability,
        enable_split=enable_split,
    )
    elapsed = time.perf_counter() - started
    click.echo(report.format_text())
    click.echo(f"elapsed: {elapsed:.1f} s")
    if report_path:
        _write_json(
            report_path, {"config": config.to_dict(), "report": report.to_dict()}
        )
        click.echo(f"wrote {report_path}")


@cli.command("eval")
@click.option("--pred", "pred_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Predicted concrete map (.dmcm).")
@click.option("--gt", "gt_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Ground-truth labeled cloud (.dmlc).")
@click.option("--gt-objects", "gt_objects", type=int, default=None,
              help="Ground-truth object count for the detection ratio.")
@click.option("--radius", "match_radius", type=float, default=0.1, show_default=True,
              help="Label-transfer match radius in meters.")
@click.option("--episode-log", "episode_logs", multiple=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Episode event log to score (repeatable).")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None,
              help="Write all computed metrics as JSON.")
@_config_options
def eval_cmd(
    pred_path: Optional[str],
    gt_path: Optional[str],
    gt_objects: Optional[int],
    match_radius: float,
    episode_logs: Sequence[str],
    report_path: Optional[str],
    config_path: Optional[str],
    overrides: Sequence[str],
) -> None:
    """Score maps against labeled clouds and episode logs against targets."""
    if (pred_path is None) != (gt_path is None):
        raise click.UsageError("--pred and --gt go together")
    if pred_path is None and not episode_logs:
        raise click.UsageError("nothing to evaluate: give --pred/--gt or --episode-log")
    config, _ = _effective_config(config_path, overrides)
    out: Dict[str, object] = {
        "config": config.to_dict(),
        "parameters": {"match_radius": match_radius},
    }

    if pred_path is not None:
        cmap = load_concrete(pred_path)
        gt_cloud = load_labeled(gt_path)
        pred_cloud = labeled_cloud_from_map(cmap, gt_cloud.class_names)
        seg = segmentation_metrics(pred_cloud, gt_cloud, match_radius)
        out["segmentation"] = seg.to_dict()
        click.echo(f"mIoU:  {seg.miou:.4f}")
        click.echo(f"FmIoU: {seg.fmiou:.4f}")
        click.echo(f"mAcc:  {seg.macc:.4f}")
        for name in seg.class_names:
            if name in seg.per_class_iou:
                click.echo(
                    f"  {name}: IoU {seg.per_class_iou[name]:.4f}  "
                    f"recall {seg.per_class_recall[name]:.4f}  "
                    f"support {seg.support[name]}"
                )
        if gt_objects is not None:
            ratio = odr(len(cmap.objects), gt_objects)
            out["odr"] = {
                "predicted": len(cmap.objects),
                "ground_truth": gt_objects,
                "ratio": ratio,
            }
            click.echo(f"ODR:   {ratio:.4f} ({len(cmap.objects)}/{gt_objects})")

    if episode_logs:
        episodes: List[Tuple[NavigationEpisode, Tuple[float, float]]] = []
        for log_file in episode_logs:
            for event in read_episode_log(log_file):
                if event.get("event") != "episode":
                    continue
                if "episode" not in event or "gt_position" not in event:
                    raise DataError(f"{log_file}: episode event missing fields")
                episodes.append(
                    (
                        NavigationEpisode.from_json_dict(event["episode"]),
                        tuple(event["gt_position"]),
                    )
                )
        if not episodes:
            raise DataError("episode logs contain no episode records")
        wins = 0
        failures: Counter = Counter()
        attempt_histogram: Counter = Counter()
        for episode, gt_position in episodes:
            attempt_histogram[len(episode.attempts)] += 1
            if episode_succeeded(
                episode, gt_position, config.success_radius, config.attempt_limit
            ):
                wins += 1
            else:
                failures[failure_kind(episode, gt_position, config.success_radius)] += 1
        rate = wins / len(episodes)
        out["navigation"] = {
            "episodes": len(episodes),
            "successes": wins,
            "success_rate": rate,
            "failures": {str(k): v for k, v in sorted(failures.items())},
            "attempt_histogram": {
                str(k): v for k, v in sorted(attempt_histogram.items())
            },
        }
        click.echo(f"SR:    {rate:.4f} ({wins}/{len(episodes)})")
        for kind, count in sorted(failures.items()):
            click.echo(f"  failure {kind}: {count}")

    if report_path:
        _write_json(report_path, out)
        click.echo(f"wrote {report_path}")


# --- exit-code mapping ------------------------------------------------------


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        rv = cli.main(args=argv, prog_name="semnav", standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return 2 if isinstance(exc, click.FileError) else 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except DataError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except SemnavError as exc:
        click.echo(f"internal error: {exc}", err=True)
        return 3
    except Exception as exc:  # pragma: no cover - catch-all for exit-code contract
        click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
        return 3
    return 0 if rv is None else int(rv)


if __name__ == "__main__":
    raise SystemExit(main())
