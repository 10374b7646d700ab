"""Benchmark harness: scripted mapping tours plus navigation episode suites.

For each scenario the harness maps the world along the scripted tour, builds
the abstract map, applies the relocation script, and then runs one navigation
episode per (query, candidate-selection strategy). Results aggregate into
success rates per strategy and per relocation kind, attempt histograms, and a
failure taxonomy. All randomness is seeded by the scenario, so reports are
reproducible byte for byte.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .abstract import AbstractMap, abstract_map
from .concrete import ConcreteMap
from .config import RunConfig
from .errors import DataError
from .metrics import episode_succeeded, failure_kind
from .navigation import (
    STRATEGIES,
    NavigationEpisode,
    Query,
    run_episode,
)
from .pipeline import MappingPipeline, PipelineStats
from .sim import Scenario, SimEpisodeWorld, drive_tour, load_scenario

ScenarioSource = Union[str, Path, Scenario]


@dataclass(frozen=True)
class EpisodeResult:
    scenario: str
    query_text: str
    item_id: int
    kind: str  # static | in_anchor | cross_anchor
    strategy: str
    gt_position: Tuple[float, float]
    succeeded: bool
    failure: Optional[str]
    episode: NavigationEpisode

    def to_json_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "query_text": self.query_text,
            "item_id": self.item_id,
            "kind": self.kind,
            "strategy": self.strategy,
            "gt_position": list(self.gt_position),
            "succeeded": self.succeeded,
            "failure": self.failure,
            "episode": self.episode.to_json_dict(),
        }


@dataclass(frozen=True)
class ScenarioSummary:
    name: str
    frames: int
    observations: int
    map_objects: int
    anchors: int
    gt_objects_seen: int
    odr: float

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "frames": self.frames,
            "observations": self.observations,
            "map_objects": self.map_objects,
            "anchors": self.anchors,
            "gt_objects_seen": self.gt_objects_seen,
            "odr": self.odr,
        }


@dataclass
class BenchmarkReport:
    scenarios: List[ScenarioSummary]
    results: List[EpisodeResult]
    strategies: Tuple[str, ...]

    def _select(
        self, strategy: str, kind: Optional[str] = None
    ) -> List[EpisodeResult]:
        return [
            r
            for r in self.results
            if r.strategy == strategy and (kind is None or r.kind == kind)
        ]

    def success_rate(self, strategy: str, kind: Optional[str] = None) -> float:
        rows = self._select(strategy, kind)
        if not rows:
            raise DataError(f"no episodes for strategy {strategy!r} kind {kind!r}")
        return sum(r.succeeded for r in rows) / len(rows)

    def attempt_histogram(self, strategy: str) -> Dict[int, int]:
        hist: Dict[int, int] = {}
        for r in self._select(strategy):
            n = len(r.episode.attempts)
            hist[n] = hist.get(n, 0) + 1
        return dict(sorted(hist.items()))

    def failure_counts(self, strategy: str) -> Dict[str, int]:
        counts = {"false_match": 0, "planning": 0, "attempt_limit": 0}
        for r in self._select(strategy):
            if r.failure is not None:
                counts[r.failure] += 1
        return counts

    def kinds(self) -> List[str]:
        return sorted({r.kind for r in self.results})

    def to_dict(self) -> dict:
        return {
            "scenarios": [s.to_json_dict() for s in self.scenarios],
            "strategies": list(self.strategies),
            "episodes": [r.to_json_dict() for r in self.results],
            "success_rate": {
                strategy: self.success_rate(strategy) for strategy in self.strategies
            },
            "success_rate_by_kind": {
                strategy: {
                    kind: self.success_rate(strategy, kind)
                    for kind in self.kinds()
                    if self._select(strategy, kind)
                }
                for strategy in self.strategies
            },
            "attempt_histogram": {
                strategy: self.attempt_histogram(strategy)
                for strategy in self.strategies
            },
            "failures": {
                strategy: self.failure_counts(strategy) for strategy in self.strategies
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format_text(self) -> str:
        lines: List[str] = []
        lines.append(f"scenarios: {len(self.scenarios)}")
        total = {s.name: s for s in self.scenarios}
        for name in sorted(total):
            s = total[name]
            lines.append(
                f"  {s.name}: frames={s.frames} objects={s.map_objects} "
                f"anchors={s.anchors} odr={s.odr:.3f}"
            )
        lines.append("")
        lines.append("success rate by strategy:")
        for strategy in self.strategies:
            parts = [f"overall={self.success_rate(strategy):.3f}"]
            for kind in self.kinds():
                if self._select(strategy, kind):
                    parts.append(f"{kind}={self.success_rate(strategy, kind):.3f}")
            lines.append(f"  {strategy}: " + " ".join(parts))
        lines.append("")
        lines.append("attempts used (episodes):")
        for strategy in self.strategies:
            hist = self.attempt_histogram(strategy)
            joined = " ".join(f"{k}:{v}" for k, v in hist.items())
            lines.append(f"  {strategy}: {joined}")
        lines.append("")
        lines.append("failure taxonomy:")
        for strategy in self.strategies:
            counts = self.failure_counts(strategy)
            joined = " ".join(f"{k}={v}" for k, v in sorted(counts.items()))
            lines.append(f"  {strategy}: {joined}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class BuiltScenario:
    """A scenario mapped and abstracted, ready for episodes."""

    scenario: Scenario
    cmap: ConcreteMap
    amap: AbstractMap
    stats: PipelineStats
    gt_objects_seen: int
    next_tick: int


def build_scenario_map(
    scenario: Scenario,
    config: RunConfig,
    enable_stability: bool = True,
    enable_split: bool = True,
) -> BuiltScenario:
    """Drive the scripted tour and produce the abstract map (pre-relocation)."""
    world = scenario.world
    vocab = scenario.vocabulary
    pipeline = MappingPipeline(
        config, enable_stability=enable_stability, enable_split=enable_split
    )
    seen: set = set()

    def on_tick(tick, agent, frame, full, truths) -> None:
        pipeline.ingest(frame)
        pipeline.ingest(full)
        for truth in truths:
            for seg in truth.segments:
                if seg.kind != "spurious":
                    seen.add((seg.kind, seg.gt_id))

    agent = copy.deepcopy(scenario.agent)
    next_tick = drive_tour(world, agent, scenario.tour, vocab, on_tick)
    cmap, scene, stats = pipeline.finalize()
    template = vocab.static_template()
    amap = abstract_map(cmap, template, scene.cloud, config)
    return BuiltScenario(
        scenario=scenario,
        cmap=cmap,
        amap=amap,
        stats=stats,
        gt_objects_seen=len(seen),
        next_tick=next_tick,
    )


def run_scenario(
    scenario: Scenario,
    config: RunConfig,
    strategies: Sequence[str] = STRATEGIES,
    enable_stability: bool = True,
    enable_split: bool = True,
) -> Tuple[ScenarioSummary, List[EpisodeResult]]:
    """Map, relocate, and run every (query, strategy) episode for one scenario.

    Applies the relocation script to ``scenario.world`` in place; reload the
    scenario before running it again.
    """
    built = build_scenario_map(
        scenario, config, enable_stability=enable_stability, enable_split=enable_split
    )
    world = scenario.world
    vocab = scenario.vocabulary
    world.apply_events(scenario.relocations)

    object_count = len(built.cmap.objects)
    summary = ScenarioSummary(
        name=scenario.name,
        frames=built.stats.frames,
        observations=built.stats.observations,
        map_objects=object_count,
        anchors=len(built.amap.anchors),
        gt_objects_seen=built.gt_objects_seen,
        odr=(
            object_count / built.gt_objects_seen if built.gt_objects_seen else 0.0
        ),
    )

    results: List[EpisodeResult] = []
    template = vocab.static_template()
    for query_index, qspec in enumerate(scenario.queries):
        text = qspec.text or f"{scenario.name}/item-{qspec.item_id}"
        feature = world.instance_feature(("item", qspec.item_id), vocab)
        query = Query(feature=feature, text=text)
        gt_position = world.item_position(qspec.item_id)
        kind = scenario.query_kind(qspec.item_id)
        for strategy_index, strategy in enumerate(strategies):
            agent = copy.deepcopy(scenario.agent)
            episode_world = SimEpisodeWorld(world, agent, vocab, built.next_tick)
            seed = scenario.seed * 100_000 + query_index * 100 + strategy_index
            episode, _ = run_episode(
                query,
                built.amap,
                episode_world,
                config,
                template=template,
                strategy=strategy,
                seed=seed,
            )
            succeeded = episode_succeeded(
                episode, gt_position, config.success_radius, config.attempt_limit
            )
            results.append(
                EpisodeResult(
                    scenario=scenario.name,
                    query_text=text,
                    item_id=qspec.item_id,
                    kind=kind,
                    strategy=strategy,
                    gt_position=gt_position,
                    succeeded=succeeded,
                    failure=failure_kind(episode, gt_position, config.success_radius),
                    episode=episode,
                )
            )
    return summary, results


def run_benchmark(
    scenarios: Sequence[ScenarioSource],
    config: RunConfig,
    strategies: Sequence[str] = STRATEGIES,
    enable_stability: bool = True,
    enable_split: bool = True,
) -> BenchmarkReport:
    """Run every scenario and aggregate one report."""
    for strategy in strategies:
        if strategy not in STRATEGIES:
            raise DataError(f"unknown strategy {strategy!r}")
    summaries: List[ScenarioSummary] = []
    results: List[EpisodeResult] = []
    loaded = [
        s if isinstance(s, Scenario) else load_scenario(s) for s in scenarios
    ]
    for scenario in sorted(loaded, key=lambda s: s.name):
        summary, rows = run_scenario(
            scenario,
            config,
            strategies,
            enable_stability=enable_stability,
            enable_split=enable_split,
        )
        summaries.append(summary)
        results.extend(rows)
    return BenchmarkReport(
        scenarios=summaries, results=results, strategies=tuple(strategies)
    )
