"""Command line entry points: simulate, replay-eval, population, judge, serve, export."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .catalog import FileFormat, load_interactions, load_items
from .config import RunConfig, load_profiles, load_run_config
from .errors import FeedsimError
from .evaluation import build_replay_dataset, format_report_table, run_eval
from .population import (
    CheckpointSchedule,
    PopulationConfig,
    SocialGraph,
    rerun_variance,
    run_population,
)
from .rewards import compute_trajectory_reward, filter_trajectories
from .session import run_batch, trajectory_from_dict, trajectory_to_dict
from .store import TrajectoryStore, export_trajectories
from .users import ScriptedConfig
from .util import canonical_json


def _load_catalog(config: RunConfig):
    if not config.catalog_path:
        raise FeedsimError("config has no catalog path")
    return load_items(config.catalog_path, FileFormat(config.catalog_format))


def _load_config_profiles(config: RunConfig):
    if not config.profiles_path:
        raise FeedsimError("config has no profiles path")
    return load_profiles(config.profiles_path)


def _llm_client_if_needed(config: RunConfig):
    if config.session.simulator.kind != "llm" and config.session.recommender.kind != "llm":
        return None
    from .llm import ChatClient
    return ChatClient(config.llm)


class _CleanErrors(click.Group):
    """Surface domain errors as one-line messages with a non-zero exit."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except FeedsimError as e:
            raise click.ClickException(str(e)) from e


@click.group(cls=_CleanErrors)
def main():
    """Session simulation environment for recommender evaluation."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seeds", default=None, help="Comma-separated seed list; overrides config.")
@click.option("--out", "out_path", default="-", help="Output JSONL path, - for stdout.")
def simulate(config_path, seeds, out_path):
    """Run scripted/LLM sessions for every profile and write trajectory JSONL."""
    config = load_run_config(config_path)
    catalog = _load_catalog(config)
    profiles = _load_config_profiles(config)
    seed_list = [int(s) for s in seeds.split(",")] if seeds else config.seeds
    result = run_batch(
        profiles, catalog, config.session, seed_list, workers=config.workers,
        llm_client=_llm_client_if_needed(config))
    lines = []
    for traj in result.trajectories:
        record = trajectory_to_dict(traj)
        record["reward"] = compute_trajectory_reward(traj, config.reward_weights).to_dict()
        lines.append(canonical_json(record))
    payload = "\n".join(lines) + ("\n" if lines else "")
    if out_path == "-":
        sys.stdout.write(payload)
    else:
        Path(out_path).write_text(payload, encoding="utf-8")
    click.echo(
        f"wrote {len(result.trajectories)} trajectories, {len(result.failures)} failures",
        err=True)
    for failure in result.failures:
        click.echo(f"  failed: user={failure.user_id} seed={failure.seed}: {failure.error}",
                   err=True)
    if result.failures and not result.trajectories:
        raise SystemExit(1)


@main.command("replay-eval")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--interactions", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", default="csv", type=click.Choice(["csv", "jsonl"]))
@click.option("--n", default=10, show_default=True, help="Metric cutoff N.")
@click.option("--holdout", default=5, show_default=True, help="Held-out interactions per user.")
@click.option("--out", "out_path", default="-", help="Report JSON path, - for stdout.")
def replay_eval(config_path, interactions, fmt, n, holdout, out_path):
    """Replay recorded lists against the simulator and report Recall/NDCG@N."""
    config = load_run_config(config_path)
    catalog = _load_catalog(config)
    records = load_interactions(interactions, FileFormat(fmt))
    dataset = build_replay_dataset(records, catalog, holdout_n=holdout)
    scripted = ScriptedConfig(**config.session.simulator.params) \
        if config.session.simulator.kind == "scripted" else ScriptedConfig()
    report = run_eval(dataset, catalog, n=n, scripted=scripted,
                      seed=config.seeds[0] if config.seeds else 0)
    payload = json.dumps(report.to_dict(), indent=2)
    if out_path == "-":
        click.echo(payload)
    else:
        Path(out_path).write_text(payload + "\n", encoding="utf-8")
    click.echo(format_report_table(report), err=True)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--graph", "graph_path", default=None, type=click.Path(exists=True),
              help="Edge CSV from,to,weight; omit for an empty graph.")
@click.option("--ticks", default=28, show_default=True)
@click.option("--schedule", default="1,2,4,8,28", show_default=True,
              help="Checkpoint tick offsets (6h ticks).")
@click.option("--inject", default=None, help="Comma-separated item ids to expose at tick 0.")
@click.option("--influence", default=0.5, show_default=True)
@click.option("--activity", default=0.5, show_default=True)
@click.option("--repetitions", default=1, show_default=True,
              help=">1 runs rerun-variance over --seeds.")
@click.option("--seeds", default=None, help="Comma-separated seeds for repetitions.")
@click.option("--out", "out_path", default="-")
def population(config_path, graph_path, ticks, schedule, inject, influence,
               activity, repetitions, seeds, out_path):
    """Multi-agent run with checkpointed engagement projections."""
    config = load_run_config(config_path)
    catalog = _load_catalog(config)
    profiles = _load_config_profiles(config)
    graph = SocialGraph.from_edge_csv(graph_path) if graph_path \
        else SocialGraph(nodes=[p.user_id for p in profiles])
    offsets = tuple(int(x) for x in schedule.split(","))
    pop_config = PopulationConfig(
        session=config.session,
        influence_strength=influence,
        activity_prob=activity,
    )
    injected = [s for s in (inject.split(",") if inject else []) if s]
    seed_list = [int(s) for s in seeds.split(",")] if seeds else config.seeds
    llm_client = _llm_client_if_needed(config)
    if repetitions > 1:
        report = rerun_variance(
            graph, profiles, catalog, injected, ticks,
            CheckpointSchedule(offsets), pop_config, seed_list[:repetitions],
            llm_client=llm_client)
        payload = json.dumps(report.to_dict(), indent=2)
    else:
        run = run_population(
            graph, profiles, catalog, injected, ticks,
            CheckpointSchedule(offsets), pop_config, seed_list[0],
            llm_client=llm_client)
        payload = json.dumps(run.report.to_dict(), indent=2)
    if out_path == "-":
        click.echo(payload)
    else:
        Path(out_path).write_text(payload + "\n", encoding="utf-8")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--in", "in_path", required=True, type=click.Path(exists=True),
              help="Trajectory JSONL to judge.")
@click.option("--out", "out_path", default="-",
              help="JSONL with judge verdicts appended to each record.")
def judge(config_path, in_path, out_path):
    """Filter trajectories against the configured rubric."""
    config = load_run_config(config_path)
    if config.rubric is None:
        raise click.UsageError("config has no rubric reference")
    trajectories = []
    with open(in_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                trajectories.append(trajectory_from_dict(json.loads(line)))
    result = filter_trajectories(trajectories, config.rubric, weights=config.reward_weights)
    verdict_by_id = {}
    from .rewards import judge_trajectory
    for traj in result.retained + result.rejected:
        reward = compute_trajectory_reward(traj, config.reward_weights)
        verdict_by_id[traj.session_id] = (reward, judge_trajectory(
            traj, reward, config.rubric))
    lines = []
    for traj in trajectories:
        record = trajectory_to_dict(traj)
        if traj.session_id in verdict_by_id:
            reward, verdict = verdict_by_id[traj.session_id]
            record["reward"] = reward.to_dict()
            record["judge"] = verdict.to_dict()
        lines.append(canonical_json(record))
    payload = "\n".join(lines) + ("\n" if lines else "")
    if out_path == "-":
        sys.stdout.write(payload)
    else:
        Path(out_path).write_text(payload, encoding="utf-8")
    counts = result.counts()
    click.echo(
        f"retained={counts['retained']} rejected={counts['rejected']} "
        f"unjudged={counts['unjudged']}", err=True)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8008, show_default=True)
def serve(config_path, host, port):
    """Run the annotator session service."""
    import uvicorn

    from .service import create_app

    config = load_run_config(config_path)
    catalog = _load_catalog(config)
    store = TrajectoryStore(config.store_path)
    app = create_app(catalog, config, store, llm_client=_llm_client_if_needed(config))
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--mode", default=None,
              type=click.Choice(["agentic", "traditional", "eval_only", "human_annotator"]))
@click.option("--user", default=None, help="Filter by user_id.")
@click.option("--out", "out_path", default="-")
def export(store_path, mode, user, out_path):
    """Stream stored trajectories as JSONL, optionally filtered."""
    from .session import SessionMode

    store = TrajectoryStore(store_path)
    mode_v = SessionMode(mode) if mode else None
    lines = list(export_trajectories(store, mode=mode_v, user_id=user))
    payload = "\n".join(lines) + ("\n" if lines else "")
    if out_path == "-":
        sys.stdout.write(payload)
    else:
        Path(out_path).write_text(payload, encoding="utf-8")
    click.echo(f"exported {len(lines)} trajectories", err=True)


if __name__ == "__main__":
    main()
