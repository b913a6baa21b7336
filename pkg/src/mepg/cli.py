"""Command-line interface: plan, generate, train, evaluate, serve.

Exit codes: 0 success, 2 validation/grammar errors, 1 anything else.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .errors import (ConfigError, GrammarError, InvalidDocument, MepgError,
                     PlanEmpty, RepairImpossible)
from .geometry import layout_from_dict, layout_to_dict, validate_layout
from .images import save_png
from .moe import load_ensemble, registry_load
from .neural.checkpoint import load_gate, save_denoiser, save_gate
from .scheduler import (ALPHA_FIXED, ALPHA_LEAD_RAMP, GenerationConfig,
                        cross_denoise)

VALIDATION_ERRORS = (GrammarError, PlanEmpty, ConfigError, InvalidDocument,
                     RepairImpossible)


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(2 if isinstance(exc, VALIDATION_ERRORS) else 1)


@click.group()
def main():
    """Multi-expert planning and generation."""


@main.command()
@click.argument("prompt")
@click.option("--backend", type=click.Choice(["rule", "llm"]), default="rule")
@click.option("--out", type=click.Path(dir_okay=False), default="layout.json",
              show_default=True)
@click.option("--trace-out", type=click.Path(dir_okay=False), default=None,
              help="Also write the chain trace as JSON.")
@click.option("--llm-url", default=None, help="Chat-completions base URL.")
@click.option("--llm-model", default="default", show_default=True)
@click.option("--fallback", type=click.Choice(["none", "rule"]), default="none",
              help="Fall back to the rule backend if the LLM is unavailable.")
@click.option("--grid", default="32x32", show_default=True,
              help="Target latent grid HxW recorded for generation.")
def plan(prompt, backend, out, trace_out, llm_url, llm_model, fallback, grid):
    """Turn PROMPT into a boxed layout via the planning chain."""
    from .errors import BackendUnavailable
    from .planner import HttpLlmBackend, RuleBackend, run_enhanced_chain

    try:
        h, w = (int(p) for p in grid.lower().split("x"))
        if backend == "llm":
            if not llm_url:
                raise ConfigError("--backend llm needs --llm-url")
            be = HttpLlmBackend(llm_url, llm_model)
        else:
            be = RuleBackend()
        try:
            layout, trace = run_enhanced_chain(prompt, be, h=h, w=w)
        except BackendUnavailable:
            if fallback == "rule" and backend == "llm":
                layout, trace = run_enhanced_chain(prompt, RuleBackend(), h=h, w=w)
            else:
                raise
    except MepgError as exc:
        _fail(exc)
        return
    Path(out).write_text(json.dumps(layout_to_dict(layout), indent=2))
    if trace_out:
        Path(trace_out).write_text(json.dumps(trace.to_dict(), indent=2))
    click.echo(f"{len(layout.regions)} region(s) via {trace.backend_used}"
               f"{' (fallback)' if trace.fallback_engaged else ''} -> {out}")


@main.command()
@click.argument("layout_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--experts-config", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--gate", "gate_ckpt", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Trained gate checkpoint.")
@click.option("--n", "n_steps", default=50, show_default=True)
@click.option("--p1", default=0.7, show_default=True)
@click.option("--k", default=2, show_default=True)
@click.option("--interleave", "interleave_g", default=5, show_default=True)
@click.option("--alpha-mode", type=click.Choice([ALPHA_LEAD_RAMP, ALPHA_FIXED]),
              default=ALPHA_LEAD_RAMP, show_default=True)
@click.option("--alpha-global-start", default=0.5, show_default=True)
@click.option("--gate-activation", type=click.Choice(["sigmoid", "softmax"]),
              default="sigmoid", show_default=True)
@click.option("--seed", default=42, show_default=True)
@click.option("--grid", default="32x32", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default="img.png",
              show_default=True)
@click.option("--trace", "trace_out", type=click.Path(dir_okay=False), default=None,
              help="Write the per-step trace as JSON lines.")
def generate(layout_file, experts_config, gate_ckpt, n_steps, p1, k,
             interleave_g, alpha_mode, alpha_global_start, gate_activation,
             seed, grid, out, trace_out):
    """Run cross-denoising generation for LAYOUT_FILE."""
    try:
        h, w = (int(p) for p in grid.lower().split("x"))
        layout = layout_from_dict(json.loads(Path(layout_file).read_text()))
        report = validate_layout(layout)
        if not report.ok:
            raise ConfigError("invalid layout: " + "; ".join(
                v.message for v in report.violations))
        cfg = GenerationConfig(
            n_steps=n_steps, p1=p1, k=k, interleave_g=interleave_g,
            alpha_mode=alpha_mode, alpha_global_start=alpha_global_start,
            gate_activation=gate_activation, seed=seed, grid_h=h, grid_w=w)
        cfg.validate()
        registry = registry_load(experts_config)
        gate = load_gate(gate_ckpt)[0] if gate_ckpt else None
        ensemble = load_ensemble(registry, gate, k=cfg.k,
                                 gate_activation=cfg.gate_activation,
                                 base_dir=Path(experts_config).parent)
        image, trace = cross_denoise(layout, ensemble, cfg)
    except MepgError as exc:
        _fail(exc)
        return
    save_png(out, image)
    if trace_out:
        with Path(trace_out).open("w") as fh:
            for rec in trace:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    locals_ = sum(1 for r in trace if r["executed"] == "local")
    click.echo(f"generated {out} (N={cfg.n_steps}, {locals_} local / "
               f"{cfg.n_steps - locals_} global steps, seed={cfg.seed})")


@main.command("train-expert")
@click.option("--style", type=click.Choice(["stripes", "blobs"]), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--epochs", default=14, show_default=True)
@click.option("--train-size", default=128, show_default=True)
@click.option("--size", default=32, show_default=True, help="Image side length.")
@click.option("--seed", default=0, show_default=True)
@click.option("--n-timesteps", default=50, show_default=True)
@click.option("--target-ratio", default=0.5, show_default=True,
              help="Required held-out/initial loss ratio; <= 0 disables.")
def train_expert_cmd(style, out, epochs, train_size, size, seed, n_timesteps,
                     target_ratio):
    """Pre-train one style expert and write its checkpoint."""
    from .datasets import dataset_hash, make_style_dataset
    from .neural.training import TrainConfig, train_expert

    try:
        ds = make_style_dataset(style, train_size, seed, size)
        params = train_expert(ds, TrainConfig(
            epochs=epochs, seed=seed, n_timesteps=n_timesteps,
            target_ratio=target_ratio if target_ratio > 0 else None))
    except MepgError as exc:
        _fail(exc)
        return
    save_denoiser(out, params, meta={
        "expert_id": style, "style_tag": style, "training_seed": seed,
        "dataset_hash": dataset_hash(ds),
    })
    click.echo(f"trained {style} expert ({params.param_count()} params) -> {out}")


@main.command("train-gate")
@click.option("--experts-config", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--data", type=click.Choice(["synthetic"]), default="synthetic",
              show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--samples-per-style", default=200, show_default=True)
@click.option("--epochs", default=300, show_default=True)
@click.option("--seed", default=0, show_default=True)
def train_gate_cmd(experts_config, data, out, samples_per_style, epochs, seed):
    """Fit the gate over the frozen experts listed in the registry."""
    from .conditioning import encode
    from .datasets import make_style_dataset
    from .diffusion import NoiseSchedule
    from .experiment import build_gate_samples
    from .neural.training import GateTrainConfig, train_gate

    try:
        registry = registry_load(experts_config)
        ensemble = load_ensemble(registry, base_dir=Path(experts_config).parent)
        experts = [ensemble.experts[i] for i in registry.ids()]
        n_t = min(p.n_timesteps for p in experts)
        # one synthetic dataset per expert, keyed by its style (mixed if none)
        datasets = {
            e.expert_id: make_style_dataset(
                e.style_tag or "mixed", samples_per_style, seed + i)
            for i, e in enumerate(registry.entries)
        }
        schedule = NoiseSchedule(n_t)
        labeled = build_gate_samples(datasets, schedule, samples_per_style,
                                     seed + 100)
        label_conds = [encode(e.style_tag) for e in registry.entries]
        result = train_gate(experts, labeled,
                            GateTrainConfig(epochs=epochs, seed=seed),
                            label_conds=label_conds)
    except MepgError as exc:
        _fail(exc)
        return
    save_gate(out, result.gate, meta={
        "kind": "gate", "expert_ids": registry.ids(),
        "holdout_accuracy": result.holdout_accuracy,
    })
    click.echo(f"gate holdout accuracy {result.holdout_accuracy:.3f} -> {out}")


@main.command("eval")
@click.option("--trials", default=50, show_default=True)
@click.option("--report", "report_path", type=click.Path(dir_okay=False),
              default="report.json", show_default=True)
@click.option("--workdir", type=click.Path(file_okay=False), default="mepg-eval",
              show_default=True, help="Where trained checkpoints are cached.")
@click.option("--epochs", default=30, show_default=True)
@click.option("--train-size", default=256, show_default=True)
@click.option("--seed", default=0, show_default=True)
def eval_cmd(trials, report_path, workdir, epochs, train_size, seed):
    """Run the region-style attribution experiment and write a report."""
    from .experiment import (ToyWorldConfig, build_toy_world,
                             run_attribution_experiment, write_report)

    try:
        world = build_toy_world(workdir, ToyWorldConfig(
            train_size=train_size, epochs=epochs, seed=seed))
        report = run_attribution_experiment(world, trials=trials)
    except MepgError as exc:
        _fail(exc)
        return
    write_report(report_path, report)
    click.echo(f"attribution_accuracy={report['attribution_accuracy']:.3f} "
               f"gate_acc={report['gate_holdout_accuracy']:.3f} -> {report_path}")


@main.command()
@click.option("--port", default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--experts-config", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--gate", "gate_ckpt", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--state-dir", type=click.Path(file_okay=False), default=None,
              help="Job state directory (defaults to $MEPG_STATE_DIR).")
@click.option("--llm-url", default=None)
@click.option("--llm-model", default="default", show_default=True)
@click.option("--workers", default=0, show_default=True,
              help="Generation workers (0 = min(cores, 4)).")
@click.option("--queue-limit", default=16, show_default=True)
@click.option("--ui-dir", type=click.Path(file_okay=False), default=None,
              help="Serve a built frontend from this directory.")
def serve(port, host, experts_config, gate_ckpt, state_dir, llm_url, llm_model,
          workers, queue_limit, ui_dir):
    """Start the HTTP service."""
    import uvicorn

    from .service import ServiceSettings, create_app

    settings = ServiceSettings(
        state_dir=state_dir or "", experts_config=experts_config,
        gate_checkpoint=gate_ckpt, llm_url=llm_url, llm_model=llm_model,
        workers=workers, queue_limit=queue_limit, ui_dir=ui_dir)
    app = create_app(settings)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
