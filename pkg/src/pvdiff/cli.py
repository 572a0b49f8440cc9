"""Command-line surface: train-ae, train-diffusion, sample, eval.

Exit codes: 0 success, 2 configuration error, 3 checkpoint
incompatibility, 4 data error. The PVDIFF_OUTPUT_ROOT environment
variable overrides the configured output root. Every command writes
only inside its own run/output directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

from .errors import CheckpointError, ConfigError, DataError


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="YAML run config (supports preset:)")
    p.add_argument("--run-name", default=None, help="override config run_name")
    p.add_argument("--output-root", default=None, help="override output root")
    p.add_argument("--dry-run", action="store_true",
                   help="validate, write the resolved config, and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pvdiff",
        description="Projected-latent video diffusion: training, sampling, evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-ae", help="train the triplane autoencoder")
    _add_config_args(p)

    p = sub.add_parser("train-diffusion", help="train the latent denoiser")
    _add_config_args(p)
    p.add_argument("--ae-checkpoint", required=True)
    p.add_argument("--resume", default=None, help="diffusion checkpoint to resume from")

    p = sub.add_parser("sample", help="generate a video by clip chaining")
    p.add_argument("--diffusion-checkpoint", required=True)
    p.add_argument("--ae-checkpoint", required=True)
    p.add_argument("--mode", choices=["ddpm", "ddim"], default="ddim")
    p.add_argument("--steps-init", type=int, default=100,
                   help="denoising steps for the initial clip (N)")
    p.add_argument("--steps-cond", type=int, default=20,
                   help="denoising steps for each later clip (M)")
    p.add_argument("--clips", type=int, default=1, help="number of chained clips (L)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--out", required=True, help="output directory for frames")
    p.add_argument("--container", default=None,
                   help="optional container file (best-effort encode)")
    p.add_argument("--fps", type=float, default=10.0)

    p = sub.add_parser("eval", help="compute metric reports")
    _add_config_args(p)
    p.add_argument("--what", choices=["recon", "gen", "profile"], required=True)
    p.add_argument("--ae-checkpoint", default=None)
    p.add_argument("--diffusion-checkpoint", default=None)
    return parser


def _load_config(args):
    from .config import load_config

    cfg = load_config(args.config)
    if args.run_name:
        cfg.run_name = args.run_name
    return cfg


def _prepare_run(args, cfg):
    from .config import make_run_dir, write_resolved_config

    run_dir = make_run_dir(cfg, args.output_root)
    write_resolved_config(cfg, run_dir)
    if cfg.data.kind == "synthetic":
        from .data.synthetic import spec_to_manifest
        (run_dir / "dataset_manifest.txt").write_text(
            spec_to_manifest(cfg.synthetic_spec()))
    return run_dir


def cmd_train_ae(args) -> int:
    from .train.ae import train_autoencoder

    cfg = _load_config(args)
    run_dir = _prepare_run(args, cfg)
    if args.dry_run:
        print(f"resolved config written to {run_dir / 'config.yaml'}")
        return 0
    summary = train_autoencoder(cfg, run_dir)
    print(json.dumps({k: v for k, v in summary.items() if k != "r_fvd_history"},
                     indent=2))
    return 0


def cmd_train_diffusion(args) -> int:
    from .train.diffusion import train_diffusion

    cfg = _load_config(args)
    run_dir = _prepare_run(args, cfg)
    if args.dry_run:
        print(f"resolved config written to {run_dir / 'config.yaml'}")
        return 0
    summary = train_diffusion(cfg, args.ae_checkpoint, run_dir, resume=args.resume)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_sample(args) -> int:
    from .data.video_io import write_container, write_frame_sequence
    from .models.autoencoder import load_autoencoder
    from .sampler import SamplerConfig, generate_long_video
    from .train.diffusion import load_diffusion_bundle, check_latent_geometry

    bundle, schedule, ae_cfg_diff, _ = load_diffusion_bundle(args.diffusion_checkpoint)
    _, decoder, ae_cfg, _ = load_autoencoder(args.ae_checkpoint)
    check_latent_geometry(ae_cfg, ae_cfg_diff)
    scfg = SamplerConfig(mode=args.mode, steps_init=args.steps_init,
                         steps_cond=args.steps_cond, eta=args.eta,
                         clips=args.clips, seed=args.seed)
    scfg.validate_against(schedule)
    result = generate_long_video(bundle, decoder, scfg, schedule)
    out = Path(args.out)
    frame_dir = out / "frames"
    paths = write_frame_sequence(result.frames, frame_dir)
    meta = {
        "frames": len(paths),
        "clips": args.clips,
        "frames_per_clip": ae_cfg.clip_length,
        "sampler": scfg.to_dict(),
    }
    (out / "sample_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    if args.container:
        write_container(result.frames, out / args.container, fps=args.fps)
    print(json.dumps(meta, indent=2, sort_keys=True))
    return 0


def _eval_recon(cfg, args, run_dir, logger) -> None:
    from .data.protocol import eval_clip_protocol
    from .eval.extractor import FeatureExtractorSpec, build_feature_extractor
    from .eval.metrics import make_reconstructor, psnr, r_fvd
    from .models.autoencoder import load_autoencoder

    if not args.ae_checkpoint:
        raise ConfigError("eval recon requires --ae-checkpoint")
    encoder, decoder, _, _ = load_autoencoder(args.ae_checkpoint)
    dataset = cfg.build_dataset()
    extractor = build_feature_extractor(FeatureExtractorSpec(
        seed=cfg.evaluation.extractor_seed,
        channels=tuple(cfg.evaluation.extractor_channels)))
    recon = make_reconstructor(encoder, decoder)
    clips = eval_clip_protocol(dataset, min(cfg.evaluation.n_clips, 64),
                               dataset.clip_length, cfg.evaluation.protocol_seed)
    mean_psnr = sum(psnr(c, recon(c)) for c in clips) / len(clips)
    value = r_fvd(recon, dataset, extractor, cfg.evaluation.n_clips,
                  cfg.evaluation.protocol_seed)
    logger.write(metric="psnr_db", value=mean_psnr, seed=cfg.evaluation.protocol_seed,
                 config_hash=cfg.config_hash())
    logger.write(metric="r_fvd", value=value, seed=cfg.evaluation.protocol_seed,
                 config_hash=cfg.config_hash())
    print(json.dumps({"psnr_db": mean_psnr, "r_fvd": value}, indent=2))


def _eval_gen(cfg, args, run_dir, logger) -> None:
    from .data.clips import VideoClip
    from .data.protocol import eval_clip_protocol
    from .eval.extractor import FeatureExtractorSpec, build_feature_extractor
    from .eval.metrics import feature_stats, frechet_distance
    from .models.autoencoder import load_autoencoder
    from .sampler import sample_clip
    from .train.diffusion import load_diffusion_bundle
    import torch

    if not (args.ae_checkpoint and args.diffusion_checkpoint):
        raise ConfigError("eval gen requires --ae-checkpoint and --diffusion-checkpoint")
    bundle, schedule, _, _ = load_diffusion_bundle(args.diffusion_checkpoint)
    _, decoder, ae_cfg, _ = load_autoencoder(args.ae_checkpoint)
    dataset = cfg.build_dataset()
    extractor = build_feature_extractor(FeatureExtractorSpec(
        seed=cfg.evaluation.extractor_seed,
        channels=tuple(cfg.evaluation.extractor_channels)))
    n = min(cfg.evaluation.n_clips, max(8, len(dataset)))
    real = eval_clip_protocol(dataset, n, dataset.clip_length,
                              cfg.evaluation.protocol_seed)
    fakes = []
    for i in range(n):
        z = sample_clip(bundle, schedule, None, cfg.sampler.steps_init,
                        mode=cfg.sampler.mode, seed=cfg.seed + i,
                        eta=cfg.sampler.eta)
        with torch.no_grad():
            x = decoder(z).clamp(-1, 1)
        fakes.append(VideoClip(x[0]))
    value = frechet_distance(feature_stats(real, extractor),
                             feature_stats(fakes, extractor))
    logger.write(metric="fvd", value=value, seed=cfg.seed,
                 config_hash=cfg.config_hash(), n_clips=n)
    print(json.dumps({"fvd": value, "n_clips": n}, indent=2))


def _eval_profile(cfg, args, run_dir, logger) -> None:
    from .eval.profiler import latent_dim_accounting, profile_token_costs

    ae_cfg = cfg.autoencoder_config()
    report = profile_token_costs(ae_cfg, cfg.denoiser_config(ae_cfg))
    report.write(run_dir / "profile.json")
    logger.write(metric="latent_scalars", value=latent_dim_accounting(ae_cfg),
                 config_hash=cfg.config_hash())
    logger.write(metric="token_ratio_top", value=report.top_level_ratio,
                 config_hash=cfg.config_hash())
    if report.measured_speedup is not None:
        logger.write(metric="measured_speedup", value=report.measured_speedup,
                     config_hash=cfg.config_hash())
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))


def cmd_eval(args) -> int:
    from .train.common import JsonlLogger

    cfg = _load_config(args)
    run_dir = _prepare_run(args, cfg)
    if args.dry_run:
        print(f"resolved config written to {run_dir / 'config.yaml'}")
        return 0
    logger = JsonlLogger(run_dir / "metrics.jsonl")
    if args.what == "recon":
        _eval_recon(cfg, args, run_dir, logger)
    elif args.what == "gen":
        _eval_gen(cfg, args, run_dir, logger)
    else:
        _eval_profile(cfg, args, run_dir, logger)
    return 0


COMMANDS = {
    "train-ae": cmd_train_ae,
    "train-diffusion": cmd_train_diffusion,
    "sample": cmd_sample,
    "eval": cmd_eval,
}


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except CheckpointError as e:
        print(f"checkpoint error: {e}", file=sys.stderr)
        return 3
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
