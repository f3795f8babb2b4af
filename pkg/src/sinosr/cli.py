"""Command-line interface. Every subcommand wraps exactly one operation and
speaks the binary formats; exit code 0 on success, 1 with a single-line
``error: <stage>: <message>`` on stderr otherwise."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import PipelineConfig, apply_overrides, format_config, load_config
from .errors import SinosrError
from .grids import (
    field_to_image,
    read_field,
    read_sinogram,
    write_field,
    write_pgm,
    write_sinogram,
)
from .metrics import CSV_HEADER, psnr, rmse
from .nn.srcn import infer_sinogram, load_checkpoint
from .phantoms import (
    DerenzoSpec,
    DiskSpec,
    ImageImportSpec,
    VesselSpec,
    make_phantom,
)
from .pipeline import (
    StageFailure,
    detectors_of,
    evaluate_model,
    forward_grid,
    generate_dataset,
    load_manifest,
    medium_of,
    recon_grid,
    run_pipeline,
    solver_config,
    train_from_manifest,
)
from .sinogram_ops import (
    add_gaussian_noise,
    nn_interpolate,
    subsample_detectors,
)
from .wavelet import denoise_sinogram
from .wavesim import ForwardOperator, TimeReversalOperator


def _resolved_config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.set:
        cfg = apply_overrides(cfg, args.set)
    return cfg.validate()


def _maybe_explain(args, cfg) -> bool:
    if getattr(args, "explain", False):
        sys.stdout.write(format_config(cfg))
        return True
    return False


def cmd_phantom(args):
    cfg = _resolved_config(args)
    if _maybe_explain(args, cfg):
        return
    grid = forward_grid(cfg)
    if args.kind == "disk":
        spec = DiskSpec(center=(args.center_x, args.center_y),
                        radius=args.radius, amplitude=args.amplitude)
    elif args.kind == "derenzo":
        spec = DerenzoSpec(rotation=args.rotation, amplitude=args.amplitude)
    elif args.kind == "vessel":
        spec = VesselSpec(seed=args.seed, amplitude=args.amplitude)
    else:
        spec = ImageImportSpec(path=args.image, threshold=args.threshold,
                               amplitude=args.amplitude)
    f = make_phantom(spec, grid)
    write_field(f, args.out)
    if args.preview:
        write_pgm(args.preview, field_to_image(f.values))


def cmd_simulate(args):
    cfg = _resolved_config(args)
    if _maybe_explain(args, cfg):
        return
    p0 = read_field(args.phantom)
    op = ForwardOperator(p0.grid, medium_of(cfg), detectors_of(cfg),
                         solver_config(cfg))
    write_sinogram(op.run(p0), args.out)


def cmd_degrade(args):
    s = read_sinogram(args.infile)
    s = add_gaussian_noise(s, args.snr, args.seed)
    if args.factor > 1:
        s = subsample_detectors(s, args.factor)
    write_sinogram(s, args.out)


def cmd_interp(args):
    s = read_sinogram(args.infile)
    write_sinogram(nn_interpolate(s, args.target_cols), args.out)


def cmd_wavelet(args):
    s = read_sinogram(args.infile)
    out = denoise_sinogram(s, args.wavelet, args.levels, args.threshold)
    write_sinogram(out, args.out)


def cmd_dataset(args):
    cfg = _resolved_config(args)
    if args.phantoms:
        cfg = apply_overrides(cfg, [f"train_phantoms={args.phantoms}"])
    if args.patches:
        cfg = apply_overrides(cfg, [f"patches_per_sinogram={args.patches}"])
    if _maybe_explain(args, cfg):
        return
    manifest = generate_dataset(cfg, args.outdir)
    print(f"{manifest['total_patch_pairs']} patch pairs across "
          f"{len(manifest['entries'])} sinograms -> {args.outdir}/manifest.json")


def cmd_train(args):
    cfg = _resolved_config(args)
    if _maybe_explain(args, cfg):
        return
    manifest = load_manifest(args.manifest)
    model, log = train_from_manifest(cfg, manifest, args.outdir)
    print(f"final training loss {log.final_train_loss:.6g} -> "
          f"{args.outdir}/srcn.ckpt")


def cmd_infer(args):
    model, _ = load_checkpoint(args.model)
    t_in = read_sinogram(args.infile)
    t_r, t_f = infer_sinogram(model, t_in)
    if args.out_residual:
        write_sinogram(t_r, args.out_residual)
    write_sinogram(t_f, args.out)


def cmd_reconstruct(args):
    cfg = _resolved_config(args)
    if args.detectors:
        cfg = apply_overrides(cfg, [f"detector_count={args.detectors}"])
    if _maybe_explain(args, cfg):
        return
    s = read_sinogram(args.infile)
    op = TimeReversalOperator(recon_grid(cfg), medium_of(cfg),
                              detectors_of(cfg), solver_config(cfg))
    write_field(op.run(s), args.out)


def cmd_eval(args):
    ref = read_field(args.reference)
    recon = read_field(args.recon)
    r = rmse(ref, recon)
    p = psnr(ref, recon)
    path = Path(args.report)
    if not path.exists():
        path.write_text(CSV_HEADER + "\n")
    with open(path, "a") as fh:
        fh.write(f"{args.method},{float(args.snr)!r},{r!r},{p!r}\n")
    print(f"{args.method} @ {args.snr} dB: rmse={r:.6g} psnr={p:.4f} dB")


def cmd_pipeline(args):
    cfg = _resolved_config(args)
    if args.outdir:
        cfg = apply_overrides(cfg, [f"outdir={args.outdir}"])
    if _maybe_explain(args, cfg):
        return
    result = run_pipeline(cfg)
    print(f"report: {cfg.outdir}/eval/metrics.csv "
          f"({len(result.aggregate.rows)} rows)")


def _add_config_options(p):
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a configuration key")
    p.add_argument("--explain", action="store_true",
                   help="print the resolved configuration and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sinosr",
        description="Photoacoustic sinogram super-resolution and denoising",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a phantom field")
    _add_config_options(p)
    p.add_argument("--kind", choices=("disk", "derenzo", "vessel", "image"),
                   required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--preview")
    p.add_argument("--amplitude", type=float, default=1000.0)
    p.add_argument("--radius", type=float, default=2e-3)
    p.add_argument("--center-x", type=float, default=0.0)
    p.add_argument("--center-y", type=float, default=0.0)
    p.add_argument("--rotation", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image", help="8-bit graymap to import")
    p.add_argument("--threshold", type=int, default=128)
    p.set_defaults(func=cmd_phantom, stage="phantom")

    p = sub.add_parser("simulate", help="phantom field -> sinogram")
    _add_config_options(p)
    p.add_argument("--phantom", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate, stage="simulate")

    p = sub.add_parser("degrade", help="add noise and subsample detectors")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--snr", type=float, required=True)
    p.add_argument("--factor", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_degrade, stage="degrade")

    p = sub.add_parser("interp", help="nearest-neighbor detector upsampling")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target-cols", type=int, required=True)
    p.set_defaults(func=cmd_interp, stage="interp")

    p = sub.add_parser("wavelet", help="MODWT denoise a sinogram")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--wavelet", default="sym4")
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None,
                   help="override the universal threshold")
    p.set_defaults(func=cmd_wavelet, stage="wavelet")

    p = sub.add_parser("dataset", help="simulate training data + manifest")
    _add_config_options(p)
    p.add_argument("--outdir", required=True)
    p.add_argument("--phantoms", type=int)
    p.add_argument("--patches", type=int)
    p.set_defaults(func=cmd_dataset, stage="dataset")

    p = sub.add_parser("train", help="train the residual CNN from a manifest")
    _add_config_options(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_train, stage="train")

    p = sub.add_parser("infer", help="restore a sinogram with a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--out-residual")
    p.set_defaults(func=cmd_infer, stage="infer")

    p = sub.add_parser("reconstruct", help="time-reversal image reconstruction")
    _add_config_options(p)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--detectors", type=int,
                   help="detector count backing this sinogram")
    p.set_defaults(func=cmd_reconstruct, stage="reconstruct")

    p = sub.add_parser("eval", help="append RMSE/PSNR of a reconstruction")
    p.add_argument("--reference", required=True)
    p.add_argument("--recon", required=True)
    p.add_argument("--method", required=True)
    p.add_argument("--snr", type=float, required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval, stage="eval")

    p = sub.add_parser("pipeline", help="run the full experiment")
    _add_config_options(p)
    p.add_argument("--outdir")
    p.set_defaults(func=cmd_pipeline, stage="pipeline")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except StageFailure as exc:
        print(f"error: {exc.stage}: {exc.cause}", file=sys.stderr)
        return 1
    except SinosrError as exc:
        print(f"error: {args.stage}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {args.stage}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
