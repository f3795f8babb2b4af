"""End-to-end experiment orchestration: phantoms -> simulation ->
degradation -> restoration (nearest-neighbor / MODWT / residual CNN) ->
time-reversal reconstruction -> figures of merit.

Every stage derives its seed from the master seed with
:func:`sinosr.sinogram_ops.mix_seed` at a documented index, so any stage can
be reproduced in isolation:

    1                training shuffle        2     model initialization
    1000 + i         training phantom i      2000 + i   held-out phantom i
    3000 + 10 i + j  training noise, phantom i at snr_levels[j]
    4000 + 10 i + j  held-out noise, phantom i at snr_levels[j]
    5000 + i         patch offsets for training phantom i

Artifacts land under ``{outdir}/{phantom}/{snr}/{stage}.{ext}`` with graymap
previews next to every binary file; no hidden state between stages.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .config import PipelineConfig, format_config
from .errors import SinosrError
from .grids import (
    PHANTOM_HALF_EXTENT,
    AcousticMedium,
    DetectorArray,
    Grid2D,
    PressureField,
    Sinogram,
    TransducerResponse,
    field_to_image,
    read_sinogram,
    write_field,
    write_pgm,
    write_sinogram,
)
from .metrics import MetricsReport, rmse, psnr
from .nn.srcn import (
    SrcnModel,
    TrainConfig,
    build_srcn,
    infer_sinogram,
    save_checkpoint,
    train_srcn,
)
from .phantoms import DERENZO_RADII, DerenzoSpec, VesselSpec, make_phantom
from .sinogram_ops import (
    add_gaussian_noise,
    compute_residual,
    extract_patches,
    mix_seed,
    nn_interpolate,
    subsample_detectors,
)
from .wavelet import denoise_sinogram
from .wavesim import ForwardOperator, SolverConfig, TimeReversalOperator

METHODS = ("50det", "nn", "modwt", "srcn")


class StageFailure(SinosrError):
    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


def _seed_train_phantom(master, i):
    return mix_seed(master, 1000 + i)


def _seed_eval_phantom(master, i):
    return mix_seed(master, 2000 + i)


def _seed_train_noise(master, i, j):
    return mix_seed(master, 3000 + 10 * i + j)


def _seed_eval_noise(master, i, j):
    return mix_seed(master, 4000 + 10 * i + j)


def _seed_patches(master, i):
    return mix_seed(master, 5000 + i)


def _scaled_derenzo(cfg: PipelineConfig, rotation: float) -> DerenzoSpec:
    scale = cfg.phantom_radius / PHANTOM_HALF_EXTENT
    return DerenzoSpec(
        radii=tuple(r * scale for r in DERENZO_RADII),
        rotation=rotation,
        inner_radius=2.5e-3 * scale,
        outer_radius=cfg.phantom_radius,
    )


def _scaled_vessel(cfg: PipelineConfig, seed: int) -> VesselSpec:
    scale = cfg.phantom_radius / PHANTOM_HALF_EXTENT
    if scale >= 1.0:
        return VesselSpec(seed=seed)
    return VesselSpec(seed=seed, max_radius=cfg.phantom_radius,
                      root_steps=max(30, int(round(150 * scale))))


def train_phantom_spec(cfg: PipelineConfig, i: int):
    """Vessel trees with a Derenzo pattern every fourth phantom."""
    seed = _seed_train_phantom(cfg.master_seed, i)
    if i % 4 == 3:
        rotation = (seed % 3600) / 3600.0 * (3.14159265 / 3)
        return _scaled_derenzo(cfg, rotation)
    return _scaled_vessel(cfg, seed)


def eval_phantom_spec(cfg: PipelineConfig, i: int):
    seed = _seed_eval_phantom(cfg.master_seed, i)
    if i % 2 == 1:
        rotation = (seed % 3600) / 3600.0 * (3.14159265 / 3)
        return _scaled_derenzo(cfg, rotation)
    return _scaled_vessel(cfg, seed)


def forward_grid(cfg: PipelineConfig) -> Grid2D:
    return Grid2D(cfg.forward_nx, cfg.forward_nx, cfg.forward_dx)


def recon_grid(cfg: PipelineConfig) -> Grid2D:
    return Grid2D(cfg.recon_nx, cfg.recon_nx, cfg.recon_dx)


def medium_of(cfg: PipelineConfig) -> AcousticMedium:
    return AcousticMedium(cfg.sound_speed, cfg.density)


def detectors_of(cfg: PipelineConfig) -> DetectorArray:
    response = TransducerResponse(cfg.transducer_center_frequency,
                                  cfg.transducer_fractional_bandwidth,
                                  cfg.transducer_enabled)
    return DetectorArray(cfg.detector_count, cfg.detector_radius,
                         response=response)


def solver_config(cfg: PipelineConfig) -> SolverConfig:
    return SolverConfig(time_steps=cfg.time_steps, dt=cfg.dt,
                        pml_width=cfg.pml_width,
                        pml_attenuation=cfg.pml_attenuation,
                        smooth_p0=cfg.smooth_p0,
                        detector_sampling=cfg.detector_sampling)


def _write_field_with_preview(f: PressureField, path: Path):
    write_field(f, path)
    write_pgm(path.with_suffix(".pgm"), field_to_image(f.values))


def _write_sinogram_with_preview(s: Sinogram, path: Path):
    write_sinogram(s, path)
    write_pgm(path.with_suffix(".pgm"), s.data)


def generate_dataset(cfg: PipelineConfig, outdir) -> dict:
    """Simulate training sinograms and write the dataset manifest.

    Each training phantom is degraded at one SNR level (cycling through
    ``snr_levels``), so the patch set mixes all levels across phantoms.
    """
    outdir = Path(outdir)
    fwd = ForwardOperator(forward_grid(cfg), medium_of(cfg), detectors_of(cfg),
                          solver_config(cfg))
    entries = []
    for i in range(cfg.train_phantoms):
        spec = train_phantom_spec(cfg, i)
        phantom_id = f"train_{i:03d}"
        j = i % len(cfg.snr_levels)
        snr = cfg.snr_levels[j]
        s_f = fwd.run(make_phantom(spec, fwd.grid))
        s_fn = add_gaussian_noise(s_f, snr, _seed_train_noise(cfg.master_seed, i, j))
        s_hn = subsample_detectors(s_fn, cfg.subsample_factor)
        s_in = nn_interpolate(s_hn, cfg.detector_count)
        s_r = compute_residual(s_in, s_f)
        cell = outdir / phantom_id / f"snr_{snr:g}"
        cell.mkdir(parents=True, exist_ok=True)
        _write_sinogram_with_preview(s_f, cell / "s_f.pasg")
        _write_sinogram_with_preview(s_in, cell / "s_in.pasg")
        _write_sinogram_with_preview(s_r, cell / "s_r.pasg")
        entries.append({
            "phantom_id": phantom_id,
            "kind": type(spec).__name__,
            "snr_db": snr,
            "noise_seed": _seed_train_noise(cfg.master_seed, i, j),
            "patch_seed": _seed_patches(cfg.master_seed, i),
            "n_patches": cfg.patches_per_sinogram,
            "patch_size": cfg.patch_size,
            "s_f": str(cell / "s_f.pasg"),
            "s_in": str(cell / "s_in.pasg"),
            "s_r": str(cell / "s_r.pasg"),
        })
    manifest = {
        "master_seed": cfg.master_seed,
        "config": cfg.to_dict(),
        "entries": entries,
        "total_patch_pairs": cfg.patches_per_sinogram * len(entries),
    }
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return manifest


def load_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def patches_from_manifest(manifest: dict):
    """Extract the patch pairs listed by a dataset manifest."""
    inputs = []
    targets = []
    for entry in manifest["entries"]:
        s_in = read_sinogram(entry["s_in"])
        s_r = read_sinogram(entry["s_r"])
        pairs = extract_patches(s_in, s_r, entry["n_patches"],
                                entry["patch_size"], entry["patch_seed"],
                                source_id=entry["phantom_id"])
        for pair in pairs:
            inputs.append(pair.input_patch)
            targets.append(pair.target_patch)
    return inputs, targets


def train_from_manifest(cfg: PipelineConfig, manifest: dict, outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    inputs, targets = patches_from_manifest(manifest)
    train_cfg = TrainConfig(lr=cfg.lr, epochs=cfg.epochs,
                            batch_size=cfg.batch_size,
                            seed=mix_seed(cfg.master_seed, 1),
                            snr_mix=cfg.snr_levels,
                            val_fraction=cfg.val_fraction)
    model = build_srcn(mix_seed(cfg.master_seed, 2), cfg.bn_momentum)
    log = train_srcn(model, inputs, targets, train_cfg)
    log.to_csv(outdir / "training_log.csv")
    save_checkpoint(model, None, outdir / "srcn.ckpt")
    return model, log


@dataclass
class EvalResult:
    """Aggregate and per-phantom figures of merit plus the sinogram-domain
    restoration errors needed for trend checks."""

    aggregate: MetricsReport
    per_phantom: dict[str, MetricsReport] = field(default_factory=dict)
    # rows: (phantom_id, snr_db, rmse(t_f, s_f), rmse(t_in, s_f))
    sinogram_rmse: list[tuple[str, float, float, float]] = field(default_factory=list)


def restore_sinograms(cfg: PipelineConfig, model: SrcnModel | None,
                      s_hn: Sinogram) -> dict[str, Sinogram]:
    """The four restoration routes from a degraded 50-detector sinogram.

    Returns sinograms keyed by method; "50det" passes the input through.
    """
    t_in = nn_interpolate(s_hn, cfg.detector_count)
    out = {"50det": s_hn, "nn": t_in}
    out["modwt"] = denoise_sinogram(t_in, cfg.wavelet, cfg.wavelet_levels)
    if model is not None:
        _, t_f = infer_sinogram(model, t_in)
        out["srcn"] = t_f
    return out


def evaluate_model(cfg: PipelineConfig, model: SrcnModel, outdir) -> EvalResult:
    outdir = Path(outdir)
    med = medium_of(cfg)
    dets = detectors_of(cfg)
    scfg = solver_config(cfg)
    fwd = ForwardOperator(forward_grid(cfg), med, dets, scfg)
    tr_full = TimeReversalOperator(recon_grid(cfg), med, dets, scfg)
    tr_half = TimeReversalOperator(recon_grid(cfg), med,
                                   dets.thin(cfg.subsample_factor), scfg)

    sums: dict[tuple[str, float], list[float]] = {}
    result = EvalResult(aggregate=MetricsReport(
        reference="time reversal of the noise-free full-detector sinogram"))

    for i in range(cfg.eval_phantoms):
        phantom_id = f"eval_{i:03d}"
        pdir = outdir / phantom_id
        pdir.mkdir(parents=True, exist_ok=True)
        spec = eval_phantom_spec(cfg, i)
        phantom = make_phantom(spec, fwd.grid)
        _write_field_with_preview(phantom.crop(), pdir / "phantom.pafd")
        s_f = fwd.run(phantom)
        _write_sinogram_with_preview(s_f, pdir / "s_f.pasg")
        ref = tr_full.run(s_f)
        _write_field_with_preview(ref, pdir / "recon_ref.pafd")

        report = MetricsReport(reference=str(pdir / "recon_ref.pafd"))
        for j, snr in enumerate(cfg.snr_levels):
            cell = pdir / f"snr_{snr:g}"
            cell.mkdir(parents=True, exist_ok=True)
            noisy = add_gaussian_noise(
                s_f, snr, _seed_eval_noise(cfg.master_seed, i, j))
            s_hn = subsample_detectors(noisy, cfg.subsample_factor)
            _write_sinogram_with_preview(s_hn, cell / "s_hn.pasg")
            restored = restore_sinograms(cfg, model, s_hn)
            _write_sinogram_with_preview(restored["nn"], cell / "t_in.pasg")
            _write_sinogram_with_preview(restored["modwt"], cell / "t_modwt.pasg")
            _write_sinogram_with_preview(restored["srcn"], cell / "t_f.pasg")
            result.sinogram_rmse.append((
                phantom_id, snr,
                rmse(restored["srcn"], s_f),
                rmse(restored["nn"], s_f),
            ))
            for method in METHODS:
                op = tr_half if method == "50det" else tr_full
                recon = op.run(restored[method])
                _write_field_with_preview(recon, cell / f"recon_{method}.pafd")
                r = rmse(ref, recon)
                p = psnr(ref, recon)
                report.add(method, snr, r, p)
                sums.setdefault((method, snr), []).append((r, p))
        report.to_csv(pdir / "metrics.csv")
        result.per_phantom[phantom_id] = report

    for (method, snr), values in sums.items():
        mean_r = sum(v[0] for v in values) / len(values)
        mean_p = sum(v[1] for v in values) / len(values)
        result.aggregate.add(method, snr, mean_r, mean_p)
    result.aggregate.to_csv(outdir / "metrics.csv")
    return result


def run_pipeline(cfg: PipelineConfig) -> EvalResult:
    """Validate, simulate the dataset, train, evaluate, and report.

    Any stage failure aborts with the stage name; partial outputs from
    completed stages stay on disk.
    """
    stage = "validate"
    try:
        cfg.validate()
        outdir = Path(cfg.outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        started = time.strftime("%Y-%m-%dT%H:%M:%S")

        stage = "dataset"
        manifest = generate_dataset(cfg, outdir / "train")

        stage = "train"
        model, _ = train_from_manifest(cfg, manifest, outdir)

        stage = "evaluate"
        result = evaluate_model(cfg, model, outdir / "eval")

        stage = "report"
        seeds = {
            "train_shuffle": mix_seed(cfg.master_seed, 1),
            "model_init": mix_seed(cfg.master_seed, 2),
            "train_phantoms": [_seed_train_phantom(cfg.master_seed, i)
                               for i in range(cfg.train_phantoms)],
            "eval_phantoms": [_seed_eval_phantom(cfg.master_seed, i)
                              for i in range(cfg.eval_phantoms)],
        }
        with open(outdir / "run_manifest.json", "w") as fh:
            json.dump({
                "started": started,
                "master_seed": cfg.master_seed,
                "config": cfg.to_dict(),
                "stage_seeds": seeds,
                "metrics_csv": str(outdir / "eval" / "metrics.csv"),
                "checkpoint": str(outdir / "srcn.ckpt"),
            }, fh, indent=1, sort_keys=True)
        with open(outdir / "config.resolved", "w") as fh:
            fh.write(format_config(cfg))
        return result
    except SinosrError as exc:
        if isinstance(exc, StageFailure):
            raise
        raise StageFailure(stage, exc) from exc
