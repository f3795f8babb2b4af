"""Pipeline orchestration pieces on miniature configurations; the full
experiment is exercised by the acceptance suite."""

import json

import numpy as np
import pytest

from sinosr.config import PipelineConfig, apply_overrides
from sinosr.errors import SinosrError
from sinosr.grids import read_sinogram
from sinosr.pipeline import (
    StageFailure,
    eval_phantom_spec,
    generate_dataset,
    load_manifest,
    patches_from_manifest,
    run_pipeline,
    train_phantom_spec,
)
from sinosr.phantoms import DerenzoSpec, VesselSpec
from sinosr.sinogram_ops import mix_seed

MINI = dict(
    forward_nx=101, forward_dx=4e-4,
    recon_nx=81, recon_dx=5e-4,
    detector_count=16, detector_radius=15e-3,
    time_steps=400, pml_width=12,
    train_phantoms=3, eval_phantoms=2,
    patches_per_sinogram=10, patch_size=12,
    snr_levels=(20.0,),
    epochs=1, batch_size=100, master_seed=77,
    transducer_enabled=False,
)


def test_phantom_spec_families():
    cfg = PipelineConfig(**MINI)
    kinds = {type(train_phantom_spec(cfg, i)).__name__ for i in range(8)}
    assert kinds == {"VesselSpec", "DerenzoSpec"}
    # disjoint seed streams for train and eval
    train_seeds = {train_phantom_spec(cfg, i).seed for i in range(4)
                   if isinstance(train_phantom_spec(cfg, i), VesselSpec)}
    eval_specs = [eval_phantom_spec(cfg, i) for i in range(4)]
    eval_seeds = {s.seed for s in eval_specs if isinstance(s, VesselSpec)}
    assert train_seeds.isdisjoint(eval_seeds)


def test_compact_phantom_scaling():
    cfg = apply_overrides(PipelineConfig(**MINI), ["phantom_radius=4.5e-3"])
    derenzo = next(train_phantom_spec(cfg, i) for i in range(8)
                   if isinstance(train_phantom_spec(cfg, i), DerenzoSpec))
    assert derenzo.outer_radius == pytest.approx(4.5e-3)
    assert max(derenzo.radii) < 1.2e-3
    vessel = next(s for s in (train_phantom_spec(cfg, i) for i in range(8))
                  if isinstance(s, VesselSpec))
    assert vessel.max_radius == pytest.approx(4.5e-3)


def test_generate_dataset_manifest_and_patches(tmp_path):
    cfg = PipelineConfig(**MINI, outdir=str(tmp_path)).validate()
    manifest = generate_dataset(cfg, tmp_path / "train")
    assert manifest["total_patch_pairs"] == 30
    assert len(manifest["entries"]) == 3
    for entry in manifest["entries"]:
        s_in = read_sinogram(entry["s_in"])
        s_f = read_sinogram(entry["s_f"])
        s_r = read_sinogram(entry["s_r"])
        assert np.allclose(s_r.data, s_in.data - s_f.data)
        assert s_in.data.shape == (400, 16)
    # manifest file round trip and patch extraction
    loaded = load_manifest(tmp_path / "train" / "manifest.json")
    inputs, targets = patches_from_manifest(loaded)
    assert len(inputs) == 30
    assert inputs[0].shape == (12, 12)
    # snr levels cycle across phantoms
    snrs = [e["snr_db"] for e in manifest["entries"]]
    assert snrs == [20.0, 20.0, 20.0]


def test_stage_failure_names_stage(tmp_path):
    bad = PipelineConfig(**{**MINI, "time_steps": 150},
                         outdir=str(tmp_path))  # window too short
    with pytest.raises(StageFailure) as err:
        run_pipeline(bad)
    assert err.value.stage == "dataset"
    assert isinstance(err.value.cause, SinosrError)


def test_seed_mixing_matches_documentation():
    cfg = PipelineConfig(**MINI)
    spec = train_phantom_spec(cfg, 5)
    assert spec.seed == mix_seed(cfg.master_seed, 1005)
