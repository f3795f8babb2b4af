"""Photoacoustic sinogram super-resolution and denoising at desk scale:
simulate boundary data from phantoms, degrade it, restore it by
nearest-neighbor interpolation, MODWT thresholding, or a residual CNN,
reconstruct images by time reversal, and quantify with RMSE/PSNR."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DimensionError,
    FileFormatError,
    GeometryError,
    SinosrError,
    SolverError,
    TrainingError,
    ValidationError,
)
from .grids import (
    PHANTOM_HALF_EXTENT,
    AcousticMedium,
    DetectorArray,
    Grid2D,
    PressureField,
    Sinogram,
    SourceModel,
    TransducerResponse,
    read_field,
    read_pgm,
    read_sinogram,
    write_field,
    write_pgm,
    write_sinogram,
)
from .phantoms import (
    DerenzoSpec,
    DiskSpec,
    ImageImportSpec,
    VesselSpec,
    import_image,
    make_derenzo,
    make_disk,
    make_phantom,
    make_vessel,
)
from .wavesim import (
    ForwardOperator,
    SolverConfig,
    TimeReversalOperator,
    apply_transducer_response,
    bandlimited_disk,
    simulate_forward,
    time_reversal_reconstruct,
)
from .sinogram_ops import (
    PatchPair,
    add_gaussian_noise,
    apply_restoration,
    compute_residual,
    extract_patches,
    mix_seed,
    nn_interpolate,
    subsample_detectors,
)
from .wavelet import (
    ModwtCoeffs,
    denoise_signal,
    denoise_sinogram,
    imodwt,
    modwt,
    universal_threshold,
)
from .metrics import MetricsReport, measured_snr, psnr, rmse
from .nn.srcn import (
    SrcnModel,
    TrainConfig,
    build_srcn,
    infer_sinogram,
    load_checkpoint,
    save_checkpoint,
    train_srcn,
)
from .estimators import (
    DetectorSubsampler,
    GaussianNoiseInjector,
    ModwtDenoiser,
    NearestNeighborUpsampler,
    SrcnDenoiser,
)
from .config import PipelineConfig, apply_overrides, load_config
from .pipeline import run_pipeline
