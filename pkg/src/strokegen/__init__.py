"""Layout-guided handwriting stroke generation.

A conditional denoising-diffusion model over pen-stroke sequences, steered
by three signals: multi-scale attention features of a reference handwriting
image, the character string to write, and per-word bounding boxes saying
where each word belongs on the line.
"""

from .dataset import (Sample, SyntheticWriterStyle, WordBox, WordLayout,
                      derive_layout, generate_synthetic, load_samples,
                      save_samples)
from .diffusion import (DiffusionSchedule, GenerationModel, StrokeDenoiser,
                        forward_noise, loss_drawn, loss_stroke, make_schedule,
                        reverse_chain, reverse_step, sample)
from .errors import (CheckpointError, DegenerateStroke, DivergenceError,
                     InvalidArgument, InvalidStroke, LayoutError,
                     LayoutUnderflow, NumericalError, ParseError,
                     StrokegenError, ValidationError, VocabError)
from .metrics import (MetricReport, batch_report, layout_adherence, mssim,
                      pooled_adherence, psnr)
from .stroke_core import (RasterImage, StrokePoint, StrokeSequence,
                          absolute_to_offsets, ink_bounding_box, normalize,
                          offsets_to_absolute, render)
from .style_encoder import (MultiScaleConfig, MultiScaleStyleFeatures,
                            StyleEncoder, classify_writer, encode_style,
                            gaussian_downsample, hash_spatial_index,
                            local_style_patches)
from .text_layout import TextLayoutEncoder, Vocabulary

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
