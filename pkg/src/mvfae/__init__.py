"""Multi-view factorization autoencoder with graph constraints.

Set MVFAE_THREADS to cap the linear-algebra thread pools; it must take
effect before the numeric backend loads, which is why it is translated
here at package import time.
"""

import os as _os

_threads = _os.environ.get("MVFAE_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .data import (LabelVector, SplitData, SplitSpec, SynthSpec, ViewBundle,
                   prepare_dataset, split, synth_generate, write_dataset)
from .errors import MvfaeError
from .graphs import (InteractionNetwork, SimilarityNetwork,
                     cosine_similarity_network, fuse_similarities, laplacian,
                     normalize_frobenius)
from .metrics import (RunConfig, RunSummary, accuracy_at_threshold, auc,
                      repeat_runs, single_run)
from .model import (ModelConfig, MvfaeModel, init_model, predict_proba,
                    project_decoder_columns)
from .objective import LossBreakdown, supervised_loss, unsupervised_loss
from .optim import (AdamState, Schedule, TrainOptions, TrainRecord, adam_step,
                    load_checkpoint, save_checkpoint, train)
from .selfcheck import build_tiny_instance, run_gradient_check
from .tensor import Tape, backward, finite_diff_check

__version__ = "0.1.0"

__all__ = [
    "AdamState", "InteractionNetwork", "LabelVector", "LossBreakdown",
    "ModelConfig", "MvfaeError", "MvfaeModel", "RunConfig", "RunSummary",
    "Schedule", "SimilarityNetwork", "SplitData", "SplitSpec", "SynthSpec",
    "Tape", "TrainOptions", "TrainRecord", "ViewBundle",
    "accuracy_at_threshold", "adam_step", "auc", "backward",
    "build_tiny_instance", "cosine_similarity_network", "finite_diff_check",
    "fuse_similarities", "init_model", "laplacian", "load_checkpoint",
    "normalize_frobenius", "predict_proba", "prepare_dataset",
    "project_decoder_columns", "repeat_runs", "run_gradient_check",
    "save_checkpoint", "single_run", "split", "supervised_loss",
    "synth_generate", "train", "unsupervised_loss", "write_dataset",
]
