"""Prototype-guided pseudo-bag division and gated-attention MIL classification."""

from .bagdata import CorpusManifest, FeatureBag, load_corpus, load_manifest, read_bag, write_bag
from .divider import DividerConfig, DivisionAssignment, divide
from .metrics import MetricsReport, accuracy_sensitivity, auc, make_folds
from .mil import MilModel, infer_bag, predict_pseudo_bag, train_bag_step
from .prototype import Prototype, PrototypeModule, attention_prototype, mean_prototype
from .synthgen import SynthConfig, generate
from .trainer import TrainConfig, bench_division, run_experiment, run_sweep

__version__ = "0.1.0"
