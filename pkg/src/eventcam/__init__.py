"""Explainable event recognition toolkit: dataset ingestion, backbone
fine-tuning, Grad-CAM/CAM activation maps, evaluation reports, and a
human annotation study service."""

from .data import DatasetManifest, EventClass, Sample, load_batch, scan
from .gradcam import ActivationMap, cam, grad_cam, render_overlay
from .metrics import ClassificationReport, compute_report, evaluate
from .model import ModelBundle, ModelConfig, TrainRecord, build, finetune
from .study import Study, StudyReport, StudyStore, StudyTask, VoteRecord

__version__ = "0.1.0"

__all__ = [
    "ActivationMap", "ClassificationReport", "DatasetManifest", "EventClass",
    "ModelBundle", "ModelConfig", "Sample", "Study", "StudyReport", "StudyStore",
    "StudyTask", "TrainRecord", "VoteRecord", "build", "cam", "compute_report",
    "evaluate", "finetune", "grad_cam", "load_batch", "render_overlay", "scan",
]
