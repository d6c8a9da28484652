"""Learned wing aerodynamics: labels, datasets, paRNN and vanilla baseline."""
from .dataset import (AeroSequenceSample, FlightLog, SampleBatch, build_dataset, label_from_log,
                      split_contiguous)
from .reconstruct import reconstruct_batch, reconstruct_force
from .rnn import (RnnModel, TrainingDiverged, evaluate, loss_and_grad, predict_force, rnn_forward,
                  train_bptt)

__all__ = [
    "AeroSequenceSample", "FlightLog", "SampleBatch", "build_dataset", "label_from_log",
    "split_contiguous", "reconstruct_batch", "reconstruct_force", "RnnModel", "TrainingDiverged",
    "evaluate", "loss_and_grad", "predict_force", "rnn_forward", "train_bptt",
]
