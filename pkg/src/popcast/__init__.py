"""Popularity prediction for forwarded messages from their early repost counts."""

from .baseline import LogGrowthProfile, baseline_predict, fit_baseline
from .fitting import FitReport, PowerLawFit, fit_bihill, fit_r_powerlaw
from .ingest import AverageSeries, BinnedSeries, EventLog, ForwardEvent, average, bin_events, normalize
from .metrics import EvalPair, EvalSummary, ape, ape_percentiles, mape, summarize, tic
from .model import BiHillParams, Calibration, HillParams, ad_eval, bihill_eval, hill_eval, r_index
from .predictor import (
    ADModel,
    PeakClass,
    PredictionRecord,
    TrainConfig,
    calibrate,
    classify_peak,
    predict_message,
    q_max_known,
    train_pipeline,
)
from .synth import SynthConfig, generate, preset

__version__ = "0.1.0"
