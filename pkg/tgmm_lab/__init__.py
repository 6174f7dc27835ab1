"""tgmm_lab: Temporal Graph MLP-Mixer forecasting laboratory."""

__version__ = "0.1.0"
