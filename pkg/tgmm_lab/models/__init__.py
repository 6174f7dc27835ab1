# tgmm_lab/models/__init__.py
from .tgmm import TGMMConfig, TemporalGraphMixer
from .fclstm import LSTMConfig, FCLSTM, lstm_cell
from .baselines import PersistencePredictor, ZeroPredictor
from .losses import masked_mae_loss, masked_mse_loss, masked_mae, masked_mape, masked_mse

__all__ = [
    "TGMMConfig", "TemporalGraphMixer",
    "LSTMConfig", "FCLSTM", "lstm_cell",
    "PersistencePredictor", "ZeroPredictor",
    "masked_mae_loss", "masked_mse_loss", "masked_mae", "masked_mape", "masked_mse",
]
