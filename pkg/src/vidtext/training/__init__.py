from .checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from .loss import LossBreakdown, symmetric_ce_loss
from .optim import FreezePolicy, OptimState, adam_step, apply_freeze, cosine_lr
from .transfer import init_calculator, repeat_rows
