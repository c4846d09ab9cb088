"""Power-mean welfare and malfare, their estimation, and malfare-minimizing trainers."""

from .aggregator import (PowerSpec, Sense, SentimentProfile, affine_shift_mean,
                         cas_mean, generalized_f_mean, malfare, power_mean,
                         welfare)
from .inequality import atkinson_index, welfare_via_atkinson
from .estimation import (BoundMethod, BoundReport, bennett_epsilon,
                         hoeffding_epsilon, malfare_bracket,
                         nsw_hardness_bound, nsw_hardness_simulate,
                         plugin_malfare, uc_sample_complexity)
from .losses import LinearModel, LossKind, group_risks
from .dataset import GroupedDataset, load_csv, make_synthetic, split
from .emm import (TrainConfig, emm_objective, emm_subgradient,
                  enumerate_stump_cover, realizable_mix_train, sweep_p,
                  train_cover, train_psg)

__version__ = "0.1.0"
