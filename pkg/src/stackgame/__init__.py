"""Adversarial learning as zero-sum games over small ReLU classifiers."""

from .losses import LossKind, eval_loss, grad_loss, lipschitz_constant
from .network import Network, classify, forward, gradients, param_count, project_params
from .data import Dataset, SyntheticSpec, generate, load_csv, save_csv
from .attacks import AttackBundle, PgdConfig, build_bundle, grid_oracle, pgd_attack
from .metrics import (RobustnessReport, adversarial_accuracy, adversarial_risk,
                      clean_loss, evaluate, lipschitz_certificate, param_lipschitz_check,
                      payoff)
from .training import Arch, TrainConfig, train
from .games import (EquilibriumRecord, MatrixGame, MixedStrategy, fictitious_play,
                    matrix_maxmin, matrix_minmax, matrix_mixed, solve_g1, solve_g2,
                    solve_g3_mixed, support_enumeration, verify_ordering)
from .tradeoff import (TradeoffConfig, check_tradeoff, constrained_retrain, nu_ball_probe,
                       solve_gt)

__version__ = "0.1.0"
