"""Robustness/accuracy trade-off and budgeted clean fine-tuning.

Part 1 mixes a clean-loss term (weight lam) into adversarial training and
compares seed means of the adversarial payoff and the clean loss.
Part 2 takes an adversarially trained network and fine-tunes it on clean
data while every parameter stays within 3% of its starting value, which
tends to buy clean accuracy without giving up certified robustness.
"""

from stackgame import (Arch, SyntheticSpec, TrainConfig, check_tradeoff, constrained_retrain,
                       generate, solve_g1, solve_gt)
from stackgame.metrics import adversarial_accuracy, clean_accuracy

EPS = 0.05
data = generate(SyntheticSpec("two_gaussians", n_samples=200, class_separation=0.3,
                              noise=0.08, dims=2, seed=0))
arch = Arch((2, 16, 16, 2), clip_bound=1.0)
seeds = range(3)

runs = {lam: [solve_gt(data, arch, EPS, "ce", lam, TrainConfig(epochs=150, lr=0.01, seed=s))
              for s in seeds] for lam in (0.0, 0.5)}
rep = check_tradeoff(runs[0.0], runs[0.5], data, EPS, "ce")
print("adversarial payoff  lam=0: %.4f   lam=0.5: %.4f   (pooled se %.4f)"
      % (rep.adv_payoff_s, rep.adv_payoff_t, rep.se_adv))
print("clean loss          lam=0: %.4f   lam=0.5: %.4f   (pooled se %.4f)"
      % (rep.clean_loss_s, rep.clean_loss_t, rep.se_clean))
print("expected ordering holds:", rep.ok, "\n")

for s in seeds:
    net = solve_g1(data, arch, EPS, "ce", TrainConfig(epochs=200, lr=0.01, seed=s)).classifier_strategy
    tuned = constrained_retrain(net, data, 3.0, TrainConfig(epochs=100, lr=0.003, seed=s))
    print(f"seed {s}: clean acc {clean_accuracy(net, data):.3f} -> {clean_accuracy(tuned, data):.3f}, "
          f"certified AA {adversarial_accuracy(net, data, EPS):.3f} -> "
          f"{adversarial_accuracy(tuned, data, EPS):.3f}")
