"""Inverting a classifier by gradient ascent on log f_c(x), then judging the result.

An independently trained evaluator (wider, different seed) decides whether each
reconstruction looks like the attacked class. Lower attack accuracy means the
target leaks less about its training data.

Run: python3 demos/03_model_inversion.py
"""

import numpy as np

from bido.attack import AttackConfig, invert_class, run_attack
from bido.data import split, synthetic_digits
from bido.experiments import train_evaluator
from bido.model import mlp
from bido.training import BiDOConfig, TrainConfig, train


def ascii_image(v, shape=(12, 12)):
    ramp = " .:-=+*#%@"
    img = v.reshape(shape)
    return "\n".join("".join(ramp[min(int(p * 10), 9)] for p in row) for row in img)


tr, va, te = split(synthetic_digits(100, seed=1), (0.8, 0.1, 0.1), seed=1)
cfg = TrainConfig(batch_size=64, learning_rate=1e-3, max_epochs=15, optimizer="adam")
evaluator = train_evaluator(tr, va, (512, 256), seed=77, train_config=cfg)
print(f"evaluator test accuracy {evaluator.accuracy(te):.3f}\n")

attack = AttackConfig(steps=100, restarts=2, trials_per_class=30, repetitions=2)
for name, bido in [("plain", BiDOConfig.plain()), ("BiDO-HSIC (2, 20)", BiDOConfig.hsic(2, 20))]:
    target = mlp(tr.dim, (256, 128, 64), tr.class_count, seed=1)
    train(target, tr, va, cfg, bido)
    report = run_attack(target, evaluator, attack)
    print(f"{name}: test acc {target.accuracy(te):.3f}, attack acc {report.attack_acc:.3f} "
          f"(+- {report.std_acc:.3f}), top-5 {report.attack_acc5:.3f}")
    x = invert_class(target, 3, AttackConfig(steps=200, restarts=3, trials_per_class=1,
                                             repetitions=1))[0]
    print(f"reconstruction of class 3 (evaluator says {int(evaluator.predict(x[None])[0])}):")
    print(ascii_image(x))
    print()

print("A class-average training glyph, for reference:")
print(ascii_image(np.mean(tr.inputs[tr.targets == 3], axis=0)))
