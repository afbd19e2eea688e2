"""Why penalizing d(X, Y_hat) alone fails: it fights the supervised loss.

We sweep the weight of a COCO penalty on the (input, softmax output) pair.
Past a threshold the classifier cannot keep its outputs informative and
accuracy falls to chance; the bilateral objective has no such conflict
because it rewards dependence on the labels.

Run: python3 demos/04_unilateral_conflict.py
"""

from bido.data import split, synthetic_digits
from bido.model import mlp
from bido.training import BiDOConfig, TrainConfig, train

tr, va, te = split(synthetic_digits(80, seed=2), (0.8, 0.1, 0.1), seed=2)
cfg = TrainConfig(batch_size=64, learning_rate=1e-3, max_epochs=12, optimizer="adam", seed=2)

print("unilateral COCO penalty on d(X, Y_hat)")
for lam in (0.0, 1e2, 1e3, 1e4, 1e5, 1e6):
    model = mlp(tr.dim, (128, 64), tr.class_count, seed=2)
    bido = BiDOConfig.plain() if lam == 0 else BiDOConfig.unilateral(lam)
    train(model, tr, va, cfg, bido)
    print(f"  lambda {lam:8.0e}: test accuracy {model.accuracy(te):.3f}")

print("bilateral HSIC at strong weights")
for lx, ly in ((10, 100), (50, 500)):
    model = mlp(tr.dim, (128, 64), tr.class_count, seed=2)
    train(model, tr, va, cfg, BiDOConfig.hsic(lx, ly))
    print(f"  ({lx}, {ly}): test accuracy {model.accuracy(te):.3f}")
