"""
Directed label noise on Gaussian blobs
======================================

Four classes; a fraction eps of the training labels of class c is flipped to
c + 1. Minibatch SGD fits the flipped labels; keeping the lower-loss half of
each minibatch mostly ignores them.
"""
from mklsgd.datagen import ClassificationSpec
from mklsgd.experiments import classification_benchmark

for eps in (0.0, 0.2, 0.4):
    t = classification_benchmark(ClassificationSpec(epsilon=eps), seeds=range(3))
    line = "  ".join(f"{name} {100 * t.mean(name):5.2f}" for name in t.names)
    print(f"eps={eps:.1f}  clean test accuracy: {line}")
    if eps == 0.2:
        for name in ("sgd", "mkl"):
            print(f"         {name}: train loss {t.final_loss(name):.3f}, test loss {t.final_loss(name, 'test'):.3f}")
