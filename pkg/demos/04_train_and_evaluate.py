"""Train the covariance regressor on a handful of labeled scans and read
the evaluation report.

Labels here are handcrafted well-scaled covariances, which keeps the demo
fast; demos/05 trains on real Monte-Carlo labels end to end.

Run: python3 demos/04_train_and_evaluate.py  (a few seconds)
"""
import numpy as np

from licov.cloud import voxel_downsample
from licov.mcgen import CovRecord
from licov.metrics import evaluate, report_text
from licov.model import TrainConfig, predict, train
from licov.scenes import make_synthetic_scene

seq = make_synthetic_scene("room", density=4, seed=11, n_frames=4)
rng = np.random.default_rng(9)
samples = []
for k in range(len(seq)):
    a = rng.normal(size=(6, 6)) * 0.3
    cov = (a @ a.T + np.eye(6)) * 1e-2
    rec = CovRecord(k, 50, cov, 0, 0, np.zeros(6))
    samples.append((rec, voxel_downsample(seq.scan(k), 0.3)))

cfg = TrainConfig(steps=400, batch_size=4, seed=5, augment=False)
model, losses = train(samples, cfg)
print(f"trained {cfg.steps} steps: loss {losses[0]:.4f} -> {losses[-1]:.4f}")

preds = [predict(model, scan) for _, scan in samples]
labels = [rec.covariance for rec, _ in samples]
print("\nper-frame var(u_x), predicted vs label:")
for k, (p, y) in enumerate(zip(preds, labels)):
    print(f"  frame {k}: {p[0, 0]:.4f} vs {y[0, 0]:.4f}")

print("\n" + report_text(evaluate(preds, labels)))
