"""Threshold-sweep metrics and the fixed operating point.

Sweeps the unknown-detection threshold over energy scores from a partly
overlapping synthetic problem, reports AUROC / AUPR / FPR@95 / OSCR, and
shows the decision statistics when 95% of OOD samples must be rejected.
"""

import numpy as np

from ohz.featstore import FeatureSet
from ohz.metrics import auroc, aupr, decision_stats, fpr_at_tpr, oscr, roc
from ohz.probe import TrainConfig, predict, train_probe
from ohz.scores import score_pipeline
from ohz.synth import gaussian_clusters

# separation 3 sigma: hard enough that the curves are not step functions
full = gaussian_clusters(10, 200, 32, separation=3.0, seed=0)
known = full.labels < 6
train = FeatureSet(features=full.features[known], labels=full.labels[known])

test_src = gaussian_clusters(10, 150, 32, separation=3.0, seed=3)
id_mask = test_src.labels < 6
id_test = FeatureSet(features=test_src.features[id_mask],
                     labels=test_src.labels[id_mask])
ood_test = FeatureSet(features=test_src.features[~id_mask],
                      labels=np.full(int((~id_mask).sum()), -1))

model = train_probe(train, TrainConfig(seed=0), num_classes=6).model
sv_id, sv_ood = score_pipeline("energy", id_test, ood_test, probe=model)

print("energy scores over", id_test.n, "ID and", ood_test.n, "OOD samples")
print()
print(f"AUROC   {auroc(sv_id.scores, sv_ood.scores):7.2f}%")
print(f"AUPR    {aupr(sv_id.scores, sv_ood.scores):7.2f}%")
fpr95, tau = fpr_at_tpr(sv_id.scores, sv_ood.scores, 0.95)
print(f"FPR@95  {fpr95:7.2f}%   (threshold tau = {tau:.4f})")

preds = predict(model, id_test.features)
curve, area = oscr(sv_id.scores, preds, id_test.labels, sv_ood.scores)
closed = np.mean(preds == id_test.labels)
print(f"OSCR    {area:7.4f}    (closed-set accuracy {closed * 100:.2f}% bounds it)")

print()
print("decision statistics at 95% OOD rejection:")
ds = decision_stats(sv_id.scores, sv_ood.scores, 0.95)
print(f"  threshold          {ds.threshold:.4f}")
print(f"  FPR on ID          {ds.fpr_id * 100:.1f}%")
print(f"  ID kept as known   {ds.id_kept} / {ds.id_total}")
print(f"  retention rate     {ds.retention_rate * 100:.1f}%")
print(f"  OOD rejected       {ds.ood_rejection_rate * 100:.1f}%")

sweep = roc(sv_id.scores, sv_ood.scores)
print()
print("ROC sweep has", len(sweep.thresholds), "exact threshold points",
      "(no binning); endpoints:",
      f"({sweep.fpr[0]:.0f},{sweep.tpr[0]:.0f}) -> ({sweep.fpr[-1]:.0f},{sweep.tpr[-1]:.0f})")
