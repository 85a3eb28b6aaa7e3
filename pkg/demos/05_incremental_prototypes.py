"""Few-shot class-incremental learning over frozen features.

Seven base classes get full data; three novel classes arrive one per
session with only a handful of shots each. All methods classify by cosine
similarity to unit-norm prototypes; they differ in how the novel prototype
is built. The no-update baseline shows why doing nothing fails.
"""

import numpy as np

from ohz.fscil import SessionConfig, run_protocol
from ohz.synth import gaussian_clusters

train = gaussian_clusters(10, 100, 32, separation=6.0, seed=0)
test = gaussian_clusters(10, 60, 32, separation=6.0, seed=1)

print(f"{'method':<10}", end="")
for shots in (1, 5, 10):
    print(f"  {shots:>2}-shot", end="")
print("   base")

for method in ("baseline", "sppr", "orco", "concm"):
    row = f"{method:<10}"
    base_acc = None
    for shots in (1, 5, 10):
        config = SessionConfig(base_class_count=7, shots=shots, method=method,
                               seed=0, test_sample_count=400)
        result = run_protocol(config, train, test)
        base_acc = result.base_accuracy
        row += f"  {result.overall_accuracy:6.1f}%"
    print(row + f"  {base_acc:5.1f}%")

print()
config = SessionConfig(base_class_count=7, shots=5, method="baseline", seed=0,
                       test_sample_count=400)
final = run_protocol(config, train, test).session_results[-1]
novel = np.isin(final.class_ids, [7, 8, 9])
print("baseline recall on the three novel classes:",
      final.per_class_recall[novel].tolist(),
      "(structurally zero: no prototypes exist for them)")
print()
print("per-session accuracy for concm, 5-shot:")
config = SessionConfig(base_class_count=7, shots=5, method="concm", seed=0,
                       test_sample_count=400)
for res in run_protocol(config, train, test).session_results:
    print(f"  session {res.session_index}: {res.class_ids.size:2d} classes, "
          f"overall {res.overall_accuracy:.1f}%")
