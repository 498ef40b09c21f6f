# Which features carry the prediction, early versus late?
#
# With both engagement and grades related to the outcome, early models can
# only lean on clicks; once graded work exists, scores take over.

from leapbench.dataset import SynthConfig, build_cohort, generate_synthetic
from leapbench.evaluation import importance_frame, importance_profile
from leapbench.models import get_spec

cohort = build_cohort(generate_synthetic(SynthConfig(n_instances=1500, score_effect=2.0, seed=5)))
reports = importance_profile(cohort, cutoffs=[7, 56],
                             models=[get_spec("LR"), get_spec("GBDT")])
for r in reports:
    top = ", ".join(f"{name} {w:.2f}" for name, w in r.ranking[:3])
    print(f"t={r.cutoff:2d} {r.model:5s} {top}")

frame = importance_frame(reports)
print(frame[frame["rank"] == 1].to_string(index=False))
