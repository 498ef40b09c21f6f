# How much does a leaky pipeline flatter an early model?
#
# Here assessment scores are the only thing related to the outcome, and the
# first assessment is due on day 19. At day 7 an honest model has nothing to
# go on; a pipeline that forgets to truncate assessment records does.

from leapbench.dataset import SynthConfig, build_cohort, generate_synthetic
from leapbench.evaluation import ablation
from leapbench.models import get_spec

cfg = SynthConfig(n_instances=1200, engagement_effect=0.0, score_effect=2.0, seed=3)
cohort = build_cohort(generate_synthetic(cfg))

rf = get_spec("RF", n_estimators=100)
result = ablation(cohort, cutoffs=[7, 56], models=[rf], seeds=[0, 1, 2])
print(result.table().round(4).to_string(index=False))

# At day 56 every record is already admissible, so all three policies agree.
