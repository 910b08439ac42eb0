"""Adaptive semantic grouping for continual task streams.

Online radius-threshold grouping of tasks by learned semantic vectors,
candidate-group collection, permutation-based refinement with model
retrieval, group-conditioned prompt/key models, synthetic shift-scenario
generators, and an evaluation harness.
"""

from .assignment import (AssignmentOutcome, assign_neighborhood, assign_task,
                         sequential_grouping)
from .core import (GroupingConfig, GroupingState, GroupStats, Partition,
                   TaskRecord, avg_distance, centroid, trial_distance)
from .experiment import ExperimentConfig, ExperimentReport, run_experiment
from .metrics import (AccuracyMatrix, adjusted_rand_index, forgetting,
                      grouping_objective, last_accuracy,
                      normalized_mutual_information)
from .models import (GroupModel, PolicySpec, SharedClassifier, TuningConfig,
                     avg_merge, infer_group, make_baseline, predict,
                     predict_batch, tune)
from .prospective import (ProspectiveRepository, collect_prospective, kmeans,
                          random_threshold_clustering, representative_counts,
                          silhouette_score)
from .refinement import (RefinementResult, apply_refinement,
                         exhaustive_min_groups, find_minimum_group_order,
                         is_reduced)
from .scenarios import (ScenarioConfig, ScenarioStream, gen_overlap,
                        gen_recurrence, gen_uniform_abrupt, gen_uniform_mild,
                        load_stream, save_stream)
from .warmup import (TaskDataset, ToyBackbone, WarmupConfig, WarmupPrompt,
                     backbone_feature, extract_semantic, make_backbone,
                     prompted_feature, run_warmup, warmup_train)

__version__ = "0.1.0"
