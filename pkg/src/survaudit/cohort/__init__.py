from .dataset import Cohort, preprocess_visits, stratified_split
from .grid import GridError, TimeGrid, fit_time_grid
from .labels import build_survival_labels, truncate_at_risk
from .preprocess import Preprocessor, impute, normalize_minmax, one_hot
from .schema import FeatureSpec, IngestionError, SurvivalRecord, TableSchema, read_visits, validate_visits
from .synth import AttributeGen, CohortConfig, CohortTruth, ConfigError, FeatureGen, generate_cohort, hazards_to_pmf

__all__ = [
    "AttributeGen", "Cohort", "CohortConfig", "CohortTruth", "ConfigError", "FeatureGen",
    "FeatureSpec", "GridError", "IngestionError", "Preprocessor", "SurvivalRecord", "TableSchema",
    "TimeGrid", "build_survival_labels", "fit_time_grid", "generate_cohort", "hazards_to_pmf",
    "impute", "normalize_minmax", "one_hot", "preprocess_visits", "read_visits",
    "stratified_split", "truncate_at_risk", "validate_visits",
]
