import json

import pytest

SMALL_COHORT = {
    "n_subjects": 500, "baseline_logit": -2.0, "seed": 3,
    "features": [{"name": "signal", "coef": 1.5}, {"name": "noise0"},
                 {"name": "site", "kind": "categorical", "levels": ["a", "b", "c"],
                  "probs": [0.4, 0.3, 0.3]}],
    "attributes": [{"name": "sex", "levels": ["F", "M"], "prevalence": [0.5, 0.5]}],
}

FAST = {"epochs": 2, "bootstrap": 30, "importance_reps": 2, "hidden": [8]}


@pytest.fixture
def cohort_config(tmp_path):
    path = tmp_path / "cohort.json"
    path.write_text(json.dumps(SMALL_COHORT))
    return path


@pytest.fixture(scope="session")
def prepared(tmp_path_factory):
    """Generated and preprocessed small cohort shared by service and CLI tests."""
    from survaudit.pipeline import generate_stage, preprocess_stage
    from survaudit.cohort import CohortConfig

    d = tmp_path_factory.mktemp("prepared")
    generate_stage(CohortConfig.from_dict(SMALL_COHORT), d / "visits.csv", d / "schema.json",
                   d / "truth.csv")
    preprocess_stage(d / "visits.csv", d / "schema.json", d / "cohort.csv", d / "manifest.json")
    return d
