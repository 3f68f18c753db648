import numpy as np
import pytest

from compfeat.data import Column, Dataset, FeatureSchema


@pytest.fixture
def tiny_schema():
    """One quantitative OF, one categorical OF, one CF (u=3), binary label."""
    return FeatureSchema((
        Column("age", "quantitative", "OF"),
        Column("color", "categorical", "OF", ("blue", "green", "red", "teal")),
        Column("status", "categorical", "CF", ("a", "b", "c")),
        Column("y", "binary", "label", ("no", "yes")),
    ))


def build_dataset(schema, n, seed=0, cf_truth=None):
    rng = np.random.default_rng(seed)
    of_values = []
    for col in schema.of_columns:
        if col.kind == "quantitative":
            of_values.append(rng.uniform(0.0, 10.0, size=n))
        else:
            of_values.append(rng.integers(1, col.size + 1, size=n))
    cf_cols = schema.cf_columns
    if cf_truth is None and cf_cols:
        cf_truth = np.column_stack(
            [rng.integers(1, c.size + 1, size=n) for c in cf_cols]
        )
    labels = rng.integers(1, 3, size=n)
    return Dataset(schema=schema, of_values=tuple(of_values), labels=labels,
                   cf_truth=cf_truth)


@pytest.fixture
def tiny_dataset(tiny_schema):
    return build_dataset(tiny_schema, 40, seed=1)
