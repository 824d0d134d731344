"""Bundled public datasets with their schema sidecars."""
from importlib import resources

from ..data import Schema, TabularDataset, load_csv

_DIR = resources.files(__name__)


def dataset_path(name: str):
    return _DIR / f"{name}.csv"


def load_bundled(name: str) -> TabularDataset:
    schema = Schema.from_json(_DIR / f"{name}.schema.json")
    data = load_csv(dataset_path(name), schema=schema)
    return data


def load_breast_cancer(keep_id: bool = False) -> TabularDataset:
    """683 complete rows; class 1 = benign (444 rows). The sample code number is
    dropped unless ``keep_id``."""
    data = load_bundled("breast_cancer")
    return data if keep_id else data.drop_columns(["id"])


def load_german_credit() -> TabularDataset:
    """1000 rows, 20 attributes (13 one-hot encoded); class 1 = bad credit (300 rows)."""
    return load_bundled("german_credit")


BUNDLED = {
    "breast_cancer": load_breast_cancer,
    "german_credit": load_german_credit,
}
