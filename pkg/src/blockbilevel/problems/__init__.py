from .datasets import CorruptionRecord, Dataset, corrupt, load_libsvm, \
    make_synthetic_binary, save_libsvm, split_dataset
from .hyperweight import HyperWeightMBBO, make_hyperweight
from .quadratic import QuadraticMBBO, make_quadratic

__all__ = [
    "CorruptionRecord", "Dataset", "HyperWeightMBBO", "QuadraticMBBO",
    "corrupt", "load_libsvm", "make_hyperweight", "make_quadratic",
    "make_synthetic_binary", "save_libsvm", "split_dataset",
]
