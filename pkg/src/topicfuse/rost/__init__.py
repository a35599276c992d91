from ._backend import DEFAULT_BACKEND, KERNELS, get_kernel
from .model import (
    LocalSemanticMap,
    TopicModel,
    TopicModelConfig,
    descriptors,
    ingest_observation,
    local_map,
    neighborhood_csr,
    refine,
)

__all__ = [
    "DEFAULT_BACKEND", "KERNELS", "get_kernel", "LocalSemanticMap", "TopicModel",
    "TopicModelConfig", "descriptors", "ingest_observation", "local_map",
    "neighborhood_csr", "refine",
]
