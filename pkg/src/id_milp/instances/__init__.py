from .continuous import (
    BREAKPOINTS,
    SamplePath,
    SampleSet,
    TurbineCosts,
    TurbineVariances,
    default_breakpoints,
    discretize_from_samples,
    discretize_turbine,
    reward,
    sample_parameters,
    turbine_continuous_sample,
)
from .discrete import (
    FAMILIES,
    GeneratorConfig,
    generate,
    generate_oil,
    generate_turbine,
    generate_water,
    random_cpt,
)

__all__ = [
    "BREAKPOINTS", "SamplePath", "SampleSet", "TurbineCosts", "TurbineVariances",
    "default_breakpoints", "discretize_from_samples", "discretize_turbine", "reward",
    "sample_parameters", "turbine_continuous_sample",
    "FAMILIES", "GeneratorConfig", "generate", "generate_oil", "generate_turbine",
    "generate_water", "random_cpt",
]
