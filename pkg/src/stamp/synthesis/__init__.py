"""Environment synthesis: seed sampling, generation, static verification, repair."""

from .bundle import Element, EnvironmentBundle, Page, PageGraph
from .catalog import SeedCatalog, default_catalog
from .external import VerificationFailed, external_generate
from .generator import generate_environment, generate_from_master_seed, sample_seeds
from .patterns import UnsupportedTaskSeed, pattern_for
from .repair import RepairRejected, repair
from .verifier import InspectionReport, statically_verify

__all__ = [
    "Element", "EnvironmentBundle", "InspectionReport", "Page", "PageGraph", "RepairRejected", "SeedCatalog",
    "UnsupportedTaskSeed", "VerificationFailed", "default_catalog", "external_generate", "generate_environment",
    "generate_from_master_seed", "pattern_for", "repair", "sample_seeds", "statically_verify",
]
