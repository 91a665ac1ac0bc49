"""
voxconn

Voxel-level functional connectivity between brain regions, estimated by a
two-stage restricted maximum likelihood mixed model, with simulation,
asymptotic inference and FDR-controlled network construction.
"""

__version__ = "1.0.0"

from .config.settings import RunConfig, settings
from .estimators.inference import infer_pair
from .estimators.stage1 import fit_region
from .estimators.stage2 import fit_pair
from .pipeline.network import by_threshold, fit_network, network_pipeline
from .simulation.simulator import get_preset, simulate_dataset
from .utils.monitoring import metrics_collector

__all__ = [
    'RunConfig',
    'settings',
    'fit_region',
    'fit_pair',
    'infer_pair',
    'fit_network',
    'by_threshold',
    'network_pipeline',
    'get_preset',
    'simulate_dataset',
    'metrics_collector',
]
