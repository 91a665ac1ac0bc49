"""
Plot-ready report files for a fitted network.
"""

from pathlib import Path
from typing import Dict, Union

import pandas as pd
import structlog

from ..models.results import NetworkResult, write_json

logger = structlog.get_logger(__name__)

EDGE_COLUMNS = (
    "label_1", "label_2", "status", "rho_hat", "se_rho", "se_z", "z_score", "p_value",
    "ci_lower", "ci_upper", "ca", "fe", "ca_p_value", "spatial_noise_effect", "selected",
    "ca_selected",
)


def edge_table(network: NetworkResult) -> pd.DataFrame:
    """One row per pair with estimates, inference and selection flags."""
    return pd.DataFrame([p.summary() for p in network.pairs], columns=EDGE_COLUMNS)


def adjacency_table(network: NetworkResult) -> pd.DataFrame:
    """J x J matrix with rho_hat on selected edges and 0 elsewhere."""
    return pd.DataFrame(network.adjacency(), index=network.labels, columns=network.labels)


def node_table(network: NetworkResult) -> pd.DataFrame:
    return pd.DataFrame({
        "label": network.labels,
        "node_degree": network.node_degree,
        "fcs": network.fcs,
    })


def write_report(network: NetworkResult, directory: Union[str, Path]) -> Dict[str, Path]:
    """
    Write edges.csv, adjacency.csv, nodes.csv and estimates.json into ``directory``.

    Returns:
        Mapping of artifact name to path
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "edges": directory / "edges.csv",
        "adjacency": directory / "adjacency.csv",
        "nodes": directory / "nodes.csv",
        "estimates": directory / "estimates.json",
    }
    edge_table(network).to_csv(paths["edges"], index=False, lineterminator="\n")
    adjacency_table(network).to_csv(paths["adjacency"], index_label="label", lineterminator="\n")
    node_table(network).to_csv(paths["nodes"], index=False, lineterminator="\n")
    write_json({
        "kind": "estimates",
        "labels": network.labels,
        "q": network.q,
        "pairs": [p.summary() for p in network.pairs],
        "node_degree": network.node_degree,
        "fcs": network.fcs,
        "comparison": network.comparison,
    }, str(paths["estimates"]))
    logger.info("Report written", directory=str(directory),
                selected=len(network.selected_edges()))
    return paths
