from services.scene.clustering import NOISE, cluster_stuff, dbscan
from services.scene.generator import coverage_report, generate_scene
from services.scene.storage import (
    import_labeled_cloud,
    import_point_cloud,
    load_scene,
    save_scene,
    scene_rows,
    write_labeled_cloud,
)
from services.scene.streets import Region, StreetMap
from services.scene.types import ClassRegistry, Instance, Provenance, Scene

__all__ = [
    "NOISE",
    "ClassRegistry",
    "Instance",
    "Provenance",
    "Region",
    "Scene",
    "StreetMap",
    "cluster_stuff",
    "coverage_report",
    "dbscan",
    "generate_scene",
    "import_labeled_cloud",
    "import_point_cloud",
    "load_scene",
    "save_scene",
    "scene_rows",
    "write_labeled_cloud",
]
