"""Posed RGBD plus saved model outputs in, observation streams out.

The mapping core consumes `.dmos` observation streams and deliberately knows
nothing about images. This package is the bridge for real sensor data: it
reads a documented dataset layout (color and depth frames, camera poses,
calibration, and detection/segmentation/embedding outputs saved by upstream
vision models), refines and fuses the detections, embeds each one, lifts its
mask through the depth image into the world frame, and writes the stream.
"""

from .dmos import ExportCloud, ExportFrame, ExportObservation, StreamSpec, stream_bytes, write_dmos
from .embed import Vocabulary, combine, embed_record, l2_normalize, null_text_feature
from .errors import ConfigError, DatasetError, IngestError
from .export import ExportConfig, ExportReport, export_dataset, load_calibration, load_poses, load_vocabulary
from .pnm import read_pgm16, read_ppm, write_pgm16, write_ppm
from .projection import Intrinsics, back_project, camera_to_world, quaternion_matrix
from .records import CLOSED_SET, OPEN_SET, DetectionRecord, decode_rle, encode_rle, load_frame_detections
from .refine import bbox_iou, fuse, histogram_intersection, mask_iou, masked_histogram, refine_closed_set

__version__ = "0.1.0"

__all__ = [
    "CLOSED_SET",
    "ConfigError",
    "DatasetError",
    "DetectionRecord",
    "ExportCloud",
    "ExportConfig",
    "ExportFrame",
    "ExportObservation",
    "ExportReport",
    "IngestError",
    "Intrinsics",
    "OPEN_SET",
    "StreamSpec",
    "Vocabulary",
    "back_project",
    "bbox_iou",
    "camera_to_world",
    "combine",
    "decode_rle",
    "embed_record",
    "encode_rle",
    "export_dataset",
    "fuse",
    "histogram_intersection",
    "l2_normalize",
    "load_calibration",
    "load_frame_detections",
    "load_poses",
    "load_vocabulary",
    "mask_iou",
    "masked_histogram",
    "null_text_feature",
    "quaternion_matrix",
    "read_pgm16",
    "read_ppm",
    "refine_closed_set",
    "stream_bytes",
    "write_dmos",
    "write_pgm16",
    "write_ppm",
    "__version__",
]
