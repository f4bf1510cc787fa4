"""
Module with constants to use throughout the src/services modules
"""

import math

# Application identification
GRIDLINE_APP_NAME = "gridline"  # Logger name and tool identification
GRIDLINE_VERSION = "0.1.0"  # Tool version echoed into run manifests
GRIDLINE_LOG_ENV_VAR = "GRIDLINE_LOG"  # Environment override of the log level
CHECKPOINT_FORMAT_HEADER = "gridline-v1"  # Versioned model checkpoint header

# Geometry tolerances
POINT_SEPARATION_EPS = 1e-9  # Minimum distance between consecutive polyline points (px)
CELL_BOX_TOLERANCE = 1e-9  # Slack allowed around the unit cell box before erroring
SLIVER_LENGTH_EPS = 1e-6  # Post-split segments shorter than this (cell units) are dropped
LABEL_SUM_TOLERANCE = 1e-9  # Allowed deviation of label distributions from 1

# Representation and feature space labels
CART_SPACE_LABEL = "cart"  # Ordered start/end points
MR_SPACE_LABEL = "mr"  # Midpoint plus displacement
MP_SPACE_LABEL = "mp"  # Midpoint only
DIR_SPACE_LABEL = "dir"  # Displacement only
DYNAMIC_ASSIGNMENT_LABEL = "dynamic"  # Per step Hungarian matching
ANCHOR_ASSIGNMENT_LABEL = "anchors"  # Static anchor assignment
LINEAR_ACTIVATION_LABEL = "linear"
SIGMOID_ACTIVATION_LABEL = "sigmoid"

# k-means settings
KMEANS_MAX_ITERATIONS = 200  # Lloyd iteration cap
KMEANS_TOLERANCE = 1e-9  # Minimum inertia improvement to keep iterating
UNIFORM_MR_MAX_DIRECTIONS = 8  # Directions per midpoint in the uniform MR lattice

# Training defaults
DEFAULT_LEARNING_RATE = 1e-2
DEFAULT_MOMENTUM = 0.9
DEFAULT_EPOCHS = 300
DEFAULT_BATCH_SIZE = 16
DEFAULT_HIDDEN_UNITS = 64
DEFAULT_PREDICTORS = 2
DEFAULT_CELL_SIZE = 8
DEFAULT_SEED = 7
LEAKY_RELU_SLOPE = 0.1  # Negative slope of the hidden activation
DEFAULT_LOSS_WEIGHTS = (1.0, 1.0, 1.0, 1.0)  # w_geom, w_conf1, w_conf0, w_class

# Evaluation defaults
DEFAULT_CONFIDENCE_THRESHOLD = 0.5  # A prediction is positive above this value
DEFAULT_GATE_RADII = (0.0, 2.0, 4.0, 8.0, 16.0, 32.0)  # uv gate sweep radii (px)

# Decoding defaults
DEFAULT_NMS_ANGLE_EPS = math.pi / 8
DEFAULT_STITCH_JOIN_EPS = 2.0  # px
DEFAULT_STITCH_ANGLE_EPS = math.pi / 4

# Synthetic data defaults
CURVE_ARC_STEP_PX = 4.0  # Arc length between sampled curve vertices
MAX_AUGMENT_ROTATION_DEG = 15.0

# ERROR CODES & Messages
## Geometry
OUT_OF_BOUNDS_ERROR_CODE = "OUT_OF_BOUNDS"
OUT_OF_BOUNDS_ERROR_MESSAGE = "Polyline leaves the image covered by the grid"
EMPTY_RESULT_ERROR_CODE = "EMPTY_RESULT"
EMPTY_RESULT_ERROR_MESSAGE = "Discretization produced no segments"
INVALID_GEOMETRY_ERROR_CODE = "INVALID_GEOMETRY"
INVALID_GEOMETRY_ERROR_MESSAGE = "Segment endpoints leave the unit cell box"
CELL_OUT_OF_RANGE_ERROR_CODE = "CELL_OUT_OF_RANGE"
CELL_OUT_OF_RANGE_ERROR_MESSAGE = "Cell index lies outside the grid"

## Anchors and matching
INVALID_ANCHOR_ERROR_CODE = "INVALID_ANCHOR_SET"
INSUFFICIENT_DATA_ERROR_CODE = "INSUFFICIENT_DATA"
INVALID_COST_MATRIX_ERROR_CODE = "INVALID_COST_MATRIX"
REPRESENTATION_MISMATCH_ERROR_CODE = "REPRESENTATION_MISMATCH"

## Loss and model
INVALID_ASSIGNMENT_ERROR_CODE = "INVALID_ASSIGNMENT"
INVALID_WEIGHTS_ERROR_CODE = "INVALID_WEIGHTS"
SHAPE_MISMATCH_ERROR_CODE = "SHAPE_MISMATCH"
TRAINING_DIVERGENCE_ERROR_CODE = "TRAINING_DIVERGED"
CHECKPOINT_ERROR_CODE = "INVALID_CHECKPOINT"
INVALID_CONFIG_ERROR_CODE = "INVALID_CONFIG"

## Data
IMPOSSIBLE_CONSTRAINT_ERROR_CODE = "IMPOSSIBLE_CONSTRAINT"
ANNOTATION_PARSE_ERROR_CODE = "ANNOTATION_PARSE_ERROR"
