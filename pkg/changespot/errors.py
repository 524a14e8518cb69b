"""
Error catalogue. Every failure the library reports carries one of these
code/message pairs; the CLI turns codes into exit statuses.
"""


class CodeMsgPair:
    def __init__(self, code, msg):
        self.errorCode = code
        self.errorMsg = msg

    def code(self):
        return self.errorCode

    def msg(self):
        return self.errorMsg


# imaging
UNREADABLE_IMAGE = CodeMsgPair(601, "Image file is unreadable - ")
EMPTY_IMAGE = CodeMsgPair(602, "Image has a zero dimension - ")
BAD_CELL_SIZE = CodeMsgPair(603, "Cell size must be at least 1 - ")
INVALID_RECT = CodeMsgPair(604, "Rectangle must have positive extent - ")

# features
IMAGE_TOO_SMALL = CodeMsgPair(611, "Image too small for keypoint detection - ")
PATCH_OUT_OF_BOUNDS = CodeMsgPair(612, "Descriptor patch does not fit in image - ")

# roi library
UNKNOWN_TEMPLATE_SET = CodeMsgPair(621, "Unknown template set - ")
MALFORMED_PROPOSAL = CodeMsgPair(622, "Malformed proposal line - ")
MALFORMED_TEMPLATE_SET = CodeMsgPair(623, "Malformed template set definition - ")

# localization
DUPLICATE_MAP_IMAGE = CodeMsgPair(631, "Map image already indexed - ")
UNLOCALIZABLE = CodeMsgPair(632, "Query is unlocalizable - ")
EMPTY_INDEX = CodeMsgPair(633, "Index is empty - ")
EMPTY_RANK_LISTS = CodeMsgPair(634, "No ranked lists to fuse")
INDEX_FROZEN = CodeMsgPair(635, "Index is frozen, no more map images can be added - ")
UNKNOWN_STAGE = CodeMsgPair(636, "Unknown localization stage - ")

# fault diagnosis
LENGTH_MISMATCH = CodeMsgPair(641, "ROI and rank lists differ in length - ")
NO_ROIS = CodeMsgPair(642, "At least one ROI is required")
INVALID_ARGUMENT = CodeMsgPair(643, "Invalid argument - ")

# anomaly
TOO_MANY_CLUSTERS = CodeMsgPair(651, "More place clusters than images - ")
TOO_MANY_COMPONENTS = CodeMsgPair(652, "Too many principal components - ")
DEGENERATE_PLACE = CodeMsgPair(653, "Degenerate place model - ")
UNKNOWN_MAP_IMAGE = CodeMsgPair(654, "Map image has no place assignment - ")

# pairwise
NO_REFERENCE_FEATURES = CodeMsgPair(661, "No reference features in map image - ")

# evaluation
DIMENSION_MISMATCH = CodeMsgPair(671, "Mask dimensions do not match - ")
SHAPE_MISMATCH = CodeMsgPair(672, "Cell grids differ in shape - ")
NO_GROUND_TRUTH = CodeMsgPair(673, "No ground truth objects - ")
MALFORMED_GROUND_TRUTH = CodeMsgPair(674, "Malformed ground truth line - ")
INFEASIBLE_SYNTH_SPEC = CodeMsgPair(675, "Infeasible synthetic dataset spec - ")

# harness
BAD_ARTIFACT = CodeMsgPair(681, "Artifact is corrupt or of the wrong kind - ")
EMPTY_MAP_DIR = CodeMsgPair(682, "Map directory has no images - ")
MISSING_PATH = CodeMsgPair(683, "Path does not exist - ")
UNWRITABLE_OUTPUT = CodeMsgPair(684, "Cannot write output - ")
BAD_CONFIG = CodeMsgPair(685, "Bad configuration - ")
UNKNOWN_METHOD = CodeMsgPair(686, "Unknown detection method - ")
PC_UNAVAILABLE = CodeMsgPair(691, "PC unavailable: map imagery not found - ")
AD_UNAVAILABLE = CodeMsgPair(692, "AD unavailable: place models not found - ")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_UNAVAILABLE = 4

_EXIT_STATUS = {
    UNKNOWN_METHOD.code(): EXIT_USAGE,
    BAD_CONFIG.code(): EXIT_USAGE,
    UNKNOWN_TEMPLATE_SET.code(): EXIT_USAGE,
    UNKNOWN_STAGE.code(): EXIT_USAGE,
    PC_UNAVAILABLE.code(): EXIT_UNAVAILABLE,
    AD_UNAVAILABLE.code(): EXIT_UNAVAILABLE,
}


def exit_status(code):
    return _EXIT_STATUS.get(code, EXIT_DATA)
