"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the command line
front-end can emit structured failure records.
"""

from __future__ import annotations


class CalibError(Exception):
    code = "calib_error"


class EmptyInput(CalibError, ValueError):
    code = "empty_input"


class DegenerateGeometry(CalibError, ValueError):
    code = "degenerate_geometry"


class FormatError(CalibError, ValueError):
    code = "format_error"


class ExtractionFailure(CalibError):
    code = "extraction_failure"


class MatchFailure(CalibError):
    code = "match_failure"


class GraphDisconnected(CalibError):
    code = "graph_disconnected"

    def __init__(self, message: str, components=None):
        super().__init__(message)
        self.components = components or []


class EdgeCalibrationFailure(CalibError):
    code = "edge_calibration_failure"

    def __init__(self, message: str, edge=None):
        super().__init__(message)
        self.edge = edge


class MetricFailure(CalibError):
    code = "metric_failure"


class EmptyRender(CalibError):
    code = "empty_render"


class InputMismatch(CalibError, ValueError):
    code = "input_mismatch"


class SearchFailure(CalibError):
    code = "search_failure"


class ConfigError(CalibError, ValueError):
    code = "config_error"
