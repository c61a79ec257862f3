"""JSON Schemas for the reports written by the command-line tool."""

_num = {"type": ["number", "null"]}
_int = {"type": "integer"}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_ipair = {"type": "array", "items": _int, "minItems": 2, "maxItems": 2}

ESTIMATE = {
    "type": "object",
    "required": ["t0", "t1", "target", "a_hat", "f_at_hat", "g_at_hat", "df_at_hat", "std_err", "ci", "status"],
    "properties": {
        "t0": _int,
        "t1": _int,
        "target": _int,
        "a_hat": _num,
        "f_at_hat": _num,
        "g_at_hat": _num,
        "df_at_hat": _num,
        "dg_at_hat": _num,
        "std_err": _num,
        "ci": {"oneOf": [_pair, {"type": "null"}]},
        "iterations": _int,
        "status": {"enum": ["converged", "boundary_low", "no_solution"]},
        "bracket_width": _num,
    },
}

ESTIMATE_REPORT = {
    "type": "object",
    "required": ["command", "estimates"],
    "properties": {"command": {"const": "estimate"}, "estimates": {"type": "array", "items": ESTIMATE}},
}

TEST_REPORT = {
    "type": "object",
    "required": ["command", "boundaries", "tests"],
    "properties": {
        "command": {"const": "test"},
        "boundaries": {"type": "array", "items": _int},
        "tests": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["left", "right", "L", "p_value"],
                "properties": {"left": _ipair, "right": _ipair, "L": _num, "p_value": _num},
            },
        },
    },
}

_stage = {
    "type": "object",
    "required": ["interval", "boundaries", "scores", "j_hat"],
    "properties": {
        "interval": _ipair,
        "boundaries": {"type": "array", "items": _int},
        "scores": {"type": "object", "additionalProperties": _num},
        "j_hat": _int,
    },
}

REFINE = {
    "type": "object",
    "required": ["domain", "final_interval", "stages"],
    "properties": {"domain": _ipair, "final_interval": _ipair, "stages": {"type": "array", "items": _stage, "minItems": 1}},
}

SCAN = {
    "type": "object",
    "required": ["k", "boundaries", "estimates", "L", "local_max_indices", "counts", "thresholds"],
    "properties": {
        "k": _int,
        "boundaries": {"type": "array", "items": _int},
        "estimates": {"type": "array", "items": ESTIMATE},
        "L": {"type": "object", "additionalProperties": _num},
        "local_max_indices": {"type": "array", "items": _int},
        "counts": {
            "type": "object",
            "required": ["threshold", "chi2", "ratio"],
            "additionalProperties": _int,
        },
        "thresholds": {"type": "object", "additionalProperties": _num},
    },
}

DETECT_REPORT = {
    "type": "object",
    "required": ["command", "mode"],
    "properties": {
        "command": {"const": "detect"},
        "mode": {"enum": ["scan", "refine", "two-step"]},
        "scan": SCAN,
        "refine": REFINE,
        "method": {"type": "string"},
        "refinements": {"type": "array", "items": REFINE},
    },
}

LOCATE_REPORT = {
    "type": "object",
    "required": ["command", "t0", "t1", "tau_hat", "peak_value", "a_hat"],
    "properties": {
        "command": {"const": "locate"},
        "t0": _int,
        "t1": _int,
        "tau_hat": _int,
        "peak_value": _num,
        "a_hat": _num,
    },
}

MANIFEST = {
    "type": "object",
    "required": ["package", "version", "seed", "runs"],
    "properties": {
        "package": {"const": "tvpa"},
        "version": {"type": "string"},
        "seed": _int,
        "runs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["table", "config", "n_reps", "n_failed", "columns", "rows"],
            },
        },
    },
}

BY_COMMAND = {
    "estimate": ESTIMATE_REPORT,
    "test": TEST_REPORT,
    "detect": DETECT_REPORT,
    "locate": LOCATE_REPORT,
    "experiment": MANIFEST,
}
