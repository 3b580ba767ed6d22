"""JSON schemas for every file the toolkit reads or writes, keyed by the ``format`` tag."""
import json
from functools import lru_cache
from importlib import resources

from jsonschema import Draft202012Validator

FORMATS = {
    "articap-markers": "markers",
    "articap-hand": "hand",
    "articap-object": "object",
    "articap-assets": "assets",
    "articap-dataset": "dataset",
    "articap-fields": "fields",
    "articap-field": "field",
    "articap-report": "report",
    "articap-run": "run",
    "articap-heatmap": "heatmap",
    "articap-axis": "axis",
}


@lru_cache(maxsize=None)
def schema(name):
    return json.loads(resources.files(__name__).joinpath(f"{name}.json").read_text())


def validate(doc, name=None):
    """List of error messages (empty when valid). ``name`` defaults to the one implied by the document."""
    if name is None:
        if isinstance(doc, list):
            name = "poses"
        elif isinstance(doc, dict) and doc.get("format") in FORMATS:
            name = FORMATS[doc["format"]]
        else:
            return ["unrecognised document: no known 'format' tag"]
    v = Draft202012Validator(schema(name))
    return [f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}"
            for e in sorted(v.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))]


def validate_file(path):
    """Validate a JSON file, or the header line of a binary field file."""
    raw = open(path, "rb").read()
    try:
        doc = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError):
        nl = raw.find(b"\n")
        try:
            doc = json.loads(raw[:nl if nl >= 0 else len(raw)])
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            return [f"not JSON: {exc}"]
        if not isinstance(doc, dict) or doc.get("format") != "articap-field":
            return ["binary payload without a field header"]
    return validate(doc)
