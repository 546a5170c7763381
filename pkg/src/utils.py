import json
import logging
from pathlib import Path
import sys


def dump_json(data, path):
    with open(Path(path), "w") as f:
        json.dump(data, f, indent=2, separators=(",", ": "), sort_keys=True)


def load_json(path):
    with open(Path(path)) as f:
        return json.load(f)


def dump_jsonl(records, path):
    with open(Path(path), "w") as f:
        for record in records:
            print(json.dumps(record, sort_keys=True), file=f)


def load_jsonl(path):
    with open(Path(path)) as f:
        return [json.loads(line) for line in f if line.strip()]


def run_name(method, seed):
    return f"{method.lower()}-{seed:03d}"


def setup_logging(debug):
    """
    Print DEBUG and INFO messages to stdout and higher levels to stderr.
    """
    # Python adds a default handler if some log is generated before here.
    # Remove all handlers that have been added automatically.
    logger = logging.getLogger("")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)

    class InfoFilter(logging.Filter):
        def filter(self, rec):
            return rec.levelno in (logging.DEBUG, logging.INFO)

    logger.setLevel(logging.DEBUG if debug else logging.INFO)

    formatter = logging.Formatter("%(asctime)s %(levelname)-8s %(message)s")

    h1 = logging.StreamHandler(sys.stdout)
    h1.setLevel(logging.DEBUG)
    h1.addFilter(InfoFilter())
    h1.setFormatter(formatter)

    h2 = logging.StreamHandler()
    h2.setLevel(logging.WARNING)
    h2.setFormatter(formatter)

    logger.addHandler(h1)
    logger.addHandler(h2)
