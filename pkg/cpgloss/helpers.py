import os
import sys
import json
import math
import pickle
from os.path import exists
from contextlib import contextmanager
import numpy as np


def serialise_object(obj, picklename):
    # Create backup
    if exists(picklename):
        backupname = picklename + '.bak'
        if exists(backupname):
            os.remove(backupname)
        os.rename(picklename, backupname)

    # Save
    with open(picklename, "wb") as f:
        pickle.dump(obj, f)

    return


def deserialise_object(picklename, default_obj=None):
    # load
    if os.path.isfile(picklename):
        with open(picklename, "rb") as f:
            obj = pickle.load(f)
    else:
        obj = default_obj
    return obj


@contextmanager
def open_sink(path, mode="wb"):
    """
    :param path: file path, or None / '-' for standard output.
    :param mode: 'wb' for binary payloads, 'w' for text.
    """
    if path is None or path == "-":
        stream = sys.stdout.buffer if "b" in mode else sys.stdout
        yield stream
        stream.flush()
        return
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, mode) as f:
        yield f


def json_safe(obj):
    """
    Convert numpy scalars / arrays to plain Python and NaN / inf to None so the
    output is strict JSON.
    """
    if isinstance(obj, dict):
        return {str(k): json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return json_safe(obj.tolist())
    if isinstance(obj, np.generic):
        return json_safe(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dumps_json(obj):
    return json.dumps(json_safe(obj), sort_keys=True, allow_nan=False)


def write_json(obj, path):
    with open_sink(path, "w") as f:
        f.write(dumps_json(obj))
        f.write("\n")


def read_json(path):
    with open(path, "r") as f:
        return json.load(f)
