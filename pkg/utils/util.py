from datetime import datetime
from functools import lru_cache
import hashlib
import json
import os
import sys
import traceback


def canonical_json(obj) -> str:
    """
    JSON text with sorted keys and no whitespace, used for hashing
    :rtype: str
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)


def pretty_json(obj) -> str:
    """json text used for every file we write, stable across runs"""
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(obj):
    # numpy scalars and tuples-as-lists
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError("Object of type {} is not JSON serializable".format(type(obj).__name__))


def sha256_hex(data) -> str:
    """
    :type data: Union[str, bytes]
    :rtype: str
    """
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


@lru_cache(maxsize=64)
def parse_cli_value(raw: str):
    """
    Convert a `--set key=value` value to a python object.
    JSON is tried first ('40', '[0.8, 1.2]', 'true', 'null'), otherwise the raw string is kept
    """
    try:
        value = json.loads(raw)
    except ValueError:
        return raw
    # lists are cached, hand out tuples so the cache can't be mutated
    if isinstance(value, list):
        return tuple(value)
    return value


def find_best_match(user_input, string_list):
    """
    Find the most similar string in a list of strings to a user input.
    returns None if nothing is similar enough
    """
    best_match = None
    best_score = 0

    for string in string_list:
        score = 0
        for char in user_input:
            if char in string:
                score += 1
        if score > best_score:
            best_score = score
            best_match = string

    if not user_input or best_score / len(user_input) < 0.6:
        return None
    return best_match


def dump_error_snapshot(root="error_dump", msg=None, config=None):
    """
    dump current error state to a json file
    :param root: folder name
    :type root: str
    :param msg: extra information
    :type msg: str
    :param config: resolved config dict, optional
    :type config: dict
    :return: absolute path of the dumped file, None if dumping failed
    :rtype: Union[str, None]
    """

    try:
        os.makedirs(root, exist_ok=True)
        _time_str = datetime.now().strftime("snapshot_%Y-%m-%d_%H-%M-%S")

        snapshot = {
            "time": datetime.now().isoformat(),
            "msg": msg,
            "argv": sys.argv,
            "traceback": traceback.format_exc(),
            "config": config,
        }

        dump_file_path = os.path.abspath(os.path.join(root, _time_str + ".json"))

        with open(dump_file_path, "w", encoding="utf-8") as fp:
            fp.write(pretty_json(snapshot))
        return dump_file_path
    except Exception:
        return None
