import json
import math
import os
import tempfile
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from .errors import InputError
from .log import LogManager

SCHEMA_VERSION: int = 1
FLOAT_FORMAT: str = '%.17g'


def to_plain(value):
    """Convert numpy and container values into JSON-compatible types; non-finite floats become None."""
    if isinstance(value, dict):
        return {str(key): to_plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, pd.DataFrame):
        return to_plain(value.to_dict(orient='records'))
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def atomic_write(target: str, text: str) -> None:
    """Write through a temporary file in the target directory and rename over the target."""
    directory = os.path.dirname(os.path.abspath(target))
    handle, temp_name = tempfile.mkstemp(dir=directory, prefix='.', suffix='.tmp')
    try:
        with os.fdopen(handle, 'w', encoding='utf-8', newline='') as temp_file:
            temp_file.write(text)
        os.replace(temp_name, target)
    except BaseException:
        if os.path.exists(temp_name):
            os.remove(temp_name)
        raise


class ReportManager(object):

    output_dir: str
    written: List[str]

    def __init__(self, output_dir: str):
        self.output_dir = output_dir
        self.written = []

    def prepare(self) -> None:
        try:
            os.makedirs(self.output_dir, mode=0o755, exist_ok=True)
        except OSError as error:
            raise InputError("Cannot create output directory", path=self.output_dir, error=str(error))
        if not os.access(self.output_dir, os.W_OK):
            raise InputError("Output directory is not writable", path=self.output_dir)

    def write_report(self, command: str, config: Dict[str, object], results: Dict[str, object]) -> str:
        envelope = {
            'schema_version': SCHEMA_VERSION,
            'command': command,
            'config': to_plain(config),
            'results': to_plain(results),
        }
        text = json.dumps(envelope, indent=2, allow_nan=False) + '\n'
        return self._write_file(f"{command}.json", text)

    def write_table(self, command: str, name: str, frame: pd.DataFrame) -> str:
        text = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        return self._write_file(f"{command}_{name}.csv", text)

    def write_text(self, file_name: str, text: str) -> str:
        return self._write_file(file_name, text)

    @staticmethod
    def render(title: str, frame: pd.DataFrame) -> str:
        return f"{title}\n{frame.to_string(index=False)}\n"

    def _write_file(self, file_name: str, text: str) -> str:
        target = os.path.join(self.output_dir, file_name)
        atomic_write(target, text)
        self.written.append(target)
        LogManager.logger.debug(f"Report file written {repr({'path': target, 'bytes': len(text)})}")
        return target

    @staticmethod
    def read_report(file_name: str) -> Optional[dict]:
        with open(file_name, encoding='utf-8') as report_file:
            return json.load(report_file)
