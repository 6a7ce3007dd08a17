"""This module writes run outputs.

Every file is written to a temporary sibling first and renamed into place,
so an interrupted run never leaves a torn file behind.
"""
from contextlib import contextmanager
from dataclasses import asdict, is_dataclass
from enum import Enum
import json
import logging
import math
import os
import tempfile
from typing import Iterator, Optional, Sequence
import numpy as np
import pandas as pd
from perclab.exception import OutputNotWritable
from perclab.realization import EagerRealization
from perclab.realization import dump_graph
from perclab.trajectory import CSV_COLUMNS

logger = logging.getLogger(__name__)


def check_writable(path: Optional[str]) -> None:
    """Make sure a file can be created at ``path``.

    :param path: Output path; None is accepted and ignored.
    :type path: Optional[str]
    :raises OutputNotWritable: Directory is missing or not writable, or the
        path is a directory.
    """
    if path is None:
        return
    directory = os.path.dirname(os.path.abspath(path))
    if os.path.isdir(path):
        raise OutputNotWritable(f'{path} is a directory.')
    if not os.path.isdir(directory):
        raise OutputNotWritable(f'Directory {directory} does not exist.')
    if not os.access(directory, os.W_OK):
        raise OutputNotWritable(f'Directory {directory} is not writable.')
    if os.path.exists(path) and not os.access(path, os.W_OK):
        raise OutputNotWritable(f'{path} is not writable.')


@contextmanager
def atomic_path(path: str) -> Iterator[str]:
    """Yield a temporary path that replaces ``path`` on success.

    :param path: Final destination.
    :type path: str
    :return: Temporary path in the same directory.
    :rtype: Iterator[str]
    """
    directory = os.path.dirname(os.path.abspath(path))
    fd, temporary = tempfile.mkstemp(
        dir=directory, prefix=f'.{os.path.basename(path)}.', suffix='.tmp')
    os.close(fd)
    try:
        yield temporary
        os.replace(temporary, path)
    except BaseException:
        if os.path.exists(temporary):
            os.remove(temporary)
        raise
    logger.debug('Wrote %s.', path)


def _to_jsonable(value):
    if is_dataclass(value) and not isinstance(value, type):
        if hasattr(value, 'to_dict'):
            return value.to_dict()
        return asdict(value)
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f'Cannot encode {type(value).__name__} as JSON.')


def _clean(value):
    """Replace non-finite floats, which JSON cannot carry, by None."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {key: _clean(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(item) for item in value]
    return value


def to_json(payload) -> str:
    """Encode a payload of dicts, dataclasses, enums and numpy scalars.

    :param payload: Object to encode.
    :return: Indented JSON text with sorted keys.
    :rtype: str
    """
    plain = json.loads(json.dumps(payload, default=_to_jsonable))
    return json.dumps(_clean(plain), indent=2, sort_keys=True,
                      allow_nan=False)


def write_json(path: str, payload) -> None:
    """Write a payload as JSON.

    :param path: Destination file.
    :type path: str
    :param payload: Object to encode.
    """
    with atomic_path(path) as temporary:
        with open(temporary, 'w') as f:
            f.write(to_json(payload))
            f.write('\n')


def trajectory_frame(records: Sequence) -> pd.DataFrame:
    """Stack the trajectory tables of several trials.

    :param records: Records in trial order.
    :type records: Sequence[TrajectoryRecord]
    :return: Frame with the trajectory CSV columns.
    :rtype: pandas.DataFrame
    """
    frames = [record.to_frame(trial) for trial, record in enumerate(records)]
    if not frames:
        return pd.DataFrame(columns=CSV_COLUMNS)
    return pd.concat(frames, ignore_index=True)


def write_csv(path: str, frame: pd.DataFrame) -> None:
    """Write a frame as CSV without index.

    :param path: Destination file.
    :type path: str
    :param frame: Frame to write.
    :type frame: pandas.DataFrame
    """
    with atomic_path(path) as temporary:
        frame.to_csv(temporary, index=False, float_format='%.17g',
                     lineterminator='\n')


def write_graph(path: str, realization: EagerRealization) -> None:
    """Write a realization as a gzipped edge list.

    :param path: Destination file.
    :type path: str
    :param realization: Realization to write.
    :type realization: EagerRealization
    """
    with atomic_path(path) as temporary:
        dump_graph(realization, temporary)
