#
# Copyright (c) SAS Institute Inc.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#

from __future__ import unicode_literals
import errno
import os
import re
import time

import numpy as np

from .compat import string_types

LIST_SPLIT_RE = re.compile(r'[\s,]+')


def makedirs(path):
    """Create path and its parents if missing; returns path."""
    try:
        os.makedirs(path, mode=0o755)
    except OSError as e:
        if e.errno != errno.EEXIST or not os.path.isdir(path):
            raise
    return path


def normpath(path, base=None, follow_links=False):
    """Normalize a path.

    Expands user directories and environment variables and makes the path
    absolute; relative paths are taken from base when given, otherwise
    from the working directory.

    :params str path: path to normalize
    :params str base: directory of relative paths
    :params bool follow_links: Whether to resolve symlinks
    :returns: a fully normalized path
    """
    path = os.path.expanduser(path)
    path = os.path.expandvars(path)
    if base is not None and not os.path.isabs(path):
        path = os.path.join(base, path)
    path = os.path.normpath(path)
    if follow_links:
        path = os.path.realpath(path)
    return os.path.abspath(path)


def split_list(value, convert=None):
    """:func:`split_list` turns a comma or whitespace separated string into
    a list, optionally converting every item.

    :param value: string, or an already split sequence
    :param convert: callable applied to each item
    :returns: list of items
    """
    if isinstance(value, string_types):
        items = [x for x in LIST_SPLIT_RE.split(value.strip()) if x]
    else:
        items = list(value)
    if convert is not None:
        items = [convert(x) for x in items]
    return items


def spawn_generators(seed, count):
    """Independent, reproducible random streams.

    Children of one :class:`numpy.random.SeedSequence` do not overlap, so
    replica ``r`` always sees the same numbers whatever the worker layout.
    """
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.default_rng(child) for child in children]


class Stopwatch(object):
    __slots__ = ['started', 'elapsed']

    def __init__(self):
        self.started = None
        self.elapsed = 0.0

    def __enter__(self):
        self.started = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.started
        return False

    @property
    def milliseconds(self):
        return 1000.0 * self.elapsed
