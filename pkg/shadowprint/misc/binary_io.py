# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

import numpy as np

from .errors import FormatError


class ByteReader:
    """
    Sequential little-endian reader over a byte buffer
    """

    def __init__(self, raw, filename):
        self.raw = raw
        self.offset = 0
        self.filename = filename

    def take(self, count):
        if self.offset + count > len(self.raw):
            raise FormatError(f'{self.filename}: truncated at offset {self.offset}')
        chunk = self.raw[self.offset:self.offset + count]
        self.offset += count
        return chunk

    def array(self, dtype, count):
        size = np.dtype(dtype).itemsize * count
        return np.frombuffer(self.take(size), dtype=dtype, count=count)

    def scalar(self, dtype):
        return self.array(dtype, 1)[0]

    def at_end(self):
        return self.offset == len(self.raw)


def read_file(filename):
    with open(filename, 'rb') as fh:
        return fh.read()
