# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

"""
Overall version of the package
"""
__version__ = '0.1.0.dev1'
