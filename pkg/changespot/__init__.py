"""
Fault-diagnosis change detection for visual place recognition.

Query images are localized against a bag-of-words map; the inconsistency
between strong and weak self-localization is turned into a likelihood of
change, optionally fused with anomaly-detection and pairwise-comparison
channels.
"""

VERSION = {"major": 1, "minor": 0, "micro": 0}


def get_version_string():
    version = "{major}.{minor}.{micro}".format(**VERSION)
    return version


__version__ = get_version_string()
