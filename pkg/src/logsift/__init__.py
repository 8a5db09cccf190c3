"""logsift: rule synthesis and cascade detection for labeled log streams.

The pipeline turns a labeled log corpus into a database of human-readable
detection rules, then replays that database against new logs as a two-stage
cascade (normal rules first, abnormal rules second, default normal).
"""

__version__ = "0.1.0"
