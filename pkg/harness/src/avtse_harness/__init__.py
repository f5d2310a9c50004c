"""Training harness for the streaming extraction engine.

Talks to the engine only through its documented file formats: scene
directories from `avtse simulate`, the checksummed weight-archive bytes
(independent writer in :mod:`.archive`), and parity-vector dumps.
"""

__version__ = "0.1.0"
