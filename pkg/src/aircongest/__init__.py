"""Daily airport congestion patterns from flight-movement records.

Pipeline: ingest -> series -> features -> cluster -> metrics, with
synthetic generators in :mod:`aircongest.synth` and the command line
front end in :mod:`aircongest.cli`.
"""

__version__ = "0.1.0"
