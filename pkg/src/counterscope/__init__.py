"""Traffic counter analysis: profiles, interestingness scores and clustering."""

__version__ = "0.1.0"
