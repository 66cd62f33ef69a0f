"""News-coverage trend analysis for election campaigns.

Search, fetch, LLM scoring, descriptive statistics and Bayesian trend fits,
assembled into a reproducible report.
"""

__version__ = "0.1.0"
