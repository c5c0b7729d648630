"""reviewlab: rubric-guided benchmark construction, staged multi-agent review
generation, and evaluation for automated paper reviewing."""

__version__ = "0.1.0"
