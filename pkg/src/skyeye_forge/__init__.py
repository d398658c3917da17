"""skyeye-forge: instruction-corpus forge and evaluation toolkit for
remote-sensing vision-language models."""

__version__ = "0.1.0"
