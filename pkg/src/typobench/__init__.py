"""Typo-robustness benchmark: character-level attacks on text datasets, a
semicharacter recurrent word recognizer that repairs them, and toy task
heads for measuring accuracy drop and restoration end to end.

Subpackages are imported lazily by the code that needs them; importing
`typobench` itself stays cheap so the CLI starts fast.
"""

__version__ = "0.1.0"
