"""Strategic link scores between planned decisions in tabular MDPs."""
__version__ = "0.1.0"
