"""
gridplan: climate-aware transmission expansion planning and reliability studies.
"""
__version__ = "0.1.0"
