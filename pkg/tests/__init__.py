"""
tubeseg test suite.
"""
