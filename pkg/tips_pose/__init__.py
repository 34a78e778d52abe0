"""TIPS - text-induced pose synthesis pipeline"""
__version__ = "0.1.0"
