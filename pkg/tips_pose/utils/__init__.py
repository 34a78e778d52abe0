"""Utility modules for the pose pipeline"""
