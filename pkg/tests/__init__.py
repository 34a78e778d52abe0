"""Tests for the TIPS pose pipeline"""
