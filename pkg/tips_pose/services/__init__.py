"""Pipeline stages, data generation and evaluation"""
