"""
Services - Dataset, training, localization and embedding pipelines

Contains the service modules that orchestrate the core kernels.
"""
