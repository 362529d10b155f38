"""Prompted vision-language segmentation pipeline for echocardiography."""

__version__ = "0.1.0"
