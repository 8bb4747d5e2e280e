"""Multi-channel neural beamformer: speech enhancement, source
localization, and voice activity detection from learned complex filters.
"""

__version__ = "0.1.0"
