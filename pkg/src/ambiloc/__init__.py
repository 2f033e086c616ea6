"""Multiple sound source localization from first-order Ambisonics audio.

Pipeline: shoebox room simulation producing Ambisonics impulse responses,
acoustic intensity feature extraction, classification on a quasi-uniform
spherical grid with a convolutional-recurrent network, peak-picking
decoding, and angular-error evaluation.
"""

__version__ = "0.1.0"
