"""ROI-guided layered point cloud geometry codec."""

__version__ = "0.1.0"
