"""HTTP service and request/response models."""
