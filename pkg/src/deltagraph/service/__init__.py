"""HTTP service exposing the continuous-query engine and the bench harness."""

from deltagraph.service.app import create_app

__all__ = ["create_app"]
