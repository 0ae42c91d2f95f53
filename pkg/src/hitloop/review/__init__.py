from .store import ReviewConflictError, ReviewItem, ReviewStore, ReviewStoreError

__all__ = ["ReviewItem", "ReviewStore", "ReviewStoreError", "ReviewConflictError"]
