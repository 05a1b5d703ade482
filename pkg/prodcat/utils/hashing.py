import hashlib
import hmac


def digest_bytes(payload: bytes) -> str:
    """SHA256 hex digest of an artifact's serialized bytes"""
    return hashlib.sha256(payload).hexdigest()


def verify_digest(payload: bytes, expected_digest: str) -> bool:
    """Compare an artifact against a recorded digest"""
    return hmac.compare_digest(digest_bytes(payload), expected_digest)
