"""Storage-enforcing remote audits built on list-decodable hash codes."""

from .codes import CRT, RS, CodeParams, Message, choose_params, crt_hash, rs_hash, rs_hash_stream
from .errors import DecodingFailure, DomainError, FormatError, ProtocolError, StenforceError, UsageError
from .field import FieldElement, PrimeField
from .protocol import (
    LINEAR, RS_PARITY, SINGLE, TRIVIAL, AuditToken, AuditVerdict, honest_shard_response, preprocess, verify,
)
from .rsdecode import ReceivedWord, decode_errors_erasures

__version__ = "0.1.0"

__all__ = [
    "CRT", "RS", "LINEAR", "RS_PARITY", "SINGLE", "TRIVIAL",
    "AuditToken", "AuditVerdict", "CodeParams", "FieldElement", "Message", "PrimeField", "ReceivedWord",
    "DecodingFailure", "DomainError", "FormatError", "ProtocolError", "StenforceError", "UsageError",
    "choose_params", "crt_hash", "decode_errors_erasures", "honest_shard_response", "preprocess",
    "rs_hash", "rs_hash_stream", "verify",
]
