from ai_exposure.storage.repository import read_frame, read_records, write_frame, write_records

__all__ = ["read_frame", "read_records", "write_frame", "write_records"]
