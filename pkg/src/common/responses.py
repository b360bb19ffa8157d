from typing import Any, Dict, Optional

from pydantic import BaseModel


class AppResponse(BaseModel):
    """
    Envelope returned by the MCP tools.

    Attributes:
        status (bool): False when the request was rejected or a check failed.
        message (str): One-line summary of the report.
        data (Optional[Any]): The report itself, dumped to plain JSON types.
    """
    status: bool
    message: str
    data: Optional[Any] = None

    @classmethod
    def report(cls, status: bool, message: str, data: BaseModel) -> Dict[str, Any]:
        return cls(status=status, message=message, data=data.model_dump(mode="json")).model_dump()

    @classmethod
    def rejected(cls, message: str) -> Dict[str, Any]:
        return cls(status=False, message=message).model_dump()
