from mcp.server import FastMCP

from src.core.config import settings

mcp = FastMCP(
    name=f"{settings.APP_NAME} oracle",
    json_response=True,
)
