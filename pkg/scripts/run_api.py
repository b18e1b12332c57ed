"""
Run one organization server
"""
import sys
from pathlib import Path

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

try:
    import uvicorn
except ImportError:
    print("Error: uvicorn not installed")
    print("Please install: pip install -r requirements.txt")
    sys.exit(1)

from backend.settings import Settings

if __name__ == "__main__":
    settings = Settings.from_env()
    uvicorn.run(
        "backend.api.main:app",
        host=settings.api_host,
        port=settings.api_port,
        log_level=settings.log_level.lower()
    )
