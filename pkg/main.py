import logging
import sys

from app.config import settings
from app.cli.commands import main

# Configure logging
logging.basicConfig(
    level=getattr(logging, settings.log_level.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


if __name__ == "__main__":
    logger.info(f"Starting {settings.app_name} {settings.version}")
    sys.exit(main())
