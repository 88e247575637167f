import logging
import os
import sys
from logging.handlers import RotatingFileHandler

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

from src import config  # noqa: E402
from src.cli import main as cli_main  # noqa: E402

# Progress goes to stderr; data goes to files and stdout
handlers = [logging.StreamHandler(sys.stderr)]
if config.LOG_DIR:
    os.makedirs(config.LOG_DIR, exist_ok=True)
    handlers.append(
        # File handler with rotation (10MB max size, keep 5 backup files)
        RotatingFileHandler(
            os.path.join(config.LOG_DIR, 'cape.log'),
            maxBytes=10*1024*1024,  # 10MB
            backupCount=5,
            encoding='utf-8'
        )
    )

logging.basicConfig(
    level=getattr(logging, config.LOG_LEVEL, logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=handlers
)
logger = logging.getLogger(__name__)

if __name__ == "__main__":
    sys.exit(cli_main())
