import os
import sys
import logging
from dotenv import load_dotenv

from src.api.commands import run

# Load environment variables
load_dotenv()

# Configure logging
logging.basicConfig(
    level=getattr(logging, os.getenv('LOG_LEVEL', 'INFO')),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def main(argv=None) -> int:
    """Command-line entry point: python -m src.main <subcommand> [options]"""
    return run(argv)


# Entry point for the application
if __name__ == "__main__":
    sys.exit(main())
