import logging
import sys

from dotenv import load_dotenv

from src.cli import main

# Load environment variables first
load_dotenv()

logger = logging.getLogger(__name__)

if __name__ == '__main__':
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        logger.info("Simulation stopped by user")
        sys.exit(130)
    except Exception as e:
        logger.debug(f"Fatal error: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        sys.exit(1)
