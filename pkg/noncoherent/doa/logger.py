"""noncoherent-doa logger."""

import logging

logger = logging.getLogger("noncoherent-doa")
