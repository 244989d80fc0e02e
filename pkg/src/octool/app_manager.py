"""
Application manager for octool
Handles the report directory
"""

from pathlib import Path
from typing import Optional

from .args import OctoolArgs
from .config import Config


class AppManager:
    """Singleton class for octool output locations"""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        if self._initialized:
            return
        self._initialized = True
        self._setup_paths()

    def _setup_paths(self):
        """Setup paths from OctoolArgs"""
        config = OctoolArgs().config
        self.set_out_dir(config.out_dir if config else None)

    def set_out_dir(self, out_dir: Optional[str] = None):
        """Set report directory"""
        self.out_dir = Path(out_dir) if out_dir else Path.cwd() / Config.DEFAULT_OUT_DIR

    def initialize(self):
        """Create the report directory if it doesn't exist"""
        if not self.out_dir.exists():
            self.out_dir.mkdir(parents=True, exist_ok=True)

    def report_path(self, name: str) -> Path:
        return self.out_dir / name
