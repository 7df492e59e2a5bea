import sys
from pathlib import Path

# Allow test modules to import helpers from sibling test modules.
sys.path.insert(0, str(Path(__file__).parent))
