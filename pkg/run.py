import sys
from pathlib import Path

# Add the repository root to the Python path
sys.path.insert(0, str(Path(__file__).parent))

# Import and run the main function
from src.main import main

if __name__ == "__main__":
    sys.exit(main())
