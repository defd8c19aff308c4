import sys
import os

# Add parent directory to path to import from src
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.config.presets import validate_presets
from src.config.settings import get_settings
from src.errors import ConfigError


def main() -> int:
    print("Validating Configuration...")
    try:
        settings = get_settings()
    except ConfigError as e:
        print(f"Environment: INVALID\n{e}")
        return 1

    mnist_ok = bool(settings.mnist_dir) and os.path.isdir(settings.mnist_dir)
    print(f"IMPORTANCE_ARQ_MNIST_DIR: {'OK' if mnist_ok else 'MISSING (synthetic presets only)'}")
    print(f"IMPORTANCE_ARQ_OUTPUT_DIR: {settings.output_dir}")
    print(f"IMPORTANCE_ARQ_WORKERS: {settings.max_workers}")

    report = validate_presets()
    for name, errors in report.items():
        print(f"{name}: {'OK' if not errors else 'INVALID'}")
        for error in errors:
            print(f"  - {error}")

    valid = all(not errors for errors in report.values())
    print("Configuration valid!" if valid else "Please check the presets above")
    return 0 if valid else 1


if __name__ == "__main__":
    sys.exit(main())
