"""
Colored console logging.

Every line carries a bracketed component tag, e.g. "[TRAINER] ✅ epoch 3".
"""

try:
    from colorama import Fore, init
    init(autoreset=True)
    COLORAMA_AVAILABLE = True
except ImportError:
    COLORAMA_AVAILABLE = False
    class Fore:
        RED = ""
        GREEN = ""
        YELLOW = ""
        CYAN = ""
        RESET = ""

VERBOSITY_QUIET = 0
VERBOSITY_NORMAL = 1
VERBOSITY_DEBUG = 2

_verbosity = VERBOSITY_NORMAL


def set_verbosity(level: int) -> None:
    """Set global console verbosity (0 quiet, 1 normal, 2 debug)."""
    global _verbosity
    _verbosity = level


def get_verbosity() -> int:
    return _verbosity


def log_info(tag: str, message: str) -> None:
    if _verbosity >= VERBOSITY_NORMAL:
        print(f"[{tag}] {message}")


def log_success(tag: str, message: str) -> None:
    if _verbosity >= VERBOSITY_NORMAL:
        print(f"{Fore.GREEN}[{tag}] ✅ {message}")


def log_warning(tag: str, message: str) -> None:
    if _verbosity >= VERBOSITY_NORMAL:
        print(f"{Fore.YELLOW}[{tag}] ⚠️  {message}")


def log_error(tag: str, message: str) -> None:
    # Errors are printed even when quiet
    print(f"{Fore.RED}[{tag}] ❌ {message}")


def log_debug(tag: str, message: str) -> None:
    if _verbosity >= VERBOSITY_DEBUG:
        print(f"{Fore.CYAN}[DEBUG] [{tag}] {message}")
