import sys

from views.main_view import main_view


def main() -> int:
    return main_view(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
