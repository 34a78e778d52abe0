"""
TIPS pose pipeline - command-line entrypoint
Run a stage with `python app.py <command> [options]` (see `python app.py --help`)
"""
import sys

from tips_pose.main import run_command

if __name__ == "__main__":
    sys.exit(run_command(sys.argv[1:]))
