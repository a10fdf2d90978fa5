#!/usr/bin/env python
import os
import sys

if __name__ == "__main__":
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "django_font_diffusion.settings")
    try:
        import django
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    from textcontrol.cli import COMMANDS, dispatch

    command = sys.argv[1] if len(sys.argv) > 1 else ''
    # Pipeline subcommands, and unknown hyphenated names, go through the pipeline dispatcher and its exit codes.
    if command in COMMANDS or ('-' in command and not command.startswith('-')):
        django.setup()
        sys.exit(dispatch(sys.argv[1:]))
    execute_from_command_line(sys.argv)
