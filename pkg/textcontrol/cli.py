"""
Single entry point for the pipeline subcommands.

Exit codes: 0 on success, 1 on user or input errors (bad flags, files, configuration), 2 on internal errors.
"""
import logging
import sys
from typing import Optional, Sequence, TextIO

from django.core.exceptions import ValidationError
from django.core.management import load_command_class
from django.core.management.base import CommandError

from textcontrol.exceptions import TextControlException

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USER_ERROR = 1
EXIT_INTERNAL_ERROR = 2

COMMANDS = ('make-hints', 'make-benchmark', 'pretrain-recognizer', 'train', 'sample', 'evaluate', 'plot',
            'recognizer-eval')
HELP = ('-h', '--help', 'help')


def usage() -> str:
    lines = ["usage: manage.py <command> [options]", "", "commands:"]
    for name in COMMANDS:
        lines.append(f"  {name:20s} {load_command_class('textcontrol', name.replace('-', '_')).help}")
    lines.append("")
    lines.append("Run 'manage.py <command> --help' for the options of a command.")
    return '\n'.join(lines) + '\n'


def run_command(name: str, arguments: Sequence[str]):
    command = load_command_class('textcontrol', name.replace('-', '_'))
    # A parser not marked as called from the command line raises CommandError instead of exiting.
    parser = command.create_parser('manage.py', name)
    options = vars(parser.parse_args(list(arguments)))
    args = options.pop('args', ())
    command.execute(*args, **options)


def dispatch(argv: Sequence[str], stderr: Optional[TextIO] = None) -> int:
    """
    Runs one subcommand.
    :param argv: Subcommand name followed by its flags.
    :return: Exit code.
    """
    stderr = stderr or sys.stderr
    if not argv or argv[0] in HELP:
        stderr.write(usage())
        return EXIT_OK if argv else EXIT_USER_ERROR
    name = argv[0]
    if name not in COMMANDS:
        stderr.write(f"Unknown command: {name!r}\n")
        stderr.write(usage())
        return EXIT_USER_ERROR

    try:
        run_command(name, argv[1:])
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else EXIT_USER_ERROR
    except CommandError as e:
        logger.error("%s: %s", name, e)
        return EXIT_USER_ERROR
    except ValidationError as e:
        logger.error("%s: invalid configuration: %s", name, '; '.join(e.messages))
        return EXIT_USER_ERROR
    except TextControlException as e:
        if e.user_error:
            logger.error("%s: %s", name, e)
            return EXIT_USER_ERROR
        logger.exception("%s failed", name)
        return EXIT_INTERNAL_ERROR
    except Exception:
        logger.exception("%s failed with an internal error", name)
        return EXIT_INTERNAL_ERROR
    return EXIT_OK
