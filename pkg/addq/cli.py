"""
The `addq` console entry point: a thin wrapper over Django's command runner
that only dispatches the experiments app's commands.

    addq quantize --weights W.bin --calib X.bin --init oaem --beam 8 --out layer.aqv

Exit codes: 0 success, 1 usage or config error, 2 runtime error, 3 divergence.
"""
import os
import sys

PASSTHROUGH = {'help', 'version'}


def addq_commands():
    import django
    from django.core.management import get_commands

    django.setup()
    return sorted(name for name, app in get_commands().items() if app == 'experiments')


def main(argv=None):
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'addq.settings')
    from django.core.management import execute_from_command_line

    argv = sys.argv[1:] if argv is None else list(argv)
    if argv and not argv[0].startswith('-') and argv[0] not in PASSTHROUGH:
        available = addq_commands()
        if argv[0] not in available:
            sys.stderr.write(f"Unknown command: {argv[0]!r}\nAvailable commands: {', '.join(available)}\n")
            return 1
    try:
        execute_from_command_line(['addq', *argv])
    except SystemExit as exc:
        code = exc.code
        if code is None:
            return 0
        return code if isinstance(code, int) else 1
    return 0
