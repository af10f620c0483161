"""
Shared plumbing of the addq management commands: config flags generated
from serializers, the seed and threads options, manifests, and the mapping
of toolkit errors to exit codes.
"""
import argparse
import json
import logging
import sys
from functools import partial
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from common.exceptions import AddqError, ConfigError, DivergenceError
from common.utils import addq_setting, load_config_file
from experiments.services import build_manifest, resolve_config

logger = logging.getLogger(__name__)

EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_DIVERGED = 3

NULL_WORDS = ('never', 'none', 'null')


def non_negative_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"{text} is negative")
    return value


def positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"{text} is not a positive integer")
    return value


def comma_list(text):
    return [item.strip() for item in text.split(',') if item.strip()]


def nullable(text):
    return None if text.strip().lower() in NULL_WORDS else text


def _flag_kwargs(field):
    """
    argparse options for one serializer field. Values stay strings so the
    serializer does all conversion and range checking.
    """
    kwargs = {'default': argparse.SUPPRESS}
    if isinstance(field, serializers.ListField):
        kwargs['type'] = comma_list
        kwargs['metavar'] = 'A,B,...'
    elif isinstance(field, serializers.ChoiceField):
        kwargs['choices'] = list(field.choices)
    elif field.allow_null:
        kwargs['type'] = nullable
    default = field.default
    if default is not serializers.empty:
        kwargs['help'] = f"default: {default}"
    return kwargs


def _usage_error(parser, message):
    if parser.called_from_command_line:
        parser.print_usage(sys.stderr)
        parser.exit(EXIT_USAGE, f"{parser.prog}: error: {message}\n")
    raise CommandError(f"Error: {message}", returncode=EXIT_USAGE)


def manifest_path(out):
    return Path(f"{out}.manifest")


def read_manifest(path):
    """
    The manifest written next to an output, or None if there is none.
    """
    path = manifest_path(path)
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding='utf-8'))


class AddqCommand(BaseCommand):
    """
    Base of every addq command.

    Subclasses list the serializers whose fields become --flags, add their
    file arguments in add_inputs() and do their work in run().
    """

    requires_system_checks = []
    config_serializers = ()

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.error = partial(_usage_error, parser)
        return parser

    def add_arguments(self, parser):
        self.add_inputs(parser)
        parser.add_argument('--config', help="JSON object or key=value file; flags override it")
        parser.add_argument('--seed', type=non_negative_int, default=argparse.SUPPRESS, help="default: 0")
        parser.add_argument('--threads', type=positive_int, default=None, help="worker count")
        self.config_flags = []
        for serializer_class in self.config_serializers:
            for name, field in serializer_class().fields.items():
                if name == 'seed' or name in self.config_flags:
                    continue
                self.config_flags.append(name)
                parser.add_argument(f"--{name.replace('_', '-')}", dest=name, **_flag_kwargs(field))

    def add_inputs(self, parser):
        pass

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except DivergenceError as exc:
            raise CommandError(str(exc), returncode=EXIT_DIVERGED) from exc
        except ConfigError as exc:
            raise CommandError(str(exc), returncode=EXIT_USAGE) from exc
        except (AddqError, OSError) as exc:
            raise CommandError(str(exc), returncode=EXIT_RUNTIME) from exc

    def resolve(self, serializer_class, options, defaults=None):
        """
        Merge serializer defaults, command defaults, the config file and
        flags, in rising priority.

        Returns:
            tuple: (config object, resolved dict, seed)
        """
        data = dict(defaults or {})
        if options.get('config'):
            data.update(load_config_file(options['config']))
        data.update({name: options[name] for name in self.config_flags if name in options})
        if 'seed' in options:
            data['seed'] = options['seed']

        seeded = 'seed' in serializer_class().fields
        seed = None if seeded else data.pop('seed', 0)
        config, resolved = resolve_config(serializer_class, data)
        if seeded:
            seed = resolved['seed']
        return config, resolved, seed

    def threads(self, options):
        return options.get('threads') or addq_setting('THREADS')

    def write_manifest(self, out, resolved, seed, inputs):
        manifest = build_manifest(self.command_name, resolved, seed, inputs)
        manifest.write(manifest_path(out))
        return manifest

    @property
    def command_name(self):
        return self.__module__.rsplit('.', 1)[-1]

    def report(self, message):
        self.stdout.write(self.style.SUCCESS(message))

    def handle(self, *args, **options):
        self.run(options)

    def run(self, options):
        raise NotImplementedError('subclasses of AddqCommand must provide a run() method')
