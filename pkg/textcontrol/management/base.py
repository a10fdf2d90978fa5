"""
Shared plumbing of the pipeline management commands.

Every command option can also be set in the ``--config`` YAML file under its underscored name; flags win over the
file. Commands that take a training configuration also accept one flag per TrainConfig field.
"""
import logging
import os
from dataclasses import fields
from typing import Any, Dict, Optional

import torch
from django.conf import settings
from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from textcontrol.config import TrainConfig, dump_yaml, read_yaml, resolve_config, split_file_values, \
    write_effective_config

logger = logging.getLogger(__name__)


def flag_name(dest: str) -> str:
    return '--' + dest.replace('_', '-')


class PipelineCommand(BaseCommand):
    requires_system_checks = []
    uses_train_config = False
    required = ('out',)

    def __init__(self, *args, **kwargs):
        super(PipelineCommand, self).__init__(*args, **kwargs)
        self.option_defaults: Dict[str, Any] = {}

    @property
    def command_name(self) -> str:
        return self.__module__.rsplit('.', 1)[-1].replace('_', '-')

    def add_option(self, parser, flag: str, default=None, **kwargs):
        """
        Adds a flag whose default applies only when neither the command line nor the config file sets it.
        """
        dest = kwargs.pop('dest', flag.lstrip('-').replace('-', '_'))
        self.option_defaults[dest] = default
        parser.add_argument(flag, dest=dest, default=None, **kwargs)

    def add_arguments(self, parser):
        parser.add_argument('--config', help="Flat YAML file of option and TrainConfig values.")
        self.add_option(parser, '--out', help="Output directory.")
        self.add_option(parser, '--workers', default=settings.TEXTCONTROL_WORKERS, type=int,
                        help="Intra-op threads (default: machine parallelism).")
        self.add_command_arguments(parser)
        if self.uses_train_config:
            group = parser.add_argument_group('training configuration')
            for f in fields(TrainConfig):
                group.add_argument(flag_name(f.name), dest=f.name, default=None, metavar='VALUE')

    def add_command_arguments(self, parser):
        pass

    def resolve(self, options: dict):
        """
        :return: (command parameters, TrainConfig or None).
        :raises CommandError: When a required flag is missing.
        :raises ValidationError: On unknown config file keys or invalid configuration values.
        """
        file_values = read_yaml(options['config']) if options.get('config') else {}
        train_values, file_values = split_file_values(file_values) if self.uses_train_config else ({}, file_values)
        unknown = sorted(set(file_values) - set(self.option_defaults))
        if unknown:
            raise ValidationError(f"Unknown configuration key(s) for {self.command_name}: {', '.join(unknown)}")

        params = {}
        for dest, default in self.option_defaults.items():
            value = options.get(dest)
            if value is None:
                value = file_values.get(dest, default)
            params[dest] = value
        for dest in self.required:
            if params.get(dest) in (None, ''):
                raise CommandError(f"{self.command_name} needs {flag_name(dest)}")

        config = None
        if self.uses_train_config:
            flags = {f.name: options[f.name] for f in fields(TrainConfig) if options.get(f.name) is not None}
            config = resolve_config(overrides=flags, file_values=train_values)
        return params, config

    def output_dir(self, params: dict) -> str:
        return params['out']

    def handle(self, *args, **options):
        params, config = self.resolve(options)
        torch.set_num_threads(max(1, int(params['workers'])))
        snapshot = {'command': self.command_name}
        snapshot.update(params)
        if config is not None:
            snapshot['config'] = config.to_dict()
        logger.info("Effective configuration for %s:\n%s", self.command_name, dump_yaml(snapshot))
        out_dir = self.output_dir(params)
        os.makedirs(out_dir, exist_ok=True)
        write_effective_config(out_dir, snapshot)
        self.run(params, config)

    def run(self, params: dict, config: Optional[TrainConfig]):
        raise NotImplementedError


def comma_list(value) -> list:
    """
    A comma-separated flag value, or a list from the config file.
    """
    if not value:
        return []
    if isinstance(value, str):
        return [v.strip() for v in value.split(',') if v.strip()]
    return [str(v) for v in value]
