import logging

from django.core.management.base import CommandError

from textcontrol.diffusion.checkpoint import load_checkpoint
from textcontrol.enums import HintKind
from textcontrol.hints.fonts import FontRegistry
from textcontrol.management.base import PipelineCommand
from textcontrol.sampler import SampleRequest, Sampler, write_samples

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = "Samples images for a request (caption, text regions, hint kind) with deterministic DDIM."
    required = ('checkpoint', 'out')

    def add_command_arguments(self, parser):
        self.add_option(parser, '--checkpoint', help="Model checkpoint.")
        self.add_option(parser, '--base-checkpoint', help="Checkpoint to take the base weights from instead.")
        self.add_option(parser, '--request', help="JSON file with caption, regions and optional sampling fields.")
        self.add_option(parser, '--caption', help="Caption, when no request file is given.")
        self.add_option(parser, '--hint-kind', choices=[k.value for k in HintKind])
        self.add_option(parser, '--steps', type=int)
        self.add_option(parser, '--seed', type=int)
        self.add_option(parser, '--batch', type=int)
        self.add_option(parser, '--guidance', type=float)
        self.add_option(parser, '--negative-prompt')

    def build_request(self, params) -> SampleRequest:
        if params['request']:
            request = SampleRequest.read(params['request'])
        elif params['caption'] is not None:
            request = SampleRequest(caption=params['caption'], regions=[])
        else:
            raise CommandError("sample needs --request or --caption")
        # Flags override the request file.
        if params['hint_kind']:
            request.hint_kind = HintKind(params['hint_kind'])
        for key in ('steps', 'seed', 'batch', 'guidance', 'negative_prompt'):
            if params[key] is not None:
                setattr(request, key, params[key])
        return request

    def run(self, params, config):
        request = self.build_request(params)
        model, _ = load_checkpoint(params['checkpoint'], base_path=params['base_checkpoint'])
        sampler = Sampler(model, FontRegistry.from_settings())
        result = sampler.sample(request)
        manifest = write_samples(params['out'], result, metadata={'checkpoint': params['checkpoint']})
        logger.info("Wrote %d sample(s) and %s", len(result.images), manifest)
