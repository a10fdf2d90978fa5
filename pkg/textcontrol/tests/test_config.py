from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from textcontrol.config import TrainConfig, read_yaml, resolve_config, split_file_values, write_effective_config
from textcontrol.enums import HintKind, LossReduction
from textcontrol.tests.helpers import TemporaryDirectoryMixin


class TrainConfigTestCase(SimpleTestCase):
    def test_defaults(self):
        config = TrainConfig().validate()
        self.assertEqual(config.lambda_ocr, 0.1)
        self.assertEqual(config.learning_rate, 1e-4)
        self.assertEqual((config.adam_beta1, config.adam_beta2), (0.9, 0.999))
        self.assertEqual(config.weight_decay, 0.01)
        self.assertEqual(config.grad_clip, 1.0)
        self.assertTrue(config.freeze_base)
        self.assertEqual(config.latent_shape, (4, 8, 8))

    def test_invariants(self):
        for overrides in ({'lambda_ocr': -0.1}, {'timesteps': 1}, {'image_size': 60, 'latent_size': 7},
                          {'latent_size': 4}, {'beta_start': 0.1, 'beta_end': 0.01}, {'hint_kind': 'sketch'}):
            with self.assertRaises(ValidationError, msg=overrides):
                TrainConfig().with_overrides(overrides).validate()

    def test_unknown_key(self):
        with self.assertRaises(ValidationError):
            TrainConfig().with_overrides({'lambda': 0.2})

    def test_coercion(self):
        config = TrainConfig().with_overrides({'use_ocr_loss': 'false', 'model_widths': '16,32', 'epochs': '3',
                                               'hint_kind': 'canny', 'loss_reduction': 'sum'})
        self.assertFalse(config.use_ocr_loss)
        self.assertEqual(config.model_widths, (16, 32))
        self.assertEqual(config.epochs, 3)
        self.assertEqual(config.hint_kind, HintKind.CANNY)
        self.assertEqual(config.loss_reduction, LossReduction.SUM)

    def test_dict_round_trip(self):
        config = TrainConfig().with_overrides({'hint_kind': 'glyph', 'model_widths': (16, 32)})
        self.assertEqual(TrainConfig.from_dict(config.to_dict()), config)


class ResolveConfigTestCase(TemporaryDirectoryMixin, SimpleTestCase):
    def test_precedence(self):
        # defaults < environment < file < flags
        path = self.path('config.yaml')
        with open(path, 'w') as config_file:
            config_file.write('epochs: 3\nbatch_size: 4\n')
        environ = {'TEXTCONTROL_EPOCHS': '2', 'TEXTCONTROL_BATCH_SIZE': '2', 'TEXTCONTROL_SEED': '9'}
        config = resolve_config(path, overrides={'batch_size': '16'}, environ=environ)
        self.assertEqual(config.seed, 9)
        self.assertEqual(config.epochs, 3)
        self.assertEqual(config.batch_size, 16)
        self.assertEqual(config.lambda_ocr, 0.1)

    def test_file_must_be_mapping(self):
        path = self.path('config.yaml')
        with open(path, 'w') as config_file:
            config_file.write('- 1\n- 2\n')
        with self.assertRaises(ValidationError):
            read_yaml(path)

    def test_split_file_values(self):
        train_values, other = split_file_values({'epochs': 2, 'data': 'x.jsonl'})
        self.assertEqual(train_values, {'epochs': 2})
        self.assertEqual(other, {'data': 'x.jsonl'})

    def test_effective_config_round_trip(self):
        config = TrainConfig().with_overrides({'lambda_ocr': 0.25})
        path = write_effective_config(self.tmp, config.to_dict())
        self.assertEqual(resolve_config(path, environ={}), config)
