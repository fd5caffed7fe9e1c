# The MIT License (MIT)
# Copyright (c) 2024 shadowprint contributors
# See LICENSE.txt for the full license text.

from dataclasses import (
    dataclass,
    replace
)
from enum import Enum

from shadowprint.misc.errors import ConfigError


class EmbeddingTap(Enum):
    """
    Where the embedding Z is captured relative to the last fully connected layer
    """
    LAST_FC_OUTPUT = 'last_fc_output'
    LAST_FC_INPUT = 'last_fc_input'

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigError(f'Unknown embedding tap "{value}"; '
                              f'expected one of {[tap.value for tap in cls]}') from None


@dataclass(frozen=True)
class LayerSpec:
    """
    Layer descriptor; only the fields relevant to kind are used
    """
    kind: str
    out_channels: int = 0
    kernel_size: int = 0
    stride: int = 1
    padding: int = 0
    out_features: int = 0

    KINDS = ('conv', 'pool', 'relu', 'flatten', 'linear')

    @property
    def has_params(self):
        return self.kind in ('conv', 'linear')


def conv(out_channels, kernel_size=3, stride=1, padding=1):
    return LayerSpec('conv', out_channels=out_channels, kernel_size=kernel_size, stride=stride, padding=padding)


def pool(size=2):
    return LayerSpec('pool', kernel_size=size, stride=size)


def relu():
    return LayerSpec('relu')


def flatten():
    return LayerSpec('flatten')


def linear(out_features):
    return LayerSpec('linear', out_features=out_features)


def _spatial(name, size, kernel, stride, padding):
    span = size + 2 * padding - kernel
    if span < 0 or span % stride != 0:
        raise ConfigError(f'{name}: kernel {kernel}/stride {stride}/padding {padding} does not fit size {size}')
    return span // stride + 1


@dataclass(frozen=True)
class ModelSpec:
    """
    Classifier architecture with a designated embedding tap
    """
    name: str
    layers: tuple
    num_classes: int
    input_shape: tuple = (3, 32, 32)
    embedding_tap: EmbeddingTap = EmbeddingTap.LAST_FC_OUTPUT

    def __post_init__(self):
        object.__setattr__(self, 'layers', tuple(self.layers))
        object.__setattr__(self, 'input_shape', tuple(int(dim) for dim in self.input_shape))
        object.__setattr__(self, 'embedding_tap', EmbeddingTap.parse(self.embedding_tap))
        self.layer_shapes()     # validates the chain

    def layer_shapes(self):
        """
        Output shape (without batch axis) of every layer for the configured input shape
        :return: list of tuples
        :raises ConfigError: the spec is not shape-consistent
        """
        if self.num_classes < 1:
            raise ConfigError(f'{self.name}: num_classes must be positive, got {self.num_classes}')
        if len(self.layers) == 0:
            raise ConfigError(f'{self.name}: no layers')
        if len(self.input_shape) != 3 or any(dim < 1 for dim in self.input_shape):
            raise ConfigError(f'{self.name}: input shape must be (C, H, W), got {self.input_shape}')

        shape = self.input_shape
        shapes = []
        for idx, layer in enumerate(self.layers):
            where = f'{self.name} layer {idx} ({layer.kind})'
            if layer.kind not in LayerSpec.KINDS:
                raise ConfigError(f'{where}: unknown layer kind')
            if layer.kind in ('conv', 'pool'):
                if len(shape) != 3:
                    raise ConfigError(f'{where}: expects a (C, H, W) input, got {shape}')
                padding = layer.padding if layer.kind == 'conv' else 0
                height = _spatial(where, shape[1], layer.kernel_size, layer.stride, padding)
                width = _spatial(where, shape[2], layer.kernel_size, layer.stride, padding)
                channels = layer.out_channels if layer.kind == 'conv' else shape[0]
                if channels < 1:
                    raise ConfigError(f'{where}: out_channels must be positive')
                shape = (channels, height, width)
            elif layer.kind == 'flatten':
                size = 1
                for dim in shape:
                    size *= dim
                shape = (size,)
            elif layer.kind == 'linear':
                if len(shape) != 1:
                    raise ConfigError(f'{where}: expects a flat input, got {shape}; add a flatten layer')
                if layer.out_features < 1:
                    raise ConfigError(f'{where}: out_features must be positive')
                shape = (layer.out_features,)
            shapes.append(shape)

        last = self.layers[-1]
        if last.kind != 'linear' or last.out_features != self.num_classes:
            raise ConfigError(f'{self.name}: final layer must be linear with {self.num_classes} outputs')
        return shapes

    def param_shapes(self):
        """
        (weight shape, bias shape) for every parametric layer, in layer order
        """
        shapes = []
        previous = self.input_shape
        for layer, out_shape in zip(self.layers, self.layer_shapes()):
            if layer.kind == 'conv':
                shapes.append(((layer.out_channels, previous[0], layer.kernel_size, layer.kernel_size),
                               (layer.out_channels,)))
            elif layer.kind == 'linear':
                shapes.append(((previous[0], layer.out_features), (layer.out_features,)))
            previous = out_shape
        return shapes

    @property
    def last_linear_index(self):
        return max(idx for idx, layer in enumerate(self.layers) if layer.kind == 'linear')

    @property
    def embedding_width(self):
        if self.embedding_tap == EmbeddingTap.LAST_FC_OUTPUT:
            return self.num_classes
        return self.param_shapes()[-1][0][0]

    def with_tap(self, embedding_tap):
        return replace(self, embedding_tap=EmbeddingTap.parse(embedding_tap))


def predefined_specs(num_classes=10, input_shape=(3, 32, 32), embedding_tap=EmbeddingTap.LAST_FC_OUTPUT):
    """
    Desk-scale stand-ins for the ResNet18 / ResNet34 / VGG13BN targets
    :param num_classes: classifier width
    :param input_shape: (C, H, W); H and W must be divisible by 8 for SmallCNN_B
    :param embedding_tap: tap applied to every spec
    :return: dict of name -> ModelSpec
    :rtype: dict
    """
    specs = (
        ModelSpec('SmallCNN_A', (
            conv(8), relu(), pool(),
            conv(16), relu(), pool(),
            flatten(), linear(64), relu(), linear(num_classes)
        ), num_classes, input_shape, embedding_tap),
        ModelSpec('SmallCNN_B', (
            conv(8), relu(), pool(),
            conv(16), relu(), pool(),
            conv(32), relu(), pool(),
            flatten(), linear(64), relu(), linear(num_classes)
        ), num_classes, input_shape, embedding_tap),
        ModelSpec('SmallMLP', (
            flatten(), linear(128), relu(), linear(64), relu(), linear(num_classes)
        ), num_classes, input_shape, embedding_tap),
    )
    return {spec.name: spec for spec in specs}


SPEC_NAMES = ('SmallCNN_A', 'SmallCNN_B', 'SmallMLP')


def get_spec(name, num_classes=10, input_shape=(3, 32, 32), embedding_tap=EmbeddingTap.LAST_FC_OUTPUT):
    """
    Resolve a predefined spec by name
    :raises ConfigError: unknown name
    """
    if name not in SPEC_NAMES:
        raise ConfigError(f'Unknown model spec "{name}"; expected one of {list(SPEC_NAMES)}')
    return predefined_specs(num_classes, input_shape, embedding_tap)[name]
