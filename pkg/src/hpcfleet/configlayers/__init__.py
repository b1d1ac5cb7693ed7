from .layers import (
    PRECEDENCE,
    ConfigLayer,
    EffectiveConfig,
    dump_layers,
    flatten,
    load_layers,
    merge_layers,
)
from .render import Changeset, Renderer, RenderResult, changeset, render_desires
from .secrets import Keyring, SealedSecret, SecretStore, seal_secret, unseal_secret

__all__ = [
    "PRECEDENCE", "Changeset", "ConfigLayer", "EffectiveConfig", "Keyring", "RenderResult",
    "Renderer", "SealedSecret", "SecretStore", "changeset", "dump_layers", "flatten",
    "load_layers", "merge_layers", "render_desires", "seal_secret", "unseal_secret",
]
