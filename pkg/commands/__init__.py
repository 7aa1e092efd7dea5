from commands import data, evaluate, presets, readout, train

COMMAND_MODULES = (data, train, evaluate, readout, presets)


def register_all(subparsers):
    for module in COMMAND_MODULES:
        module.register(subparsers)


__all__ = ["COMMAND_MODULES", "register_all"]
