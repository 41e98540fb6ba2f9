"""Turn a dataclass of defaults into command-line flags."""
import argparse
import dataclasses


def parse(cls, argv=None):
    p = argparse.ArgumentParser(description=cls.__doc__)
    for f in dataclasses.fields(cls):
        flag = "--" + f.name.replace("_", "-")
        if f.type in ("bool", bool):
            p.add_argument(flag, action=argparse.BooleanOptionalAction, default=f.default)
        elif isinstance(f.default, tuple):
            kind = type(f.default[0]) if f.default else str
            p.add_argument(flag, nargs="+", type=kind, default=f.default)
        else:
            p.add_argument(flag, type=type(f.default), default=f.default)
    ns = p.parse_args(argv)
    return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in vars(ns).items()})
