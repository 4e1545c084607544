"""Dataclass configs whose fields double as command-line flags."""

import argparse
import dataclasses
import json


def parse(config_cls, argv=None):
    parser = argparse.ArgumentParser(description=config_cls.__doc__)
    for f in dataclasses.fields(config_cls):
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        if isinstance(default, (list, tuple)):
            parser.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, nargs="+",
                                type=type(default[0]), default=default)
        else:
            parser.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, type=type(default), default=default)
    cfg = config_cls(**vars(parser.parse_args(argv)))
    print(json.dumps(dataclasses.asdict(cfg)))
    return cfg
