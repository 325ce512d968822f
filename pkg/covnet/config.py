import os
from typing import Union

import tomli
import tomli_w

from covnet.interface.config import IConfig, RunConfigModel
from covnet.validation import DataFormatError


class Config(IConfig):
    def load_file(self, filepath: Union[str, os.PathLike]) -> RunConfigModel:
        """Create a RunConfigModel from a toml file."""
        with open(filepath, mode="rb") as fp:
            try:
                config = tomli.load(fp)
            except tomli.TOMLDecodeError as e:
                raise DataFormatError(f"Cannot parse settings file {filepath}: {e}") from None
        self.attrs = RunConfigModel.model_validate(config)
        return self.attrs

    def save(self, config: RunConfigModel, filepath: Union[str, os.PathLike]):
        """Save a RunConfigModel to a toml file."""
        with open(filepath, "wb") as f:
            tomli_w.dump(config.model_dump(mode="json", exclude_none=True), f)
