from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict

class Environment(BaseSettings):
  DIRACSEA_JOBS: Optional[int] = None
  DIRACSEA_LOG_LEVEL: str = "INFO"

  model_config = SettingsConfigDict(env_file=".env", extra="ignore")

ENV = Environment()
