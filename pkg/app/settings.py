from __future__ import annotations

from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


# --- CONFIGURACIÓN DEL PROCESO ---
# Variables de entorno con prefijo HD_ (o un fichero .env en el directorio de trabajo).
class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="HD_", env_file=".env", extra="ignore")

    # Tope de hilos para sub-ejecuciones independientes (filas de barridos, niveles)
    threads: int = Field(default=1, ge=1)
    log_level: str = "INFO"
    # Igual que --deterministic: un solo hilo, semillas fijas, sin marcas de tiempo
    deterministic: bool = False


@lru_cache
def get_settings() -> Settings:
    return Settings()
