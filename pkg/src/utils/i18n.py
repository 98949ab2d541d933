from typing import Any

from plate import Plate

from src import LANGUAGE, LOCALES_DIR

plate: Plate = Plate(root=str(LOCALES_DIR), fallback='en_US')


def get_full_language_code(language_code: str) -> Any:
    for lang in plate.locales:
        if lang == language_code or lang.startswith(f'{language_code}_'):
            return lang
    return 'en_US'


def get_translator(language_code: str) -> Any:
    return plate.get_translator(get_full_language_code(language_code))


t = get_translator(LANGUAGE)
