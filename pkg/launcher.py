# launcher.py в корне репозитория
import os
import sys

# Добавляем корень проекта в путь, чтобы работали импорты вида src.*
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
