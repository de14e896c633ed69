"""
Entry point chính để chạy bộ công cụ Iwin

Chạy: python main.py <verb> [options]
Ví dụ:
    python main.py verify-all
    python main.py analyze reach --H 8 --W 8 --M 2 --K 2
    python main.py model describe --variant T --res 224
"""

import sys
import os

# Thêm thư mục gốc vào path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from app.harness.cli import main


if __name__ == "__main__":
    sys.exit(main())
