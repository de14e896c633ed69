"""
Theo dõi tiến độ các suite kiểm tra chạy song song (thread-safe)
"""

import threading
import time
from typing import Dict, List


class CheckProgress:
    """Container thread-safe cho tiến độ của verify_all"""

    def __init__(self):
        self.lock = threading.Lock()
        self.total = 0
        self.finished = 0
        self.failed: List[str] = []
        self.running: List[str] = []
        self.time_elapsed = 0.0
        self.is_active = False
        self.start_time = 0.0

    def start(self, total: int):
        """Bắt đầu một lượt kiểm tra mới"""
        with self.lock:
            self.total = total
            self.finished = 0
            self.failed = []
            self.running = []
            self.time_elapsed = 0.0
            self.is_active = True
            self.start_time = time.perf_counter()

    def begin(self, suite: str):
        """Gọi từ worker thread khi một suite bắt đầu"""
        with self.lock:
            self.running.append(suite)

    def update(self, suite: str, passed: bool):
        """Gọi từ worker thread khi một suite kết thúc"""
        with self.lock:
            if suite in self.running:
                self.running.remove(suite)
            self.finished += 1
            if not passed:
                self.failed.append(suite)
            self.time_elapsed = time.perf_counter() - self.start_time

    def stop(self):
        with self.lock:
            self.is_active = False
            self.time_elapsed = time.perf_counter() - self.start_time

    def get_snapshot(self) -> Dict:
        """Đọc tiến độ an toàn từ thread khác"""
        with self.lock:
            return {
                'total': self.total,
                'finished': self.finished,
                'failed': list(self.failed),
                'running': list(self.running),
                'time_elapsed': self.time_elapsed,
                'is_active': self.is_active,
            }
