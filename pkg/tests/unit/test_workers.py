"""
Unit tests for the worker pool helpers and atomic writes
"""

import threading

import pytest

from src.utils.file_io import FileOperationError, atomic_write_bytes, atomic_write_text
from src.utils.workers import parallel_map, worker_count


class TestWorkers:
    """Test bounded parallel mapping"""

    def test_worker_count_capped(self, mocker):
        """Requests are clamped to [1, DXNET_THREADS]"""
        mocker.patch.dict("src.utils.workers.SYSTEM_CONFIG", {"threads": 3})
        assert worker_count() == 3
        assert worker_count(8) == 3
        assert worker_count(0) == 1
        assert worker_count(2) == 2

    def test_order_kept(self, mocker):
        """Results come back in input order"""
        mocker.patch.dict("src.utils.workers.SYSTEM_CONFIG", {"threads": 4})
        assert parallel_map(lambda x: x * x, list(range(20))) == [x * x for x in range(20)]

    def test_single_worker_runs_inline(self):
        """One worker maps on the calling thread"""
        threads = parallel_map(lambda _: threading.get_ident(), [1, 2, 3], workers=1)
        assert set(threads) == {threading.get_ident()}

    def test_errors_propagate(self, mocker):
        """A failing item raises in the caller"""
        mocker.patch.dict("src.utils.workers.SYSTEM_CONFIG", {"threads": 2})

        def fail(x):
            if x == 3:
                raise ValueError("item 3")
            return x

        with pytest.raises(ValueError, match="item 3"):
            parallel_map(fail, [1, 2, 3, 4])


class TestAtomicWrite:
    """Test atomic file replacement"""

    def test_creates_parents_and_replaces(self, tmp_path):
        """Parent directories are created and old content replaced"""
        target = tmp_path / "a" / "b" / "report.json"
        atomic_write_text(target, "first")
        atomic_write_text(target, "second")
        assert target.read_text() == "second"
        assert [p.name for p in target.parent.iterdir()] == ["report.json"]

    def test_bytes(self, tmp_path):
        """Binary content is written unchanged"""
        target = atomic_write_bytes(tmp_path / "x.bin", b"\x00\x01\xff")
        assert target.read_bytes() == b"\x00\x01\xff"

    def test_failure_cleans_up(self, tmp_path):
        """A failed rename leaves no temporary file behind"""
        target = tmp_path / "taken"
        target.mkdir()
        (target / "child").write_text("x")
        with pytest.raises(FileOperationError):
            atomic_write_text(target, "data")
        assert sorted(p.name for p in tmp_path.iterdir()) == ["taken"]
