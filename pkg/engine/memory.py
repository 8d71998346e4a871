"""
Хранилища истории M_fea и M_grad (по строке на узел)
"""
import logging
import struct
from pathlib import Path
from typing import Literal, Sequence, Tuple

import numpy as np

from shared.config import STATE_MAGIC, STATE_VERSION
from shared.validation import LazyGnnError, ValidationError, check_node_ids

logger = logging.getLogger(__name__)

Store = Literal["fea", "grad"]

# magic, version u32, N u64, C u64
_STATE_HEADER = struct.Struct("<4sIQQ")


class StateFormatError(LazyGnnError):
    """Некорректный файл контрольной точки"""
    pass


class LazyState:
    """
    Персистентные хранилища диффузных признаков и градиентов по X_in

    Размеры фиксируются при создании; объём значений ровно 2·N·C и не
    зависит от числа слоёв L. Писатель один (тренер), scatter и чтения
    не пересекаются.
    """

    def __init__(self, num_nodes: int, num_classes: int, dtype: str = "float64"):
        if num_nodes <= 0 or num_classes <= 0:
            raise ValidationError(f"LazyState needs positive shape, got {num_nodes}x{num_classes}")
        self.num_nodes = num_nodes
        self.num_classes = num_classes
        self.m_fea = np.zeros((num_nodes, num_classes), dtype=dtype)
        self.m_grad = np.zeros((num_nodes, num_classes), dtype=dtype)
        self.fea_initialized = np.zeros(num_nodes, dtype=bool)
        self.grad_initialized = np.zeros(num_nodes, dtype=bool)
        # итерация последней записи строки, -1 = не писалась
        self.fea_written_at = np.full(num_nodes, -1, dtype=np.int64)
        self.grad_written_at = np.full(num_nodes, -1, dtype=np.int64)

    def _store(self, which: Store) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        if which == "fea":
            return self.m_fea, self.fea_initialized, self.fea_written_at
        if which == "grad":
            return self.m_grad, self.grad_initialized, self.grad_written_at
        raise ValidationError(f"Unknown store {which!r}, expected 'fea' or 'grad'")

    @property
    def store_bytes(self) -> int:
        """Объём значений M_fea + M_grad в байтах"""
        return self.m_fea.nbytes + self.m_grad.nbytes

    def gather(self, which: Store, nodes: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
        """
        Строки хранилища в порядке nodes

        Returns:
            (rows |nodes|×C, initialized); для неинициализированных строк
            вызывающий обходит смешивание с историей
        """
        values, initialized, _ = self._store(which)
        ids = check_node_ids(nodes, self.num_nodes)
        return values[ids], initialized[ids]

    def scatter(self, which: Store, nodes: Sequence[int], rows: np.ndarray, iteration: int = 0):
        """
        Перезаписать строки целевых узлов; при повторе узла побеждает последняя запись
        """
        values, initialized, written_at = self._store(which)
        ids = check_node_ids(nodes, self.num_nodes)
        if rows.ndim != 2 or rows.shape != (ids.size, self.num_classes):
            raise ValidationError(
                f"scatter expects {ids.size}x{self.num_classes} rows, got {rows.shape}"
            )
        values[ids] = rows
        initialized[ids] = True
        written_at[ids] = iteration

    def staleness(self, which: Store, nodes: Sequence[int], now: int) -> np.ndarray:
        """
        Возраст строк в итерациях (-1 для никогда не записанных)
        """
        _, _, written_at = self._store(which)
        ids = check_node_ids(nodes, self.num_nodes)
        stamps = written_at[ids]
        return np.where(stamps >= 0, now - stamps, -1)

    def dump(self, path: Path):
        """
        Контрольная точка: заголовок (LZST, version, N, C), строки M_fea и
        M_grad в float64 little-endian, затем флаги инициализации (uint8)
        """
        with open(path, "wb") as f:
            f.write(_STATE_HEADER.pack(STATE_MAGIC, STATE_VERSION, self.num_nodes, self.num_classes))
            f.write(np.ascontiguousarray(self.m_fea, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(self.m_grad, dtype="<f8").tobytes())
            f.write(self.fea_initialized.astype(np.uint8).tobytes())
            f.write(self.grad_initialized.astype(np.uint8).tobytes())
        logger.info(f"State dumped to {path} ({self.store_bytes} store bytes)")

    @classmethod
    def load(cls, path: Path, dtype: str = "float64") -> "LazyState":
        blob = Path(path).read_bytes()
        if len(blob) < _STATE_HEADER.size:
            raise StateFormatError(f"{path}: truncated header")
        magic, version, n, c = _STATE_HEADER.unpack_from(blob)
        if magic != STATE_MAGIC:
            raise StateFormatError(f"{path}: bad magic {magic!r}")
        if version != STATE_VERSION:
            raise StateFormatError(f"{path}: unsupported version {version}")

        matrix_bytes = n * c * 8
        expected = _STATE_HEADER.size + 2 * matrix_bytes + 2 * n
        if len(blob) != expected:
            raise StateFormatError(f"{path}: expected {expected} bytes, got {len(blob)}")

        state = cls(n, c, dtype=dtype)
        offset = _STATE_HEADER.size
        state.m_fea[:] = np.frombuffer(blob, dtype="<f8", count=n * c, offset=offset).reshape(n, c)
        offset += matrix_bytes
        state.m_grad[:] = np.frombuffer(blob, dtype="<f8", count=n * c, offset=offset).reshape(n, c)
        offset += matrix_bytes
        state.fea_initialized[:] = np.frombuffer(blob, dtype=np.uint8, count=n, offset=offset).astype(bool)
        offset += n
        state.grad_initialized[:] = np.frombuffer(blob, dtype=np.uint8, count=n, offset=offset).astype(bool)
        return state
