"""
Датасеты: загрузка и запись рёбер, признаков, меток и разбиений
"""
import csv
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from shared.config import (
    DEFAULT_SPLIT,
    EDGES_FILE,
    FEATURE_MAGIC,
    FEATURE_VERSION,
    FEATURES_BINARY_FILE,
    FEATURES_CSV_FILE,
    FLOAT_DTYPE,
    LABELS_FILE,
    SPLITS_FILE,
)
from shared.graph import SparseGraph, build_graph, normalize
from shared.validation import LazyGnnError

logger = logging.getLogger(__name__)

# magic, version u32, N u64, d u64
_FEATURE_HEADER = struct.Struct("<4sIQQ")
SPLIT_NAMES = ("train", "val", "test")


class DatasetError(LazyGnnError):
    """Ошибка разбора или несогласованность файлов датасета"""
    pass


@dataclass(eq=False)
class Dataset:
    """
    Граф (нормализованный), признаки, метки и маски разбиения

    Неразмеченные узлы имеют метку -1 и не входят ни в одну маску.
    """
    graph: SparseGraph
    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    # исходные рёбра (для записи датасета обратно на диск)
    edges: Optional[np.ndarray] = None

    def __post_init__(self):
        self.validate()

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def masks(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.train_mask, self.val_mask, self.test_mask

    def validate(self):
        """
        Проверить согласованность

        Raises:
            DatasetError: Маски пересекаются, размеры не совпадают и т.п.
        """
        n = self.graph.num_nodes
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise DatasetError(
                f"Feature rows ({self.features.shape[0]}) != graph nodes ({n})"
            )
        if self.labels.shape != (n,):
            raise DatasetError(f"Labels length ({self.labels.shape[0]}) != graph nodes ({n})")
        for name, mask in zip(SPLIT_NAMES, self.masks):
            if mask.shape != (n,) or mask.dtype != bool:
                raise DatasetError(f"{name} mask must be a boolean vector of length {n}")
            if np.any(self.labels[mask] < 0):
                raise DatasetError(f"{name} mask contains unlabeled nodes")
        overlap = (
            (self.train_mask & self.val_mask)
            | (self.train_mask & self.test_mask)
            | (self.val_mask & self.test_mask)
        )
        if overlap.any():
            raise DatasetError(f"Split masks overlap at node {int(np.flatnonzero(overlap)[0])}")


# ========== Чтение ==========

def read_edge_list(path: Path) -> List[Tuple[int, int]]:
    """
    Прочитать список рёбер "src<TAB>dst", комментарии через '#'

    Raises:
        DatasetError: С номером строки при ошибке разбора
    """
    edges = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                parts = line.split()
            try:
                src, dst = (int(p) for p in parts)
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: expected 'src<TAB>dst', got {raw.rstrip()!r}")
            if src < 0 or dst < 0:
                raise DatasetError(f"{path}:{lineno}: negative node id")
            edges.append((src, dst))
    return edges


def read_features(path: Path, dtype: str = FLOAT_DTYPE) -> np.ndarray:
    """
    Прочитать признаки: бинарный LZFT или CSV `node_id,f0,f1,...`

    Returns:
        Матрица N×d в заданной точности
    """
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(len(FEATURE_MAGIC))

    if head == FEATURE_MAGIC:
        return _read_features_binary(path).astype(dtype)
    return _read_features_csv(path).astype(dtype)


def _read_features_binary(path: Path) -> np.ndarray:
    blob = path.read_bytes()
    if len(blob) < _FEATURE_HEADER.size:
        raise DatasetError(f"{path}: truncated feature header")
    magic, version, n, d = _FEATURE_HEADER.unpack_from(blob)
    if version != FEATURE_VERSION:
        raise DatasetError(f"{path}: unsupported feature file version {version}")
    payload = blob[_FEATURE_HEADER.size:]
    expected = n * d * 4
    if len(payload) != expected:
        raise DatasetError(f"{path}: expected {expected} payload bytes for {n}x{d}, got {len(payload)}")
    return np.frombuffer(payload, dtype="<f4").reshape(n, d)


def _read_features_csv(path: Path) -> np.ndarray:
    rows = {}
    width = None
    with open(path, encoding="utf-8", newline="") as f:
        for lineno, record in enumerate(csv.reader(f), 1):
            if not record or record[0].startswith("#"):
                continue
            if lineno == 1 and record[0].strip() == "node_id":
                continue
            try:
                node = int(record[0])
                values = [float(v) for v in record[1:]]
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: malformed feature row")
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DatasetError(f"{path}:{lineno}: expected {width} features, got {len(values)}")
            if node in rows:
                raise DatasetError(f"{path}:{lineno}: duplicate node {node}")
            rows[node] = values

    n = len(rows)
    if n == 0:
        raise DatasetError(f"{path}: no feature rows")
    if set(rows) != set(range(n)):
        raise DatasetError(f"{path}: node ids must cover 0..{n - 1} exactly")
    return np.array([rows[i] for i in range(n)], dtype=np.float64)


def read_labels(path: Path, num_nodes: int) -> np.ndarray:
    """
    Прочитать метки CSV `node_id,class`; отсутствующие узлы получают -1
    """
    labels = np.full(num_nodes, -1, dtype=np.int64)
    for lineno, node, value in _iter_pairs(path, "class"):
        if node >= num_nodes:
            raise DatasetError(
                f"{path}:{lineno}: node {node} out of range, feature file has {num_nodes} rows"
            )
        try:
            labels[node] = int(value)
        except ValueError:
            raise DatasetError(f"{path}:{lineno}: class must be an integer, got {value!r}")
        if labels[node] < 0:
            raise DatasetError(f"{path}:{lineno}: negative class id")
    return labels


def read_splits(path: Path, num_nodes: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Прочитать разбиение CSV `node_id,{train|val|test}`
    """
    masks = {name: np.zeros(num_nodes, dtype=bool) for name in SPLIT_NAMES}
    for lineno, node, value in _iter_pairs(path, "split"):
        if node >= num_nodes:
            raise DatasetError(
                f"{path}:{lineno}: node {node} out of range, feature file has {num_nodes} rows"
            )
        if value not in masks:
            raise DatasetError(f"{path}:{lineno}: unknown split {value!r}")
        masks[value][node] = True
    return masks["train"], masks["val"], masks["test"]


def _iter_pairs(path: Path, header: str):
    with open(path, encoding="utf-8", newline="") as f:
        for lineno, record in enumerate(csv.reader(f), 1):
            if not record or record[0].startswith("#"):
                continue
            if lineno == 1 and record[0].strip() == "node_id":
                continue
            if len(record) != 2:
                raise DatasetError(f"{path}:{lineno}: expected 'node_id,{header}'")
            try:
                node = int(record[0])
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: node_id must be an integer")
            if node < 0:
                raise DatasetError(f"{path}:{lineno}: negative node id")
            yield lineno, node, record[1].strip()


def default_split(
    labels: np.ndarray,
    seed: int,
    fractions: Tuple[float, float, float] = DEFAULT_SPLIT,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Разбиение размеченных узлов перемешиванием с seed (по умолчанию 60/20/20)
    """
    labeled = np.flatnonzero(labels >= 0)
    order = np.random.default_rng(seed).permutation(labeled)
    n_train = int(round(fractions[0] * len(order)))
    n_val = int(round(fractions[1] * len(order)))

    masks = [np.zeros(len(labels), dtype=bool) for _ in range(3)]
    masks[0][order[:n_train]] = True
    masks[1][order[n_train:n_train + n_val]] = True
    masks[2][order[n_train + n_val:]] = True
    return masks[0], masks[1], masks[2]


def load_dataset(
    edge_path: Path,
    feature_path: Path,
    label_path: Path,
    split_path: Optional[Path] = None,
    seed: int = 0,
    add_self_loops: bool = True,
    dtype: str = FLOAT_DTYPE,
) -> Dataset:
    """
    Загрузить датасет из файлов

    Args:
        edge_path: Список рёбер
        feature_path: Признаки (LZFT или CSV); задают число узлов N
        label_path: Метки
        split_path: Разбиение; если файла нет - 60/20/20 по seed
        seed: Seed разбиения по умолчанию
        add_self_loops: Петли перед нормализацией
        dtype: Точность признаков

    Returns:
        Dataset с нормализованным графом
    """
    features = read_features(feature_path, dtype=dtype)
    n = features.shape[0]

    edges = read_edge_list(edge_path)
    if edges:
        max_id = max(max(e) for e in edges)
        if max_id >= n:
            raise DatasetError(
                f"Feature file has {n} rows but edge list implies at least {max_id + 1} nodes"
            )

    labels = read_labels(label_path, n)

    if split_path is not None and Path(split_path).is_file():
        train, val, test = read_splits(split_path, n)
    else:
        logger.info(f"No split file, using default {DEFAULT_SPLIT} split with seed {seed}")
        train, val, test = default_split(labels, seed)

    graph = normalize(build_graph(edges, n), add_self_loops=add_self_loops)
    dataset = Dataset(
        graph=graph,
        features=features,
        labels=labels,
        train_mask=train,
        val_mask=val,
        test_mask=test,
        edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2),
    )
    logger.info(
        f"Loaded dataset: N={n}, d={features.shape[1]}, classes={dataset.num_classes}, "
        f"train/val/test={int(train.sum())}/{int(val.sum())}/{int(test.sum())}"
    )
    return dataset


def load_dataset_dir(
    data_dir: Path,
    seed: int = 0,
    add_self_loops: bool = True,
    dtype: str = FLOAT_DTYPE,
) -> Dataset:
    """
    Загрузить датасет из каталога со стандартными именами файлов
    """
    data_dir = Path(data_dir)
    feature_path = data_dir / FEATURES_BINARY_FILE
    if not feature_path.is_file():
        feature_path = data_dir / FEATURES_CSV_FILE
    for required in (data_dir / EDGES_FILE, feature_path, data_dir / LABELS_FILE):
        if not required.is_file():
            raise DatasetError(f"Missing dataset file: {required}")

    return load_dataset(
        data_dir / EDGES_FILE,
        feature_path,
        data_dir / LABELS_FILE,
        data_dir / SPLITS_FILE,
        seed=seed,
        add_self_loops=add_self_loops,
        dtype=dtype,
    )


# ========== Запись ==========

def write_edge_list(path: Path, edges: np.ndarray):
    with open(path, "w", encoding="utf-8") as f:
        f.write("# src\tdst\n")
        for src, dst in np.asarray(edges).reshape(-1, 2):
            f.write(f"{int(src)}\t{int(dst)}\n")


def write_features(path: Path, features: np.ndarray, binary: bool = True):
    """
    Записать признаки в LZFT (float32) или CSV (repr значений)
    """
    n, d = features.shape
    if binary:
        with open(path, "wb") as f:
            f.write(_FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, n, d))
            f.write(np.ascontiguousarray(features, dtype="<f4").tobytes())
        return

    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["node_id"] + [f"f{j}" for j in range(d)])
        for i, row in enumerate(features):
            writer.writerow([i] + [repr(float(v)) for v in row])


def write_labels(path: Path, labels: np.ndarray):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["node_id", "class"])
        for node in np.flatnonzero(labels >= 0):
            writer.writerow([int(node), int(labels[node])])


def write_splits(path: Path, masks: Tuple[np.ndarray, np.ndarray, np.ndarray]):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["node_id", "split"])
        for name, mask in zip(SPLIT_NAMES, masks):
            for node in np.flatnonzero(mask):
                writer.writerow([int(node), name])


def save_dataset(dataset: Dataset, out_dir: Path, binary_features: bool = True) -> Path:
    """
    Записать датасет в каталог со стандартными именами файлов
    """
    if dataset.edges is None:
        raise DatasetError("Dataset has no raw edge list to save")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_edge_list(out_dir / EDGES_FILE, dataset.edges)
    feature_name = FEATURES_BINARY_FILE if binary_features else FEATURES_CSV_FILE
    write_features(out_dir / feature_name, dataset.features, binary=binary_features)
    write_labels(out_dir / LABELS_FILE, dataset.labels)
    write_splits(out_dir / SPLITS_FILE, dataset.masks)
    logger.info(f"Saved dataset to {out_dir}")
    return out_dir
