# core/dataset_io.py - 数据集 / 模型 / 结果文件读写
"""
TensorNP - 文件格式模块

TNPD 数据集（全部小端）:
    "TNPD" | u32 版本(=1) | u32 阶数 M | M × u32 维度 | u64 样本数 N
    | N × u8 标签 | N × Πd_m × f64 样本（每个样本按 mode-1 最快的 vec 顺序）
    文件长度必须恰好等于 4+4+4+4M+8+N+8·N·Πd_m。

TNPM 模型:
    "TNPM" | u32 版本(=1) | u32 头长度 L | L 字节 UTF-8 JSON 头 | f64 载荷
    载荷 = [阈值, 各参数数组按头中顺序展平]，阈值与权重都逐位保存。

结果 CSV:
    detail.csv / aggregate.csv，实数 6 位有效数字，换行符 "\\n"；run.json 记录运行参数。

依赖: numpy, pandas
"""

import json
import struct
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
import pandas as pd

import config
from core.calibration import CalibrationResult, NpLevels
from core.classifiers import LinearScorer, NpClassifier, TnnScorer
from core.errors import DatasetFormatError
from core.estimation import LabeledData
from core.tensor_core import vectorize
from core.tensor_nn import TclNetwork
from utils.logger import log

PathLike = Union[str, Path]

DATASET_MAGIC = b"TNPD"
MODEL_MAGIC = b"TNPM"
FORMAT_VERSION = 1

DETAIL_FILE = "detail.csv"
AGGREGATE_FILE = "aggregate.csv"
MANIFEST_FILE = "run.json"


def _float_format() -> str:
    return f"%.{config.CSV_SIG_DIGITS}g"


# ============================================================
# TNPD
# ============================================================

def _batch_to_payload(tensors: np.ndarray) -> np.ndarray:
    """(N, d_1..d_M) → (N, Πd_m)，每行是一个样本的 vec"""
    n, M = tensors.shape[0], tensors.ndim - 1
    perm = (0,) + tuple(range(M, 0, -1))
    return np.ascontiguousarray(np.transpose(tensors, perm)).reshape(n, int(np.prod(tensors.shape[1:])))


def _payload_to_batch(flat: np.ndarray, n: int, dims: Tuple[int, ...]) -> np.ndarray:
    M = len(dims)
    perm = (0,) + tuple(range(M, 0, -1))
    return np.ascontiguousarray(np.transpose(flat.reshape((n,) + dims[::-1]), perm))


def dataset_bytes(data: LabeledData) -> bytes:
    """把数据集编码成 TNPD 字节串"""
    dims = data.shape
    header = DATASET_MAGIC + struct.pack("<II", FORMAT_VERSION, len(dims))
    header += struct.pack(f"<{len(dims)}I", *dims) + struct.pack("<Q", len(data))
    labels = data.labels.astype(np.uint8).tobytes()
    payload = _batch_to_payload(data.tensors).astype("<f8").tobytes()
    return header + labels + payload


def write_dataset(path: PathLike, data: LabeledData):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dataset_bytes(data))
    log(f"[IO] 写出数据集 {path}: N={len(data)}, shape={data.shape}", level="DEBUG")


def parse_dataset(raw: bytes) -> LabeledData:
    """
    解析 TNPD 字节串

    异常:
        DatasetFormatError: 魔数/版本错误、长度不符（file length mismatch）、标签非 0/1
    """
    if len(raw) < 12 or raw[:4] != DATASET_MAGIC:
        raise DatasetFormatError("[ERROR] 不是 TNPD 数据集文件（魔数错误）")
    version, M = struct.unpack_from("<II", raw, 4)
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"[ERROR] 不支持的 TNPD 版本: {version}")
    if M < 1:
        raise DatasetFormatError(f"[ERROR] 张量阶数必须 ≥ 1, 实际 {M}")
    head = 12 + 4 * M + 8
    if len(raw) < head:
        raise DatasetFormatError(f"[ERROR] file length mismatch: 文件只有 {len(raw)} 字节，头部就需要 {head}")
    dims = struct.unpack_from(f"<{M}I", raw, 12)
    (n,) = struct.unpack_from("<Q", raw, 12 + 4 * M)
    size = int(np.prod(dims))
    expected = head + n + 8 * n * size
    if len(raw) != expected:
        raise DatasetFormatError(f"[ERROR] file length mismatch: 期望 {expected} 字节, 实际 {len(raw)}")

    labels = np.frombuffer(raw, dtype=np.uint8, count=n, offset=head)
    if np.any(labels > 1):
        raise DatasetFormatError("[ERROR] 标签只能是 0 或 1")
    flat = np.frombuffer(raw, dtype="<f8", count=n * size, offset=head + n).astype(np.float64)
    tensors = _payload_to_batch(flat, n, tuple(dims)) if n else np.zeros((0,) + tuple(dims))
    return LabeledData(tensors, labels.astype(np.int8))


def read_dataset(path: PathLike) -> LabeledData:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"[ERROR] 数据集文件不存在: {path}")
    return parse_dataset(path.read_bytes())


# ============================================================
# TNPM
# ============================================================

def _model_arrays(classifier: NpClassifier) -> Tuple[dict, List[Tuple[str, np.ndarray]]]:
    scorer = classifier.scorer
    if isinstance(scorer, LinearScorer):
        return {"kind": "linear"}, [("weights", scorer.weights)]
    net = scorer.network
    arrays = list(net.state_arrays().items())
    header = {
        "kind": "tnn",
        "link": scorer.link,
        "tcl_ranks": [list(layer) for layer in net.tcl_ranks],
        "hidden": net.hidden_width,
    }
    return header, arrays


def model_bytes(classifier: NpClassifier) -> bytes:
    """把分类器编码成 TNPM 字节串"""
    header, arrays = _model_arrays(classifier)
    header.update({
        "method": classifier.method,
        "shape": list(classifier.shape),
        "inclusive": bool(classifier.inclusive),
        "levels": None if classifier.levels is None else
        {"alpha": classifier.levels.alpha, "delta": classifier.levels.delta},
        "calibration": None if classifier.calibration is None else {
            "k_star": classifier.calibration.k_star,
            "n_calib": classifier.calibration.n_calib,
            "tail_at_k": classifier.calibration.tail_at_k,
        },
        "arrays": [{"name": name, "shape": list(np.shape(a))} for name, a in arrays],
    })
    head = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    # 线性权重按 vec 顺序，网络参数按 torch 的行优先顺序
    parts = [np.array([classifier.threshold], dtype="<f8")]
    for name, a in arrays:
        flat = vectorize(a) if name == "weights" else np.asarray(a).reshape(-1)
        parts.append(flat.astype("<f8"))
    payload = np.concatenate(parts).tobytes()
    return MODEL_MAGIC + struct.pack("<II", FORMAT_VERSION, len(head)) + head + payload


def write_model(path: PathLike, classifier: NpClassifier):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(model_bytes(classifier))
    log(f"[IO] 写出模型 {path}: {classifier.method}, shape={classifier.shape}", level="DEBUG")


def parse_model(raw: bytes) -> NpClassifier:
    """
    解析 TNPM 字节串

    异常:
        DatasetFormatError: 魔数/版本错误、头部损坏、长度不符
    """
    if len(raw) < 12 or raw[:4] != MODEL_MAGIC:
        raise DatasetFormatError("[ERROR] 不是 TNPM 模型文件（魔数错误）")
    version, head_len = struct.unpack_from("<II", raw, 4)
    if version != FORMAT_VERSION:
        raise DatasetFormatError(f"[ERROR] 不支持的 TNPM 版本: {version}")
    try:
        header = json.loads(raw[12:12 + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DatasetFormatError(f"[ERROR] TNPM 头部损坏: {e}") from e

    specs = [(a["name"], tuple(a["shape"])) for a in header["arrays"]]
    count = 1 + sum(int(np.prod(s)) for _, s in specs)
    offset = 12 + head_len
    if len(raw) != offset + 8 * count:
        raise DatasetFormatError(
            f"[ERROR] file length mismatch: 期望 {offset + 8 * count} 字节, 实际 {len(raw)}")
    payload = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).astype(np.float64)

    threshold = float(payload[0])
    arrays: Dict[str, np.ndarray] = {}
    pos = 1
    for name, shape in specs:
        size = int(np.prod(shape))
        chunk = payload[pos:pos + size]
        if name == "weights":
            arrays[name] = chunk.reshape(shape, order="F")
        else:
            arrays[name] = chunk.reshape(shape).copy()
        pos += size

    shape = tuple(header["shape"])
    if header["kind"] == "linear":
        scorer = LinearScorer(np.ascontiguousarray(arrays["weights"]))
    elif header["kind"] == "tnn":
        net = TclNetwork(shape, header["tcl_ranks"], header["hidden"]).load_arrays(arrays)
        net.eval()
        scorer = TnnScorer(net, header["link"])
    else:
        raise DatasetFormatError(f"[ERROR] 未知模型类型: {header['kind']}")

    levels = header.get("levels")
    calib = header.get("calibration")
    return NpClassifier(
        method=header["method"],
        scorer=scorer,
        threshold=threshold,
        levels=None if levels is None else NpLevels(levels["alpha"], levels["delta"]),
        inclusive=bool(header["inclusive"]),
        calibration=None if calib is None else CalibrationResult(
            k_star=calib["k_star"], threshold=threshold,
            n_calib=calib["n_calib"], tail_at_k=calib["tail_at_k"]),
    )


def read_model(path: PathLike) -> NpClassifier:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"[ERROR] 模型文件不存在: {path}")
    return parse_model(path.read_bytes())


# ============================================================
# CSV
# ============================================================

def write_csv(frame: pd.DataFrame, path: PathLike, float_format: str = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=float_format or _float_format(), lineterminator="\n")


def write_results(out_dir: PathLike, detail: pd.DataFrame, aggregate: pd.DataFrame,
                  manifest: dict) -> Tuple[Path, Path]:
    """
    写出 detail.csv / aggregate.csv / run.json

    manifest 至少包含 alphas（config_id → α），供 verify 重算违约率。
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    detail_path = out_dir / DETAIL_FILE
    aggregate_path = out_dir / AGGREGATE_FILE
    write_csv(detail, detail_path)
    write_csv(aggregate, aggregate_path)
    with open(out_dir / MANIFEST_FILE, "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")
    return detail_path, aggregate_path


def write_predictions(path: PathLike, scores: np.ndarray, labels: np.ndarray):
    """index,score,label；分数保留 17 位有效数字以便逐位比对"""
    frame = pd.DataFrame({
        "index": np.arange(len(labels), dtype=np.int64),
        "score": np.asarray(scores, dtype=np.float64).reshape(-1),
        "label": np.asarray(labels, dtype=np.int64).reshape(-1),
    })
    write_csv(frame, path, float_format="%.17g")


def verify_aggregates(out_dir: PathLike, rtol: float = 1e-4, atol: float = 1e-5) -> List[str]:
    """
    由 detail.csv 重算汇总并与 aggregate.csv 比对

    CSV 中的实数只有 6 位有效数字，因此按容差比较。
    返回:
        不一致项的描述列表（空列表表示一致）
    """
    from core.experiments import AGGREGATE_COLUMNS, DETAIL_COLUMNS, aggregate_frame

    out_dir = Path(out_dir)
    for name in (DETAIL_FILE, AGGREGATE_FILE, MANIFEST_FILE):
        if not (out_dir / name).exists():
            raise FileNotFoundError(f"[ERROR] 缺少结果文件: {out_dir / name}")
    detail = pd.read_csv(out_dir / DETAIL_FILE)
    stored = pd.read_csv(out_dir / AGGREGATE_FILE)
    with open(out_dir / MANIFEST_FILE, encoding="utf-8") as f:
        alphas = json.load(f)["alphas"]
    if list(detail.columns) != DETAIL_COLUMNS:
        raise DatasetFormatError(f"[ERROR] detail.csv 表头错误: {list(detail.columns)}")
    if list(stored.columns) != AGGREGATE_COLUMNS:
        raise DatasetFormatError(f"[ERROR] aggregate.csv 表头错误: {list(stored.columns)}")

    recomputed = aggregate_frame(detail, alphas).set_index(["config_id", "method"])
    stored = stored.set_index(["config_id", "method"])
    problems = []
    missing = recomputed.index.symmetric_difference(stored.index)
    for key in missing:
        problems.append(f"{key[0]}/{key[1]}: 只出现在一个文件中")
    for key in recomputed.index.intersection(stored.index):
        for col in AGGREGATE_COLUMNS[2:]:
            a, b = float(recomputed.at[key, col]), float(stored.at[key, col])
            if not np.isclose(a, b, rtol=rtol, atol=atol):
                problems.append(f"{key[0]}/{key[1]}/{col}: 重算 {a:.6g} ≠ 记录 {b:.6g}")
    return problems


def write_truth(path: PathLike, discriminant: np.ndarray, threshold: float, snr: float,
                alpha: float, extra: dict = None):
    """gen 的旁路文件: 真实 B（vec 顺序）与 oracle 阈值"""
    truth = {
        "shape": list(discriminant.shape),
        "oracle_threshold": float(threshold),
        "snr": float(snr),
        "alpha": float(alpha),
        "discriminant_vec": [float(v) for v in vectorize(discriminant)],
    }
    truth.update(extra or {})
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(truth, f, ensure_ascii=False, indent=2)
        f.write("\n")


def read_truth(path: PathLike) -> dict:
    with open(path, encoding="utf-8") as f:
        truth = json.load(f)
    truth["discriminant"] = np.asarray(truth["discriminant_vec"]).reshape(truth["shape"], order="F")
    return truth
