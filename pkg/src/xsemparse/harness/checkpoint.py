"""Model checkpoints: parameters in an .npz archive plus a JSON header."""
from __future__ import annotations

import json
import zipfile
from dataclasses import asdict

import numpy as np

from ..corpus.bpe import SubwordModel
from ..errors import CheckpointError, ConfigurationError
from ..parser import EnsembleParser, ModelConfig, Vocab

CHECKPOINT_FORMAT_VERSION = 1


def save_checkpoint(model, path, extra=None):
    """Write ``model`` (and an optional JSON-able ``extra`` dict) to ``path``."""
    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": asdict(model.config),
        "src_vocab": model.src_vocab.to_json(),
        "tgt_vocab": model.tgt_vocab.to_json(),
        "subwords": None if model.subwords is None else model.subwords.to_json(),
        "extra": extra or {},
    }
    arrays = {f"param/{k}": v for k, v in model.state_dict().items()}
    if model.injector is not None:
        arrays["frozen/features"] = model.injector.table.data
    arrays["header"] = np.array(json.dumps(header))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def read_header(path):
    try:
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
    except (OSError, ValueError, KeyError, EOFError, zipfile.BadZipFile, json.JSONDecodeError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from None
    if header.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"checkpoint {path} has format version {header.get('format_version')!r}, "
                              f"expected {CHECKPOINT_FORMAT_VERSION}")
    return header


def load_checkpoint(path):
    """Rebuild the model stored at ``path``; returns (model, extra)."""
    header = read_header(path)
    try:
        with np.load(path, allow_pickle=False) as z:
            state = {k[len("param/"):]: z[k] for k in z.files if k.startswith("param/")}
            features = z["frozen/features"] if "frozen/features" in z.files else None
        config = ModelConfig(**header["config"])
        subwords = None if header["subwords"] is None else SubwordModel.from_json(header["subwords"])
        model = EnsembleParser(config, Vocab.from_json(header["src_vocab"]), Vocab.from_json(header["tgt_vocab"]),
                               subwords=subwords)
        model.load_state_dict(state)
    except CheckpointError:
        raise
    except (OSError, ValueError, KeyError, TypeError, EOFError, zipfile.BadZipFile, ConfigurationError) as e:
        raise CheckpointError(f"corrupt checkpoint {path}: {e}") from None
    if model.injector is not None:
        if features is None or features.shape != model.injector.table.shape:
            raise CheckpointError(f"checkpoint {path} lacks a matching feature table")
        model.injector.table.data[...] = features
    return model, header.get("extra", {})
