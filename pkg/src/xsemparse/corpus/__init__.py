from .bleu import corpus_bleu
from .bpe import SubwordModel, bpe_decode, bpe_encode, bpe_train
from .channels import (NoiseChannel, apply_mt_channel, back_translate, clean_channel, default_channels,
                       gold_translate, load_channels, save_channels)
from .grammar import Example, GrammarSpec, build_kb, generate_corpus, load_jsonl, save_jsonl
from .splits import DEFAULT_RATIOS, partial_gold_mix, split_dataset

__all__ = [
    "DEFAULT_RATIOS", "Example", "GrammarSpec", "NoiseChannel", "SubwordModel",
    "apply_mt_channel", "back_translate", "bpe_decode", "bpe_encode", "bpe_train", "build_kb",
    "clean_channel", "corpus_bleu", "default_channels", "generate_corpus", "gold_translate",
    "load_channels", "load_jsonl", "partial_gold_mix", "save_channels", "save_jsonl", "split_dataset",
]
