"""Tiny transformer classifier and checkpoint handling.

The desk-scale model is a small pre-norm-free transformer encoder written
directly against torch.nn so it can be TorchScript-compiled without any
model-hub dependency: token + position embeddings, a stack of self-attention
blocks, masked mean pooling, and a 3-way classification head in the fixed
output order (entailment, neutral, contradiction). A checkpoint directory
holds config.json, weights.pt (a state dict), and tokenizer.json.
"""

import json
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from tokenizers import Tokenizer
from tokenizers.models import WordLevel
from tokenizers.pre_tokenizers import Whitespace
from tokenizers.processors import TemplateProcessing

from .data import LABELS, _read_jsonl
from .errors import DataError, TrainerError

CONFIG_FILE = "config.json"
WEIGHTS_FILE = "weights.pt"
TOKENIZER_FILE = "tokenizer.json"

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
CLS_TOKEN = "[CLS]"
SEP_TOKEN = "[SEP]"
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN)


@dataclass
class ModelConfig:
    vocab_size: int
    hidden_size: int = 32
    num_layers: int = 2
    num_heads: int = 2
    ff_size: int = 64
    max_len: int = 128
    dropout: float = 0.1
    pad_id: int = 0

    def __post_init__(self):
        if self.hidden_size % self.num_heads != 0:
            raise TrainerError(
                f"hidden size {self.hidden_size} not divisible by {self.num_heads} heads"
            )


class EncoderBlock(torch.nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.attention = torch.nn.MultiheadAttention(
            config.hidden_size, config.num_heads, dropout=config.dropout, batch_first=True
        )
        self.norm1 = torch.nn.LayerNorm(config.hidden_size)
        self.feed_forward = torch.nn.Sequential(
            torch.nn.Linear(config.hidden_size, config.ff_size),
            torch.nn.GELU(),
            torch.nn.Linear(config.ff_size, config.hidden_size),
        )
        self.norm2 = torch.nn.LayerNorm(config.hidden_size)
        self.dropout = torch.nn.Dropout(config.dropout)

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        attended, _ = self.attention(
            x, x, x, key_padding_mask=pad_mask, need_weights=False
        )
        x = self.norm1(x + self.dropout(attended))
        x = self.norm2(x + self.dropout(self.feed_forward(x)))
        return x


class TinyClassifier(torch.nn.Module):
    """forward(ids, attention_mask) -> logits in LABELS order."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.max_len = config.max_len
        self.token_embedding = torch.nn.Embedding(
            config.vocab_size, config.hidden_size, padding_idx=config.pad_id
        )
        self.position_embedding = torch.nn.Embedding(config.max_len, config.hidden_size)
        self.blocks = torch.nn.ModuleList(
            [EncoderBlock(config) for _ in range(config.num_layers)]
        )
        self.dropout = torch.nn.Dropout(config.dropout)
        self.classifier = torch.nn.Linear(config.hidden_size, len(LABELS))

    def forward(self, ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        # Defensive truncation keeps position lookups in range for any caller.
        ids = ids[:, : self.max_len]
        attention_mask = attention_mask[:, : self.max_len]
        positions = torch.arange(ids.size(1), device=ids.device).unsqueeze(0)
        x = self.token_embedding(ids) + self.position_embedding(positions)
        x = self.dropout(x)
        pad_mask = attention_mask == 0
        for block in self.blocks:
            x = block(x, pad_mask)
        weights = attention_mask.unsqueeze(-1).to(x.dtype)
        denom = weights.sum(dim=1).clamp(min=1.0)
        pooled = (x * weights).sum(dim=1) / denom
        return self.classifier(pooled)


def corpus_token_counts(paths: list[str | Path]) -> Counter:
    """Whitespace token counts over every text field found in the given JSONL
    files (NLI examples and labeled posts are both accepted)."""
    counts: Counter = Counter()
    for path in paths:
        for lineno, obj in _read_jsonl(path):
            fields = [obj.get("premise"), obj.get("hypothesis"), obj.get("text")]
            if not any(isinstance(f, str) for f in fields):
                raise DataError(
                    f"{path}:{lineno}: record has no premise/hypothesis/text field"
                )
            for value in fields:
                if isinstance(value, str):
                    counts.update(value.split())
    return counts


def build_tokenizer(token_counts: Counter, vocab_size: int) -> Tokenizer:
    """WordLevel tokenizer over the most frequent corpus tokens, with the
    [CLS] premise [SEP] hypothesis [SEP] pair template."""
    if vocab_size <= len(SPECIAL_TOKENS):
        raise TrainerError(f"vocab size {vocab_size} leaves no room for real tokens")
    vocab = {token: i for i, token in enumerate(SPECIAL_TOKENS)}
    # Ties broken by token string so the vocabulary is deterministic.
    ranked = sorted(token_counts.items(), key=lambda kv: (-kv[1], kv[0]))
    for token, _ in ranked[: vocab_size - len(SPECIAL_TOKENS)]:
        if token not in vocab:
            vocab[token] = len(vocab)
    tokenizer = Tokenizer(WordLevel(vocab, unk_token=UNK_TOKEN))
    tokenizer.pre_tokenizer = Whitespace()
    tokenizer.post_processor = TemplateProcessing(
        single=f"{CLS_TOKEN} $A {SEP_TOKEN}",
        pair=f"{CLS_TOKEN} $A {SEP_TOKEN} $B:1 {SEP_TOKEN}:1",
        special_tokens=[(CLS_TOKEN, vocab[CLS_TOKEN]), (SEP_TOKEN, vocab[SEP_TOKEN])],
    )
    return tokenizer


def save_checkpoint(
    directory: str | Path,
    model: TinyClassifier,
    config: ModelConfig,
    tokenizer: Tokenizer,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / CONFIG_FILE).write_text(
        json.dumps(asdict(config), indent=2) + "\n", encoding="utf-8"
    )
    torch.save(model.state_dict(), directory / WEIGHTS_FILE)
    tokenizer.save(str(directory / TOKENIZER_FILE))
    return directory


def load_checkpoint(directory: str | Path) -> tuple[TinyClassifier, ModelConfig, Tokenizer]:
    directory = Path(directory)
    config_path = directory / CONFIG_FILE
    if not config_path.is_file():
        raise TrainerError(f"{directory}: not a checkpoint directory (no {CONFIG_FILE})")
    try:
        doc = json.loads(config_path.read_text(encoding="utf-8"))
        config = ModelConfig(**doc)
    except (json.JSONDecodeError, TypeError) as exc:
        raise TrainerError(f"{config_path}: bad model config: {exc}") from exc
    weights_path = directory / WEIGHTS_FILE
    if not weights_path.is_file():
        raise TrainerError(f"{directory}: missing {WEIGHTS_FILE}")
    tokenizer_path = directory / TOKENIZER_FILE
    if not tokenizer_path.is_file():
        raise TrainerError(f"{directory}: missing {TOKENIZER_FILE}")
    model = TinyClassifier(config)
    state = torch.load(weights_path, map_location="cpu", weights_only=True)
    model.load_state_dict(state)
    tokenizer = Tokenizer.from_file(str(tokenizer_path))
    return model, config, tokenizer


def init_tiny_checkpoint(
    corpus_paths: list[str | Path],
    out_dir: str | Path,
    vocab_size: int = 2000,
    hidden_size: int = 32,
    num_layers: int = 2,
    num_heads: int = 2,
    ff_size: int = 64,
    max_len: int = 128,
    dropout: float = 0.1,
    seed: int = 0,
) -> Path:
    """Create a randomly initialized tiny checkpoint with a corpus-fitted
    vocabulary. This is the desk-scale stand-in for a pretrained base model."""
    counts = corpus_token_counts(corpus_paths)
    tokenizer = build_tokenizer(counts, vocab_size)
    config = ModelConfig(
        vocab_size=tokenizer.get_vocab_size(),
        hidden_size=hidden_size,
        num_layers=num_layers,
        num_heads=num_heads,
        ff_size=ff_size,
        max_len=max_len,
        dropout=dropout,
        pad_id=tokenizer.token_to_id(PAD_TOKEN),
    )
    torch.manual_seed(seed)
    model = TinyClassifier(config)
    return save_checkpoint(out_dir, model, config, tokenizer)
