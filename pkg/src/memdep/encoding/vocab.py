from __future__ import annotations

from ..asm import isa

PAD, MASK, UNK, CONST = "<pad>", "<mask>", "<unk>", "const"
RESERVED = (PAD, MASK, UNK, CONST)
PAD_ID, MASK_ID, UNK_ID, CONST_ID = range(4)


class Vocabulary:
    """Bidirectional token/id map; ids 0..3 are always pad, mask, unk, const."""

    def __init__(self, tokens=None):
        tokens = list(tokens) if tokens is not None else list(default_tokens())
        if tuple(tokens[: len(RESERVED)]) != RESERVED:
            raise ValueError(f"vocabulary must start with {RESERVED}")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self.tokens = tokens
        self.index = {tok: i for i, tok in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def id(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def token(self, i: int) -> str:
        return self.tokens[i]

    def save(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("".join(tok + "\n" for tok in self.tokens))

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="ascii") as fh:
            return cls(line.rstrip("\n") for line in fh if line.strip())


def default_tokens():
    return (*RESERVED, *isa.MNEMONICS, *isa.REGISTERS)


def mnemonic_ids(vocab: Vocabulary) -> list:
    return [vocab.id(m) for m in isa.MNEMONICS]
