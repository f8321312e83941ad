#!/usr/bin/env python3
"""Freeze cl100k_base reference encodings for the tokenizer equivalence test.

Run offline with the `tiktoken` package installed:

    python3 scripts/make_reference_corpus.py data/cl100k_base.tiktoken \
        crates/core/tests/fixtures/cl100k_reference.json
"""
import json
import random
import sys

import tiktoken
from tiktoken.load import load_tiktoken_bpe

PATTERN = (
    r"""(?i:'s|'t|'re|'ve|'m|'ll|'d)|[^\r\n\p{L}\p{N}]?\p{L}+|\p{N}{1,3}"""
    r"""| ?[^\s\p{L}\p{N}]+[\r\n]*|\s*[\r\n]+|\s+(?!\S)|\s+"""
)

FIXED = [
    "atrigesimal",
    " atrigesimal",
    ".PerformLayout",
    "igrationBuilder",
    ")didReceiveMemoryWarning",
    "_MetadataUsageId",
    "erusform",
    "\tRTCK",
    "JSGlobalScope",
    "useRal",
    "<decltype",
    " addObserver",
    "(QtGui",
    "_EDEFAULT",
    "\tproject",
    "\tClose",
    "\tactual",
    "_\r\n\r\n",
    " colorWithRed",
    " otherButtonTitles",
    ".DataGridViewTriState",
    ".fromLTRB",
    ".XtraBars",
    "hello world",
    "Hello, World!",
    "I'm sure they'll say it's FINE, we've DONE it",
    "DON'T you'RE he'S",
    "line1\r\nline2\r\n\r\nline3",
    "tabs\t\tand  spaces   \t end",
    "    indented code();\n\treturn 0;\n}",
    "fn main() {\n    println!(\"{}\", x);\n}\n",
    "let snake_case_identifier = camelCaseThing + PascalCase;",
    "0123456789 12345 1 22 333 4444",
    "3.14159 2.71828 -42 +7 1e10",
    "naïve café résumé façade",
    "日本語のテキストです。",
    "Привет, мир! Как дела?",
    "مرحبا بالعالم",
    "🦀 Rust 🚀🚀 emoji 👨‍👩‍👧",
    "ÀÉÎÕÜ àéîõü ßẞ İı",
    "   ",
    "\n\n\n",
    "\r\n",
    " \n \n",
    "trailing space ",
    "a",
    "",
    "<|endoftext|> is plain text here",
    "https://example.com/path?query=1&b=2#frag",
    "user@example.org",
    "SELECT * FROM users WHERE id = 42;",
    "<div class=\"container\"><span>x</span></div>",
    "{\"key\": [1, 2, 3], \"nested\": {\"a\": null}}",
    "#include <stdio.h>\nint main(void){ printf(\"%d\\n\", 42); }",
    "    void\n    atrigesimal(int x){\n      printf(\"\n    }",
    "x += 1; y -= 2; z *= 3; w /= 4;",
    "!!!???...,,,;;;",
    " non-breaking space",
    "zero​width",
    "mixed\tTAB\r\nCRLF\nLF\rCR",
]

IDENT_PARTS = [
    "get", "set", "View", "Controller", "Data", "Grid", "Layout", "Perform",
    "Observer", "add", "remove", "Button", "Titles", "color", "With", "Red",
    "Xtra", "Bars", "Migration", "Builder", "Memory", "Warning", "did",
    "Receive", "Global", "Scope", "JS", "Qt", "Gui", "_", "__", "ID", "Url",
    "Http", "Request", "to", "from", "LTRB", "Tri", "State", "render",
]
EXTRA_CHARS = list("\t\n\r ._-()<>[]{}:;,'\"/\\|!?@#$%^&*+=~`") + [
    "é", "ü", "ß", "λ", "中", "文", "🙂", " ", "　", " ",
]


def random_string(rng):
    kind = rng.randrange(4)
    if kind == 0:
        n = rng.randrange(1, 5)
        s = "".join(rng.choice(IDENT_PARTS) for _ in range(n))
        prefix = rng.choice(["", " ", "\t", ".", "(", "_", "\n"])
        return prefix + s
    if kind == 1:
        return "".join(
            rng.choice(IDENT_PARTS + EXTRA_CHARS) for _ in range(rng.randrange(1, 12))
        )
    if kind == 2:
        return "".join(rng.choice(EXTRA_CHARS) for _ in range(rng.randrange(1, 10)))
    words = [rng.choice(IDENT_PARTS).lower() for _ in range(rng.randrange(2, 8))]
    sep = rng.choice([" ", "  ", "\t", "\r\n", "\n", ", "])
    return sep.join(words) + rng.choice(["", ".", "\n", " ", "\r\n"])


def main():
    vocab_path, out_path = sys.argv[1], sys.argv[2]
    enc = tiktoken.Encoding(
        name="cl100k_base_local",
        pat_str=PATTERN,
        mergeable_ranks=load_tiktoken_bpe(vocab_path),
        special_tokens={},
    )
    rng = random.Random(20240614)
    corpus = list(FIXED)
    while len(corpus) < 200:
        s = random_string(rng)
        if s not in corpus:
            corpus.append(s)
    cases = [{"text": s, "ids": enc.encode_ordinary(s)} for s in corpus]
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump(
            {"tokenizer": f"tiktoken {tiktoken.__version__}", "cases": cases},
            f,
            ensure_ascii=True,
            indent=1,
        )
        f.write("\n")


if __name__ == "__main__":
    main()
