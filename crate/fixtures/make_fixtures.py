"""Regenerates the small deterministic fixtures used by tests and examples.

Run from the repository root: python3 fixtures/make_fixtures.py
"""
import hashlib
import json
import struct
from pathlib import Path

HERE = Path(__file__).parent
DIM = 8

FACTS = {
    "en": [
        ("What is the capital of Finland?", "The capital of Finland is Helsinki. It lies on the southern coast.", "Helsinki"),
        ("Who wrote the Kalevala?", "The Kalevala was compiled by Elias Lonnrot from oral folklore.", "Elias Lonnrot"),
        ("When did Finland become independent?", "Finland declared independence in 1917, after the Russian revolution.", "1917"),
        ("What is the longest river in Japan?", "The Shinano River is the longest river in Japan.", "Shinano River"),
        ("How tall is Mount Fuji?", "Mount Fuji rises to 3776 metres above sea level.", "3776 metres"),
        ("What language is spoken in Tampere?", "Tampere is an inland city with many lakes.", None),
        ("Who painted the Mona Lisa?", "The Louvre museum in Paris houses a large collection.", None),
        ("Where is Turku located?", "Turku is located on the southwest coast of Finland.", "southwest coast of Finland"),
        ("What is sauna?", "A sauna is a small room heated for sweating, popular in Finland.", "a small room heated for sweating"),
        ("How many islands does Japan have?", "Tokyo is the largest city of Japan.", None),
    ],
    "fi": [
        ("Mikä on Suomen pääkaupunki?", "Suomen pääkaupunki on Helsinki. Se sijaitsee etelärannikolla.", "Helsinki"),
        ("Kuka kirjoitti Seitsemän veljestä?", "Aleksis Kivi kirjoitti romaanin Seitsemän veljestä.", "Aleksis Kivi"),
        ("Milloin Suomi itsenäistyi?", "Suomi itsenäistyi vuonna 1917.", "1917"),
        ("Missä Oulu sijaitsee?", "Oulu sijaitsee Perämeren rannalla.", "Perämeren rannalla"),
        ("Kuinka monta järveä Suomessa on?", "Tampere on Pirkanmaan suurin kaupunki.", None),
        ("Mikä on Japanin pääkaupunki?", "Japanin pääkaupunki on Tokio.", "Tokio"),
        ("Kuka maalasi Mona Lisan?", "Louvre on museo Pariisissa.", None),
        ("Mikä on sauna?", "Sauna on lämmitetty huone, jossa hikoillaan.", "lämmitetty huone"),
    ],
    "ja": [
        ("日本の首都はどこですか？", "日本の首都は東京です。", "東京"),
        ("富士山の高さは？", "富士山の高さは3776メートルです。", "3776メートル"),
        ("フィンランドの首都は？", "フィンランドの首都はヘルシンキです。", "ヘルシンキ"),
        ("京都はどこにありますか？", "大阪は大きな都市です。", None),
        ("一番長い川は？", "日本で一番長い川は信濃川です。", "信濃川"),
        ("誰がモナリザを描きましたか？", "ルーブル美術館はパリにあります。", None),
    ],
}

LONG_FILLER = "Lakes and forests cover much of the country and the summers are short ."


def tokens(text, lang):
    """Character ranges of whitespace words, or of single characters for ja."""
    if lang == "ja":
        return [(i, i + 1) for i, c in enumerate(text) if not c.isspace()]
    out, start = [], None
    for i, c in enumerate(text + " "):
        if c.isspace():
            if start is not None:
                out.append((start, i))
                start = None
        elif start is None:
            start = i
    return out


def noise(key, n):
    """Deterministic values in [-0.5, 0.5)."""
    out = []
    counter = 0
    while len(out) < n:
        h = hashlib.sha256(f"{key}/{counter}".encode()).digest()
        out.extend((b / 256.0) - 0.5 for b in h)
        counter += 1
    return out[:n]


def samples():
    rows = []
    for lang, facts in FACTS.items():
        for i, (q, ctx, ans) in enumerate(facts):
            rows.append((f"{lang}-{i:02d}", lang, q, ctx, ans))
    ctx = " ".join([LONG_FILLER] * 60) + " The national bird is the whooper swan ."
    rows.append(("en-long", "en", "What is the national bird?", ctx, "whooper swan"))
    return rows


def write_jsonl(rows):
    names = {"en": "english", "fi": "finnish", "ja": "japanese"}
    with open(HERE / "tiny.jsonl", "w", encoding="utf-8") as f:
        for sid, lang, q, ctx, ans in rows:
            if ans is None:
                ann = [{"answer_text": "", "answer_start": -1}]
            else:
                ann = [{"answer_text": ans, "answer_start": ctx.index(ans)}]
            f.write(json.dumps({
                "id": sid,
                "language": names[lang],
                "question_text": q,
                "document_plaintext": ctx,
                "annotations": ann,
            }, ensure_ascii=False) + "\n")


def records(rows):
    """One or more CVEC records per sample; answer tokens carry a signal."""
    out = []
    for sid, lang, q, ctx, ans in rows:
        toks = tokens(ctx, lang)
        span = None if ans is None else (ctx.index(ans), ctx.index(ans) + len(ans))
        window = 512 - len(tokens(q, lang))
        stride = window - 128
        starts = [0]
        while starts[-1] + window < len(toks):
            starts.append(starts[-1] + stride)
        for seg, s in enumerate(starts):
            part = toks[s:s + window]
            vecs = []
            inside = False
            for t, (a, b) in enumerate(part):
                v = noise(f"{sid}/{seg}/{t}", DIM)
                hit = span is not None and a < span[1] and b > span[0]
                if hit:
                    v[1 if inside else 0] += 2.0
                inside = hit
                vecs.append(v)
            pooled = [sum(col) / len(vecs) for col in zip(*vecs)]
            pooled[2] += 1.0 if ans is not None else -1.0
            out.append((sid, pooled, part, vecs))
    return out


def write_cvec(recs):
    with open(HERE / "tiny.cvec", "wb") as f:
        f.write(b"CVEC1\n")
        f.write(struct.pack("<II", DIM, len(recs)))
        for sid, pooled, part, vecs in recs:
            raw = sid.encode()
            f.write(struct.pack("<H", len(raw)) + raw + struct.pack("<I", len(part)))
            f.write(struct.pack(f"<{DIM}f", *pooled))
            for a, b in part:
                f.write(struct.pack("<II", a, b))
            for v in vecs:
                f.write(struct.pack(f"<{DIM}f", *v))


def write_subwords():
    letters = sorted(set("abcdefghijklmnopqrstuvwxyzäöå0123456789"))
    merges = [("t", "h"), ("th", "e"), ("i", "n"), ("a", "n"), ("e", "r"), ("k", "i"), ("s", "a")]
    vocab = ["<unk>"] + letters + ["".join(m) for m in merges]
    (HERE / "bpe.vocab").write_text("\n".join(vocab) + "\n", encoding="utf-8")
    (HERE / "bpe.merges").write_text("\n".join(f"{a} {b}" for a, b in merges) + "\n", encoding="utf-8")
    lines = [f"{len(vocab)} 4"]
    for tok in vocab:
        vals = noise(f"emb/{tok}", 4)
        lines.append(tok + " " + " ".join(f"{x:.6f}" for x in vals))
    (HERE / "bpe.emb").write_text("\n".join(lines) + "\n", encoding="utf-8")


if __name__ == "__main__":
    rows = samples()
    write_jsonl(rows)
    write_cvec(records(rows))
    write_subwords()
