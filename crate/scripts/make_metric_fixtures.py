#!/usr/bin/env python3
"""Regenerate the metric conformance fixtures under crates/core/tests/data/metrics.

Requires sacrebleu==2.5.1. The outputs are committed; this script only needs to
be re-run when the fixture inputs change.
"""
import json
import random
from pathlib import Path

import sacrebleu
from sacrebleu.metrics import BLEU, CHRF
from sacrebleu.tokenizers.tokenizer_13a import Tokenizer13a

assert sacrebleu.__version__ == "2.5.1", sacrebleu.__version__

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "crates" / "core" / "tests" / "data"
OUT = DATA / "metrics"

ENGLISH = [
    "The committee approved the budget on Tuesday, after a long debate.",
    "She said: \"We will be there by 5:30 p.m.\"",
    "Prices rose 3.5% in 2023, while wages grew only 1,2 percent.",
    "It's a well-known fact that cats don't like water!",
    "The train from Panaji to Mumbai takes about 10-12 hours.",
    "Why would anyone (in their right mind) do that?",
    "Tom & Jerry is a classic cartoon; it first aired in 1940.",
    "He bought apples, oranges, and bananas at the market.",
    "Visit https://example.org/path?q=1 for more details.",
    "The ratio was 3:1 -- much higher than expected...",
    "E-mail me at someone@example.com or call 555-0100.",
    "We walked along the river until the sun went down.",
    "Children learn languages faster than adults do.",
    "The old temple stands at the top of the hill.",
    "Please don't forget to bring your umbrella tomorrow.",
    "In 1961, Goa became part of India.",
    "The recipe calls for 2.5 cups of flour and 1/2 cup of sugar.",
    "\"Really?\" she asked. \"Yes,\" he replied.",
    "Fishermen go out to sea early in the morning.",
    "Rain is expected across the coast this weekend.",
    "The results were published in Vol. 3, No. 2, pp. 15-20.",
    "I can't believe it's already December!",
    "Cashew feni is a spirit produced in Goa.",
    "The meeting has been moved to room #204.",
    "A 5-year-old boy won the chess tournament.",
    "Tunis is the capital of Tunisia.",
    "The market opens at 8 a.m. and closes at 6 p.m.",
    "They say history repeats itself; I hope it doesn't.",
    "My grandmother tells the best stories.",
    "The price is $4.99 (tax included).",
]


def load_triplet_texts():
    texts = {"latin": list(ENGLISH), "deva": [], "arab": []}
    for name, script in (("konkani", "deva"), ("tunisian", "arab")):
        for line in (DATA / "prompts" / f"{name}_triplets.jsonl").read_text(encoding="utf-8").splitlines():
            rec = json.loads(line)
            texts["latin"].append(rec["src"])
            texts[script].append(rec["piv"])
            texts[script].append(rec["tgt"])
    texts["deva"] += [
        "बटाटां भितर मसालो भरसून ते बेसनाच्या पिठयेंत बुडोवन तेलांत बरे तळ्ळे.",
        "आलूच्या मसालेत संकरात बेसन बत्तर साठी अच्छा उत्साहसाठी.",
        "गोंयचें दर्यादेग सुंदर आसा, आनी पर्यटक हांगा येतात.",
        "आमी सकाळीं ७.३० वाजतां भायर सरले.",
        "ही गजाल १,२०० लोकांक खबर आसा!",
    ]
    texts["arab"] += [
        "الطقس جميل اليوم، هيا نخرج إلى البحر.",
        "برشا ناس جاو للعرس البارح؟",
        "اشترينا 3.5 كيلو طماطم بـ 12 دينار.",
        "قال: «ما نجمش نجي غدوة».",
        "تونس العاصمة مدينة قديمة و جميلة!",
    ]
    return texts


def perturb(rng, text, pool):
    words = text.split()
    op = rng.randrange(12)
    if op == 0 or not words:
        return text
    if op == 1 and len(words) > 1:
        del words[rng.randrange(len(words))]
    elif op == 2 and len(words) > 1:
        i = rng.randrange(len(words) - 1)
        words[i], words[i + 1] = words[i + 1], words[i]
    elif op == 3:
        other = rng.choice(pool).split()
        if other:
            words[rng.randrange(len(words))] = rng.choice(other)
    elif op == 4:
        words.insert(rng.randrange(len(words) + 1), rng.choice([",", ".", "!", "?", "--", "(", ")", "\"", "'s"]))
    elif op == 5:
        words = words[: max(1, len(words) // 2)]
    elif op == 6:
        i = rng.randrange(len(words))
        words.insert(i, words[i])
    elif op == 7:
        return rng.choice(pool)
    elif op == 8:
        i = rng.randrange(len(words))
        w = words[i]
        if len(w) > 2:
            j = rng.randrange(len(w))
            words[i] = w[:j] + w[j + 1 :]
    elif op == 9:
        return text.upper() if rng.random() < 0.5 else text.lower()
    elif op == 10:
        return text.rstrip(".!?") + rng.choice([" .", " !", "...", " ?!", ""])
    else:
        words = list(reversed(words))
    return " ".join(words)


def make_pairs():
    rng = random.Random(20240517)
    texts = load_triplet_texts()
    pairs = []
    for script, pool in texts.items():
        for ref in pool:
            for _ in range(3):
                pairs.append({"hyp": perturb(rng, ref, pool), "ref": ref})
    # cross-script and degenerate cases
    pairs += [
        {"hyp": "", "ref": texts["latin"][0]},
        {"hyp": "", "ref": texts["deva"][0]},
        {"hyp": "", "ref": texts["arab"][0]},
        {"hyp": texts["arab"][1], "ref": texts["deva"][1]},
        {"hyp": texts["latin"][2], "ref": texts["arab"][2]},
        {"hyp": "!!! ??? ... ,,, ;;;", "ref": "!? . , ;"},
        {"hyp": "(hi) [there] {friend}", "ref": "(hi) there friend"},
        {"hyp": "&quot;quoted&quot; &amp; &lt;tag&gt;", "ref": "\"quoted\" & <tag>"},
        {"hyp": "3.14 , 2,000 and 10-20", "ref": "3.14, 2,000 and 10 - 20"},
        {"hyp": "a", "ref": "a"},
        {"hyp": "word", "ref": ""},
        {"hyp": "   spaced   out   text   ", "ref": "spaced out text"},
        {"hyp": "line one\nline two", "ref": "line one line two"},
        {"hyp": "tab\tseparated\twords", "ref": "tab separated words"},
        {"hyp": "Note: this is the translation.", "ref": "this is the translation."},
    ]
    return pairs


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    pairs = make_pairs()
    assert len(pairs) >= 200, len(pairs)
    hyps = [p["hyp"] for p in pairs]
    refs = [p["ref"] for p in pairs]

    bleu = BLEU()
    chrfpp = CHRF(word_order=2)
    chrf = CHRF()

    with open(OUT / "pairs.jsonl", "w", encoding="utf-8") as f:
        for p in pairs:
            f.write(json.dumps(p, ensure_ascii=False) + "\n")
    sidecar = {
        "bleu": bleu.corpus_score(hyps, [refs]).score,
        "chrfpp": chrfpp.corpus_score(hyps, [refs]).score,
        "chrf": chrf.corpus_score(hyps, [refs]).score,
    }
    assert bleu.get_signature().format() == "nrefs:1|case:mixed|eff:no|tok:13a|smooth:exp|version:2.5.1"
    assert chrfpp.get_signature().format() == "nrefs:1|case:mixed|eff:yes|nc:6|nw:2|space:no|version:2.5.1"
    (OUT / "pairs.scores.json").write_text(json.dumps(sidecar, indent=2) + "\n")

    # single-segment corpora: one corpus score per pair
    with open(OUT / "segments.jsonl", "w", encoding="utf-8") as f:
        for p in pairs:
            rec = dict(p)
            rec["bleu"] = BLEU().corpus_score([p["hyp"]], [[p["ref"]]]).score
            rec["chrfpp"] = CHRF(word_order=2).corpus_score([p["hyp"]], [[p["ref"]]]).score
            rec["chrf"] = CHRF().corpus_score([p["hyp"]], [[p["ref"]]]).score
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")

    # 13a tokenizer fixtures
    tok = Tokenizer13a()
    strings = [
        "Hello, world!", "3.14", "", "1,000,000 people", "pi is 3.14.", "a.b", "a,b", "5.", ".5", ",5",
        "x,5", "5,x", "2-3", "10-20 years", "a-b", "-5", "5-", "1999-2000-2001", "&quot;hi&quot;",
        "&amp;&amp;", "&lt;b&gt;bold&lt;/b&gt;", "fish &amp; chips", "<skipped> text", "hyphen-\nbreak",
        "two\nlines", "tab\there", "  lead and trail  ", "...", "a...b", "U.S.A.", "e.g., i.e.,",
        "$4.99 (tax)", "50% off!", "C++ & C#", "user@example.com", "https://x.org/a?b=1&c=2",
        "it's", "don't-stop", "{curly} [square] (round)", "back`tick", "tilde~caret^", "pipe|bar",
        "semi;colon:colon", "a/b\\c", "मी घरी जातो.", "१,२०० लोक", "७.३० वाजता", "नमस्कार, मित्रा!",
        "مرحبا، كيف حالك؟", "3.5 كيلو", "«اقتباس»", "١٢٣.٤٥", "mixed हिंदी and عربي text.", "a b",
        "a b", "x\x1cy", "end.", "Mr. Smith", "1.2.3", "1,2,3", "a.1", "1.a", "1-a", "a-1",
        "9-", "--", "-", ".", ",", "..5", "5..", "5,,", "e-mail", "3-D", "x=y+z", "@home #tag",
    ]
    with open(OUT / "tok13a.jsonl", "w", encoding="utf-8") as f:
        for s in strings:
            f.write(json.dumps({"text": s, "tokens": tok(s.rstrip()).split()}, ensure_ascii=False) + "\n")

    # pivot-deviation fixture pairs (pivot text vs generated output)
    rng = random.Random(7)
    texts = load_triplet_texts()
    pool = texts["deva"] + texts["arab"]
    with open(OUT / "deviation.jsonl", "w", encoding="utf-8") as f:
        for i in range(100):
            piv = pool[i % len(pool)]
            hyp = perturb(rng, piv, pool) if i % 5 else rng.choice(pool)
            f.write(json.dumps({"pivot": piv, "hyp": hyp}, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main()
