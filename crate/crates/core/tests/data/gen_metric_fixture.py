"""Reference values for the metric fixture.

Written independently of the Rust code, straight from the metric definitions.
BLEU is additionally checked against nltk (method2 smoothing) whenever the
hypothesis has at least four tokens; below that nltk counts an empty n-gram
order as 0/1 while these definitions count it as 1.

    python3 gen_metric_fixture.py > metric_fixture.json
"""

import json
import math
import random
from collections import Counter

WORDS = "the a plan 5G 4G activate your my please now cancel roaming data eSIM café naïve".split()


def lev(a, b):
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def grams(seq, n):
    return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))


def bleu(ref, hyp):
    if not hyp:
        return 0.0
    logs = 0.0
    for n in range(1, 5):
        h, r = grams(hyp, n), grams(ref, n)
        m = sum(min(c, r[g]) for g, c in h.items())
        tot = max(len(hyp) - n + 1, 0)
        p = m / tot if n == 1 else (m + 1) / (tot + 1)
        if p == 0:
            return 0.0
        logs += math.log(p) / 4
    bp = 1.0 if len(hyp) > len(ref) else math.exp(1 - len(ref) / len(hyp))
    return bp * math.exp(logs)


def lcs(a, b):
    t = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a)):
        for j in range(len(b)):
            t[i + 1][j + 1] = t[i][j] + 1 if a[i] == b[j] else max(t[i][j + 1], t[i + 1][j])
    return t[-1][-1]


def rouge_l(ref, hyp):
    l = lcs(ref, hyp)
    if l == 0:
        return 0.0
    p, r = l / len(hyp), l / len(ref)
    return 2 * p * r / (p + r)


def chrf(ref, hyp):
    r = "".join(ref.split())
    h = "".join(hyp.split())
    scores = []
    for n in range(1, 7):
        if len(r) < n or len(h) < n:
            continue
        hc, rc = grams(h, n), grams(r, n)
        m = sum(min(c, rc[g]) for g, c in hc.items())
        p, rec = m / (len(h) - n + 1), m / (len(r) - n + 1)
        scores.append(0.0 if p + rec == 0 else 5 * p * rec / (4 * p + rec))
    return 100 * sum(scores) / len(scores) if scores else 0.0


def cosine(a, b):
    ca, cb = Counter(a), Counter(b)
    dot = sum(c * cb[g] for g, c in ca.items())
    na = math.sqrt(sum(c * c for c in ca.values()))
    nb = math.sqrt(sum(c * c for c in cb.values()))
    return 0.0 if na == 0 or nb == 0 else dot / (na * nb)


def evaluate(ref, hyp):
    ref, hyp = " ".join(ref.split()), " ".join(hyp.split())
    rt, ht = ref.split(), hyp.split()
    longest = max(len(ref), len(hyp))
    return {
        "exact_match": float(ref == hyp),
        "edit_similarity": 1.0 if longest == 0 else 1 - lev(ref, hyp) / longest,
        "bleu": bleu(rt, ht),
        "rouge_l": rouge_l(rt, ht),
        "chrf": chrf(ref, hyp),
        "token_cosine": cosine(rt, ht),
    }


def pairs():
    rng = random.Random(20251016)
    fixed = [
        ("the cat sat", "the cat"),
        ("the cat sat", "the cat sat"),
        ("aaa", "zzz"),
        ("please activate your plan 5G", "please activate your plan 4G"),
        ("please activate your plan 5G", ""),
        ("a  b   c", " a b c "),
        ("café naïve", "cafe naive"),
        ("one", "one two three four five"),
    ]
    out = list(fixed)
    while len(out) < 50:
        ref = [rng.choice(WORDS) for _ in range(rng.randint(1, 12))]
        hyp = list(ref)
        for _ in range(rng.randint(0, 4)):
            op = rng.random()
            if op < 0.4 and hyp:
                hyp[rng.randrange(len(hyp))] = rng.choice(WORDS)
            elif op < 0.7 and hyp:
                del hyp[rng.randrange(len(hyp))]
            else:
                hyp.insert(rng.randint(0, len(hyp)), rng.choice(WORDS))
        out.append((" ".join(ref), " ".join(hyp)))
    return out


def nltk_check(rows):
    try:
        from nltk.translate.bleu_score import SmoothingFunction, sentence_bleu
    except ImportError:
        return 0
    checked = 0
    for row in rows:
        ht = row["hypothesis"].split()
        if len(ht) < 4:
            continue
        ref = sentence_bleu([row["reference"].split()], ht, smoothing_function=SmoothingFunction().method2)
        assert abs(ref - row["bleu"]) < 1e-9, (row, ref)
        checked += 1
    return checked


if __name__ == "__main__":
    import sys

    rows = []
    for ref, hyp in pairs():
        rows.append({"reference": ref, "hypothesis": hyp, **evaluate(ref, hyp)})
    print(f"nltk agreed on {nltk_check(rows)} BLEU values", file=sys.stderr)
    json.dump(rows, sys.stdout, indent=1, ensure_ascii=False)
    print()
