#!/usr/bin/env python3
"""Reference implementation of tweet normalization, used to freeze golden fixtures.

Implements the same rule pipeline as the Rust normalizer, independently:
  1 url  2 mention  3 emoticon  4 hashtag  5 number  6 elongation
  7 punctuation  8 whitespace  9 lowercase

Writes crates/hatecls/tests/fixtures/golden_prep.tsv with columns
raw<TAB>normalized<TAB>applied_rules (raw has \\, tab, newline escaped).
"""

import math
import os
import re

HERE = os.path.dirname(os.path.abspath(__file__))
LEXICON_PATH = os.path.join(HERE, "..", "crates", "hatecls", "data", "lexicon.tsv")
OUT_PATH = os.path.join(HERE, "..", "crates", "hatecls", "tests", "fixtures", "golden_prep.tsv")

PH_URL = "<url>"
PH_MENTION = "<user>"
PH_EMOTICON = "<emoticon>"
PH_HASHTAG = "<hashtag>"
PH_NUMBER = "<number>"
PLACEHOLDERS = {PH_URL, PH_MENTION, PH_EMOTICON, PH_HASHTAG, PH_NUMBER}
RUN_THRESHOLD = 3

RULE_ORDER = [
    "url", "mention", "emoticon", "hashtag-segmented", "hashtag-unsegmentable",
    "number", "elongation", "punctuation", "whitespace", "lowercase",
]

URL_RE = re.compile(r"\bhttps?://\S+|\bwww\.\S+", re.IGNORECASE)
MENTION_RE = re.compile(r"@\w+")
HASHTAG_RE = re.compile(r"#[A-Za-z0-9_]+")

EMOTICONS = [
    ":)", ":-)", ":(", ":-(", ":D", ":-D", ";)", ";-)", ":P", ":-P", ":p", ":-p",
    ":O", ":-O", ":o", ":-o", ":/", ":-/", ":\\", ":-\\", ":|", ":-|", ":*", ":-*",
    ":s", ":S", ":-s", ":-S", ":$", ":x", ":X", ":-x", ":-X", ":3", "xD", "XD",
    "=)", "=(", "=D", "=P", "=/", "=]", "=[", ":]", ":[", ";D", ";P", ";p",
    "<3", "</3", "^^", "^_^", "^-^", "-_-", "o_O", "O_o", "o_o", "O_O",
    "T_T", ";_;", ":'(", ":')", ">:(", ">:)", "8)", "8-)", "B)", "B-)", ":v", ":V",
    "(:", "):",
]
EMOTICON_SET = set(EMOTICONS)


def load_lexicon(path):
    counts = {}
    total = 0.0
    maxlen = 0
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            word, count = line.split("\t")
            counts[word] = float(count)
            total += float(count)
            maxlen = max(maxlen, len(word))
    return counts, total, maxlen


def camel_fragments(body):
    """Alphabetic runs of a hashtag body, split at camel-case boundaries."""
    frags = []
    for run in re.findall(r"[A-Za-z]+", body):
        start = 0
        for i in range(1, len(run)):
            prev_lower = run[i - 1].islower()
            boundary = run[i].isupper() and (
                prev_lower or (i + 1 < len(run) and run[i + 1].islower())
            )
            if boundary:
                frags.append(run[start:i])
                start = i
        frags.append(run[start:])
    return frags


def dp_cover(word, lex):
    counts, total, maxlen = lex
    n = len(word)
    NEG = -math.inf
    dp = [NEG] * (n + 1)
    bp = [0] * (n + 1)
    dp[0] = 0.0
    for i in range(1, n + 1):
        for length in range(1, min(i, maxlen) + 1):
            j = i - length
            if dp[j] == NEG:
                continue
            piece = word[j:i]
            c = counts.get(piece)
            if c is None:
                continue
            cand = dp[j] + math.log(c / total)
            if cand > dp[i]:
                dp[i] = cand
                bp[i] = j
    if dp[n] == NEG:
        return None
    out = []
    i = n
    while i > 0:
        j = bp[i]
        out.append(word[j:i])
        i = j
    return list(reversed(out))


def try_segment(body, lex):
    frags = camel_fragments(body)
    if not frags:
        return None
    words = []
    for frag in frags:
        cover = dp_cover(frag.lower(), lex)
        if cover is None:
            return None
        words.extend(cover)
    return words


def split_regex(segs, rx):
    """Apply rx to literal segments, turning matches into placeholder markers."""
    out = []
    fired = False
    for kind, text in segs:
        if kind != "lit":
            out.append((kind, text))
            continue
        pos = 0
        for m in rx.finditer(text):
            if m.start() > pos:
                out.append(("lit", text[pos:m.start()]))
            out.append(("match", m.group(0)))
            fired = True
            pos = m.end()
        if pos < len(text):
            out.append(("lit", text[pos:]))
    return out, fired


def collapse_runs(word, threshold):
    out = []
    run_char, run_len = "", 0
    for c in word:
        if c == run_char:
            run_len += 1
        else:
            run_char, run_len = c, 1
        if run_len < threshold:
            out.append(c)
        elif run_len == threshold:
            # drop the threshold-length suffix of the run down to one char
            del out[-(threshold - 1):]
            out.append(c)
        # run_len > threshold: already collapsed, skip
    return "".join(out)


def normalize(raw, lex):
    applied = set()
    if " ".join(raw.split()) != raw:
        applied.add("whitespace")

    # step 0: whitespace tokens that already equal a placeholder stay atomic
    segs = []
    for tok in raw.split():
        segs.append(("ph", tok) if tok in PLACEHOLDERS else (("lit", tok)))

    # rules 1-2: urls and mentions inside literal text
    segs, fired = split_regex(segs, URL_RE)
    segs = [("ph", PH_URL) if k == "match" else (k, t) for k, t in segs]
    if fired:
        applied.add("url")
    segs, fired = split_regex(segs, MENTION_RE)
    segs = [("ph", PH_MENTION) if k == "match" else (k, t) for k, t in segs]
    if fired:
        applied.add("mention")

    # rule 3: a literal segment that is exactly an emoticon
    out = []
    for kind, text in segs:
        if kind == "lit" and text in EMOTICON_SET:
            out.append(("ph", PH_EMOTICON))
            applied.add("emoticon")
        else:
            out.append((kind, text))
    segs = out

    # rule 4: hashtags, segmented through the lexicon when possible
    segs, _ = split_regex(segs, HASHTAG_RE)
    out = []
    for kind, text in segs:
        if kind != "match":
            out.append((kind, text))
            continue
        words = try_segment(text[1:], lex)
        if words is None:
            out.append(("ph", PH_HASHTAG))
            applied.add("hashtag-unsegmentable")
        else:
            out.append(("lit", " ".join(words)))
            applied.add("hashtag-segmented")
    segs = out

    # token rules 5-9 operate on whitespace-split literal words
    items = []
    for kind, text in segs:
        if kind == "ph":
            items.append(("ph", text))
        else:
            items.extend(("word", w) for w in text.split())

    # rule 5: digit runs at token edges become <number>
    out = []
    for kind, text in items:
        if kind != "word" or not any(c in "0123456789" for c in text):
            out.append((kind, text))
            continue
        lead = len(text) - len(text.lstrip("0123456789"))
        if lead:
            out.append(("ph", PH_NUMBER))
            applied.add("number")
        rest = text[lead:]
        trail = len(rest) - len(rest.rstrip("0123456789"))
        mid = rest[: len(rest) - trail] if trail else rest
        if mid:
            out.append(("word", mid))
        if trail:
            out.append(("ph", PH_NUMBER))
            applied.add("number")
    items = out

    # rule 6: collapse character runs of >= threshold to one
    out = []
    for kind, text in items:
        if kind == "word":
            collapsed = collapse_runs(text, RUN_THRESHOLD)
            if collapsed != text:
                applied.add("elongation")
            text = collapsed
        out.append((kind, text))
    items = out

    # rule 7: keep ascii letters only, re-collapsing runs merged by removal
    out = []
    for kind, text in items:
        if kind != "word":
            out.append((kind, text))
            continue
        kept = "".join(c for c in text if c.isascii() and c.isalpha())
        if kept != text:
            applied.add("punctuation")
            kept = collapse_runs(kept, RUN_THRESHOLD)
        if kept:
            out.append(("word", kept))
    items = out

    # rule 9: lowercase literal words (rule 8 is the single-space join below);
    # case-folding can merge runs ("NnN" -> "nnn"), so collapse once more
    out = []
    for kind, text in items:
        if kind == "word" and any(c.isupper() for c in text):
            applied.add("lowercase")
            text = collapse_runs(text.lower(), RUN_THRESHOLD)
        out.append((kind, text))
    items = out

    text = " ".join(t for _, t in items)
    return text, [r for r in RULE_ORDER if r in applied]


RAW_LINES = [
    "yeeeessss",
    "good",
    "sooooo",
    "@Jane1 sooo wrong!!! #notsexist http://t.co/x",
    "#BanTheBurka",
    "#notsexist",
    "#a",
    "Check this out: https://example.com/path?q=1",
    "www.example.com is down",
    "RT @user123: THIS IS OUTRAGEOUS!!!",
    "I loooove this soooo much :)))",
    "I loooove this soooo much :)",
    "Happy Monday everyone! #MondayMotivation",
    "#StopTheHate #LoveWins",
    "#xqzvwk is weird",
    "call me at 555 1234",
    "in 2014 we marched",
    "meet at 5pm sharp",
    "top10 lists are the worst",
    'she said "no way"...',
    "Ça va? Ʃtrange çharacters ébé",
    "naïve café résumé",
    "🔥🔥🔥 this is fire 🔥🔥🔥",
    "   leading and trailing   ",
    "tabs\tbetween\twords",
    "line\nbreak here",
    "<user> already normalized <url>",
    "<3 you so much!",
    "^_^ good morning",
    "-_- whatever T_T",
    "@a @b @c spam mentions",
    "#ban #the #burka separate tags",
    "100% agree!!!",
    "u2 and 4u and 2b4u",
    "WOOOOW can you believe it",
    "aa!a",
    "!!!",
    "",
    "@handle",
    "http://t.co/abc",
    "#2014",
    "#no_way_jose",
    "#FreeSpeech now",
    ":) :( :D ;) :P",
    "xD XD lmaooo",
    "This is SOOOO wrong, @Someone. Just #wrong. 12345 times! www.bad.site :/",
    "Mixed 🙂 unicode: “smart quotes” — and dashes…",
    "ALLCAPS SHOUTING",
    "The quick brown fox jumps over the lazy dog",
    "#BanTheBurka is trending on www.twitter.com today :(",
]


def escape(s):
    return s.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def main():
    lex = load_lexicon(LEXICON_PATH)
    os.makedirs(os.path.dirname(OUT_PATH), exist_ok=True)
    with open(OUT_PATH, "w", encoding="utf-8") as f:
        for raw in RAW_LINES:
            text, rules = normalize(raw, lex)
            f.write(f"{escape(raw)}\t{text}\t{','.join(rules)}\n")
    print(f"wrote {len(RAW_LINES)} lines to {OUT_PATH}")


if __name__ == "__main__":
    main()
