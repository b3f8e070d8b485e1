"""Embedded, versioned word lists backing the text features.

Everything here is deliberately frozen into the repo: feature values must be
reproducible without downloading models or corpora. Lists are heuristic and
small by design; callers that need a richer tagger can swap one in through
the pluggable hooks in textfeat.
"""

from __future__ import annotations

LEXICON_VERSION = "v1"

# 175 common English words.
STOP_WORDS = frozenset(
    """
    a about above after again against all am an and any are aren't as at be
    because been before being below between both but by can't cannot could
    couldn't did didn't do does doesn't doing don't down during each few for
    from further had hadn't has hasn't have haven't having he he'd he'll he's
    her here here's hers herself him himself his how how's i i'd i'll i'm
    i've if in into is isn't it it's its itself let's me more most mustn't my
    myself no nor not of off on once only or other ought our ours ourselves
    out over own same shall shan't she she'd she'll she's should shouldn't so
    some such than that that's the their theirs them themselves then there
    there's these they they'd they'll they're they've this those through to
    too under until up very was wasn't we we'd we'll we're we've were weren't
    what what's when when's where where's which while who who's whom why
    why's with won't would wouldn't you you'd you'll you're you've your yours
    yourself yourselves
    """.split()
)

MODALITY_VERBS = frozenset(
    ["can", "could", "may", "might", "must", "shall", "should", "will", "would", "ought"]
)

# "n't" matches as a suffix of contracted tokens.
NEGATION_WORDS = frozenset(
    ["no", "not", "never", "none", "cannot", "n't", "neither", "nor", "without"]
)

PRONOUNS = frozenset(
    """
    i you he she it we they me him her us them my your his its our their
    mine yours hers ours theirs myself yourself himself herself itself
    ourselves yourselves themselves this that these those who whom whose
    someone anyone everyone somebody anybody everybody nobody something
    anything everything nothing
    """.split()
)

# Lexical stand-in for syntactically ambiguous prepositions and
# subordinating conjunctions; "to" is appended by the feature itself.
PREPOSITIONS = frozenset(
    """
    about above across after against along among around as at before behind
    below beneath beside between beyond by despite down during except for
    from in inside into like near of off on onto out outside over past since
    through throughout till toward towards under underneath until up upon
    via while with within without because although though if unless whether
    whereas
    """.split()
)

# Common verb forms; used only to flag sentences that look verbless.
VERB_FORMS = frozenset(
    """
    is are was were be been being am have has had do does did done go goes
    went gone make makes made get gets got gotten take takes took taken see
    sees saw seen say says said know knows knew known think thinks thought
    come comes came want wants wanted use uses used find finds found give
    gives gave given tell tells told work works worked call calls called try
    tries tried ask asks asked need needs needed feel feels felt become
    becomes became leave leaves left put puts mean means meant keep keeps
    kept let lets begin begins began begun seem seems seemed help helps
    helped show shows showed shown hear hears heard play plays played run
    runs ran move moves moved live lives lived believe believes believed
    bring brings brought happen happens happened write writes wrote written
    sit sits sat stand stands stood lose loses lost pay pays paid meet meets
    met include includes included continue continues continued set sets
    learn learns learned change changes changed lead leads led understand
    understands understood watch watches watched follow follows followed
    stop stops stopped create creates created speak speaks spoke spoken read
    reads allow allows allowed add adds added spend spends spent grow grows
    grew grown open opens opened walk walks walked win wins won offer offers
    offered remember remembers remembered consider considers considered
    appear appears appeared buy buys bought wait waits waited serve serves
    served send sends sent build builds built stay stays stayed fall falls
    fell eat eats ate eaten cover covers covered describe describes
    described support supports supported contain contains contained provide
    provides provided report reports reported state states stated claim
    claims claimed summarize summarizes summarized answer answers answered
    cite cites cited can could may might must shall should will would
    """.split()
)

# Very common nouns; a capitalized token or pronoun also counts as a
# plausible subject, this list catches lowercase subjects.
COMMON_NOUNS = frozenset(
    """
    person people man woman child children time year month week day night
    way thing world life hand part eye place work case point government
    company number group problem fact system program question student
    teacher author summary article document text answer question context
    response data result method study report example information research
    model score city country house water money story idea paper book word
    sentence source reader writer news market school team game dog cat sun
    food car road tree house family friend member officer city rate
    """.split()
)

DISCOURSE_MARKERS = frozenset(
    """
    however therefore moreover furthermore thus instead nevertheless
    nonetheless consequently meanwhile additionally similarly conversely
    accordingly hence besides finally ultimately overall
    """.split()
)

DISCOURSE_PHRASES = (
    "in contrast",
    "on the other hand",
    "for example",
    "for instance",
    "in addition",
    "as a result",
    "in conclusion",
    "in summary",
)

# Frozen senses-per-word table for the semantic-ambiguity average.
# Counts are round numbers for famously polysemous words; anything absent
# counts as one sense.
WORD_SENSE_COUNTS: dict[str, int] = {
    "bank": 10, "run": 30, "set": 25, "play": 15, "light": 12, "right": 10,
    "point": 13, "line": 20, "head": 12, "face": 10, "case": 9, "state": 8,
    "form": 9, "hand": 8, "part": 7, "course": 6, "place": 7, "turn": 10,
    "work": 9, "call": 9, "charge": 12, "check": 10, "clear": 9, "close": 9,
    "cover": 9, "cut": 13, "draw": 12, "drop": 11, "fall": 10, "field": 8,
    "figure": 8, "file": 6, "fire": 8, "fit": 7, "frame": 6, "free": 8,
    "game": 8, "ground": 8, "issue": 7, "key": 6, "lead": 10, "leave": 8,
    "level": 7, "lift": 6, "match": 8, "matter": 6, "mean": 8, "measure": 8,
    "mind": 7, "note": 7, "order": 12, "pass": 12, "pattern": 5, "pick": 7,
    "piece": 7, "pitch": 9, "plant": 5, "post": 7, "press": 9, "raise": 8,
    "range": 8, "rate": 6, "record": 8, "rest": 8, "ring": 8, "rise": 8,
    "roll": 10, "rule": 7, "scale": 8, "score": 9, "sense": 7, "service": 9,
    "shape": 6, "share": 5, "shot": 8, "show": 8, "side": 8, "sign": 8,
    "sound": 8, "space": 7, "spring": 8, "square": 8, "stage": 6, "stand": 10,
    "star": 6, "start": 8, "stock": 10, "stop": 8, "story": 6, "strike": 10,
    "subject": 6, "table": 6, "term": 5, "time": 10, "title": 6, "top": 8,
    "touch": 9, "track": 8, "train": 6, "trip": 6, "view": 6, "voice": 5,
    "watch": 7, "wave": 7, "way": 9, "well": 8, "will": 7, "word": 7,
    "world": 6,
}

# word -> (polarity in [-1, 1], subjectivity in [0, 1])
SENTIMENT_LEXICON: dict[str, tuple[float, float]] = {
    "good": (0.7, 0.6), "great": (0.8, 0.75), "excellent": (1.0, 1.0),
    "amazing": (0.9, 0.9), "wonderful": (1.0, 1.0), "perfect": (1.0, 1.0),
    "best": (1.0, 0.3), "better": (0.5, 0.5), "nice": (0.6, 1.0),
    "happy": (0.8, 1.0), "love": (0.5, 0.6), "beautiful": (0.85, 1.0),
    "helpful": (0.6, 0.6), "useful": (0.4, 0.3), "important": (0.4, 1.0),
    "easy": (0.43, 0.83), "simple": (0.2, 0.4), "fair": (0.7, 0.9),
    "clear": (0.1, 0.4), "accurate": (0.6, 0.7), "correct": (0.5, 0.5),
    "reliable": (0.6, 0.6), "strong": (0.45, 0.55), "safe": (0.5, 0.5),
    "true": (0.35, 0.65), "fresh": (0.3, 0.4), "interesting": (0.5, 0.5),
    "bad": (-0.7, 0.67), "terrible": (-1.0, 1.0), "awful": (-1.0, 1.0),
    "horrible": (-1.0, 1.0), "worst": (-1.0, 0.3), "worse": (-0.5, 0.5),
    "poor": (-0.4, 0.6), "wrong": (-0.5, 0.5), "sad": (-0.5, 1.0),
    "hate": (-0.8, 0.9), "ugly": (-0.7, 1.0), "useless": (-0.5, 0.6),
    "hard": (-0.29, 0.54), "difficult": (-0.5, 1.0), "unfair": (-0.7, 0.9),
    "confusing": (-0.4, 0.6), "inaccurate": (-0.6, 0.7),
    "incorrect": (-0.5, 0.5), "unreliable": (-0.6, 0.6),
    "weak": (-0.45, 0.55), "dangerous": (-0.6, 0.7), "false": (-0.35, 0.65),
    "boring": (-0.8, 1.0), "dirty": (-0.6, 0.8), "slow": (-0.3, 0.4),
    "fast": (0.2, 0.6), "old": (0.1, 0.2), "new": (0.14, 0.45),
}
