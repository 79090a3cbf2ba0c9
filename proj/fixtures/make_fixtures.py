#!/usr/bin/env python3
"""Regenerates the synthetic fixture pack. Output is deterministic; run from anywhere."""

import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent


def write(rel, text):
    p = ROOT / rel
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")


def write_json(rel, obj):
    write(rel, json.dumps(obj, indent=2, ensure_ascii=False) + "\n")


def write_jsonl(rel, rows):
    write(rel, "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows))


def entry(canonical, gender, main, *aliases):
    return {"canonical": canonical, "aliases": [canonical, *aliases], "gender": gender, "is_main": main}


def roster(work_id, title, entries):
    return {"format_version": 1, "work_id": work_id, "title": title, "entries": entries}


def line(speaker, text):
    return {"speaker": speaker, "kind": "line", "text": text}


def direction(text):
    return {"kind": "scene-direction", "text": text}


def segment(sid, work, utterances, kind, gold, options=None):
    task = {"kind": kind, "gold": gold}
    if options:
        task["options"] = options
    return {"format_version": 1, "id": sid, "work_id": work, "utterances": utterances, "task": task}


def script_text(utterances):
    out = []
    for u in utterances:
        out.append(f"{u['speaker']}: {u['text']}" if u["kind"] == "line" else u["text"])
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- rosters

FRIENDS = roster("friends", "Friends", [
    entry("Monica", "female", True, "Monica Geller"),
    entry("Joey", "male", True, "Joey Tribbiani"),
    entry("Chandler", "male", True, "Chandler Bing"),
    entry("Phoebe", "female", True, "Phoebe Buffay"),
    entry("Ross", "male", True, "Ross Geller"),
    entry("Rachel", "female", True, "Rachel Green"),
])

TBBT = roster("tbbt", "The Big Bang Theory", [
    entry("Sheldon", "male", True, "Sheldon Cooper"),
    entry("Leonard", "male", True, "Leonard Hofstadter"),
    entry("Penny", "female", True),
    entry("Amy", "female", True, "Amy Farrah Fowler"),
    entry("Howard", "male", False, "Howard Wolowitz"),
    entry("Raj", "male", False, "Koothrappali", "Rajesh"),
])

CSI = roster("csi", "CSI: Crime Scene Investigation", [
    entry("Grissom", "male", True, "Gil Grissom", "Gil"),
    entry("Catherine", "female", True, "Catherine Willows"),
    entry("Nick", "male", True, "Nick Stokes"),
    entry("Sara", "female", True, "Sara Sidle"),
    entry("Brass", "male", True, "Jim Brass"),
    entry("Peter Berglund", "male", False, "Peter", "Berglund"),
])

for r in (FRIENDS, TBBT, CSI):
    write_json(f"rosters/{r['work_id']}.json", r)

# Alias collision and empty roster fixtures.
write_json("bad/collision_roster.json", roster("csi-bad", "CSI", [
    entry("Peter Berglund", "male", False, "Peter"),
    entry("Peter Smith", "male", False, "Peter"),
]))
write_json("bad/empty_roster.json", roster("empty", "Nothing", []))
write_json("pools/short_female.json", {
    "format_version": 1,
    "culture_tag": "short",
    "names": [{"name": "Alma", "gender": "female"}, {"name": "Bess", "gender": "female"},
              {"name": "Cora", "gender": "female"}],
})

# ---------------------------------------------------------------- traits

TRAITS = [
    ("Monica", ["organized", "clean", "kitchen", "rules", "chef"]),
    ("Joey", ["sandwich", "audition", "pizza", "hungry", "agent"]),
    ("Chandler", ["sarcasm", "joke", "awkward", "statistics", "cubicle"]),
    ("Phoebe", ["guitar", "aura", "song", "massage", "spirits"]),
    ("Ross", ["dinosaur", "museum", "fossil", "paleontology", "lecture"]),
    ("Rachel", ["fashion", "shopping", "boutique", "clothes", "coffee"]),
    ("Sheldon", ["physics", "spot", "train", "logic", "roommate"]),
    ("Leonard", ["laser", "experiment", "glasses", "inhaler", "cello"]),
    ("Penny", ["waitress", "nebraska", "wine", "cheesecake", "shoes"]),
    ("Amy", ["neuroscience", "monkey", "tiara", "harp", "brain"]),
    ("Grissom", ["bugs", "insects", "evidence", "theater", "maggots"]),
    ("Catherine", ["daughter", "casino", "blood", "spatter", "dancer"]),
    ("Nick", ["texas", "cowboy", "footprint", "tire", "boots"]),
    ("Sara", ["fibers", "lab", "trace", "vegetarian", "microscope"]),
    ("Brass", ["badge", "warrant", "interrogation", "suspect", "precinct"]),
    ("Peter Berglund", ["jury", "strangers", "lawyer", "innocent", "reason"]),
]
write_json("traits.json", {"format_version": 1,
                           "traits": [{"character": c, "keywords": k} for c, k in TRAITS]})

# ---------------------------------------------------------------- main corpus

# Original short scenes; each dialogue line carries a trait keyword of its speaker.
F1 = [line("Monica", "Joey, stop. Nobody touches my kitchen until the rules are posted."),
      line("Joey", "But I'm hungry and the sandwich is right there, Monica!"),
      direction("Chandler leans on the counter, smirking at Ross."),
      line("Chandler", "Could this be any more awkward? That was a joke."),
      line("Ross", "Speaking of which, the museum wants my fossil lecture by Friday.")]
F2 = [line("Rachel", "I found the perfect boutique dress while shopping with Phoebe's cousin."),
      line("Phoebe", "My aura told me you would. I wrote a song about it on my guitar."),
      line("Ross", "Rachel, the dinosaur exhibit opens tonight. Come to the museum?"),
      line("Rachel", "Only if there's coffee. And nobody talks about paleontology.")]
F3 = [line("Joey", "I have an audition tomorrow and my agent says I need to look hungry."),
      line("Chandler", "Then skip it. By my statistics, that's an awkward plan for you, Joey."),
      line("Monica", "I'll cook. A chef never lets a friend leave this kitchen empty."),
      direction("Phoebe strums her guitar in the corner.")]
F4 = [line("Phoebe", "The spirits in this apartment are very calm today, Monica."),
      line("Monica", "Because I clean the kitchen twice a day. Those are the rules."),
      line("Rachel", "I spilled coffee on my new clothes. Fashion is pain."),
      line("Chandler", "Cubicle life is worse, trust me. Is that a joke? Partly.")]
TB1 = [line("Penny", "Hey, sorry about that. The cheesecake shift ran long and my shoes hurt."),
       line("Amy", "No, we're sorry. My neuroscience paper made me forget the time."),
       line("Sheldon", "Why? We won. You're in my spot, Penny. Basic physics and logic apply."),
       line("Leonard", "Just because Penny and I are different doesn't mean the laser experiment failed.")]
TB2 = [line("Sheldon", "As your roommate, I insist the train schedule follows logic."),
       line("Leonard", "I lost my glasses and my inhaler in the same experiment, Sheldon."),
       line("Amy", "I'd trade my tiara for a monkey with a brain that size."),
       line("Penny", "I'm pouring wine. Nebraska taught me when a waitress needs a break.")]
TB3 = [line("Amy", "Leonard, my harp needs tuning. The monkey lab can wait."),
       line("Leonard", "The laser is warming up, Amy. The cello can wait."),
       line("Sheldon", "Physics first. Then trains. Then logic puzzles in my spot."),
       direction("Penny rolls her eyes and refills her wine.")]
C1 = [line("Peter Berglund", "You're still going to have to convince a jury that I killed two strangers for no reason."),
      direction("Grissom doesn't look worried. He takes his gloves off and puts them on the table."),
      line("Grissom", "You ever been to the theater, Peter? There's a play called Six Degrees of Separation.")]
C2 = [line("Catherine", "The blood spatter says the dancer left the casino after midnight."),
      line("Nick", "Boots by the tire tracks. Texas clay, if I'm right, Catherine."),
      line("Sara", "I'll run the fibers through the lab microscope tonight."),
      line("Grissom", "The insects on the evidence agree with you, Sara. Bugs don't lie.")]
C3 = [line("Brass", "I've got a warrant and a suspect in interrogation, Grissom."),
      line("Grissom", "Good. The maggots put the time of death at two days, Jim Brass."),
      line("Catherine", "My daughter has a recital, so let's not drag this out, Brass.")]

SCENES = {"friends": [F1, F2, F3, F4], "tbbt": [TB1, TB2, TB3], "csi": [C1, C2, C3]}
for work, scenes in SCENES.items():
    write(f"scripts/{work}.txt", "".join(script_text(s) for s in scenes))


def guess_gold(utterances):
    gold, seen = {}, []
    for u in utterances:
        if u["kind"] == "line" and u["speaker"] not in seen:
            seen.append(u["speaker"])
            gold[f"P{len(seen) - 1}"] = u["speaker"]
    return gold


guess = []
for work, scenes in SCENES.items():
    for i, s in enumerate(scenes):
        guess.append(segment(f"{work}-guess-{i}", work, s, "CharacterGuess", guess_gold(s)))
write_jsonl("corpus/guess.jsonl", guess)

mixed = list(guess)
mixed += [
    segment("csi-coref-0", "csi", C1, "Coreference",
            [{"mention": "m1", "character": "Grissom"}, {"mention": "m2", "character": "Peter Berglund"}],
            {"mentions": [{"id": "m1", "text": "his"}, {"id": "m2", "text": "Peter"}]}),
    segment("friends-coref-0", "friends", F1, "Coreference",
            [{"mention": "m1", "character": "Joey"}, {"mention": "m2", "character": "Monica"}],
            {"mentions": [{"id": "m1", "text": "Joey"}, {"id": "m2", "text": "my kitchen"}]}),
    segment("csi-role-0", "csi", C1, "RoleDetect", ["Peter Berglund"],
            {"question": "Identify all entities referring to the criminal."}),
    segment("csi-role-1", "csi", C3, "RoleDetect", [],
            {"question": "Identify all entities referring to the victim."}),
    segment("csi-qa-0", "csi", C1, "QA", "Six Degrees of Separation",
            {"question": "What play does Grissom mention?"}),
    segment("friends-qa-0", "friends", F3, "QA", "an audition",
            {"question": "What does Joey have tomorrow?"}),
    segment("tbbt-qa-0", "tbbt", TB2, "QA", "his glasses and his inhaler",
            {"question": "What did Leonard lose?"}),
    segment("csi-sum-0", "csi", C1, "Summarize",
            "Peter discusses convincing a jury, while Grissom references a play."),
    segment("friends-sum-0", "friends", F2, "Summarize",
            "Rachel talks about shopping, Phoebe about her song, and Ross invites Rachel to the museum."),
    segment("friends-mc-0", "friends", F1, "PersonalityMC", 1,
            {"question": "Which trait best describes Monica?",
             "choices": ["Careless", "Organized and controlling", "Shy"]}),
    segment("tbbt-mc-0", "tbbt", TB2, "PersonalityMC", 0,
            {"question": "Which trait best describes Sheldon?",
             "choices": ["Rigid and logical", "Easygoing", "Reckless"]}),
]
write_jsonl("corpus/mixed.jsonl", mixed)

# Worked examples for speaker anonymization.
PENNY_SCENE = [line("Penny", "Hey, sorry about that"),
          line("Amy", "No, we're sorry. We never should have been comparing relationships in the first place."),
          line("Sheldon", "Why? We won. You know, I say, next, we take on Koothrappali and his dog. Really give ourselves a challenge."),
          line("Leonard", "I just want to say one more thing about this. Just because Penny and I are very different people does not mean that we're a bad couple."),
          line("Sheldon", "The answer is one simple test away. Hmm? You know, it's like when I thought there was a possum in my closet. Did I sit around wondering? No, I sent Leonard in with a pointy stick and a bag."),
          line("Leonard", "I killed his Chewbacca slippers."),
          line("Penny", "Let's just take the test."),
          line("Leonard", "No, no, no, I don't want to."),
          line("Penny", "Oh, well, 'cause you know we're gonna do bad."),
          line("Leonard", "Because it doesn't matter. I don't care if we're a ten or a two."),
          line("Sheldon", "Or a one. A one is possible."),
          line("Leonard", "Marriage is scary. You're scared, I'm scared. But it doesn't make me not want to do it. It, it just makes me want to hold your hand and do it with you."),
          line("Penny", "Leonard."),
          line("Amy", "It makes me so happy if you said things like that."),
          line("Sheldon", "We got an eight-point-two. Trust me, you're happy.")]
write_jsonl("corpus/anonymize.jsonl", [
    segment("tbbt-penny", "tbbt", PENNY_SCENE, "CharacterGuess", guess_gold(PENNY_SCENE)),
    segment("csi-example", "csi", C1, "CharacterGuess", guess_gold(C1)),
])

# Small Friends corpus for the perturb command.
write_jsonl("corpus/friends.jsonl", [
    segment("friends-0", "friends", [line("Monica", "Joey, stop.")] + F1[1:], "CharacterGuess", guess_gold(F1)),
    segment("friends-1", "friends", F2, "CharacterGuess", guess_gold(F2)),
    segment("friends-2", "friends", F3, "QA", "an audition", {"question": "What does Joey have tomorrow?"}),
])
write_jsonl("bad/gunther.jsonl", [
    segment("friends-gunther", "friends", [line("Gunther", "Rachel, your coffee."), line("Rachel", "Thanks.")],
            "CharacterGuess", {"P0": "Gunther", "P1": "Rachel"}),
])
write_jsonl("bad/unknown_work.jsonl", [
    segment("seinfeld-0", "seinfeld", [line("Jerry", "What's the deal with fixtures?")],
            "QA", "fixtures", {"question": "What is the deal with?"}),
])

# 50-segment round-trip corpus over the three rosters.
rng = random.Random(7)
ROSTERS = {"friends": FRIENDS, "tbbt": TBBT, "csi": CSI}
FRAMES = ["{a}, did you see what {b} did?", "{A} said {b}'s plan was terrible.", "Ask {a}. Not me.",
          "I told {a} and {b} the same thing twice.", "{a}'s coat is on {b}'s chair.",
          "Where is {a}? {B} has been waiting.", "Nobody calls {a} after midnight.",
          "{a}! {a}! Over here.", "That was {a}’s idea, not {b}'s.", "Sure, {a}. Whatever you say."]
DIRS = ["{A} walks in, holding a folder.", "{A} and {b} exchange a look.", "A long pause. {A} sighs.",
        "The lights flicker. Nobody moves."]
roundtrip = []
for i in range(50):
    work = ["friends", "tbbt", "csi"][i % 3]
    names = [a for e in ROSTERS[work]["entries"] for a in e["aliases"]]
    speakers = [e["canonical"] for e in ROSTERS[work]["entries"]]
    utts = []
    for _ in range(rng.randint(3, 8)):
        a, b = rng.choice(names), rng.choice(names)
        fill = {"a": a, "b": b, "A": a.upper() if rng.random() < 0.2 else a, "B": b}
        if rng.random() < 0.2:
            utts.append(direction(rng.choice(DIRS).format(**fill)))
        else:
            utts.append(line(rng.choice(speakers), rng.choice(FRAMES).format(**fill)))
    if all(u["kind"] != "line" for u in utts):
        utts.append(line(speakers[0], "Fine."))
    roundtrip.append(segment(f"rt-{i:02d}", work, utts, "Summarize", f"{rng.choice(names)} talks."))
write_jsonl("corpus/roundtrip50.jsonl", roundtrip)

# ---------------------------------------------------------------- probe pack

PROBE_WORKS = [
    ("lantern", "The Lantern Keepers", "tv", ["Lantern Keepers"], [("Oswin", "male"), ("Talia", "female")], "Grub"),
    ("harbor", "Harbor of Glass", "movie", [], [("Della", "female"), ("Marek", "male")], "Pim"),
    ("saltmarsh", "Saltmarsh Road", "novel", [], [("Ingrid", "female"), ("Bram", "male")], "Hollis"),
    ("copper", "Copper Sky Station", "tv", ["Copper Sky"], [("Kestrel", "female"), ("Ludo", "male")], "Vance"),
    ("orchard", "The Orchard Accord", "novel", [], [("Wren", "female"), ("Aldous", "male")], "Tamsin"),
    ("pells", "Night Shift at Pell's", "tv", [], [("Rosalind", "female"), ("Caspian", "male")], "Dobbs"),
    ("quarry", "Quarry Lights", "movie", [], [("Mabel", "female"), ("Tobiah", "male")], "Ferris"),
    ("ferry", "The Seventh Ferry", "movie", [], [("Ottilie", "female"), ("Fergus", "male")], "Quill"),
    ("paper", "Paper Kingdoms", "novel", [], [("Clementine", "female"), ("Horatio", "male")], "Bartle"),
    ("brass", "Dust and Brass", "tv", [], [("Sabine", "female"), ("Evander", "male")], "Orla"),
]
NOUNS = ["lantern", "ledger", "harbor", "ferry", "orchard", "quarry", "station", "map", "key", "letter",
         "storm", "bridge", "clock", "garden", "cellar", "radio", "engine", "window", "ticket", "coin"]
VERBS = ["found", "broke", "hid", "sold", "burned", "fixed", "lost", "opened", "painted", "buried"]
TIMES = ["at dawn", "last winter", "before the tide", "after the fair", "on Tuesday", "in the rain",
         "during supper", "at the crossing", "by the old well", "under the stairs"]
prng = random.Random(11)
probe_rows = []
probe_works = []
for wid, title, medium, aliases, mains, minor in PROBE_WORKS:
    write_json(f"probe/rosters/{wid}.json", roster(wid, title,
               [entry(n, g, True) for n, g in mains] + [entry(minor, "unspecified", False)]))
    utts = []
    for k in range(25):
        speaker = mains[k % 2][0] if k % 5 != 3 else minor
        other = mains[(k + 1) % 2][0]
        sentence = (f"{other}, I {prng.choice(VERBS)} the {prng.choice(NOUNS)} {prng.choice(TIMES)}. "
                    f"The {prng.choice(NOUNS)} is still {prng.choice(['warm', 'missing', 'ours', 'wet', 'crooked'])}.")
        if k % 7 == 6:
            utts.append(direction(f"{speaker} pauses by the {prng.choice(NOUNS)}."))
        else:
            utts.append(line(speaker, sentence))
    write(f"probe/scripts/{wid}.txt", script_text(utts))
    probe_works.append({"title": title, "script": f"scripts/{wid}.txt"})
    for w in range(5):
        probe_rows.append({"format_version": 1, "id": f"{wid}-{w}", "work_id": wid, "work_title": title,
                           "work_aliases": aliases, "medium": medium, "body": utts[w * 5:(w + 1) * 5]})
write_jsonl("probe/probe.jsonl", probe_rows)
write_json("probe/providers.json", {
    "format_version": 1,
    "providers": [{"id": "verbatim", "kind": "verbatim-oracle", "works": probe_works}],
    "models": [{"id": "verbatim-oracle", "provider": "verbatim", "model_name": "verbatim-oracle"}],
})

# ---------------------------------------------------------------- run configs

main_works = [{"title": r["title"], "script": f"../scripts/{r['work_id']}.txt"} for r in (FRIENDS, TBBT, CSI)]
write_json("config/providers.json", {
    "format_version": 1,
    "retry": {"max_attempts": 3, "base_delay_ms": 1, "max_delay_ms": 5},
    "providers": [
        {"id": "verbatim", "kind": "verbatim-oracle", "works": main_works},
        {"id": "gist", "kind": "gist-oracle", "traits_file": "../traits.json"},
        {"id": "slow", "kind": "verbatim-oracle", "works": main_works, "delay_ms": 40, "max_in_flight": 2},
        {"id": "live", "kind": "openai-chat", "endpoint": "https://api.openai.com/v1/chat/completions",
         "auth_env": "CHARMEM_TEST_UNSET_KEY"},
    ],
    "models": [
        {"id": "verbatim-oracle", "provider": "verbatim", "model_name": "verbatim-oracle"},
        {"id": "gist-oracle", "provider": "gist", "model_name": "gist-oracle"},
        {"id": "slow-oracle", "provider": "slow", "model_name": "verbatim-oracle"},
        {"id": "live-model", "provider": "live", "model_name": "gpt-4o", "seed": 0},
    ],
})


def plan(corpus, tasks, strategies, conditions, models, trials=1, **extra):
    p = {"format_version": 1, "corpus": corpus, "roster_dir": "../rosters", "tasks": tasks,
         "strategies": strategies, "conditions": conditions, "models": models, "trials": trials,
         "concurrency": 2}
    p.update(extra)
    return p


ALL_TASKS = ["CharacterGuess", "Coreference", "PersonalityMC", "RoleDetect", "QA", "Summarize"]
write_json("plans/mixed.json", plan("../corpus/mixed.jsonl", ALL_TASKS, ["none", "cross-cultural"],
                                    ["Baseline", "Gist"], ["gist-oracle"], trials=2))
write_json("plans/guess_gist.json", plan("../corpus/guess.jsonl", ["CharacterGuess"],
                                         ["none", "cross-cultural", "cross-cultural+swap", "same-cultural",
                                          "same-cultural+swap", "mask"],
                                         ["Baseline", "Gist"], ["gist-oracle", "verbatim-oracle"]))
write_json("plans/soft.json", plan("../corpus/guess.jsonl", ["CharacterGuess"], ["none"],
                                   ["Baseline", "Verbatim", "Gist"], ["verbatim-oracle"]))
write_json("plans/resume.json", plan("../corpus/mixed.jsonl", ALL_TASKS, ["none", "cross-cultural"],
                                     ["Baseline", "Gist"], ["slow-oracle"], trials=2))
write_json("plans/unknown_model.json", plan("../corpus/guess.jsonl", ["CharacterGuess"], ["none"],
                                            ["Baseline"], ["no-such-model"]))
write_json("plans/live_model.json", plan("../corpus/guess.jsonl", ["CharacterGuess"], ["none"],
                                         ["Baseline"], ["live-model"]))
write_json("plans/missing_roster.json", plan("../bad/unknown_work.jsonl", ["QA"], ["none", "cross-cultural"],
                                             ["Baseline"], ["gist-oracle"]))
write_json("plans/descriptions.json", plan("../corpus/guess.jsonl", ["CharacterGuess"], ["none", "cross-cultural"],
                                           ["Gist"], ["gist-oracle"],
                                           ablations={"include_descriptions": True}))

# ---------------------------------------------------------------- headline deltas

DELTA_ROWS = {
    "Tvshow Guess": ("CharacterGuess", [(78.2, 32.0, 31.5, 46.2, 0.5), (61.4, 31.9, 27.8, 29.5, 4.1), (60.8, 29.7, 26.7, 31.1, 3.0)]),
    "Coreference": ("Coreference", [(58.3, 49.6, 47.5, 8.7, 2.1), (56.7, 48.3, 48.1, 8.4, 0.2), (47.4, 34.6, 32.3, 12.8, 2.3)]),
    "FriendsQA": ("QA", [(44.3, 38.6, 38.6, 5.7, 0.0), (45.7, 42.9, 44.3, 2.8, -1.4), (42.8, 39.4, 34.3, 3.4, 5.1)]),
    "ScreenSum": ("Summarize", [(37.5, 28.7, 23.1, 8.8, 5.6), (40.1, 25.9, 21.3, 14.2, 4.6), (35.6, 19.3, 17.1, 16.3, 2.2)]),
    "CSI Role Extract": ("RoleDetect", [(50.1, 32.9, 31.7, 17.2, 1.2), (48.3, 34.7, 32.7, 13.6, 2.0), (45.1, 29.8, 23.7, 15.3, 6.1)]),
    "PERSONET": ("PersonalityMC", [(56.0, 52.0, 54.0, 4.0, -2.0), (62.0, 46.0, 44.0, 16.0, 2.0), (44.0, 40.0, 38.0, 4.0, 2.0)]),
}
MODELS = ["GPT-4o", "LLaMA3.3-70B", "DeepSeek V3"]
HEADLINE = {"CharacterGuess": "SpeakerAcc", "Coreference": "LinkF1", "QA": "ExactMatch", "Summarize": "RougeL",
            "RoleDetect": "SetF1", "PersonalityMC": "ExactMatch"}
rows = []
records = [{"record": "header", "format_version": 1, "plan_hash": "headline-fixture", "trials": 1,
            "tasks": [t for t, _ in DELTA_ROWS.values()], "strategies": ["none", "cross-cultural"],
            "conditions": ["Baseline", "Gist"], "models": MODELS, "model_specs": [],
            "task_labels": {t: label for label, (t, _) in DELTA_ROWS.items()}, "nr_strategy": "cross-cultural"}]
for label, (task, vals) in DELTA_ROWS.items():
    for model, (origin, nr, nr_gist, drop, delta) in zip(MODELS, vals):
        rows.append({"label": label, "task": task, "model": model, "origin": origin, "nr": nr,
                     "nr_gist": nr_gist, "drop_nr": drop, "delta_gist": delta})
        for strategy, condition, v in (("none", "Baseline", origin), ("cross-cultural", "Baseline", nr),
                                       ("cross-cultural", "Gist", nr_gist)):
            value = round(v / 100, 4)
            records.append({"task": task, "strategy": strategy, "condition": condition, "model": model,
                            "record": "trial", "trial": 0, "segment_id": f"{task}-0", "work_id": "headline",
                            "status": "ok", "metric_id": HEADLINE[task], "value": value,
                            "scores": [{"metric_id": HEADLINE[task], "value": value, "n_items": 1}],
                            "parsed": True, "request_hash": "", "response_text": ""})
write_json("results/headline.json", {"models": MODELS, "rows": rows})
write("results/headline.jsonl", "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records))
write("results/truncated.jsonl", "".join(json.dumps(r) + "\n" for r in records[:4])
      + json.dumps(records[4])[:57] + "\n")
write("results/empty.jsonl", "")

# Description response (mock provider text).
write("descriptions/friends_response.txt",
      "The scene overall reflects a group dynamic of close friends.\n\n"
      "1.Monica: Responsible, caring, and organized. Assertive and confident in her actions.\n"
      "2. Joey: Energetic, extroverted, and casual. Lacks the sensitivity of others' feelings at times but genuinely care about friends.\n"
      "3. Chandler: Witty and self-deprecating with an approachable sense of humor.\n"
      "4. Phoebe: Quirky, eccentric, and a free spirit.\n"
      "5. Ross: Insecure and somewhat neurotic and vulnerable.\n"
      "6. Rachel: Spontaneous and open to change, she takes risks and is adaptable.\n")
